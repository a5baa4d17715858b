#pragma once

#include <optional>

namespace cascadesim {

/// Integration method selector for a stepper or a whole cascade run.
enum class Method { TM, BEM, RK4Partitioned };

/// Settings shared by the implicit steppers and the RK4 comparator.
struct IntegratorConfig {
  Method method = Method::BEM;
  double dt_min = 0.02;          // s, BEM lower clamp
  double dt_max = 0.4;           // s, BEM upper clamp
  double eps = 1e-4;             // Newton convergence tolerance on ||[F;G]||_inf
  int max_newton_iters = 10;
  int post_event_steps = 6;      // k: fixed small steps right after any event
  int iter_threshold = 7;        // r: Newton iterations that trigger a step cut
  double tau = 0.05;             // BEM step-control hyperparameter
  double dt_event = 0.002;       // s, fixed step used for the k post-event steps

  // TM ground-truth controller (LTE-based), bounds per the ground-truth recipe
  double tm_dt_min = 0.002;
  double tm_dt_max = 1.0;
  double tm_lte_target = 1e-4;   // target local-truncation estimate (inf norm)
  double tm_reject_factor = 4.0; // reject a step when estimate > factor*target

  double rk4_dt = 0.002;         // fixed step of the partitioned comparator
};

/// Relay settings. Defaults follow the 118-bus style configuration.
struct RelayConfig {
  double t_w_oc = 1.0;             // s, overcurrent averaging window
  double t_w_uvls = 3.0;           // s, undervoltage averaging window
  double t_tp_uvls = 3.0;          // s, sustained-violation time before shed
  double lambda_shed = 0.25;       // fraction of remaining load shed per firing
  double v_th = 0.8645;            // pu undervoltage threshold
  int k_shed_max = 5;              // max sheds per bus
  double oc_freeze_after_event = 1.0;  // s, keep pre-event OC delays after events
  double out_of_step_angle_th = 3.14159265358979323846;  // rad, COI-relative
  double oos_monotone_window = 0.5;    // s of monotone growth required
  double sps_delay = 7.5;          // s between detection/identification and trip
  int sps_machine_count = 2;       // machines tripped per SPS action
  std::optional<int> sps_line_branch = std::nullopt;  // line-trip SPS variant
  double measurement_dt = 0.02;    // s, fixed relay measurement grid
};

/// Predictor-corrector settings on top of plain BEM.
struct PcConfig {
  int round_cap = 10;             // hard cap on predict-correct rounds
  double settle_window = 5.0;     // s, speed-variation window for settling
  double settle_speed_tol = 1e-6; // pu, max-min speed variation to call settled
  double settle_time_cap = 120.0; // s of simulated settle time per tier
  double sigma_th = 1e-4;         // 1/s, real-part threshold for instability
  double omega_th = 0.1;          // rad/s, imaginary-part threshold (oscillatory)
  bool use_worker_pool = false;   // predictor jobs on a local thread pool
  int pool_threads = 2;
};

/// Run-level stopping rules.
struct StopConfig {
  double window = 5.0;            // s, machine speed-variation window
  double speed_tol = 1e-5;        // pu
  double t_max = 600.0;           // s, hard simulation-horizon cap
  double relay_horizon = 300.0;   // s, countdowns further out than this do
                                  // not count as anticipated relay actions
};

}  // namespace cascadesim
