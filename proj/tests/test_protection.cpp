#include <doctest.h>

#include <cmath>

#include "cascadesim/protection.hpp"
#include "support/fixtures.hpp"

using namespace cascadesim;
using testsupport::init_system;

TEST_CASE("oc delay matches a long-double oracle at spot ratios") {
  for (double ratio : {1.1, 1.5, 2.0}) {
    long double oracle = 0.14L / (std::pow((long double)ratio, 0.02L) - 1.0L);
    CHECK(std::abs(oc_trip_delay(ratio) - (double)oracle) <= 1e-9);
  }
  CHECK(oc_trip_delay(1.5) == doctest::Approx(17.194).epsilon(1e-3));
}

namespace {

struct RelayRig {
  testsupport::InitializedSystem sys;
  RelaySystem relays;
  double t = 0.0;

  explicit RelayRig(RelayConfig cfg, CaseDefinition base)
      : sys(init_system(std::move(base), 3)), relays(cfg, 0.0) {}

  // Feed constant measurements for a duration on the 0.02 s grid.
  void feed(double duration, double current, double voltage) {
    const double md = relays.config().measurement_dt;
    Eigen::VectorXd imags =
        Eigen::VectorXd::Constant(static_cast<Eigen::Index>(sys.model.branches.size()), current);
    Eigen::VectorXd vmags = Eigen::VectorXd::Constant(sys.model.n_bus(), voltage);
    int steps = static_cast<int>(std::round(duration / md));
    for (int i = 0; i < steps; ++i) {
      t += md;
      relays.ingest_sample(t, sys.model, imags, vmags);
    }
  }
};

RelayConfig test_relay_cfg() {
  RelayConfig cfg;
  cfg.v_th = 0.8645;
  return cfg;
}

}  // namespace

TEST_CASE("oc pickup schedules the inverse-time trip and cancellation works") {
  CaseDefinition base = make_two_bus_case(30.0, 5.0);
  base.branches[0].current_limit = 1.0;
  RelayRig rig(test_relay_cfg(), base);

  SUBCASE("no overload means no schedule") {
    rig.feed(5.0, 0.9, 1.0);
    CHECK_FALSE(rig.relays.any_schedule());
    CHECK_FALSE(rig.relays.any_violation());
  }

  SUBCASE("sustained overload schedules at pickup + delay") {
    rig.feed(3.0, 1.5, 1.0);
    REQUIRE(rig.relays.any_schedule());
    auto next = rig.relays.next_scheduled_after(rig.t);
    REQUIRE(next.has_value());
    // Pickup happens at the first whole second with a full window (t = 1 s).
    CHECK(*next == doctest::Approx(1.0 + oc_trip_delay(1.5)).epsilon(1e-9));
    // Not due yet
    CHECK(rig.relays.collect_due(rig.t).empty());
  }

  SUBCASE("overload cleared before expiry cancels the countdown") {
    rig.feed(2.0, 1.5, 1.0);
    REQUIRE(rig.relays.any_schedule());
    rig.feed(3.0, 0.5, 1.0);  // window average falls below pickup
    CHECK_FALSE(rig.relays.any_schedule());
    // Nothing ever fires.
    auto due = rig.relays.collect_due(1000.0);
    CHECK(due.empty());
  }

  SUBCASE("due trip is collected once") {
    rig.feed(2.0, 1.5, 1.0);
    auto trip_t = rig.relays.next_scheduled_after(rig.t);
    REQUIRE(trip_t.has_value());
    auto due = rig.relays.collect_due(*trip_t);
    REQUIRE(due.size() == 1);
    CHECK(due[0].kind == EventKind::LineTrip);
    CHECK(due[0].targets == std::vector<int>{1});
    CHECK(rig.relays.collect_due(*trip_t + 1.0).empty());
  }
}

TEST_CASE("oc freeze holds pre-event delays for one second") {
  CaseDefinition base = make_two_bus_case(30.0, 5.0);
  base.branches[0].current_limit = 1.0;
  RelayRig rig(test_relay_cfg(), base);
  rig.feed(2.0, 1.5, 1.0);
  auto before = rig.relays.next_scheduled_after(rig.t);
  REQUIRE(before.has_value());
  rig.relays.note_event(rig.t);
  rig.feed(0.9, 3.0, 1.0);  // much heavier overload inside the freeze window
  auto inside = rig.relays.next_scheduled_after(rig.t);
  REQUIRE(inside.has_value());
  CHECK(*inside == doctest::Approx(*before));  // unchanged by the spike
  rig.feed(1.2, 3.0, 1.0);  // past the freeze: delay recomputed
  auto after = rig.relays.next_scheduled_after(rig.t);
  REQUIRE(after.has_value());
  CHECK(*after < *before);
}

TEST_CASE("uvls sheds after sustained undervoltage and caps at k_shed_max") {
  CaseDefinition base = make_two_bus_case(50.0, 10.0);
  RelayRig rig(test_relay_cfg(), base);

  SUBCASE("brief dip does not shed") {
    rig.feed(4.0, 0.5, 1.0);   // healthy voltage, fill windows
    rig.feed(1.0, 0.5, 0.80);  // one second dip
    rig.feed(4.0, 0.5, 1.0);
    CHECK(rig.relays.collect_due(rig.t).empty());
    CHECK(rig.relays.shed_count(2) == 0);
  }

  SUBCASE("sustained undervoltage sheds, then re-arms, capped at 5") {
    int fired = 0;
    for (int cycle = 0; cycle < 8; ++cycle) {
      rig.feed(7.0, 0.5, 0.80);
      auto due = rig.relays.collect_due(rig.t);
      for (const auto& e : due) {
        CHECK(e.kind == EventKind::UvlsShed);
        CHECK(e.targets == std::vector<int>{2});
        ++fired;
      }
    }
    CHECK(fired == 5);
    CHECK(rig.relays.shed_count(2) == 5);
  }
}

TEST_CASE("shed fraction compounds as (1 - lambda)^count") {
  CaseDefinition c = make_two_bus_case(80.0, 0.0);
  TopologyState topo = TopologyState::all_in(c);
  Event shed;
  shed.kind = EventKind::UvlsShed;
  shed.targets = {2};
  for (int k = 1; k <= 3; ++k) {
    apply_shed_to_topology(c, topo, shed, 0.25);
    CHECK(topo.shed_remaining[1] == doctest::Approx(std::pow(0.75, k)).epsilon(1e-12));
  }
}

TEST_CASE("out-of-step trips on a monotone crossing, not on steady angles") {
  auto sys = init_system(make_two_cluster_case(), 4);
  RelayConfig cfg;
  RelaySystem relays(cfg, 0.0);

  Eigen::VectorXd x = sys.state.x;
  SUBCASE("steady half-radian angle never trips") {
    x(sys.model.off(0, IslandModel::kTheta)) = 0.5;
    for (int k = 0; k < 100; ++k) {
      auto evs = relays.check_out_of_step(0.02 * (k + 1), sys.model, x);
      CHECK(evs.empty());
    }
  }

  SUBCASE("monotone growth through pi trips at the crossing") {
    bool tripped = false;
    double t = 0.0;
    for (int k = 0; k < 300 && !tripped; ++k) {
      t += 0.02;
      x(sys.model.off(0, IslandModel::kTheta)) = 0.02 * k * 0.8;  // reaches pi around k=196
      auto evs = relays.check_out_of_step(t, sys.model, x);
      if (!evs.empty()) {
        tripped = true;
        CHECK(evs[0].kind == EventKind::MachineTripOos);
        CHECK(evs[0].targets == std::vector<int>{sys.model.machines[0].case_idx});
        // fires right at the crossing step
        CHECK(x(sys.model.off(0, IslandModel::kTheta)) > cfg.out_of_step_angle_th);
        CHECK(x(sys.model.off(0, IslandModel::kTheta)) <
              cfg.out_of_step_angle_th + 0.02 * 0.8 + 1e-9);
      }
    }
    CHECK(tripped);
  }

  SUBCASE("growing oscillation below the threshold never trips") {
    double t = 0.0;
    bool tripped = false;
    for (int k = 0; k < 500; ++k) {
      t += 0.02;
      x(sys.model.off(0, IslandModel::kTheta)) = (1.0 + 0.002 * k) * std::sin(2.0 * t);
      auto evs = relays.check_out_of_step(t, sys.model, x);
      tripped = tripped || !evs.empty();
    }
    CHECK_FALSE(tripped);
  }
}

TEST_CASE("event replay reproduces element statuses") {
  CaseDefinition c = make_two_cluster_case();
  std::vector<Event> log;
  Event outage;
  outage.t = 3.0;
  outage.kind = EventKind::InitialNodeOutage;
  outage.targets = {3};
  log.push_back(outage);
  Event trip;
  trip.t = 10.0;
  trip.kind = EventKind::LineTrip;
  trip.targets = {100};
  log.push_back(trip);
  Event shed;
  shed.t = 12.0;
  shed.kind = EventKind::UvlsShed;
  shed.targets = {9};
  log.push_back(shed);

  TopologyState topo = replay_events(c, log, 0.25);
  CHECK(topo.bus_in[c.bus_index(3)] == 0);
  CHECK(topo.shed_remaining[c.bus_index(3)] == 0.0);
  for (std::size_t i = 0; i < c.branches.size(); ++i) {
    bool incident = c.branches[i].from_bus == 3 || c.branches[i].to_bus == 3;
    bool tie = c.branches[i].id == 100;
    CHECK(topo.branch_in[i] == ((incident || tie) ? 0 : 1));
  }
  CHECK(topo.shed_remaining[c.bus_index(9)] == doctest::Approx(0.75));
}

TEST_CASE("events order deterministically inside a tier") {
  Event a, b, c2;
  a.t = b.t = c2.t = 5.0;
  a.kind = EventKind::UvlsShed;
  a.targets = {7};
  b.kind = EventKind::LineTrip;
  b.targets = {3};
  c2.kind = EventKind::LineTrip;
  c2.targets = {1};
  std::vector<Event> evs{a, b, c2};
  std::sort(evs.begin(), evs.end(), event_order_less);
  CHECK(evs[0].targets == std::vector<int>{1});
  CHECK(evs[1].targets == std::vector<int>{3});
  CHECK(evs[2].kind == EventKind::UvlsShed);
}
