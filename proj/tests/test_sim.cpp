#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "sleepcc/sim.hpp"

using namespace sleepcc;

namespace {

RouteMap straight_route(double length, double limit, int sections = 2) {
  RouteMap r;
  r.id = "straight";
  r.checkpoint_spacing = length / sections;
  for (int i = 0; i < sections; ++i) {
    Section s;
    s.length = length / sections;
    s.speed_limit = limit;
    s.lanes = 1;
    r.sections.push_back(s);
  }
  return r;
}

TrafficConfig no_traffic() {
  TrafficConfig t;
  t.lead_vehicle_density = 0.0;
  return t;
}

}  // namespace

TEST_CASE("dynamics_from_level: the acceleration cap is 1 + 0.25a") {
  SimTuning t;
  for (int a = 0; a <= 10; ++a) {
    const LevelDynamics d = dynamics_from_level(a, t);
    CHECK(d.accel_cap == doctest::Approx(1.0 + 0.25 * a));
    CHECK(d.comfort_accel <= d.accel_cap);
    CHECK(d.jerk == doctest::Approx(t.jerk_base + t.jerk_per_level * a));
  }
  // Envelopes grow strictly with the level.
  for (int a = 1; a <= 10; ++a) {
    CHECK(dynamics_from_level(a, t).comfort_accel >
          dynamics_from_level(a - 1, t).comfort_accel);
    CHECK(dynamics_from_level(a, t).brake_comfort >
          dynamics_from_level(a - 1, t).brake_comfort);
  }
}

TEST_CASE("empty road at level 0 settles at the speed limit") {
  // With p_s = 0 the controller's target speed equals the limit.
  World w(straight_route(3000.0, 14.0), no_traffic(), SimTuning{},
          WristModelConfig{}, WakeDetectorConfig{}, 1);
  while (w.vehicle().position < 2500.0) w.step(0);
  CHECK(w.vehicle().speed == doctest::Approx(14.0).epsilon(0.1 / 14.0));
}

TEST_CASE("speed never exceeds the profile-scaled limit") {
  for (int level : {0, 5, 10}) {
    World w(straight_route(2000.0, 13.9), no_traffic(), SimTuning{},
            WristModelConfig{}, WakeDetectorConfig{}, 2);
    const double cap =
        13.9 * (1.0 + profile_from_level(level).p_s / 100.0) + 0.1;
    double vmax = 0.0;
    while (w.vehicle().position < 1900.0) {
      w.step(level);
      vmax = std::max(vmax, w.vehicle().speed);
    }
    CHECK(vmax <= cap);
  }
}

TEST_CASE("equilibrium following: gap = p_d and matched speeds give zero accel") {
  World w(straight_route(500.0, 13.9), no_traffic(), SimTuning{},
          WristModelConfig{}, WakeDetectorConfig{}, 3);
  const ControlProfile profile = profile_from_level(0);
  LeadVehicle lv;
  lv.position = profile.p_d + SimTuning{}.car_length;  // gap exactly p_d
  lv.speed = 0.0;
  lv.target_factor = 0.0;  // lead holds station
  lv.move_s = 1e9;
  lv.cycle_t = 1e9;
  w.inject_lead(lv);
  for (int i = 0; i < 200; ++i) {
    w.step(profile, dynamics_from_level(0, SimTuning{}));
  }
  CHECK(std::abs(w.vehicle().accel) < 1e-9);
  CHECK(w.vehicle().speed == doctest::Approx(0.0));
}

TEST_CASE("trajectories are bitwise deterministic for equal seeds") {
  const RouteMap route = generate_route(11, 6);
  TrafficConfig t;
  t.congestion_seed = 99;
  auto run = [&]() {
    World w(route, t, SimTuning{}, WristModelConfig{}, WakeDetectorConfig{}, 5);
    w.set_trace_enabled(true);
    while (!w.at_route_end()) w.run_section(4);
    return std::make_pair(w.vehicle_trace(), w.imu_trace());
  };
  const auto [va, ia] = run();
  const auto [vb, ib] = run();
  REQUIRE(va.size() == vb.size());
  REQUIRE(ia.size() == ib.size());
  for (std::size_t i = 0; i < va.size(); ++i) {
    CHECK(va[i].position == vb[i].position);
    CHECK(va[i].speed == vb[i].speed);
    CHECK(va[i].accel == vb[i].accel);
    CHECK(va[i].steering == vb[i].steering);
  }
  for (std::size_t i = 0; i < ia.size(); ++i) {
    CHECK(ia[i].second == ib[i].second);
  }
}

TEST_CASE("compute_etas is self-consistent: empty-road ATA == ETA within 1%") {
  const RouteMap route = compute_etas(generate_route(17, 8), 5, SimTuning{});
  double prev_eta = 0.0;
  for (const auto& s : route.sections) {
    CHECK(s.eta > prev_eta);  // strictly increasing
    prev_eta = s.eta;
  }
  World w(route, no_traffic(), SimTuning{}, WristModelConfig{},
          WakeDetectorConfig{}, 0);
  for (std::size_t i = 0; i < route.sections.size(); ++i) {
    const SectionResult r = w.run_section(5);
    CHECK(r.ata == doctest::Approx(route.sections[i].eta).epsilon(0.01));
  }
}

TEST_CASE("higher levels are not slower on an empty road") {
  const RouteMap route = generate_route(23, 8);
  double prev = 1e30;
  for (int level : {0, 2, 5, 8, 10}) {
    World w(route, no_traffic(), SimTuning{}, WristModelConfig{},
            WakeDetectorConfig{}, 0);
    while (!w.at_route_end()) w.run_section(level);
    CHECK(w.time() <= prev + 1.0);
    prev = w.time();
  }
}

TEST_CASE("turns slow the vehicle to the turn envelope") {
  RouteMap r = straight_route(600.0, 19.4);
  Intersection x;
  x.kind = IntersectionKind::kLeft;
  x.position = 150.0;  // 150 m into the first 300 m section
  r.sections[0].intersections.push_back(x);
  SimTuning tuning;
  tuning.bump_rate = 0.0;
  tuning.imu_noise_sigma = 0.0;
  World w(r, no_traffic(), tuning, WristModelConfig{}, WakeDetectorConfig{}, 4);
  w.set_trace_enabled(true);
  while (!w.at_route_end()) w.run_section(3);
  const LevelDynamics dyn = dynamics_from_level(3, tuning);
  bool steered = false;
  for (const auto& row : w.vehicle_trace()) {
    if (std::abs(row.position - 150.0) < 2.0) {
      CHECK(row.speed <= dyn.turn_speed + 0.6);
    }
    if (std::abs(row.steering) > 0.3) steered = true;
  }
  CHECK(steered);
}

TEST_CASE("intersection waits hold the vehicle and show up in the ATA") {
  RouteMap r = straight_route(400.0, 13.9);
  Intersection x;
  x.kind = IntersectionKind::kStraight;
  x.position = 120.0;  // inside the first 200 m section
  x.wait_s = 6.0;
  RouteMap waiting = r;
  waiting.sections[0].intersections.push_back(x);
  SimTuning tuning;
  tuning.bump_rate = 0.0;
  auto trip_time = [&](const RouteMap& route) {
    World w(route, no_traffic(), tuning, WristModelConfig{},
            WakeDetectorConfig{}, 9);
    while (!w.at_route_end()) w.run_section(5);
    return w.time();
  };
  const double plain = trip_time(r);
  const double held = trip_time(waiting);
  // The wait plus the stop/restart transient must separate the two trips.
  CHECK(held > plain + 6.0);
}

TEST_CASE("jerk limiting bounds tick-to-tick acceleration changes") {
  const RouteMap route = generate_route(31, 6);
  TrafficConfig t;
  t.congestion_seed = 7;
  SimTuning tuning;
  World w(route, t, tuning, WristModelConfig{}, WakeDetectorConfig{}, 7);
  w.set_trace_enabled(true);
  while (!w.at_route_end()) w.run_section(6);
  const LevelDynamics dyn = dynamics_from_level(6, tuning);
  double prev_a = 0.0;
  double prev_v = 0.0;
  for (const auto& row : w.vehicle_trace()) {
    // Factor 4 covers the emergency-braking jerk relaxation. Ticks where
    // the vehicle reaches standstill clip the acceleration to zero in
    // one step, so only moving samples are jerk-limited.
    if (prev_v > 0.05 && row.speed > 0.05) {
      CHECK(row.accel - prev_a <= 4.0 * dyn.jerk * tuning.dt + 1e-9);
    }
    prev_a = row.accel;
    prev_v = row.speed;
  }
}

TEST_CASE("run_section fills driving and map features") {
  RouteMap r = straight_route(500.0, 13.9, 2);
  Intersection left;
  left.kind = IntersectionKind::kLeft;
  left.position = 100.0;
  Intersection straight;
  straight.kind = IntersectionKind::kStraight;
  straight.position = 180.0;
  r.sections[0].intersections = {left, straight};
  r.sections[1].speed_limit = 8.3;
  World w(r, no_traffic(), SimTuning{}, WristModelConfig{},
          WakeDetectorConfig{}, 8);
  const SectionResult res = w.run_section(4);
  CHECK(res.state.s_lmt == doctest::Approx(13.9));
  CHECK(res.state.n_lt == doctest::Approx(1.0));
  CHECK(res.state.n_st == doctest::Approx(1.0));
  CHECK(res.state.n_rt == doctest::Approx(0.0));
  CHECK(res.state.s_lmt_next == doctest::Approx(8.3));
  CHECK(res.state.n_trn >= 1.0);   // signaled for the left turn
  CHECK(res.state.w_max > 0.3);    // steered through it
  CHECK(res.state.s_avg > 0.0);
  CHECK(res.state.m_max >= res.state.m_avg);
  CHECK(res.elapsed > 0.0);
  CHECK(res.ata == doctest::Approx(res.elapsed));
  CHECK(res.imu_segment.size() ==
        doctest::Approx(res.elapsed / SimTuning{}.dt).epsilon(0.01));
  // Second section: ATA accumulates.
  const SectionResult res2 = w.run_section(4);
  CHECK(res2.ata > res.ata);
  CHECK(w.at_route_end());
  CHECK_THROWS_AS(w.run_section(4), EpisodeAbort);
}

TEST_CASE("reset restores the initial state exactly") {
  const RouteMap route = generate_route(13, 5);
  TrafficConfig t;
  t.congestion_seed = 3;
  World w(route, t, SimTuning{}, WristModelConfig{}, WakeDetectorConfig{}, 6);
  const SectionResult first = w.run_section(5);
  w.reset();
  const SectionResult again = w.run_section(5);
  CHECK(first.elapsed == again.elapsed);
  CHECK(first.state.m_max == again.state.m_max);
  CHECK(first.state.n_acc == again.state.n_acc);
}
