#include "sleepcc/env.hpp"

namespace sleepcc {

DrivingEnv::DrivingEnv(RouteMap route_with_etas, TrafficConfig traffic,
                       SimTuning tuning, WristModelConfig wrist,
                       WakeDetectorConfig wake, DrivingEnvConfig cfg,
                       std::uint64_t seed)
    : cfg_(cfg),
      world_(std::move(route_with_etas), traffic, tuning, wrist, wake, seed) {
  for (const auto& s : world_.route().sections) {
    if (!(s.eta > 0.0)) {
      throw InvalidInput("driving env requires a route with computed ETAs");
    }
  }
}

StateVector DrivingEnv::initial_state() const {
  // Before the first section there is no motion or driving history; the
  // map features describe the first two sections.
  const auto& sections = world_.route().sections;
  const Section& cur = sections[0];
  const Section& nxt = sections[std::min<std::size_t>(1, sections.size() - 1)];
  auto count = [](const Section& s, IntersectionKind k) {
    double c = 0.0;
    for (const auto& x : s.intersections) {
      if (x.kind == k) c += 1.0;
    }
    return c;
  };
  StateVector sv;
  sv.s_lmt = cur.speed_limit;
  sv.n_lt = count(cur, IntersectionKind::kLeft);
  sv.n_rt = count(cur, IntersectionKind::kRight);
  sv.n_st = count(cur, IntersectionKind::kStraight);
  sv.s_lmt_next = nxt.speed_limit;
  sv.n_lt_next = count(nxt, IntersectionKind::kLeft);
  sv.n_rt_next = count(nxt, IntersectionKind::kRight);
  sv.n_st_next = count(nxt, IntersectionKind::kStraight);
  return sv;
}

FeatureMatrix DrivingEnv::observe() const {
  const Observation obs = build_observation(history_, cfg_.k);
  FeatureMatrix m;
  m.rows = cfg_.k;
  m.cols = StateVector::kFeatures;
  m.data.reserve(static_cast<std::size_t>(m.rows) * m.cols);
  for (const auto& col : obs.columns) {
    const auto feat = normalize_state(col, cfg_.norm);
    m.data.insert(m.data.end(), feat.begin(), feat.end());
  }
  return m;
}

FeatureMatrix DrivingEnv::reset() {
  world_.reset();
  history_.clear();
  history_.push_back(initial_state());
  trip_ = TripSequence{};
  trip_.route_id = world_.route().id;
  last_ata_ = 0.0;
  last_eta_ = 0.0;
  woke_ = false;
  done_ = false;
  return observe();
}

EnvStep DrivingEnv::step(int action_index) {
  if (done_) {
    throw EpisodeAbort("step on finished episode; call reset first");
  }
  const int level = cfg_.actions.a_min + action_index;
  cfg_.actions.require(level);

  const int i = world_.checkpoint();
  const SectionResult r = world_.run_section(level);
  history_.push_back(r.state);

  const double eta =
      world_.route().sections[static_cast<std::size_t>(i)].eta;
  const double eps = eta_ratio(eta, r.ata);

  EnvStep out;
  out.reward = reward(eps, cfg_.reward);
  out.wake = r.woke;
  out.done = r.woke || world_.at_route_end();
  out.obs = observe();

  last_ata_ = r.ata;
  last_eta_ = eta;
  woke_ = r.woke;
  done_ = out.done;

  Transition tr;
  tr.action = level;
  tr.reward = out.reward;
  tr.done = out.done;
  trip_.transitions.push_back(std::move(tr));
  trip_.terminated_by_wakeup = r.woke;
  return out;
}

}  // namespace sleepcc
