#include "sleepcc/sim.hpp"

#include <algorithm>
#include <cmath>

namespace sleepcc {

namespace {
constexpr double kArriveEps = 0.5;       // m
constexpr double kEventHorizon = 250.0;  // m
constexpr double kLeadHorizon = 150.0;   // m
}  // namespace

LevelDynamics dynamics_from_level(int level, const SimTuning& t) {
  const double a = static_cast<double>(level);
  LevelDynamics d;
  d.accel_cap = t.accel_cap_base + t.accel_cap_per_level * a;
  d.comfort_accel =
      std::min(t.comfort_accel_base + t.comfort_accel_per_level * a, d.accel_cap);
  d.brake_comfort = t.brake_comfort_base + t.brake_comfort_per_level * a;
  d.jerk = t.jerk_base + t.jerk_per_level * a;
  d.turn_speed = t.turn_speed_base + t.turn_speed_per_level * a;
  d.steer_rate = t.steer_rate_base + t.steer_rate_per_level * a;
  return d;
}

World::World(RouteMap route, TrafficConfig traffic, SimTuning tuning,
             WristModelConfig wrist, WakeDetectorConfig wake,
             std::uint64_t seed)
    : route_(std::move(route)),
      traffic_(traffic),
      tuning_(tuning),
      wrist_cfg_(wrist),
      wake_(wake),
      seed_(seed) {
  route_.validate();
  section_starts_.resize(route_.sections.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < route_.sections.size(); ++i) {
    section_starts_[i] = acc;
    acc += route_.sections[i].length;
  }
  total_length_ = acc;
  reset();
}

void World::reset() {
  ego_ = VehicleState{};
  wrist_ = WristState{};
  time_ = 0.0;
  checkpoint_ = 0;
  commanded_accel_ = 0.0;
  target_speed_ = 0.0;
  replan_timer_ = 0.0;
  wait_timer_ = 0.0;
  wait_done_ = false;
  next_inter_section_ = 0;
  next_inter_index_ = 0;
  maneuver_ = Maneuver::kNone;
  maneuver_progress_ = 0.0;
  maneuver_span_ = 0.0;
  lane_change_target_ = 0;
  steering_target_ = 0.0;
  pending_turn_steer_ = 0.0;
  signal_prev_ = false;
  throttle_on_ = false;
  saw_brake_ = false;
  stall_time_ = 0.0;
  sect_n_acc_ = sect_n_trn_ = sect_w_max_ = 0.0;
  sect_t0_ = 0.0;
  sect_imu_.clear();
  trip_imu_peak_ = 0.0;
  min_lead_gap_ = 1e30;
  bump_ticks_ = 0;
  bump_amp_ = 0.0;
  current_section_ = 0;
  decision_rng_.seed(seed_ * 0x9e3779b97f4a7c15ULL + 1);
  noise_rng_.seed(seed_ * 0xbf58476d1ce4e5b9ULL + 2);
  vehicle_trace_.clear();
  imu_trace_.clear();
  spawn_leads();
}

int World::section_at(double pos) const {
  const int n = n_checkpoints();
  // Sections are contiguous from zero; linear walk from the cached index
  // would also work, but the route is small.
  int lo = 0, hi = n - 1;
  while (lo < hi) {
    const int mid = (lo + hi + 1) / 2;
    if (section_starts_[static_cast<std::size_t>(mid)] <= pos) lo = mid;
    else hi = mid - 1;
  }
  return lo;
}

double World::section_start(int idx) const {
  return section_starts_[static_cast<std::size_t>(idx)];
}

double World::speed_limit_at(double pos) const {
  const double p = std::clamp(pos, 0.0, total_length_ - 1e-6);
  return section(section_at(p)).speed_limit;
}

void World::spawn_leads() {
  leads_.clear();
  if (traffic_.lead_vehicle_density <= 0.0) return;
  std::mt19937_64 rng(traffic_.congestion_seed * 0x94d049bb133111ebULL + 3);
  std::exponential_distribution<double> spacing(
      traffic_.lead_vehicle_density / 1000.0);
  // Wide jitter so a share of leads is well below the ego's cruise
  // speed; otherwise the ego (which stops at intersections while leads
  // do not) never catches up and traffic has no effect.
  std::uniform_real_distribution<double> jitter(0.55, 1.05);
  std::uniform_int_distribution<int> lane_pick(0, 2);
  double pos = 40.0;
  while (true) {
    pos += std::max(spacing(rng), 15.0);
    if (pos > total_length_ + 200.0) break;
    LeadVehicle lv;
    lv.position = pos;
    lv.target_factor = jitter(rng);
    const int lanes =
        pos < total_length_ ? section(section_at(pos)).lanes : 1;
    lv.lane = std::min(lane_pick(rng), lanes - 1);
    lv.speed = traffic_.lead_speed_fraction * lv.target_factor *
               speed_limit_at(pos);
    std::uniform_real_distribution<double> move_d(20.0, 60.0);
    std::uniform_real_distribution<double> stop_d(4.0, 18.0);
    lv.move_s = move_d(rng);
    lv.stop_s = stop_d(rng);
    lv.cycle_t = lv.move_s * jitter(rng);  // desynchronized phases
    lv.stopped = false;
    leads_.push_back(lv);
  }
}

const LeadVehicle* World::lead_ahead(int lane, double* gap) const {
  const LeadVehicle* best = nullptr;
  double best_gap = kLeadHorizon;
  const int lanes = section(current_section_).lanes;
  for (const auto& lv : leads_) {
    if (std::min(lv.lane, lanes - 1) != lane) continue;
    const double g = lv.position - ego_.position - tuning_.car_length;
    if (g >= -tuning_.car_length && g < best_gap) {
      best_gap = g;
      best = &lv;
    }
  }
  if (best) *gap = best_gap;
  return best;
}

std::optional<const Intersection*> World::next_intersection(double* abs_pos) {
  const int n = n_checkpoints();
  while (next_inter_section_ < n) {
    const auto& xs = section(next_inter_section_).intersections;
    if (next_inter_index_ >= static_cast<int>(xs.size())) {
      ++next_inter_section_;
      next_inter_index_ = 0;
      continue;
    }
    const double ap = section_start(next_inter_section_) +
                      xs[static_cast<std::size_t>(next_inter_index_)].position;
    if (ap < ego_.position - 2.0) {
      ++next_inter_index_;
      continue;
    }
    *abs_pos = ap;
    return &xs[static_cast<std::size_t>(next_inter_index_)];
  }
  return std::nullopt;
}

void World::consume_intersection() {
  ++next_inter_index_;
  wait_done_ = false;
}

bool World::lane_clear(int lane, const ControlProfile& profile) const {
  const double ahead = std::max(profile.p_d, ego_.speed * 1.0);
  const int lanes = section(current_section_).lanes;
  for (const auto& lv : leads_) {
    if (std::min(lv.lane, lanes - 1) != lane) continue;
    const double rel = lv.position - ego_.position;
    if (rel > -(profile.p_d + tuning_.car_length) &&
        rel < ahead + tuning_.car_length) {
      return false;
    }
  }
  return true;
}

void World::maybe_start_lane_change(const ControlProfile& profile,
                                    const LevelDynamics& dyn) {
  if (!profile.p_a || maneuver_ != Maneuver::kNone || wait_timer_ > 0.0) return;
  const int lanes = section(current_section_).lanes;
  if (lanes < 2) return;
  double ev_pos = 0.0;
  if (auto in = next_intersection(&ev_pos)) {
    (void)in;
    if (ev_pos - ego_.position < 60.0) return;
  }
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  double gap = 0.0;
  const LeadVehicle* lead = lead_ahead(ego_.lane, &gap);
  const bool lead_slow = lead && gap < 2.0 * profile.p_d + 1.5 * ego_.speed &&
                         lead->speed < 0.9 * target_speed_;
  if (lead_slow && ego_.lane + 1 < lanes && lane_clear(ego_.lane + 1, profile)) {
    // Overtaking lane preferred with probability proportional to 100 - p_r.
    if (unit(decision_rng_) < (100.0 - profile.p_r) / 100.0) {
      maneuver_ = Maneuver::kLaneChange;
      lane_change_target_ = ego_.lane + 1;
      maneuver_span_ = std::max(2.0, 4.0 - 0.02 * dyn.steer_rate * 100.0);
      maneuver_progress_ = 0.0;
      lane_change_switched_ = false;
      return;
    }
  }
  if (ego_.lane > 0 && !lead_slow && lane_clear(ego_.lane - 1, profile)) {
    // Return toward the right lane with probability p_r.
    if (unit(decision_rng_) < profile.p_r / 100.0) {
      maneuver_ = Maneuver::kLaneChange;
      lane_change_target_ = ego_.lane - 1;
      maneuver_span_ = std::max(2.0, 4.0 - 0.02 * dyn.steer_rate * 100.0);
      maneuver_progress_ = 0.0;
      lane_change_switched_ = false;
    }
  }
}

void World::replan(const ControlProfile& profile, const LevelDynamics& dyn) {
  target_speed_ = speed_limit_at(ego_.position) * (1.0 + profile.p_s / 100.0);
  maybe_start_lane_change(profile, dyn);
}

double World::controller_accel(const ControlProfile& profile,
                               const LevelDynamics& dyn) {
  const double v = ego_.speed;
  double vt = target_speed_ > 0.0
                  ? target_speed_
                  : speed_limit_at(ego_.position);
  if (maneuver_ == Maneuver::kTurn && maneuver_progress_ < 0.8 * maneuver_span_) {
    vt = std::min(vt, dyn.turn_speed);
  }

  double a;
  if (v < vt) {
    const double r = v / vt;
    a = dyn.comfort_accel * (1.0 - r * r * r * r);
  } else {
    a = -std::min(dyn.brake_comfort, 0.8 * (v - vt));
  }

  // Car following.
  double gap = 0.0;
  const LeadVehicle* lead = lead_ahead(ego_.lane, &gap);
  if (lead) {
    min_lead_gap_ = std::min(min_lead_gap_, gap);
    double a_follow = tuning_.follow_gain_gap * (gap - profile.p_d) +
                      tuning_.follow_gain_speed * (lead->speed - v);
    // Anticipatory braking for large closing speeds: the linear law
    // alone reacts only once the gap is short, which would demand a
    // deceleration far beyond the comfort envelope.
    if (v > lead->speed) {
      const double closing = v - lead->speed;
      const double req =
          closing * closing / (2.0 * std::max(gap - profile.p_d, 0.5));
      if (req >= 0.5 * dyn.brake_comfort) {
        a_follow = std::min(a_follow, -std::min(req, dyn.brake_comfort));
      }
    }
    a = std::min(a, std::max(a_follow, -dyn.brake_comfort));
    if (gap < 0.5 * profile.p_d) a = -tuning_.emergency_decel;
  }

  // Approach braking for the next intersection event. Evaluated every
  // tick: this is the safety-critical path, while route/lane decisions
  // honor the p_u latency.
  double ev_pos = 0.0;
  if (auto in = next_intersection(&ev_pos)) {
    const Intersection* x = *in;
    const double dist = ev_pos - ego_.position;
    if (dist < kEventHorizon) {
      double v_event;
      if (x->wait_s > 0.0 && !wait_done_) {
        v_event = 0.0;
      } else if (x->kind != IntersectionKind::kStraight) {
        v_event = dyn.turn_speed;
      } else {
        v_event = 1e9;  // free crossing
      }
      if (v > v_event) {
        const double req =
            (v * v - v_event * v_event) / (2.0 * std::max(dist, 0.2));
        // Engage at half the comfort envelope and never command beyond
        // it: the early margin absorbs the jerk-limited ramp-in, so the
        // deceleration stays inside the level's envelope all the way to
        // the event instead of spiraling as the distance shrinks.
        if (req >= 0.5 * dyn.brake_comfort) {
          a = std::min(a, -std::min(req, dyn.brake_comfort));
        }
      }
    }
  }

  return std::clamp(a, -tuning_.emergency_decel, dyn.accel_cap);
}

void World::update_steering(const LevelDynamics& dyn, double* steer_rate_out) {
  const double dt = tuning_.dt;
  const double max_delta = dyn.steer_rate * dt;
  const double delta =
      std::clamp(steering_target_ - ego_.steering_angle, -max_delta, max_delta);
  ego_.steering_angle += delta;
  *steer_rate_out = delta / dt;
  sect_w_max_ = std::max(sect_w_max_, std::abs(ego_.steering_angle));
}

void World::advance_occupant(double steer_rate) {
  const double long_acc = wrist_accel_step(wrist_, ego_.accel, ego_.speed,
                                           tuning_.dt, wrist_cfg_);
  const double lat = tuning_.lateral_gain * std::abs(steer_rate);
  double mag = std::hypot(long_acc, lat);
  // Road-texture bumps: Poisson events whose amplitude scales with the
  // square of the vehicle speed.
  if (tuning_.bump_rate > 0.0 && ego_.speed > 0.5) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (bump_ticks_ <= 0 && unit(noise_rng_) < tuning_.bump_rate * tuning_.dt) {
      bump_ticks_ =
          std::max(1, static_cast<int>(tuning_.bump_duration / tuning_.dt));
      // Amplitude grows with speed and, dominantly, with the current
      // longitudinal acceleration: hard transients on rough pavement are
      // what reaches the occupant.
      const double rel = ego_.speed / tuning_.bump_ref_speed;
      bump_amp_ = (0.5 + 0.5 * unit(noise_rng_)) * tuning_.bump_scale *
                  (0.15 * rel * rel + std::abs(ego_.accel));
    }
  }
  if (bump_ticks_ > 0) {
    mag += bump_amp_;
    --bump_ticks_;
  }
  if (tuning_.imu_noise_sigma > 0.0) {
    std::normal_distribution<double> n(0.0, tuning_.imu_noise_sigma);
    mag += n(noise_rng_);
  }
  mag = std::max(mag, 0.0);
  sect_imu_.push_back(mag);
  trip_imu_peak_ = std::max(trip_imu_peak_, mag);
  if (trace_enabled_) imu_trace_.emplace_back(time_, mag);
}

void World::step(int level) {
  step(profile_from_level(level), dynamics_from_level(level, tuning_));
}

void World::step(const ControlProfile& profile, const LevelDynamics& dyn) {
  const double dt = tuning_.dt;

  // Section transition bookkeeping (lane counts can shrink).
  const int sec = section_at(std::min(ego_.position, total_length_ - 1e-6));
  if (sec != current_section_) {
    current_section_ = sec;
    const int lanes = section(sec).lanes;
    if (ego_.lane >= lanes) ego_.lane = lanes - 1;
    if (maneuver_ == Maneuver::kLaneChange && lane_change_target_ >= lanes) {
      maneuver_ = Maneuver::kNone;
      steering_target_ = 0.0;
    }
  }

  if (wait_timer_ > 0.0) {
    wait_timer_ -= dt;
    commanded_accel_ = 0.0;
    ego_.accel = 0.0;
    ego_.speed = 0.0;
    ego_.brake_engaged = false;
    double steer_rate = 0.0;
    steering_target_ = 0.0;
    update_steering(dyn, &steer_rate);
    advance_occupant(steer_rate);
    time_ += dt;
    if (trace_enabled_) {
      vehicle_trace_.push_back({time_, ego_.position, 0.0, 0.0,
                                ego_.steering_angle, ego_.lane, false});
    }
    return;
  }

  replan_timer_ -= dt;
  if (replan_timer_ <= 0.0) {
    replan(profile, dyn);
    replan_timer_ = profile.p_u / 1000.0;
  }
  if (target_speed_ <= 0.0) {
    target_speed_ = speed_limit_at(ego_.position) * (1.0 + profile.p_s / 100.0);
  }

  // Intersection arrival.
  double ev_pos = 0.0;
  if (auto in = next_intersection(&ev_pos)) {
    const Intersection* x = *in;
    const double dist = ev_pos - ego_.position;
    if (dist <= kArriveEps || (x->wait_s > 0.0 && !wait_done_ &&
                               ego_.speed < 0.3 && dist < 3.0)) {
      if (x->wait_s > 0.0 && !wait_done_) {
        wait_timer_ = x->wait_s;
        wait_done_ = true;
        ego_.speed = 0.0;
        ego_.accel = 0.0;
      } else if (dist <= kArriveEps) {
        if (x->kind != IntersectionKind::kStraight &&
            maneuver_ == Maneuver::kNone) {
          maneuver_ = Maneuver::kTurn;
          maneuver_span_ = tuning_.turn_arc_length;
          maneuver_progress_ = 0.0;
          pending_turn_steer_ = (x->kind == IntersectionKind::kLeft)
                                    ? tuning_.turn_steer_angle
                                    : -tuning_.turn_steer_angle;
        }
        consume_intersection();
      }
    }
  }

  // Maneuver steering schedule.
  if (maneuver_ == Maneuver::kTurn) {
    maneuver_progress_ += ego_.speed * dt;
    steering_target_ =
        maneuver_progress_ < 0.6 * maneuver_span_ ? pending_turn_steer_ : 0.0;
    if (maneuver_progress_ >= maneuver_span_ &&
        std::abs(ego_.steering_angle) < 0.02) {
      maneuver_ = Maneuver::kNone;
      steering_target_ = 0.0;
    }
  } else if (maneuver_ == Maneuver::kLaneChange) {
    maneuver_progress_ += dt;
    const double frac = maneuver_progress_ / maneuver_span_;
    const double sign = lane_change_target_ > ego_.lane ? 1.0 : -1.0;
    if (!lane_change_switched_ && frac >= 0.5) {
      ego_.lane = lane_change_target_;
      lane_change_switched_ = true;
    }
    if (frac < 0.4) steering_target_ = sign * tuning_.lane_change_steer_angle;
    else if (frac < 0.8) steering_target_ = -sign * tuning_.lane_change_steer_angle;
    else steering_target_ = 0.0;
    if (frac >= 1.0 && std::abs(ego_.steering_angle) < 0.02) {
      maneuver_ = Maneuver::kNone;
      steering_target_ = 0.0;
    }
  }

  // Turn signal: before and during turns and lane changes.
  bool want_signal = false;
  if (maneuver_ == Maneuver::kLaneChange &&
      maneuver_progress_ < 0.8 * maneuver_span_) {
    want_signal = true;
  }
  if (maneuver_ == Maneuver::kTurn &&
      maneuver_progress_ < 0.6 * maneuver_span_) {
    want_signal = true;
  }
  if (auto in = next_intersection(&ev_pos)) {
    const Intersection* x = *in;
    if (x->kind != IntersectionKind::kStraight &&
        ev_pos - ego_.position <
            ego_.speed * tuning_.signal_lead_time + 3.0) {
      want_signal = true;
    }
  }
  if (want_signal && !signal_prev_) sect_n_trn_ += 1.0;
  signal_prev_ = want_signal;
  ego_.turn_signal = want_signal;

  // Longitudinal control with jerk limiting.
  commanded_accel_ = controller_accel(profile, dyn);
  double jerk = dyn.jerk;
  if (commanded_accel_ <= -0.9 * tuning_.emergency_decel) jerk *= 4.0;
  ego_.accel +=
      std::clamp(commanded_accel_ - ego_.accel, -jerk * dt, jerk * dt);
  ego_.speed += ego_.accel * dt;
  if (ego_.speed < 0.0) {
    ego_.speed = 0.0;
    if (ego_.accel < 0.0) ego_.accel = 0.0;
  }
  ego_.position += ego_.speed * dt;

  // Pedal state: acceleration cycles count a throttle engagement that
  // follows a braking action.
  ego_.brake_engaged = commanded_accel_ < -tuning_.pedal_threshold;
  if (ego_.brake_engaged) {
    saw_brake_ = true;
    throttle_on_ = false;
  } else if (commanded_accel_ > tuning_.pedal_threshold) {
    if (!throttle_on_) {
      throttle_on_ = true;
      if (saw_brake_) {
        sect_n_acc_ += 1.0;
        saw_brake_ = false;
      }
    }
  } else if (commanded_accel_ < 0.5 * tuning_.pedal_threshold) {
    throttle_on_ = false;
  }

  // Lead traffic with stop-and-go congestion cycles.
  for (auto& lv : leads_) {
    lv.cycle_t -= dt;
    if (lv.cycle_t <= 0.0) {
      lv.stopped = !lv.stopped;
      lv.cycle_t = lv.stopped ? lv.stop_s : lv.move_s;
    }
    const double vt = lv.stopped
                          ? 0.0
                          : traffic_.lead_speed_fraction * lv.target_factor *
                                speed_limit_at(lv.position);
    lv.speed += std::clamp(vt - lv.speed, -2.0 * dt, 2.0 * dt);
    lv.position += lv.speed * dt;
  }

  double steer_rate = 0.0;
  update_steering(dyn, &steer_rate);
  advance_occupant(steer_rate);

  // Stall watchdog.
  if (ego_.speed < 0.05 && time_ > 5.0) {
    stall_time_ += dt;
    if (stall_time_ > tuning_.stall_timeout) {
      throw EpisodeAbort("vehicle stalled at position " +
                         std::to_string(ego_.position) + " m, t = " +
                         std::to_string(time_) + " s, checkpoint " +
                         std::to_string(checkpoint_));
    }
  } else {
    stall_time_ = 0.0;
  }

  time_ += dt;
  if (trace_enabled_) {
    vehicle_trace_.push_back({time_, ego_.position, ego_.speed, ego_.accel,
                              ego_.steering_angle, ego_.lane,
                              ego_.turn_signal});
  }
}

SectionResult World::run_section(int level) {
  if (at_route_end()) {
    throw EpisodeAbort("run_section called past the final checkpoint");
  }
  const ControlProfile profile = profile_from_level(level);
  const LevelDynamics dyn = dynamics_from_level(level, tuning_);

  const int i = checkpoint_;
  const double end_pos = section_start(i) + section(i).length;
  sect_n_acc_ = sect_n_trn_ = sect_w_max_ = 0.0;
  sect_t0_ = time_;
  sect_imu_.clear();

  while (ego_.position < end_pos) {
    step(profile, dyn);
  }
  ++checkpoint_;

  const auto [m_max, m_avg] = motion_features(sect_imu_);
  const int next = std::min(i + 1, n_checkpoints() - 1);
  const Section& cur = section(i);
  const Section& nxt = section(next);

  auto count_kind = [](const Section& s, IntersectionKind k) {
    double c = 0.0;
    for (const auto& x : s.intersections) {
      if (x.kind == k) c += 1.0;
    }
    return c;
  };

  SectionResult r;
  r.elapsed = time_ - sect_t0_;
  r.ata = time_;
  r.imu_segment = sect_imu_;
  r.woke = m_max > wake_.m_thres;

  StateVector& sv = r.state;
  sv.m_max = m_max;
  sv.m_avg = m_avg;
  sv.n_acc = sect_n_acc_;
  sv.n_trn = sect_n_trn_;
  sv.w_max = sect_w_max_;
  sv.s_avg = cur.length / std::max(r.elapsed, 1e-9);
  sv.s_lmt = cur.speed_limit;
  sv.n_lt = count_kind(cur, IntersectionKind::kLeft);
  sv.n_rt = count_kind(cur, IntersectionKind::kRight);
  sv.n_st = count_kind(cur, IntersectionKind::kStraight);
  sv.s_lmt_next = nxt.speed_limit;
  sv.n_lt_next = count_kind(nxt, IntersectionKind::kLeft);
  sv.n_rt_next = count_kind(nxt, IntersectionKind::kRight);
  sv.n_st_next = count_kind(nxt, IntersectionKind::kStraight);
  return r;
}

RouteMap compute_etas(const RouteMap& route, int reference_level,
                      const SimTuning& tuning) {
  RouteMap out = route;
  SimTuning quiet = tuning;
  quiet.imu_noise_sigma = 0.0;
  World w(route, TrafficConfig{0.0, 1.0, 0}, quiet, WristModelConfig{},
          WakeDetectorConfig{}, 0);
  for (std::size_t i = 0; i < out.sections.size(); ++i) {
    const SectionResult r = w.run_section(reference_level);
    out.sections[i].eta = r.ata;
  }
  return out;
}

}  // namespace sleepcc
