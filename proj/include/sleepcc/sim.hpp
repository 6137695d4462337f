#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sleepcc/core.hpp"
#include "sleepcc/occupant.hpp"
#include "sleepcc/route.hpp"

// Kinematic driving world: ego vehicle under the aggressiveness-derived
// cruise controller, lead traffic, intersections with turns and waits,
// and the occupant IMU stream.

namespace sleepcc {

class EpisodeAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrafficConfig {
  double lead_vehicle_density = 4.0;  // vehicles/km
  double lead_speed_fraction = 0.85;  // of the local speed limit
  std::uint64_t congestion_seed = 0;
};

struct VehicleState {
  double position = 0.0;        // m along route
  int lane = 0;
  double speed = 0.0;           // m/s
  double accel = 0.0;           // m/s^2, actual (jerk-limited)
  double steering_angle = 0.0;  // rad
  bool turn_signal = false;
  bool brake_engaged = false;
};

struct LeadVehicle {
  double position = 0.0;
  double speed = 0.0;
  double target_factor = 1.0;  // per-vehicle jitter on the speed fraction
  int lane = 0;
  // Stop-and-go congestion cycle: alternate move_s of cruising with
  // stop_s of standstill, so the ego actually encounters traffic.
  double move_s = 40.0;
  double stop_s = 0.0;
  double cycle_t = 0.0;
  bool stopped = false;
};

// Level-dependent motion envelope of the controller. The hard acceleration
// cap is 1.0 + 0.25a; the comfort values are what the controller actually
// requests outside emergencies.
struct LevelDynamics {
  double accel_cap = 1.0;      // m/s^2
  double comfort_accel = 0.24; // m/s^2
  double brake_comfort = 0.26; // m/s^2
  double jerk = 1.2;           // m/s^3
  double turn_speed = 2.5;     // m/s
  double steer_rate = 0.35;    // rad/s
};

struct SimTuning {
  double dt = 0.01;  // s; also the IMU sampling period
  double comfort_accel_base = 0.24;
  double comfort_accel_per_level = 0.042;
  double accel_cap_base = 1.0;
  double accel_cap_per_level = 0.25;
  double brake_comfort_base = 0.26;
  double brake_comfort_per_level = 0.045;
  double jerk_base = 1.2;
  double jerk_per_level = 0.5;
  double turn_speed_base = 2.5;
  double turn_speed_per_level = 0.25;
  double steer_rate_base = 0.35;
  double steer_rate_per_level = 0.08;
  double turn_steer_angle = 0.6;         // rad
  double lane_change_steer_angle = 0.12; // rad
  double turn_arc_length = 8.0;          // m
  double lateral_gain = 1.2;             // m/s^2 per rad/s steering rate
  double emergency_decel = 8.0;          // m/s^2
  double signal_lead_time = 2.0;         // s
  double imu_noise_sigma = 0.02;         // m/s^2
  // Road-texture impulses felt by the occupant; amplitude grows with
  // speed so faster trips carry more wake risk.
  double bump_rate = 0.05;               // events/s
  double bump_duration = 0.1;            // s
  double bump_scale = 2.5;               // gain on the speed+accel mix
  double bump_ref_speed = 13.9;          // m/s
  double stall_timeout = 180.0;          // s
  double pedal_threshold = 0.1;          // m/s^2 commanded accel
  double car_length = 4.5;               // m
  double follow_gain_gap = 0.3;          // 1/s^2
  double follow_gain_speed = 0.9;        // 1/s
};

LevelDynamics dynamics_from_level(int level, const SimTuning& tuning);

struct SectionResult {
  StateVector state;
  double elapsed = 0.0;  // s in this section
  double ata = 0.0;      // cumulative trip time at the checkpoint, s
  bool woke = false;
  std::vector<double> imu_segment;  // magnitudes at the IMU rate
};

struct TraceRow {
  double t;
  double position;
  double speed;
  double accel;
  double steering;
  int lane;
  bool signal;
};

class World {
 public:
  World(RouteMap route, TrafficConfig traffic, SimTuning tuning,
        WristModelConfig wrist, WakeDetectorConfig wake, std::uint64_t seed);

  void reset();

  // Advance one tick under the given controller profile and envelope.
  void step(const ControlProfile& profile, const LevelDynamics& dyn);
  // Convenience: derive profile and envelope from an aggressiveness level.
  void step(int level);

  // Drive from the current checkpoint to the next one under the given
  // level; returns the section's state vector and timing.
  SectionResult run_section(int level);

  const VehicleState& vehicle() const { return ego_; }
  const std::vector<LeadVehicle>& leads() const { return leads_; }
  const RouteMap& route() const { return route_; }
  double time() const { return time_; }
  int checkpoint() const { return checkpoint_; }
  int n_checkpoints() const { return static_cast<int>(route_.sections.size()); }
  bool at_route_end() const { return checkpoint_ >= n_checkpoints(); }
  double trip_imu_peak() const { return trip_imu_peak_; }
  double min_lead_gap() const { return min_lead_gap_; }
  const WakeDetectorConfig& wake_config() const { return wake_; }
  const SimTuning& tuning() const { return tuning_; }

  // Scenario setup: place an extra lead vehicle (tests and tooling).
  void inject_lead(const LeadVehicle& lv) { leads_.push_back(lv); }

  void set_trace_enabled(bool enabled) { trace_enabled_ = enabled; }
  const std::vector<TraceRow>& vehicle_trace() const { return vehicle_trace_; }
  const std::vector<std::pair<double, double>>& imu_trace() const {
    return imu_trace_;
  }

 private:
  enum class Maneuver { kNone, kTurn, kLaneChange };

  struct PassedMark {
    int section;
    int index;
  };

  int section_at(double pos) const;
  double section_start(int idx) const;
  const Section& section(int idx) const { return route_.sections[
      static_cast<std::size_t>(idx)]; }
  double speed_limit_at(double pos) const;

  void spawn_leads();
  void replan(const ControlProfile& profile, const LevelDynamics& dyn);
  double controller_accel(const ControlProfile& profile,
                          const LevelDynamics& dyn);
  std::optional<const Intersection*> next_intersection(double* abs_pos);
  void consume_intersection();
  void update_steering(const LevelDynamics& dyn, double* steer_rate_out);
  void advance_occupant(double steer_rate);
  const LeadVehicle* lead_ahead(int lane, double* gap) const;
  bool lane_clear(int lane, const ControlProfile& profile) const;
  void maybe_start_lane_change(const ControlProfile& profile,
                               const LevelDynamics& dyn);

  RouteMap route_;
  std::vector<double> section_starts_;
  double total_length_ = 0.0;
  TrafficConfig traffic_;
  SimTuning tuning_;
  WristModelConfig wrist_cfg_;
  WakeDetectorConfig wake_;
  std::uint64_t seed_;

  VehicleState ego_;
  std::vector<LeadVehicle> leads_;
  WristState wrist_;
  double time_ = 0.0;
  int checkpoint_ = 0;

  // controller state
  double commanded_accel_ = 0.0;
  double target_speed_ = 0.0;
  double replan_timer_ = 0.0;
  double wait_timer_ = 0.0;
  bool wait_done_ = false;
  int current_section_ = 0;
  int next_inter_section_ = 0;
  int next_inter_index_ = 0;
  Maneuver maneuver_ = Maneuver::kNone;
  double maneuver_progress_ = 0.0;  // m of arc for turns, s for lane changes
  double maneuver_span_ = 0.0;
  int lane_change_target_ = 0;
  bool lane_change_switched_ = false;
  double steering_target_ = 0.0;
  double pending_turn_steer_ = 0.0;
  bool signal_prev_ = false;
  bool throttle_on_ = false;
  bool saw_brake_ = false;
  double stall_time_ = 0.0;

  // per-section accumulators
  double sect_n_acc_ = 0.0;
  double sect_n_trn_ = 0.0;
  double sect_w_max_ = 0.0;
  double sect_t0_ = 0.0;
  std::vector<double> sect_imu_;

  double trip_imu_peak_ = 0.0;
  double min_lead_gap_ = 1e30;
  int bump_ticks_ = 0;
  double bump_amp_ = 0.0;

  std::mt19937_64 decision_rng_;
  std::mt19937_64 noise_rng_;

  bool trace_enabled_ = false;
  std::vector<TraceRow> vehicle_trace_;
  std::vector<std::pair<double, double>> imu_trace_;
};

// Fill cumulative per-checkpoint ETAs by simulating an empty road at the
// reference level.
RouteMap compute_etas(const RouteMap& route, int reference_level = 5,
                      const SimTuning& tuning = SimTuning{});

}  // namespace sleepcc
