#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

// Core MDP-level types and pure functions shared by the simulator, the
// policy networks, and the trainer.

namespace sleepcc {

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Discrete aggressiveness levels {a_min, ..., a_max}.
struct ActionSpace {
  int a_min = 0;
  int a_max = 10;

  int size() const { return a_max - a_min + 1; }
  bool contains(int level) const { return level >= a_min && level <= a_max; }
  void require(int level) const;
};

// Per-section feature vector: occupant motion, driving actions, and map
// context for the current and next section.
struct StateVector {
  double m_max = 0.0;   // section-max wrist IMU magnitude, m/s^2
  double m_avg = 0.0;   // section-average wrist IMU magnitude, m/s^2
  double n_acc = 0.0;   // acceleration cycles (throttle after a brake)
  double n_trn = 0.0;   // turn-signal activations
  double w_max = 0.0;   // max steering-wheel angle magnitude, rad
  double s_avg = 0.0;   // average vehicle speed, m/s
  double s_lmt = 0.0;   // current section speed limit, m/s
  double n_lt = 0.0;    // left-turn crossings in current section
  double n_rt = 0.0;    // right-turn crossings
  double n_st = 0.0;    // straight crossings
  double s_lmt_next = 0.0;
  double n_lt_next = 0.0;
  double n_rt_next = 0.0;
  double n_st_next = 0.0;

  static constexpr int kFeatures = 14;
  std::array<double, kFeatures> to_array() const;
  static const std::array<const char*, kFeatures>& feature_names();
};

// Window of the K most recent state vectors, oldest first.
struct Observation {
  int k = 0;
  std::vector<StateVector> columns;
};

struct RewardConfig {
  double epsilon_th = 0.5;  // ETA/ATA ratio below which reward is zero
  double beta = 3.0;        // exponential sharpness on (epsilon_th, 1)
};

struct Transition {
  Observation observation;
  int action = 0;
  double reward = 0.0;
  bool done = false;
  double value_estimate = 0.0;
  double log_prob = 0.0;
};

struct TripSequence {
  std::vector<Transition> transitions;
  bool terminated_by_wakeup = false;
  std::string route_id;
  std::uint64_t seed = 0;
};

// Per-feature (min, max) affine normalization table.
struct NormalizationTable {
  std::array<double, StateVector::kFeatures> min{};
  std::array<double, StateVector::kFeatures> max{};

  static NormalizationTable defaults();
};

// Reward as a function of the ETA/ATA ratio: 0 below epsilon_th, 1 at or
// above 1, and a normalized exponential in between (continuous at both
// endpoints).
double reward(double eps, const RewardConfig& cfg);

double eta_ratio(double t_eta, double t_ata);

// Last k entries of the history, oldest first; the earliest entry is
// replicated on the left when fewer than k exist.
Observation build_observation(const std::vector<StateVector>& history, int k);

// Map each feature to [0,1] via (x - min)/(max - min), clamped.
std::array<double, StateVector::kFeatures> normalize_state(
    const StateVector& v, const NormalizationTable& scales);

}  // namespace sleepcc
