#pragma once

#include <memory>

#include "sleepcc/core.hpp"
#include "sleepcc/nets.hpp"
#include "sleepcc/sim.hpp"

// Environment abstraction consumed by the PPO trainer, and the concrete
// checkpoint-MDP driving environment.

namespace sleepcc {

struct EnvStep {
  FeatureMatrix obs;
  double reward = 0.0;
  bool done = false;
  bool wake = false;
};

class Env {
 public:
  virtual ~Env() = default;
  virtual FeatureMatrix reset() = 0;
  virtual EnvStep step(int action_index) = 0;
  virtual int n_actions() const = 0;
};

struct DrivingEnvConfig {
  RewardConfig reward;
  NormalizationTable norm = NormalizationTable::defaults();
  ActionSpace actions;
  int k = 5;  // observation window length
};

// One checkpoint-decision MDP over a route with precomputed ETAs: an
// action picks the aggressiveness level for the next section, the reward
// settles at the following checkpoint from the ETA/ATA ratio, and the
// episode ends on occupant wake-up or route completion.
class DrivingEnv : public Env {
 public:
  DrivingEnv(RouteMap route_with_etas, TrafficConfig traffic, SimTuning tuning,
             WristModelConfig wrist, WakeDetectorConfig wake,
             DrivingEnvConfig cfg, std::uint64_t seed);

  FeatureMatrix reset() override;
  EnvStep step(int action_index) override;
  int n_actions() const override { return cfg_.actions.size(); }

  const World& world() const { return world_; }
  World& mutable_world() { return world_; }
  // Metrics at the last checkpoint reached (for trip-level evaluation).
  double last_ata() const { return last_ata_; }
  double last_eta() const { return last_eta_; }
  bool woke() const { return woke_; }
  double trip_imu_peak() const { return world_.trip_imu_peak(); }
  const TripSequence& trip() const { return trip_; }

 private:
  FeatureMatrix observe() const;
  StateVector initial_state() const;

  DrivingEnvConfig cfg_;
  World world_;
  std::vector<StateVector> history_;
  TripSequence trip_;
  double last_ata_ = 0.0;
  double last_eta_ = 0.0;
  bool woke_ = false;
  bool done_ = true;
};

}  // namespace sleepcc
