#pragma once

#include <memory>
#include <string>
#include <vector>

#include "sleepcc/env.hpp"
#include "sleepcc/nets.hpp"

// Trip-level evaluation: fixed-level and random baselines against trained
// policies on paired route/traffic seeds, with the late-rate / movement
// metrics and bubble categories.

namespace sleepcc {

double late_rate(double t_ata_final, double t_eta_final);

// Trip-peak IMU magnitude normalized by the wake threshold.
double rel_max_movement(double trip_peak, double m_thres);
double rel_max_movement(const ImuStream& stream, double m_thres);

enum class TripCategory { kGood, kAcceptable, kPoor };
const char* to_string(TripCategory c);

// good: movement < 0.4 and late < 1; poor: movement > 0.8 or late > 2.
TripCategory categorize(double late, double movement);

struct BenchPolicy {
  enum class Kind { kFixed, kRandom, kCheckpoint };
  std::string name;
  Kind kind = Kind::kFixed;
  int fixed_level = 0;
  std::shared_ptr<PolicyNet> net;

  static BenchPolicy fixed(std::string name, int level);
  static BenchPolicy random(std::string name = "rand");
  static BenchPolicy trained(std::string name, std::shared_ptr<PolicyNet> net);
};

struct TripRecord {
  std::string policy;
  std::string route_id;
  std::uint64_t seed = 0;
  double late_rate = 0.0;
  double rel_max_movement = 0.0;
  bool woke_up = false;
  TripCategory category = TripCategory::kAcceptable;
  double total_reward = 0.0;
  int steps = 0;
};

struct PolicyAggregate {
  std::string policy;
  int n_trips = 0;
  double mean_late_rate = 0.0;
  double wake_up_rate = 0.0;
  double mean_rel_max_movement = 0.0;
  double mean_total_reward = 0.0;
  int n_good = 0, n_acceptable = 0, n_poor = 0;
};

struct EvalReport {
  std::vector<TripRecord> trips;
  std::vector<PolicyAggregate> aggregates;
};

PolicyAggregate aggregate_policy(const std::string& name,
                                 const std::vector<TripRecord>& trips);

struct BenchConfig {
  std::vector<std::uint64_t> route_seeds;
  int episodes_per_route = 1;
  int n_checkpoints = 20;
  int eta_reference_level = 5;
  RouteGenConfig route_gen;
  DrivingEnvConfig env;
  TrafficConfig traffic;  // congestion_seed is derived per trip
  SimTuning tuning;
  WristModelConfig wrist;
  WakeDetectorConfig wake;
};

// Evaluates every policy on identical (route, traffic) cells. Trained
// policies act greedily; rand draws uniformly with a per-cell seed.
EvalReport run_benchmark(const std::vector<BenchPolicy>& policies,
                         const BenchConfig& cfg);

// Runs one trip in an already-constructed environment.
TripRecord run_trip(const BenchPolicy& policy, DrivingEnv& env,
                    std::uint64_t cell_seed);

void write_report_csv(const EvalReport& report, const std::string& path);
void write_aggregates_csv(const EvalReport& report, const std::string& path);
void write_bubbles_csv(const EvalReport& report, const std::string& path);

}  // namespace sleepcc
