#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sleepcc/bench.hpp"
#include "sleepcc/env.hpp"
#include "sleepcc/nets.hpp"
#include "sleepcc/ppo.hpp"

// Merged run configuration: JSON file, schema-validated with unknown keys
// rejected, plus prefix-scoped environment-variable overrides.

namespace sleepcc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RouteSetConfig {
  int n_checkpoints = 20;
  double checkpoint_spacing = 150.0;
  std::uint64_t training_seed_first = 0;
  int training_seed_count = 20;
  std::uint64_t eval_seed_first = 1000;
  int eval_seed_count = 10;
  int eta_reference_level = 5;

  std::vector<std::uint64_t> training_seeds() const;
  std::vector<std::uint64_t> eval_seeds() const;
};

struct RunConfig {
  std::string run_id = "run";
  std::uint64_t seed = 0;
  std::string output_dir = "runs/run";

  RewardConfig reward;
  NormalizationTable norm = NormalizationTable::defaults();
  WristModelConfig wrist;
  WakeDetectorConfig wake;
  SimTuning sim;
  TrafficConfig traffic;
  RouteSetConfig routes;
  ActionSpace actions;
  PolicyConfig policy;
  PpoConfig ppo;
  int eval_episodes_per_route = 3;

  void validate() const;
};

// Parse from JSON text; every present key must be known, every absent key
// keeps its default. The environment prefix (default "SLEEPCC_") allows
// overrides of the form SLEEPCC_ppo__iterations=50.
RunConfig parse_run_config(const std::string& json_text,
                           bool apply_env_overrides = true,
                           const std::string& env_prefix = "SLEEPCC_");
RunConfig load_run_config(const std::string& path,
                          bool apply_env_overrides = true);

// Resolved snapshot with every effective value spelled out.
std::string run_config_to_json(const RunConfig& cfg);

// Shared assembly helpers for the CLI and tests.
BenchConfig make_bench_config(const RunConfig& cfg,
                              const std::vector<std::uint64_t>& route_seeds,
                              int episodes_per_route);
EnvFactory make_training_env_factory(const RunConfig& cfg);

}  // namespace sleepcc
