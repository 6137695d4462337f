#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "sleepcc/env.hpp"
#include "sleepcc/nets.hpp"

// PPO with clipped surrogate objective, GAE advantages, and the fixed
// 20-steps-per-update rollout scheme.

namespace sleepcc {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PpoConfig {
  int iterations = 2000;
  int steps_per_update = 20;
  double lr = 1e-4;
  double gamma = 0.99;
  double clip_eps = 0.2;
  double gae_lambda = 0.95;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  int epochs_per_update = 4;
  int minibatch = 0;  // 0 = full buffer
  std::uint64_t seed = 0;

  void validate() const;
};

struct RolloutBuffer {
  std::vector<FeatureMatrix> observations;
  std::vector<int> actions;  // action indices
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<double> log_probs;
  std::vector<char> dones;
  double bootstrap_value = 0.0;  // critic value past a truncated tail

  std::vector<double> rewards_to_go;
  std::vector<double> advantages;

  std::vector<double> completed_episode_rewards;
  double partial_episode_reward = 0.0;

  int size() const { return static_cast<int>(rewards.size()); }
};

// Runs episodes (restarting on termination) until exactly `steps`
// transitions are collected; a truncated final episode is bootstrapped
// with the critic's value of the next observation.
RolloutBuffer collect_rollout(Env& env, PolicyNet& policy, int steps,
                              std::mt19937_64& rng);

// Discounted reward sums, reset at episode boundaries; the bootstrap value
// feeds only the trailing truncated segment.
std::vector<double> compute_rewards_to_go(const std::vector<double>& rewards,
                                          const std::vector<char>& dones,
                                          double gamma,
                                          double bootstrap_value = 0.0);

std::vector<double> gae_advantages(const std::vector<double>& rewards,
                                   const std::vector<double>& values,
                                   const std::vector<char>& dones,
                                   double gamma, double lambda,
                                   double bootstrap_value = 0.0);

struct LossBreakdown {
  Tensor total;          // minimized objective
  double l_clip = 0.0;   // clipped surrogate (maximized form)
  double l_vf = 0.0;
  double entropy = 0.0;
};

// Losses over the given sample indices (empty = all samples). Requires
// rewards_to_go and advantages to be filled.
LossBreakdown ppo_losses(const RolloutBuffer& buffer, PolicyNet& policy,
                         const PpoConfig& cfg,
                         const std::vector<int>& indices,
                         std::mt19937_64& dropout_rng);

struct IterationLog {
  int iteration = 0;
  double mean_episode_reward = 0.0;
  double l_clip = 0.0;
  double l_vf = 0.0;
  double entropy = 0.0;
};

struct TrainResult {
  std::vector<IterationLog> curve;
  std::string best_checkpoint_json;
  double best_reward = -1e30;
};

// Per-iteration environment supplier; the trainer's RNG drives scenario
// sampling so runs are reproducible from the config seed.
using EnvFactory = std::function<std::unique_ptr<Env>(std::mt19937_64& rng)>;

TrainResult train(const PpoConfig& cfg, PolicyNet& policy,
                  const EnvFactory& factory,
                  const std::function<void(const IterationLog&)>& on_iteration =
                      nullptr);

}  // namespace sleepcc
