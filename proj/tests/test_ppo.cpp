#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "doctest.h"
#include "sleepcc/ppo.hpp"

using namespace sleepcc;

namespace {

// One-step bandit: the observation is constant and the reward depends only
// on the chosen arm.
class BanditEnv : public Env {
 public:
  explicit BanditEnv(std::vector<double> arm_rewards, int episode_len = 1)
      : arm_rewards_(std::move(arm_rewards)), episode_len_(episode_len) {}

  FeatureMatrix reset() override {
    t_ = 0;
    return obs();
  }
  EnvStep step(int action) override {
    EnvStep s;
    s.obs = obs();
    s.reward = arm_rewards_[static_cast<std::size_t>(action)];
    s.done = ++t_ >= episode_len_;
    return s;
  }
  int n_actions() const override {
    return static_cast<int>(arm_rewards_.size());
  }

 private:
  FeatureMatrix obs() const {
    FeatureMatrix m;
    m.rows = 1;
    m.cols = 3;
    m.data = {0.2, 0.5, 0.8};
    return m;
  }
  std::vector<double> arm_rewards_;
  int episode_len_;
  int t_ = 0;
};

PolicyConfig bandit_policy_config(int n_actions) {
  PolicyConfig cfg;
  cfg.arch = ArchKind::kLstm;
  cfg.seq_len = 1;
  cfg.n_actions = n_actions;
  cfg.mlp.input_dim = 3;
  cfg.mlp.layers = 1;
  cfg.mlp.width = 8;
  cfg.lstm.hidden = 8;
  cfg.lstm.num_layers = 1;
  cfg.lstm.dropout = 0.0;
  cfg.init_seed = 1;
  return cfg;
}

// Brute-force GAE from the definition: a nested sum of discounted TD
// residuals cut off at episode boundaries.
std::vector<double> gae_reference(const std::vector<double>& r,
                                  const std::vector<double>& v,
                                  const std::vector<char>& d, double gamma,
                                  double lambda, double bootstrap) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double nd = d[t] ? 0.0 : 1.0;
    const double next_v = (t + 1 < n) ? v[t + 1] : bootstrap;
    delta[t] = r[t] + gamma * next_v * nd - v[t];
  }
  std::vector<double> adv(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double coeff = 1.0;
    for (std::size_t l = t; l < n; ++l) {
      adv[t] += coeff * delta[l];
      if (d[l]) break;
      coeff *= gamma * lambda;
    }
  }
  return adv;
}

}  // namespace

TEST_CASE("ppo config validation") {
  PpoConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  SUBCASE("iterations") { cfg.iterations = 0; CHECK_THROWS(cfg.validate()); }
  SUBCASE("gamma") { cfg.gamma = 1.5; CHECK_THROWS(cfg.validate()); }
  SUBCASE("lambda") { cfg.gae_lambda = 0.0; CHECK_THROWS(cfg.validate()); }
  SUBCASE("clip") { cfg.clip_eps = 1.0; CHECK_THROWS(cfg.validate()); }
  SUBCASE("lr") { cfg.lr = -1.0; CHECK_THROWS(cfg.validate()); }
}

TEST_CASE("rewards-to-go oracle: three unit rewards at gamma 0.99") {
  const auto out =
      compute_rewards_to_go({1.0, 1.0, 1.0}, {0, 0, 1}, 0.99);
  REQUIRE(out.size() == 3);
  CHECK(out[0] == doctest::Approx(2.9701).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(1.99).epsilon(1e-12));
  CHECK(out[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rewards-to-go stops at episode boundaries") {
  // Two episodes: [1, 1] then [10]. The first must not see the 10.
  const auto out = compute_rewards_to_go({1.0, 1.0, 10.0}, {0, 1, 1}, 0.5);
  CHECK(out[0] == doctest::Approx(1.5));
  CHECK(out[1] == doctest::Approx(1.0));
  CHECK(out[2] == doctest::Approx(10.0));
}

TEST_CASE("rewards-to-go bootstraps only the trailing truncated segment") {
  const auto out =
      compute_rewards_to_go({1.0, 1.0, 1.0}, {1, 0, 0}, 0.5, 8.0);
  CHECK(out[0] == doctest::Approx(1.0));        // done: no bootstrap
  CHECK(out[2] == doctest::Approx(1.0 + 0.5 * 8.0));
  CHECK(out[1] == doctest::Approx(1.0 + 0.5 * out[2]));
  CHECK_THROWS_AS(compute_rewards_to_go({1.0}, {0, 0}, 0.9), InvalidInput);
}

TEST_CASE("GAE matches the brute-force nested sum on random buffers") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 5 + trial % 13;
    std::vector<double> r(n), v(n);
    std::vector<char> d(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      r[i] = unit(rng);
      v[i] = 2.0 * unit(rng) - 1.0;
      d[i] = unit(rng) < 0.25 ? 1 : 0;
    }
    const double bootstrap = d[n - 1] ? 0.0 : unit(rng);
    const auto fast = gae_advantages(r, v, d, 0.99, 0.95, bootstrap);
    const auto slow = gae_reference(r, v, d, 0.99, 0.95, bootstrap);
    REQUIRE(fast.size() == n);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(gae_advantages({1.0}, {}, {0}, 0.9, 0.9), InvalidInput);
}

TEST_CASE("GAE reduces to the TD residual when lambda shrinks the tail") {
  // With a done flag at every step the advantage is exactly r - v.
  const auto adv =
      gae_advantages({1.0, 2.0}, {0.3, 0.4}, {1, 1}, 0.99, 0.95);
  CHECK(adv[0] == doctest::Approx(0.7));
  CHECK(adv[1] == doctest::Approx(1.6));
}

TEST_CASE("collect_rollout gathers exactly the requested transitions") {
  BanditEnv env({0.0, 1.0}, /*episode_len=*/3);
  PolicyNet policy(bandit_policy_config(2));
  std::mt19937_64 rng(5);
  const RolloutBuffer buf = collect_rollout(env, policy, 7, rng);
  CHECK(buf.size() == 7);
  CHECK(buf.observations.size() == 7);
  CHECK(buf.dones[2] == 1);
  CHECK(buf.dones[5] == 1);
  CHECK(buf.dones[6] == 0);  // truncated third episode
  CHECK(buf.completed_episode_rewards.size() == 2);
  // Truncated tail bootstraps with the critic value of the next state.
  const FeatureMatrix obs = env.reset();
  CHECK(buf.bootstrap_value ==
        doctest::Approx(policy.forward_eval(obs).value.item()));
  // A rollout ending exactly on a boundary has a zero bootstrap.
  std::mt19937_64 rng2(5);
  BanditEnv env2({0.0, 1.0}, 3);
  const RolloutBuffer buf2 = collect_rollout(env2, policy, 6, rng2);
  CHECK(buf2.dones.back() == 1);
  CHECK(buf2.bootstrap_value == 0.0);
}

TEST_CASE("clip identity: unchanged policy gives ratio one") {
  BanditEnv env({0.2, 0.9}, 2);
  PolicyNet policy(bandit_policy_config(2));
  std::mt19937_64 rng(7);
  RolloutBuffer buf = collect_rollout(env, policy, 10, rng);
  PpoConfig cfg;
  buf.rewards_to_go = compute_rewards_to_go(buf.rewards, buf.dones, cfg.gamma,
                                            buf.bootstrap_value);
  buf.advantages = gae_advantages(buf.rewards, buf.values, buf.dones,
                                  cfg.gamma, cfg.gae_lambda,
                                  buf.bootstrap_value);
  std::mt19937_64 drng(0);
  const LossBreakdown lb = ppo_losses(buf, policy, cfg, {}, drng);
  const double mean_adv =
      std::accumulate(buf.advantages.begin(), buf.advantages.end(), 0.0) /
      buf.advantages.size();
  // With the sampling policy unchanged every ratio is 1, both surrogate
  // branches coincide, and l_clip collapses to the mean advantage.
  CHECK(lb.l_clip == doctest::Approx(mean_adv).epsilon(1e-9));
  CHECK(lb.entropy > 0.0);
  CHECK(lb.entropy <= std::log(2.0) + 1e-12);
  CHECK(lb.l_vf >= 0.0);
  // total = -l_clip + c_v l_vf - c_e entropy.
  CHECK(lb.total.item() ==
        doctest::Approx(-lb.l_clip + cfg.value_coef * lb.l_vf -
                        cfg.entropy_coef * lb.entropy)
            .epsilon(1e-9));
}

TEST_CASE("ppo_losses requires precomputed targets") {
  BanditEnv env({0.0, 1.0}, 1);
  PolicyNet policy(bandit_policy_config(2));
  std::mt19937_64 rng(9);
  RolloutBuffer buf = collect_rollout(env, policy, 4, rng);
  std::mt19937_64 drng(0);
  CHECK_THROWS_AS(ppo_losses(buf, policy, PpoConfig{}, {}, drng),
                  TrainingError);
}

TEST_CASE("zero learning rate leaves the parameters bit-identical") {
  PolicyNet policy(bandit_policy_config(2));
  std::vector<std::vector<double>> before;
  for (const auto& p : policy.params()) {
    before.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  }
  PpoConfig cfg;
  cfg.iterations = 3;
  cfg.steps_per_update = 8;
  cfg.lr = 0.0;
  const TrainResult res = train(
      cfg, policy, [](std::mt19937_64&) {
        return std::make_unique<BanditEnv>(std::vector<double>{0.0, 1.0}, 2);
      });
  CHECK(res.curve.size() == 3);
  for (std::size_t i = 0; i < policy.params().size(); ++i) {
    const auto now = policy.params()[i].tensor.data();
    REQUIRE(now.size() == before[i].size());
    for (std::size_t j = 0; j < now.size(); ++j) {
      CHECK(now[j] == before[i][j]);
    }
  }
}

TEST_CASE("training runs are reproducible from the config seed") {
  auto run = [] {
    PolicyNet policy(bandit_policy_config(2));
    PpoConfig cfg;
    cfg.iterations = 5;
    cfg.steps_per_update = 10;
    cfg.lr = 1e-3;
    cfg.seed = 42;
    const TrainResult res = train(
        cfg, policy, [](std::mt19937_64&) {
          return std::make_unique<BanditEnv>(std::vector<double>{0.1, 0.8}, 2);
        });
    std::vector<double> sig;
    for (const auto& log : res.curve) sig.push_back(log.mean_episode_reward);
    sig.push_back(policy.params()[0].tensor.data()[0]);
    return sig;
  };
  CHECK(run() == run());
}

TEST_CASE("PPO learns a two-armed bandit") {
  PolicyNet policy(bandit_policy_config(2));
  PpoConfig cfg;
  cfg.iterations = 150;
  cfg.steps_per_update = 20;
  cfg.lr = 5e-3;
  cfg.seed = 11;
  const TrainResult res = train(
      cfg, policy, [](std::mt19937_64&) {
        return std::make_unique<BanditEnv>(std::vector<double>{0.0, 1.0}, 1);
      });
  // Greedy action is the rewarding arm with near-certain probability.
  FeatureMatrix obs;
  obs.rows = 1;
  obs.cols = 3;
  obs.data = {0.2, 0.5, 0.8};
  std::mt19937_64 rng(0);
  const auto act = policy.act(obs, /*sample=*/false, rng);
  CHECK(act.action == 1);
  CHECK(std::exp(act.log_prob) > 0.9);
  // The learning curve ends above where it started.
  CHECK(res.curve.back().mean_episode_reward >
        res.curve.front().mean_episode_reward);
  CHECK(res.best_reward == doctest::Approx(1.0));
}
