#include "sleepcc/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sleepcc {

void PpoConfig::validate() const {
  if (iterations < 1 || steps_per_update < 1 || epochs_per_update < 1 ||
      minibatch < 0) {
    throw InvalidInput("ppo config: counts must be positive");
  }
  if (!(gamma > 0.0 && gamma <= 1.0) || !(gae_lambda > 0.0 && gae_lambda <= 1.0)) {
    throw InvalidInput("ppo config: gamma and gae_lambda must be in (0, 1]");
  }
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) {
    throw InvalidInput("ppo config: clip_eps must be in (0, 1)");
  }
  if (lr < 0.0 || value_coef < 0.0 || entropy_coef < 0.0) {
    throw InvalidInput("ppo config: coefficients must be nonnegative");
  }
}

RolloutBuffer collect_rollout(Env& env, PolicyNet& policy, int steps,
                              std::mt19937_64& rng) {
  RolloutBuffer buf;
  FeatureMatrix obs = env.reset();
  double episode_reward = 0.0;
  for (int t = 0; t < steps; ++t) {
    const auto act = policy.act(obs, /*sample=*/true, rng);
    buf.observations.push_back(obs);
    buf.actions.push_back(act.action);
    buf.values.push_back(act.value);
    buf.log_probs.push_back(act.log_prob);

    EnvStep s = env.step(act.action);
    buf.rewards.push_back(s.reward);
    buf.dones.push_back(s.done ? 1 : 0);
    episode_reward += s.reward;

    if (s.done) {
      buf.completed_episode_rewards.push_back(episode_reward);
      episode_reward = 0.0;
      if (t + 1 < steps) obs = env.reset();
    } else {
      obs = std::move(s.obs);
    }
  }
  buf.partial_episode_reward = episode_reward;
  if (buf.dones.back()) {
    buf.bootstrap_value = 0.0;
  } else {
    std::mt19937_64 unused(0);
    buf.bootstrap_value = policy.forward_eval(obs).value.item();
  }
  return buf;
}

std::vector<double> compute_rewards_to_go(const std::vector<double>& rewards,
                                          const std::vector<char>& dones,
                                          double gamma,
                                          double bootstrap_value) {
  if (rewards.size() != dones.size()) {
    throw InvalidInput("rewards_to_go: length mismatch");
  }
  std::vector<double> out(rewards.size());
  double run = bootstrap_value;
  for (int t = static_cast<int>(rewards.size()) - 1; t >= 0; --t) {
    if (dones[static_cast<std::size_t>(t)]) run = 0.0;
    run = rewards[static_cast<std::size_t>(t)] + gamma * run;
    out[static_cast<std::size_t>(t)] = run;
  }
  return out;
}

std::vector<double> gae_advantages(const std::vector<double>& rewards,
                                   const std::vector<double>& values,
                                   const std::vector<char>& dones,
                                   double gamma, double lambda,
                                   double bootstrap_value) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw InvalidInput("gae_advantages: length mismatch");
  }
  std::vector<double> adv(n);
  double next_adv = 0.0;
  for (int t = static_cast<int>(n) - 1; t >= 0; --t) {
    const std::size_t u = static_cast<std::size_t>(t);
    const double not_done = dones[u] ? 0.0 : 1.0;
    const double next_value = (u + 1 < n) ? values[u + 1] : bootstrap_value;
    const double delta =
        rewards[u] + gamma * next_value * not_done - values[u];
    next_adv = delta + gamma * lambda * not_done * next_adv;
    adv[u] = next_adv;
  }
  return adv;
}

LossBreakdown ppo_losses(const RolloutBuffer& buffer, PolicyNet& policy,
                         const PpoConfig& cfg,
                         const std::vector<int>& indices,
                         std::mt19937_64& dropout_rng) {
  std::vector<int> idx = indices;
  if (idx.empty()) {
    idx.resize(static_cast<std::size_t>(buffer.size()));
    std::iota(idx.begin(), idx.end(), 0);
  }
  if (buffer.rewards_to_go.size() != buffer.rewards.size() ||
      buffer.advantages.size() != buffer.rewards.size()) {
    throw TrainingError("ppo_losses: rewards_to_go/advantages not computed");
  }

  Tensor surr_sum = Tensor::scalar(0.0);
  Tensor vf_sum = Tensor::scalar(0.0);
  Tensor ent_sum = Tensor::scalar(0.0);
  for (int t : idx) {
    const std::size_t u = static_cast<std::size_t>(t);
    PolicyOutput out =
        policy.forward(buffer.observations[u], /*train=*/true, dropout_rng);
    Tensor logp_row = log_softmax_rows(out.logits);
    Tensor new_lp = pick(logp_row, 0, buffer.actions[u]);
    Tensor ratio = exp_t(sub(new_lp, Tensor::scalar(buffer.log_probs[u])));
    if (!std::isfinite(ratio.item())) {
      throw TrainingError("non-finite policy ratio at step " +
                          std::to_string(t));
    }
    const double a_t = buffer.advantages[u];
    Tensor surr1 = scale(ratio, a_t);
    Tensor surr2 =
        scale(clamp_t(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps), a_t);
    surr_sum = add(surr_sum, minimum(surr1, surr2));

    Tensor err = sub(out.value, Tensor::scalar(buffer.rewards_to_go[u]));
    vf_sum = add(vf_sum, square(err));

    Tensor ent = neg(sum(mul(softmax_rows(out.logits), logp_row)));
    ent_sum = add(ent_sum, ent);
  }
  const double inv_n = 1.0 / static_cast<double>(idx.size());
  Tensor l_clip = scale(surr_sum, inv_n);
  Tensor l_vf = scale(vf_sum, inv_n);
  Tensor entropy = scale(ent_sum, inv_n);

  LossBreakdown lb;
  lb.l_clip = l_clip.item();
  lb.l_vf = l_vf.item();
  lb.entropy = entropy.item();
  lb.total = add(add(neg(l_clip), scale(l_vf, cfg.value_coef)),
                 scale(entropy, -cfg.entropy_coef));
  return lb;
}

namespace {

double parameter_norm(const PolicyNet& policy) {
  double sq = 0.0;
  for (const auto& prm : policy.params()) {
    for (double x : prm.tensor.data()) sq += x * x;
  }
  return std::sqrt(sq);
}

}  // namespace

TrainResult train(const PpoConfig& cfg, PolicyNet& policy,
                  const EnvFactory& factory,
                  const std::function<void(const IterationLog&)>& on_iteration) {
  cfg.validate();
  TrainResult result;
  std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ULL + 17);
  Adam opt(AdamConfig{cfg.lr});

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::unique_ptr<Env> env = factory(rng);
    RolloutBuffer buf =
        collect_rollout(*env, policy, cfg.steps_per_update, rng);
    buf.rewards_to_go = compute_rewards_to_go(buf.rewards, buf.dones,
                                              cfg.gamma, buf.bootstrap_value);
    buf.advantages = gae_advantages(buf.rewards, buf.values, buf.dones,
                                    cfg.gamma, cfg.gae_lambda,
                                    buf.bootstrap_value);
    // Normalize advantages per update.
    {
      double mu = 0.0;
      for (double a : buf.advantages) mu += a;
      mu /= static_cast<double>(buf.advantages.size());
      double var = 0.0;
      for (double a : buf.advantages) var += (a - mu) * (a - mu);
      var /= static_cast<double>(buf.advantages.size());
      const double sd = std::sqrt(var) + 1e-8;
      for (double& a : buf.advantages) a = (a - mu) / sd;
    }

    IterationLog log;
    log.iteration = iter;
    for (int epoch = 0; epoch < cfg.epochs_per_update; ++epoch) {
      std::vector<int> order(static_cast<std::size_t>(buf.size()));
      std::iota(order.begin(), order.end(), 0);
      const int mb = (cfg.minibatch > 0 && cfg.minibatch < buf.size())
                         ? cfg.minibatch
                         : buf.size();
      if (mb < buf.size()) std::shuffle(order.begin(), order.end(), rng);
      for (int start = 0; start < buf.size(); start += mb) {
        const int len = std::min(mb, buf.size() - start);
        std::vector<int> batch(order.begin() + start,
                               order.begin() + start + len);
        policy.zero_grad();
        LossBreakdown lb = ppo_losses(buf, policy, cfg, batch, rng);
        if (!std::isfinite(lb.total.item())) {
          throw TrainingError(
              "NaN loss at iteration " + std::to_string(iter) +
              "; parameter norm " + std::to_string(parameter_norm(policy)));
        }
        backward(lb.total);
        opt.step(policy.params());
        log.l_clip = lb.l_clip;
        log.l_vf = lb.l_vf;
        log.entropy = lb.entropy;
      }
    }

    if (!buf.completed_episode_rewards.empty()) {
      double s = 0.0;
      for (double r : buf.completed_episode_rewards) s += r;
      log.mean_episode_reward =
          s / static_cast<double>(buf.completed_episode_rewards.size());
    } else {
      log.mean_episode_reward = buf.partial_episode_reward;
    }

    if (log.mean_episode_reward > result.best_reward) {
      result.best_reward = log.mean_episode_reward;
      result.best_checkpoint_json = policy.to_json();
    }
    result.curve.push_back(log);
    if (on_iteration) on_iteration(log);
  }
  return result;
}

}  // namespace sleepcc
