#include "sleepcc/core.hpp"

#include <algorithm>
#include <cmath>

namespace sleepcc {

void ActionSpace::require(int level) const {
  if (!contains(level)) {
    throw InvalidInput("aggressiveness level " + std::to_string(level) +
                       " outside action space [" + std::to_string(a_min) +
                       ", " + std::to_string(a_max) + "]");
  }
}

std::array<double, StateVector::kFeatures> StateVector::to_array() const {
  return {m_max, m_avg, n_acc, n_trn, w_max, s_avg, s_lmt,
          n_lt,  n_rt,  n_st,  s_lmt_next, n_lt_next, n_rt_next, n_st_next};
}

const std::array<const char*, StateVector::kFeatures>&
StateVector::feature_names() {
  static const std::array<const char*, kFeatures> names = {
      "m_max", "m_avg", "n_acc", "n_trn", "w_max", "s_avg", "s_lmt",
      "n_lt",  "n_rt",  "n_st",  "s_lmt_next", "n_lt_next", "n_rt_next",
      "n_st_next"};
  return names;
}

NormalizationTable NormalizationTable::defaults() {
  NormalizationTable t;
  const std::array<double, StateVector::kFeatures> lo = {
      0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  const std::array<double, StateVector::kFeatures> hi = {
      5.0, 5.0, 10.0, 10.0, 1.0, 25.0, 25.0,
      5.0, 5.0, 5.0, 25.0, 5.0, 5.0, 5.0};
  t.min = lo;
  t.max = hi;
  return t;
}

double reward(double eps, const RewardConfig& cfg) {
  if (!std::isfinite(eps) || eps < 0.0) {
    throw InvalidInput("reward: ETA/ATA ratio must be finite and nonnegative");
  }
  if (!(cfg.epsilon_th > 0.0 && cfg.epsilon_th < 1.0) || !(cfg.beta > 0.0)) {
    throw InvalidInput("reward: epsilon_th must be in (0,1) and beta > 0");
  }
  if (eps <= cfg.epsilon_th) return 0.0;
  if (eps >= 1.0) return 1.0;
  const double u = (eps - cfg.epsilon_th) / (1.0 - cfg.epsilon_th);
  return std::expm1(cfg.beta * u) / std::expm1(cfg.beta);
}

double eta_ratio(double t_eta, double t_ata) {
  if (!(t_eta > 0.0) || !(t_ata > 0.0) || !std::isfinite(t_eta) ||
      !std::isfinite(t_ata)) {
    throw InvalidInput("eta_ratio: times must be finite and positive");
  }
  return t_eta / t_ata;
}

Observation build_observation(const std::vector<StateVector>& history, int k) {
  if (k < 1) throw InvalidInput("build_observation: k must be >= 1");
  if (history.empty()) throw InvalidInput("build_observation: empty history");
  Observation obs;
  obs.k = k;
  obs.columns.reserve(static_cast<std::size_t>(k));
  const int n = static_cast<int>(history.size());
  for (int i = 0; i < k; ++i) {
    const int idx = std::max(0, n - k + i);
    obs.columns.push_back(history[static_cast<std::size_t>(idx)]);
  }
  return obs;
}

std::array<double, StateVector::kFeatures> normalize_state(
    const StateVector& v, const NormalizationTable& scales) {
  const auto raw = v.to_array();
  std::array<double, StateVector::kFeatures> out{};
  for (int i = 0; i < StateVector::kFeatures; ++i) {
    const double lo = scales.min[static_cast<std::size_t>(i)];
    const double hi = scales.max[static_cast<std::size_t>(i)];
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) {
      throw InvalidInput("normalize_state: invalid scale for feature " +
                         std::string(StateVector::feature_names()[
                             static_cast<std::size_t>(i)]));
    }
    const double x = (raw[static_cast<std::size_t>(i)] - lo) / (hi - lo);
    out[static_cast<std::size_t>(i)] = std::clamp(x, 0.0, 1.0);
  }
  return out;
}

}  // namespace sleepcc
