#include "sleepcc/occupant.hpp"

#include <algorithm>
#include <cmath>

namespace sleepcc {

double wrist_accel_step(WristState& state, double alpha_car,
                        double vehicle_speed, double dt,
                        const WristModelConfig& cfg) {
  if (!std::isfinite(alpha_car) || !std::isfinite(vehicle_speed) ||
      !(dt > 0.0) || !std::isfinite(state.x) || !std::isfinite(state.v)) {
    throw InvalidInput("wrist_accel_step: non-finite input");
  }
  double damping_vel;
  if (cfg.mode == WristModelConfig::Mode::kPhysical) {
    damping_vel = state.v;
  } else {
    damping_vel = vehicle_speed;
  }
  const double out = alpha_car + (-cfg.k * state.x - cfg.c * damping_vel) / cfg.m;

  // Relative-motion oscillator, semi-implicit Euler: velocity first, then
  // position with the updated velocity.
  const double rel_accel =
      (-cfg.k * state.x - cfg.c * damping_vel) / cfg.m - alpha_car;
  state.v += rel_accel * dt;
  state.x += state.v * dt;
  return out;
}

bool window_wake_check(const ImuStream& stream, const WakeDetectorConfig& cfg) {
  if (stream.samples.empty()) return false;
  const std::size_t n = stream.samples.size();
  const std::size_t w = std::min<std::size_t>(
      n, static_cast<std::size_t>(std::max(cfg.window, 1)));
  double peak = 0.0;
  for (std::size_t i = n - w; i < n; ++i) {
    peak = std::max(peak, stream.samples[i]);
  }
  return peak > cfg.m_thres;
}

std::pair<double, double> motion_features(std::span<const double> segment) {
  if (segment.empty()) {
    throw InvalidInput("motion_features: empty IMU segment");
  }
  double peak = 0.0;
  double sum = 0.0;
  for (double s : segment) {
    peak = std::max(peak, s);
    sum += s;
  }
  return {peak, sum / static_cast<double>(segment.size())};
}

}  // namespace sleepcc
