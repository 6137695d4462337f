#pragma once

#include <span>
#include <utility>
#include <vector>

#include "sleepcc/core.hpp"

// Infant wrist motion model: a second-order mass-spring-damper excited by
// vehicle acceleration, sampled as a 100 Hz IMU stream, plus the wake-up
// detector that terminates episodes.

namespace sleepcc {

struct WristModelConfig {
  enum class Mode {
    kPhysical,      // damping acts on relative wrist velocity
    kVehicleSpeedDamped,  // damping term uses the vehicle speed
  };

  double m = 0.4;   // kg
  double k = 50.0;  // N/m
  double c = 1.0;   // N*s/m
  Mode mode = Mode::kPhysical;
};

// Oscillator state: displacement and velocity of the wrist mass relative
// to the seat.
struct WristState {
  double x = 0.0;
  double v = 0.0;
};

struct ImuStream {
  double sample_rate = 100.0;  // Hz
  std::vector<double> samples;  // acceleration magnitudes, m/s^2
};

struct WakeDetectorConfig {
  int window = 300;       // samples (3 s at 100 Hz)
  double m_thres = 2.0;   // m/s^2
};

// Advance the oscillator one tick and return the wrist acceleration
// alpha_car + (1/m)(-k x - c v). In physical mode the state integrates
// m x'' = -k x - c x' - m alpha_car (semi-implicit Euler); in vehicle-speed-damped
// mode the damping term uses vehicle_speed instead of the relative velocity.
double wrist_accel_step(WristState& state, double alpha_car,
                        double vehicle_speed, double dt,
                        const WristModelConfig& cfg);

// True iff the maximum magnitude over the trailing min(window, size)
// samples exceeds the threshold.
bool window_wake_check(const ImuStream& stream, const WakeDetectorConfig& cfg);

// (m_max, m_avg) over one section's IMU samples.
std::pair<double, double> motion_features(std::span<const double> segment);

}  // namespace sleepcc
