#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sleepcc/core.hpp"

// Route representation and the aggressiveness-to-controller mapping.

namespace sleepcc {

enum class IntersectionKind { kLeft, kRight, kStraight };

const char* to_string(IntersectionKind k);
IntersectionKind intersection_kind_from_string(const std::string& s);

struct Intersection {
  IntersectionKind kind = IntersectionKind::kStraight;
  double position = 0.0;  // meters from section start
  double wait_s = 0.0;    // stochastic hold time, fixed per route
};

struct Section {
  double length = 0.0;       // m
  double speed_limit = 0.0;  // m/s
  int lanes = 1;
  std::vector<Intersection> intersections;
  double eta = 0.0;  // cumulative ETA to section end, s (0 until computed)
};

struct RouteMap {
  std::string id;
  double checkpoint_spacing = 150.0;  // m
  std::vector<Section> sections;

  double total_length() const;
  void validate() const;
};

// Cruise-controller parameters derived from an aggressiveness level.
struct ControlProfile {
  double p_s = 0.0;     // speed difference percentage
  double p_d = 6.0;     // following distance, m
  double p_u = 1000.0;  // path update interval, ms
  bool p_a = false;     // auto lane change enable
  double p_r = 100.0;   // keep right percentage
};

// p_s = 1.5a, p_d = 6 - 0.4a, p_u = 1000 - 70a, p_a = (a >= 2),
// p_r = 100 - 10a, for a in {0..10}.
ControlProfile profile_from_level(int level,
                                  const ActionSpace& space = ActionSpace{});

struct RouteGenConfig {
  double checkpoint_spacing = 150.0;
  int max_intersections_per_section = 3;
  double intersection_wait_max = 8.0;  // s
  double wait_probability = 0.4;
};

// Deterministic pseudo-random route: speed limits drawn from
// {30, 40, 50, 70} km/h, 0-3 intersections and 1-3 lanes per section.
RouteMap generate_route(std::uint64_t seed, int n_checkpoints,
                        const RouteGenConfig& cfg = RouteGenConfig{});

// Versioned JSON route files.
std::string route_to_json(const RouteMap& route);
RouteMap route_from_json(const std::string& json_text);
void save_route(const RouteMap& route, const std::string& path);
RouteMap load_route(const std::string& path);

}  // namespace sleepcc
