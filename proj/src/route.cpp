#include "sleepcc/route.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace sleepcc {

namespace {
constexpr int kRouteSchemaVersion = 1;
}

const char* to_string(IntersectionKind k) {
  switch (k) {
    case IntersectionKind::kLeft: return "left";
    case IntersectionKind::kRight: return "right";
    case IntersectionKind::kStraight: return "straight";
  }
  return "straight";
}

IntersectionKind intersection_kind_from_string(const std::string& s) {
  if (s == "left") return IntersectionKind::kLeft;
  if (s == "right") return IntersectionKind::kRight;
  if (s == "straight") return IntersectionKind::kStraight;
  throw InvalidInput("unknown intersection kind: " + s);
}

double RouteMap::total_length() const {
  double total = 0.0;
  for (const auto& s : sections) total += s.length;
  return total;
}

void RouteMap::validate() const {
  if (sections.size() < 2) {
    throw InvalidInput("route must have at least 2 sections");
  }
  if (!(checkpoint_spacing > 0.0)) {
    throw InvalidInput("checkpoint spacing must be positive");
  }
  double prev_eta = 0.0;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    const Section& s = sections[i];
    if (!(s.length > 0.0)) throw InvalidInput("section length must be positive");
    if (!(s.speed_limit > 0.0)) {
      throw InvalidInput("section speed limit must be positive");
    }
    if (s.lanes < 1) throw InvalidInput("section must have at least one lane");
    for (const auto& x : s.intersections) {
      if (x.position < 0.0 || x.position > s.length) {
        throw InvalidInput("intersection position outside section");
      }
    }
    if (s.eta != 0.0 && s.eta <= prev_eta) {
      throw InvalidInput("section ETAs must be strictly increasing");
    }
    if (s.eta != 0.0) prev_eta = s.eta;
  }
}

ControlProfile profile_from_level(int level, const ActionSpace& space) {
  space.require(level);
  const double a = static_cast<double>(level);
  ControlProfile p;
  p.p_s = 1.5 * a;
  p.p_d = 6.0 - 0.4 * a;
  p.p_u = 1000.0 - 70.0 * a;
  p.p_a = level >= 2;
  p.p_r = 100.0 - 10.0 * a;
  return p;
}

RouteMap generate_route(std::uint64_t seed, int n_checkpoints,
                        const RouteGenConfig& cfg) {
  if (n_checkpoints < 2) {
    throw InvalidInput("generate_route: need at least 2 checkpoints");
  }
  // 30 / 40 / 50 / 70 km/h in m/s.
  static const double kLimits[] = {8.3, 11.1, 13.9, 19.4};

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> limit_pick(0, 3);
  std::uniform_int_distribution<int> lane_pick(1, 3);
  std::uniform_int_distribution<int> n_inter(0, cfg.max_intersections_per_section);
  std::uniform_int_distribution<int> kind_pick(0, 2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  RouteMap route;
  route.id = "route-" + std::to_string(seed);
  route.checkpoint_spacing = cfg.checkpoint_spacing;
  route.sections.resize(static_cast<std::size_t>(n_checkpoints));
  for (auto& s : route.sections) {
    s.length = cfg.checkpoint_spacing;
    s.speed_limit = kLimits[limit_pick(rng)];
    s.lanes = lane_pick(rng);
    const int m = n_inter(rng);
    s.intersections.resize(static_cast<std::size_t>(m));
    for (auto& x : s.intersections) {
      x.kind = static_cast<IntersectionKind>(kind_pick(rng));
      // Keep intersections away from section ends so approach braking
      // stays inside one section.
      x.position = (0.2 + 0.6 * unit(rng)) * s.length;
      x.wait_s = (unit(rng) < cfg.wait_probability)
                     ? cfg.intersection_wait_max * unit(rng)
                     : 0.0;
    }
    // Sort by position for in-order traversal.
    std::sort(s.intersections.begin(), s.intersections.end(),
              [](const Intersection& a, const Intersection& b) {
                return a.position < b.position;
              });
  }
  route.validate();
  return route;
}

std::string route_to_json(const RouteMap& route) {
  nlohmann::json j;
  j["schema_version"] = kRouteSchemaVersion;
  j["id"] = route.id;
  j["checkpoint_spacing"] = route.checkpoint_spacing;
  j["sections"] = nlohmann::json::array();
  for (const auto& s : route.sections) {
    nlohmann::json js;
    js["length"] = s.length;
    js["speed_limit"] = s.speed_limit;
    js["lanes"] = s.lanes;
    js["eta"] = s.eta;
    js["intersections"] = nlohmann::json::array();
    for (const auto& x : s.intersections) {
      js["intersections"].push_back({{"kind", to_string(x.kind)},
                                     {"position", x.position},
                                     {"wait_s", x.wait_s}});
    }
    j["sections"].push_back(std::move(js));
  }
  return j.dump(2);
}

RouteMap route_from_json(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text);
  if (!j.contains("schema_version") ||
      j["schema_version"].get<int>() != kRouteSchemaVersion) {
    throw InvalidInput("unsupported route schema version");
  }
  RouteMap route;
  route.id = j.value("id", std::string("route"));
  route.checkpoint_spacing = j.at("checkpoint_spacing").get<double>();
  for (const auto& js : j.at("sections")) {
    Section s;
    s.length = js.at("length").get<double>();
    s.speed_limit = js.at("speed_limit").get<double>();
    s.lanes = js.at("lanes").get<int>();
    s.eta = js.value("eta", 0.0);
    for (const auto& jx : js.at("intersections")) {
      Intersection x;
      x.kind = intersection_kind_from_string(jx.at("kind").get<std::string>());
      x.position = jx.at("position").get<double>();
      x.wait_s = jx.value("wait_s", 0.0);
      s.intersections.push_back(x);
    }
    route.sections.push_back(std::move(s));
  }
  route.validate();
  return route;
}

void save_route(const RouteMap& route, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open route file for write: " + path);
  out << route_to_json(route) << "\n";
}

RouteMap load_route(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open route file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return route_from_json(buf.str());
}

}  // namespace sleepcc
