#include "sleepcc/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

extern char** environ;

namespace sleepcc {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& path) {
  if (!j.is_object()) {
    throw ConfigError("config: " + path + " must be an object");
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) {
      if (it.key() == k) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw ConfigError("config: unknown key '" + path + it.key() + "'");
    }
  }
}

template <typename T>
void get_to(const json& j, const char* key, T& field) {
  if (j.contains(key)) {
    try {
      field = j.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config: bad value for '" + std::string(key) +
                        "': " + e.what());
    }
  }
}

void parse_reward(const json& j, RewardConfig& cfg) {
  check_keys(j, {"epsilon_th", "beta"}, "reward.");
  get_to(j, "epsilon_th", cfg.epsilon_th);
  get_to(j, "beta", cfg.beta);
}

void parse_norm(const json& j, NormalizationTable& cfg) {
  check_keys(j, {"min", "max"}, "normalization.");
  auto load = [&](const char* key,
                  std::array<double, StateVector::kFeatures>& dst) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != StateVector::kFeatures) {
      throw ConfigError("config: normalization." + std::string(key) +
                        " must have 14 entries");
    }
    std::copy(v.begin(), v.end(), dst.begin());
  };
  load("min", cfg.min);
  load("max", cfg.max);
}

void parse_wrist(const json& j, WristModelConfig& cfg) {
  check_keys(j, {"m", "k", "c", "mode"}, "wrist.");
  get_to(j, "m", cfg.m);
  get_to(j, "k", cfg.k);
  get_to(j, "c", cfg.c);
  if (j.contains("mode")) {
    const auto s = j.at("mode").get<std::string>();
    if (s == "physical") cfg.mode = WristModelConfig::Mode::kPhysical;
    else if (s == "vehicle-speed-damped") cfg.mode = WristModelConfig::Mode::kVehicleSpeedDamped;
    else throw ConfigError("config: wrist.mode must be physical|vehicle-speed-damped");
  }
}

void parse_wake(const json& j, WakeDetectorConfig& cfg) {
  check_keys(j, {"window", "m_thres"}, "wake.");
  get_to(j, "window", cfg.window);
  get_to(j, "m_thres", cfg.m_thres);
}

void parse_sim(const json& j, SimTuning& cfg) {
  check_keys(j,
             {"dt", "comfort_accel_base", "comfort_accel_per_level",
              "accel_cap_base", "accel_cap_per_level", "brake_comfort_base",
              "brake_comfort_per_level", "jerk_base", "jerk_per_level",
              "turn_speed_base", "turn_speed_per_level", "steer_rate_base",
              "steer_rate_per_level", "turn_steer_angle",
              "lane_change_steer_angle", "turn_arc_length", "lateral_gain",
              "emergency_decel", "signal_lead_time", "imu_noise_sigma",
              "stall_timeout", "pedal_threshold", "car_length",
              "follow_gain_gap", "follow_gain_speed"},
             "sim.");
  get_to(j, "dt", cfg.dt);
  get_to(j, "comfort_accel_base", cfg.comfort_accel_base);
  get_to(j, "comfort_accel_per_level", cfg.comfort_accel_per_level);
  get_to(j, "accel_cap_base", cfg.accel_cap_base);
  get_to(j, "accel_cap_per_level", cfg.accel_cap_per_level);
  get_to(j, "brake_comfort_base", cfg.brake_comfort_base);
  get_to(j, "brake_comfort_per_level", cfg.brake_comfort_per_level);
  get_to(j, "jerk_base", cfg.jerk_base);
  get_to(j, "jerk_per_level", cfg.jerk_per_level);
  get_to(j, "turn_speed_base", cfg.turn_speed_base);
  get_to(j, "turn_speed_per_level", cfg.turn_speed_per_level);
  get_to(j, "steer_rate_base", cfg.steer_rate_base);
  get_to(j, "steer_rate_per_level", cfg.steer_rate_per_level);
  get_to(j, "turn_steer_angle", cfg.turn_steer_angle);
  get_to(j, "lane_change_steer_angle", cfg.lane_change_steer_angle);
  get_to(j, "turn_arc_length", cfg.turn_arc_length);
  get_to(j, "lateral_gain", cfg.lateral_gain);
  get_to(j, "emergency_decel", cfg.emergency_decel);
  get_to(j, "signal_lead_time", cfg.signal_lead_time);
  get_to(j, "imu_noise_sigma", cfg.imu_noise_sigma);
  get_to(j, "stall_timeout", cfg.stall_timeout);
  get_to(j, "pedal_threshold", cfg.pedal_threshold);
  get_to(j, "car_length", cfg.car_length);
  get_to(j, "follow_gain_gap", cfg.follow_gain_gap);
  get_to(j, "follow_gain_speed", cfg.follow_gain_speed);
}

void parse_traffic(const json& j, TrafficConfig& cfg) {
  check_keys(j, {"lead_vehicle_density", "lead_speed_fraction"}, "traffic.");
  get_to(j, "lead_vehicle_density", cfg.lead_vehicle_density);
  get_to(j, "lead_speed_fraction", cfg.lead_speed_fraction);
}

void parse_routes(const json& j, RouteSetConfig& cfg) {
  check_keys(j,
             {"n_checkpoints", "checkpoint_spacing", "training_seed_first",
              "training_seed_count", "eval_seed_first", "eval_seed_count",
              "eta_reference_level"},
             "routes.");
  get_to(j, "n_checkpoints", cfg.n_checkpoints);
  get_to(j, "checkpoint_spacing", cfg.checkpoint_spacing);
  get_to(j, "training_seed_first", cfg.training_seed_first);
  get_to(j, "training_seed_count", cfg.training_seed_count);
  get_to(j, "eval_seed_first", cfg.eval_seed_first);
  get_to(j, "eval_seed_count", cfg.eval_seed_count);
  get_to(j, "eta_reference_level", cfg.eta_reference_level);
}

void parse_actions(const json& j, ActionSpace& cfg) {
  check_keys(j, {"a_min", "a_max"}, "actions.");
  get_to(j, "a_min", cfg.a_min);
  get_to(j, "a_max", cfg.a_max);
}

void parse_policy(const json& j, PolicyConfig& cfg) {
  check_keys(j, {"arch", "seq_len", "shared_trunk", "mlp", "lstm",
                 "transformer"},
             "policy.");
  if (j.contains("arch")) {
    cfg.arch = arch_from_string(j.at("arch").get<std::string>());
  }
  get_to(j, "seq_len", cfg.seq_len);
  get_to(j, "shared_trunk", cfg.shared_trunk);
  if (j.contains("mlp")) {
    const auto& m = j.at("mlp");
    check_keys(m, {"layers", "width"}, "policy.mlp.");
    get_to(m, "layers", cfg.mlp.layers);
    get_to(m, "width", cfg.mlp.width);
  }
  if (j.contains("lstm")) {
    const auto& m = j.at("lstm");
    check_keys(m, {"hidden", "num_layers", "dropout"}, "policy.lstm.");
    get_to(m, "hidden", cfg.lstm.hidden);
    get_to(m, "num_layers", cfg.lstm.num_layers);
    get_to(m, "dropout", cfg.lstm.dropout);
  }
  if (j.contains("transformer")) {
    const auto& m = j.at("transformer");
    check_keys(m, {"encoder_layers", "heads", "embed_dim", "ff_width"},
               "policy.transformer.");
    get_to(m, "encoder_layers", cfg.transformer.encoder_layers);
    get_to(m, "heads", cfg.transformer.heads);
    get_to(m, "embed_dim", cfg.transformer.embed_dim);
    get_to(m, "ff_width", cfg.transformer.ff_width);
  }
}

void parse_ppo(const json& j, PpoConfig& cfg) {
  check_keys(j,
             {"iterations", "steps_per_update", "lr", "gamma", "clip_eps",
              "gae_lambda", "value_coef", "entropy_coef", "epochs_per_update",
              "minibatch"},
             "ppo.");
  get_to(j, "iterations", cfg.iterations);
  get_to(j, "steps_per_update", cfg.steps_per_update);
  get_to(j, "lr", cfg.lr);
  get_to(j, "gamma", cfg.gamma);
  get_to(j, "clip_eps", cfg.clip_eps);
  get_to(j, "gae_lambda", cfg.gae_lambda);
  get_to(j, "value_coef", cfg.value_coef);
  get_to(j, "entropy_coef", cfg.entropy_coef);
  get_to(j, "epochs_per_update", cfg.epochs_per_update);
  get_to(j, "minibatch", cfg.minibatch);
}

// Merge SLEEPCC_section__key=value pairs into the JSON tree before
// parsing, so overrides pass through the same schema validation.
void apply_env(json& j, const std::string& prefix) {
  for (char** e = environ; e && *e; ++e) {
    const std::string entry(*e);
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string path = entry.substr(prefix.size(), eq - prefix.size());
    const std::string value = entry.substr(eq + 1);
    json* cur = &j;
    std::size_t start = 0;
    while (true) {
      const auto sep = path.find("__", start);
      const std::string part = path.substr(
          start, sep == std::string::npos ? std::string::npos : sep - start);
      if (sep == std::string::npos) {
        json parsed = json::parse(value, nullptr, false);
        (*cur)[part] = parsed.is_discarded() ? json(value) : parsed;
        break;
      }
      cur = &(*cur)[part];
      start = sep + 2;
    }
  }
}

}  // namespace

std::vector<std::uint64_t> RouteSetConfig::training_seeds() const {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < training_seed_count; ++i) {
    out.push_back(training_seed_first + static_cast<std::uint64_t>(i));
  }
  return out;
}

std::vector<std::uint64_t> RouteSetConfig::eval_seeds() const {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < eval_seed_count; ++i) {
    out.push_back(eval_seed_first + static_cast<std::uint64_t>(i));
  }
  return out;
}

void RunConfig::validate() const {
  if (!(reward.epsilon_th > 0.0 && reward.epsilon_th < 1.0)) {
    throw ConfigError("config: reward.epsilon_th must be in (0, 1)");
  }
  if (!(reward.beta > 0.0)) throw ConfigError("config: reward.beta must be > 0");
  if (!(wrist.m > 0.0) || wrist.k < 0.0 || wrist.c < 0.0) {
    throw ConfigError("config: wrist model parameters out of range");
  }
  if (wake.window < 1 || !(wake.m_thres > 0.0)) {
    throw ConfigError("config: wake detector parameters out of range");
  }
  if (!(sim.dt > 0.0)) throw ConfigError("config: sim.dt must be > 0");
  if (traffic.lead_vehicle_density < 0.0 ||
      !(traffic.lead_speed_fraction > 0.0 &&
        traffic.lead_speed_fraction <= 1.0)) {
    throw ConfigError("config: traffic parameters out of range");
  }
  if (actions.a_min < 0 || actions.a_min >= actions.a_max) {
    throw ConfigError("config: actions must satisfy 0 <= a_min < a_max");
  }
  if (routes.n_checkpoints < 2 || routes.training_seed_count < 1 ||
      routes.eval_seed_count < 1) {
    throw ConfigError("config: route set parameters out of range");
  }
  if (eval_episodes_per_route < 1) {
    throw ConfigError("config: eval.episodes_per_route must be >= 1");
  }
  try {
    ppo.validate();
    PolicyConfig p = policy;
    p.n_actions = actions.size();
    p.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
}

RunConfig parse_run_config(const std::string& json_text,
                           bool apply_env_overrides,
                           const std::string& env_prefix) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config: invalid JSON");
  if (apply_env_overrides) apply_env(j, env_prefix);

  check_keys(j,
             {"run_id", "seed", "output_dir", "reward", "normalization",
              "wrist", "wake", "sim", "traffic", "routes", "actions", "policy",
              "ppo", "eval"},
             "");
  RunConfig cfg;
  get_to(j, "run_id", cfg.run_id);
  get_to(j, "seed", cfg.seed);
  get_to(j, "output_dir", cfg.output_dir);
  if (j.contains("reward")) parse_reward(j.at("reward"), cfg.reward);
  if (j.contains("normalization")) parse_norm(j.at("normalization"), cfg.norm);
  if (j.contains("wrist")) parse_wrist(j.at("wrist"), cfg.wrist);
  if (j.contains("wake")) parse_wake(j.at("wake"), cfg.wake);
  if (j.contains("sim")) parse_sim(j.at("sim"), cfg.sim);
  if (j.contains("traffic")) parse_traffic(j.at("traffic"), cfg.traffic);
  if (j.contains("routes")) parse_routes(j.at("routes"), cfg.routes);
  if (j.contains("actions")) parse_actions(j.at("actions"), cfg.actions);
  if (j.contains("policy")) parse_policy(j.at("policy"), cfg.policy);
  if (j.contains("ppo")) parse_ppo(j.at("ppo"), cfg.ppo);
  if (j.contains("eval")) {
    check_keys(j.at("eval"), {"episodes_per_route"}, "eval.");
    get_to(j.at("eval"), "episodes_per_route", cfg.eval_episodes_per_route);
  }
  cfg.policy.n_actions = cfg.actions.size();
  cfg.policy.mlp.input_dim = StateVector::kFeatures;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path, bool apply_env_overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), apply_env_overrides);
}

std::string run_config_to_json(const RunConfig& cfg) {
  json j;
  j["run_id"] = cfg.run_id;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["reward"] = {{"epsilon_th", cfg.reward.epsilon_th},
                 {"beta", cfg.reward.beta}};
  j["normalization"] = {
      {"min", std::vector<double>(cfg.norm.min.begin(), cfg.norm.min.end())},
      {"max", std::vector<double>(cfg.norm.max.begin(), cfg.norm.max.end())}};
  j["wrist"] = {{"m", cfg.wrist.m},
                {"k", cfg.wrist.k},
                {"c", cfg.wrist.c},
                {"mode", cfg.wrist.mode == WristModelConfig::Mode::kPhysical
                             ? "physical"
                             : "vehicle-speed-damped"}};
  j["wake"] = {{"window", cfg.wake.window}, {"m_thres", cfg.wake.m_thres}};
  j["sim"] = {{"dt", cfg.sim.dt},
              {"comfort_accel_base", cfg.sim.comfort_accel_base},
              {"comfort_accel_per_level", cfg.sim.comfort_accel_per_level},
              {"accel_cap_base", cfg.sim.accel_cap_base},
              {"accel_cap_per_level", cfg.sim.accel_cap_per_level},
              {"brake_comfort_base", cfg.sim.brake_comfort_base},
              {"brake_comfort_per_level", cfg.sim.brake_comfort_per_level},
              {"jerk_base", cfg.sim.jerk_base},
              {"jerk_per_level", cfg.sim.jerk_per_level},
              {"turn_speed_base", cfg.sim.turn_speed_base},
              {"turn_speed_per_level", cfg.sim.turn_speed_per_level},
              {"steer_rate_base", cfg.sim.steer_rate_base},
              {"steer_rate_per_level", cfg.sim.steer_rate_per_level},
              {"turn_steer_angle", cfg.sim.turn_steer_angle},
              {"lane_change_steer_angle", cfg.sim.lane_change_steer_angle},
              {"turn_arc_length", cfg.sim.turn_arc_length},
              {"lateral_gain", cfg.sim.lateral_gain},
              {"emergency_decel", cfg.sim.emergency_decel},
              {"signal_lead_time", cfg.sim.signal_lead_time},
              {"imu_noise_sigma", cfg.sim.imu_noise_sigma},
              {"stall_timeout", cfg.sim.stall_timeout},
              {"pedal_threshold", cfg.sim.pedal_threshold},
              {"car_length", cfg.sim.car_length},
              {"follow_gain_gap", cfg.sim.follow_gain_gap},
              {"follow_gain_speed", cfg.sim.follow_gain_speed}};
  j["traffic"] = {{"lead_vehicle_density", cfg.traffic.lead_vehicle_density},
                  {"lead_speed_fraction", cfg.traffic.lead_speed_fraction}};
  j["routes"] = {{"n_checkpoints", cfg.routes.n_checkpoints},
                 {"checkpoint_spacing", cfg.routes.checkpoint_spacing},
                 {"training_seed_first", cfg.routes.training_seed_first},
                 {"training_seed_count", cfg.routes.training_seed_count},
                 {"eval_seed_first", cfg.routes.eval_seed_first},
                 {"eval_seed_count", cfg.routes.eval_seed_count},
                 {"eta_reference_level", cfg.routes.eta_reference_level}};
  j["actions"] = {{"a_min", cfg.actions.a_min}, {"a_max", cfg.actions.a_max}};
  j["policy"] = {
      {"arch", to_string(cfg.policy.arch)},
      {"seq_len", cfg.policy.seq_len},
      {"shared_trunk", cfg.policy.shared_trunk},
      {"mlp", {{"layers", cfg.policy.mlp.layers},
               {"width", cfg.policy.mlp.width}}},
      {"lstm", {{"hidden", cfg.policy.lstm.hidden},
                {"num_layers", cfg.policy.lstm.num_layers},
                {"dropout", cfg.policy.lstm.dropout}}},
      {"transformer",
       {{"encoder_layers", cfg.policy.transformer.encoder_layers},
        {"heads", cfg.policy.transformer.heads},
        {"embed_dim", cfg.policy.transformer.embed_dim},
        {"ff_width", cfg.policy.transformer.ff_width}}}};
  j["ppo"] = {{"iterations", cfg.ppo.iterations},
              {"steps_per_update", cfg.ppo.steps_per_update},
              {"lr", cfg.ppo.lr},
              {"gamma", cfg.ppo.gamma},
              {"clip_eps", cfg.ppo.clip_eps},
              {"gae_lambda", cfg.ppo.gae_lambda},
              {"value_coef", cfg.ppo.value_coef},
              {"entropy_coef", cfg.ppo.entropy_coef},
              {"epochs_per_update", cfg.ppo.epochs_per_update},
              {"minibatch", cfg.ppo.minibatch}};
  j["eval"] = {{"episodes_per_route", cfg.eval_episodes_per_route}};
  return j.dump(2);
}

BenchConfig make_bench_config(const RunConfig& cfg,
                              const std::vector<std::uint64_t>& route_seeds,
                              int episodes_per_route) {
  BenchConfig bc;
  bc.route_seeds = route_seeds;
  bc.episodes_per_route = episodes_per_route;
  bc.n_checkpoints = cfg.routes.n_checkpoints;
  bc.eta_reference_level = cfg.routes.eta_reference_level;
  bc.route_gen.checkpoint_spacing = cfg.routes.checkpoint_spacing;
  bc.env.reward = cfg.reward;
  bc.env.norm = cfg.norm;
  bc.env.actions = cfg.actions;
  bc.env.k = cfg.policy.seq_len;
  bc.traffic = cfg.traffic;
  bc.tuning = cfg.sim;
  bc.wrist = cfg.wrist;
  bc.wake = cfg.wake;
  return bc;
}

EnvFactory make_training_env_factory(const RunConfig& cfg) {
  // Precompute the scenario pool (routes with ETAs) once; each iteration
  // samples one scenario uniformly.
  auto routes = std::make_shared<std::vector<RouteMap>>();
  RouteGenConfig rg;
  rg.checkpoint_spacing = cfg.routes.checkpoint_spacing;
  for (std::uint64_t s : cfg.routes.training_seeds()) {
    RouteMap r = generate_route(s, cfg.routes.n_checkpoints, rg);
    routes->push_back(
        compute_etas(r, cfg.routes.eta_reference_level, cfg.sim));
  }
  const auto seeds = cfg.routes.training_seeds();
  DrivingEnvConfig ec;
  ec.reward = cfg.reward;
  ec.norm = cfg.norm;
  ec.actions = cfg.actions;
  ec.k = cfg.policy.seq_len;
  TrafficConfig traffic = cfg.traffic;
  SimTuning tuning = cfg.sim;
  WristModelConfig wrist = cfg.wrist;
  WakeDetectorConfig wake = cfg.wake;

  return [routes, seeds, ec, traffic, tuning, wrist,
          wake](std::mt19937_64& rng) -> std::unique_ptr<Env> {
    std::uniform_int_distribution<std::size_t> pick(0, routes->size() - 1);
    const std::size_t i = pick(rng);
    const std::uint64_t cell_seed = seeds[i] * 1000003ULL;
    TrafficConfig t = traffic;
    t.congestion_seed = cell_seed;
    return std::make_unique<DrivingEnv>((*routes)[i], t, tuning, wrist, wake,
                                        ec, cell_seed);
  };
}

}  // namespace sleepcc
