// cruisectl: train, evaluate, replay, and generate routes for the
// sleep-aware cruise-control laboratory.
//
// Exit codes: 0 success, 2 usage/config error, 3 numeric failure.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sleepcc/bench.hpp"
#include "sleepcc/config.hpp"
#include "sleepcc/env.hpp"
#include "sleepcc/ppo.hpp"
#include "sleepcc/route.hpp"
#include "sleepcc/sim.hpp"

namespace fs = std::filesystem;
using namespace sleepcc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNumeric = 3;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt(double x) {
  std::ostringstream s;
  s << std::setprecision(10) << x;
  return s.str();
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  return out;
}

RunConfig load_config_or_usage(const std::string& path) {
  if (!fs::exists(path)) {
    throw UsageError("config file not found: " + path);
  }
  return load_run_config(path);
}

void write_curve_csv(const std::vector<IterationLog>& curve,
                     const fs::path& path) {
  auto out = open_out(path);
  out << "iteration,mean_episode_reward,l_clip,l_vf,entropy\n";
  for (const auto& log : curve) {
    out << log.iteration << ',' << fmt(log.mean_episode_reward) << ','
        << fmt(log.l_clip) << ',' << fmt(log.l_vf) << ',' << fmt(log.entropy)
        << '\n';
  }
}

int cmd_train(const std::string& config_path, const std::string& arch,
              std::int64_t seed, const std::string& out_dir) {
  RunConfig cfg = load_config_or_usage(config_path);
  if (!arch.empty()) cfg.policy.arch = arch_from_string(arch);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  cfg.validate();

  fs::create_directories(cfg.output_dir);
  {
    auto out = open_out(fs::path(cfg.output_dir) / "config.json");
    out << run_config_to_json(cfg) << '\n';
  }

  PolicyConfig pc = cfg.policy;
  pc.n_actions = cfg.actions.size();
  pc.init_seed = cfg.seed;
  PolicyNet policy(pc);

  PpoConfig ppo = cfg.ppo;
  ppo.seed = cfg.seed;
  EnvFactory factory = make_training_env_factory(cfg);

  std::cerr << "training " << to_string(pc.arch) << " for " << ppo.iterations
            << " iterations\n";
  TrainResult result = train(ppo, policy, factory);

  write_curve_csv(result.curve, fs::path(cfg.output_dir) / "curve.csv");
  {
    auto out = open_out(fs::path(cfg.output_dir) / "best.json");
    out << result.best_checkpoint_json;
  }
  policy.save((fs::path(cfg.output_dir) / "final.json").string());
  std::cerr << "best mean episode reward " << result.best_reward << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& config_path,
             const std::vector<std::string>& checkpoints, int n_routes,
             const std::string& out_dir) {
  RunConfig cfg = load_config_or_usage(config_path);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (n_routes > 0) cfg.routes.eval_seed_count = n_routes;
  cfg.validate();

  std::vector<BenchPolicy> policies;
  policies.push_back(BenchPolicy::fixed("actn2", 2));
  policies.push_back(BenchPolicy::fixed("actn8", 8));
  policies.push_back(BenchPolicy::random("rand"));
  for (const auto& ckpt : checkpoints) {
    if (!fs::exists(ckpt)) throw UsageError("checkpoint not found: " + ckpt);
    auto net = std::make_shared<PolicyNet>(PolicyNet::load(ckpt));
    std::string name = fs::path(ckpt).stem().string();
    if (name.empty()) name = "policy";
    policies.push_back(BenchPolicy::trained(name, std::move(net)));
  }

  BenchConfig bc = make_bench_config(cfg, cfg.routes.eval_seeds(),
                                     cfg.eval_episodes_per_route);
  EvalReport report = run_benchmark(policies, bc);

  fs::create_directories(cfg.output_dir);
  const fs::path dir(cfg.output_dir);
  write_report_csv(report, (dir / "report.csv").string());
  write_aggregates_csv(report, (dir / "aggregates.csv").string());
  write_bubbles_csv(report, (dir / "bubbles.csv").string());
  for (const auto& a : report.aggregates) {
    std::cerr << a.policy << ": late " << a.mean_late_rate << ", wake "
              << a.wake_up_rate << ", good " << a.n_good << '/' << a.n_trips
              << '\n';
  }
  return kExitOk;
}

void write_traces(const World& world, const fs::path& trace_path) {
  auto out = open_out(trace_path);
  out << "t,position,speed,accel,steering,lane,signal\n";
  for (const auto& row : world.vehicle_trace()) {
    out << fmt(row.t) << ',' << fmt(row.position) << ',' << fmt(row.speed)
        << ',' << fmt(row.accel) << ',' << fmt(row.steering) << ','
        << row.lane << ',' << (row.signal ? 1 : 0) << '\n';
  }
  fs::path imu_path = trace_path;
  imu_path.replace_extension();
  imu_path += "_imu.csv";
  auto imu = open_out(imu_path);
  imu << "t,imu\n";
  for (const auto& [t, mag] : world.imu_trace()) {
    imu << fmt(t) << ',' << fmt(mag) << '\n';
  }
}

int cmd_replay(const std::string& route_path, int level,
               const std::string& policy_path, const std::string& trace_path,
               const std::string& config_path, std::int64_t seed) {
  if ((level < 0) == policy_path.empty()) {
    throw UsageError("replay needs exactly one of --level or --policy");
  }
  if (!fs::exists(route_path)) {
    throw UsageError("route file not found: " + route_path);
  }
  RunConfig cfg =
      config_path.empty() ? RunConfig{} : load_config_or_usage(config_path);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (level >= 0) cfg.actions.require(level);

  RouteMap route = load_route(route_path);
  route = compute_etas(route, cfg.routes.eta_reference_level, cfg.sim);

  DrivingEnvConfig ec;
  ec.reward = cfg.reward;
  ec.norm = cfg.norm;
  ec.actions = cfg.actions;
  ec.k = cfg.policy.seq_len;
  TrafficConfig traffic = cfg.traffic;
  traffic.congestion_seed = cfg.seed;
  DrivingEnv env(route, traffic, cfg.sim, cfg.wrist, cfg.wake, ec, cfg.seed);
  env.mutable_world().set_trace_enabled(true);

  BenchPolicy policy =
      policy_path.empty()
          ? BenchPolicy::fixed("fixed", level)
          : BenchPolicy::trained(
                "policy",
                std::make_shared<PolicyNet>(PolicyNet::load(policy_path)));
  TripRecord rec = run_trip(policy, env, cfg.seed);

  if (!trace_path.empty()) write_traces(env.world(), trace_path);
  std::cerr << "trip: steps " << rec.steps << ", late " << rec.late_rate
            << ", movement " << rec.rel_max_movement << ", woke "
            << (rec.woke_up ? "yes" : "no") << ", category "
            << to_string(rec.category) << '\n';
  return kExitOk;
}

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(
    const std::string& text) {
  const auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      const std::uint64_t s = std::stoull(text);
      return {s, s};
    }
    const std::uint64_t a = std::stoull(text.substr(0, dots));
    const std::uint64_t b = std::stoull(text.substr(dots + 2));
    if (b < a) throw UsageError("--seeds range is empty: " + text);
    return {a, b};
  } catch (const std::logic_error&) {
    throw UsageError("bad --seeds value (want A or A..B): " + text);
  }
}

int cmd_genroutes(const std::string& seeds, int n_checkpoints,
                  const std::string& out_dir, double spacing) {
  const auto [first, last] = parse_seed_range(seeds);
  if (n_checkpoints < 2) throw UsageError("--checkpoints must be >= 2");
  RouteGenConfig rg;
  rg.checkpoint_spacing = spacing;
  fs::create_directories(out_dir);
  for (std::uint64_t s = first; s <= last; ++s) {
    RouteMap route = generate_route(s, n_checkpoints, rg);
    save_route(route,
               (fs::path(out_dir) / ("route_" + std::to_string(s) + ".json"))
                   .string());
  }
  std::cerr << "wrote " << (last - first + 1) << " routes to " << out_dir
            << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sleep-aware cruise-control laboratory"};
  app.require_subcommand(1);

  std::string config_path, arch, out_dir;
  std::int64_t seed = -1;
  auto* train_cmd = app.add_subcommand("train", "Train a policy with PPO");
  train_cmd->add_option("config", config_path, "Run config JSON")->required();
  train_cmd->add_option("--arch", arch, "lstm|transformer");
  train_cmd->add_option("--seed", seed, "Override the run seed");
  train_cmd->add_option("--out", out_dir, "Override the output directory");

  std::string eval_config, eval_out;
  std::vector<std::string> checkpoints;
  int n_routes = 0;
  auto* eval_cmd = app.add_subcommand("eval", "Benchmark policies");
  eval_cmd->add_option("config", eval_config, "Run config JSON")->required();
  eval_cmd->add_option("--checkpoints", checkpoints, "Checkpoint files");
  eval_cmd->add_option("--routes", n_routes, "Number of evaluation routes");
  eval_cmd->add_option("--out", eval_out, "Override the output directory");

  std::string route_path, policy_path, trace_path, replay_config;
  int level = -1;
  std::int64_t replay_seed = -1;
  auto* replay_cmd = app.add_subcommand("replay", "Run and trace one trip");
  replay_cmd->add_option("route", route_path, "Route JSON file")->required();
  replay_cmd->add_option("--level", level, "Fixed aggressiveness level");
  replay_cmd->add_option("--policy", policy_path, "Policy checkpoint");
  replay_cmd->add_option("--trace", trace_path, "Vehicle trace CSV path");
  replay_cmd->add_option("--config", replay_config, "Run config JSON");
  replay_cmd->add_option("--seed", replay_seed, "Trip seed");

  std::string seeds = "0", gen_out = "routes";
  int gen_checkpoints = 20;
  double gen_spacing = 150.0;
  auto* gen_cmd = app.add_subcommand("genroutes", "Materialize route files");
  gen_cmd->add_option("--seeds", seeds, "Seed or inclusive range A..B");
  gen_cmd->add_option("--checkpoints", gen_checkpoints, "Checkpoints per route");
  gen_cmd->add_option("--out", gen_out, "Output directory");
  gen_cmd->add_option("--spacing", gen_spacing, "Checkpoint spacing, m");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, arch, seed, out_dir);
    if (*eval_cmd) return cmd_eval(eval_config, checkpoints, n_routes, eval_out);
    if (*replay_cmd) {
      return cmd_replay(route_path, level, policy_path, trace_path,
                        replay_config, replay_seed);
    }
    if (*gen_cmd) {
      return cmd_genroutes(seeds, gen_checkpoints, gen_out, gen_spacing);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitUsage;
}
