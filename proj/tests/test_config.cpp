#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "sleepcc/config.hpp"

using namespace sleepcc;

TEST_CASE("empty object yields the documented defaults") {
  const RunConfig cfg = parse_run_config("{}", /*apply_env_overrides=*/false);
  CHECK(cfg.run_id == "run");
  CHECK(cfg.seed == 0);
  CHECK(cfg.reward.epsilon_th == 0.5);
  CHECK(cfg.reward.beta == 3.0);
  CHECK(cfg.wrist.m == 0.4);
  CHECK(cfg.wrist.k == 50.0);
  CHECK(cfg.wrist.c == 1.0);
  CHECK(cfg.wake.window == 300);
  CHECK(cfg.wake.m_thres == 2.0);
  CHECK(cfg.sim.dt == 0.01);
  CHECK(cfg.actions.a_min == 0);
  CHECK(cfg.actions.a_max == 10);
  CHECK(cfg.actions.size() == 11);
  CHECK(cfg.policy.n_actions == 11);
  CHECK(cfg.policy.mlp.input_dim == StateVector::kFeatures);
  CHECK(cfg.policy.seq_len == 5);
  CHECK(cfg.ppo.gamma == 0.99);
  CHECK(cfg.ppo.steps_per_update == 20);
  CHECK(cfg.routes.n_checkpoints == 20);
  CHECK(cfg.routes.training_seeds().size() == 20);
  CHECK(cfg.routes.eval_seeds().front() == 1000);
  CHECK(cfg.routes.eval_seeds().back() == 1009);
  CHECK(cfg.eval_episodes_per_route == 3);
}

TEST_CASE("present keys override, absent keys keep defaults") {
  const RunConfig cfg = parse_run_config(
      R"({
        "run_id": "exp1",
        "seed": 7,
        "reward": {"beta": 2.5},
        "policy": {"arch": "transformer", "seq_len": 4},
        "ppo": {"iterations": 50, "lr": 0.001}
      })",
      false);
  CHECK(cfg.run_id == "exp1");
  CHECK(cfg.seed == 7);
  CHECK(cfg.reward.beta == 2.5);
  CHECK(cfg.reward.epsilon_th == 0.5);  // untouched
  CHECK(cfg.policy.arch == ArchKind::kTransformer);
  CHECK(cfg.policy.seq_len == 4);
  CHECK(cfg.ppo.iterations == 50);
  CHECK(cfg.ppo.lr == 0.001);
  CHECK(cfg.ppo.gamma == 0.99);  // untouched
}

TEST_CASE("unknown keys are rejected with their field path") {
  CHECK_THROWS_WITH_AS(parse_run_config(R"({"rewardd": {}})", false),
                       doctest::Contains("rewardd"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config(R"({"reward": {"betaa": 1}})", false),
                       doctest::Contains("reward.betaa"), ConfigError);
  CHECK_THROWS_WITH_AS(
      parse_run_config(R"({"policy": {"lstm": {"cells": 3}}})", false),
      doctest::Contains("policy.lstm.cells"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_run_config(R"({"sim": {"gravity": 9.8}})", false),
                       doctest::Contains("sim.gravity"), ConfigError);
}

TEST_CASE("malformed input is a ConfigError") {
  CHECK_THROWS_AS(parse_run_config("not json", false), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"reward": 3})", false), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"seed": "abc"})", false), ConfigError);
  CHECK_THROWS_AS(
      parse_run_config(R"({"normalization": {"min": [0, 1]}})", false),
      ConfigError);
}

TEST_CASE("semantic validation catches out-of-range values") {
  CHECK_THROWS_AS(
      parse_run_config(R"({"reward": {"epsilon_th": 1.5}})", false),
      ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"wake": {"m_thres": 0}})", false),
                  ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"sim": {"dt": -0.01}})", false),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_run_config(R"({"actions": {"a_min": 5, "a_max": 5}})", false),
      ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"ppo": {"gamma": 0}})", false),
                  ConfigError);
  CHECK_THROWS_AS(
      parse_run_config(R"({"policy": {"lstm": {"dropout": 1.0}}})", false),
      ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"wrist": {"mode": "mystic"}})", false),
                  ConfigError);
}

TEST_CASE("environment overrides merge before validation") {
  // A private prefix keeps this test independent of the ambient environment.
  setenv("SCCTEST_ppo__iterations", "123", 1);
  setenv("SCCTEST_reward__beta", "4.5", 1);
  setenv("SCCTEST_policy__lstm__hidden", "32", 1);
  setenv("SCCTEST_run_id", "from-env", 1);
  const RunConfig cfg = parse_run_config("{}", true, "SCCTEST_");
  CHECK(cfg.ppo.iterations == 123);
  CHECK(cfg.reward.beta == 4.5);
  CHECK(cfg.policy.lstm.hidden == 32);
  CHECK(cfg.run_id == "from-env");

  // File values lose to the environment.
  const RunConfig cfg2 =
      parse_run_config(R"({"ppo": {"iterations": 9}})", true, "SCCTEST_");
  CHECK(cfg2.ppo.iterations == 123);

  // Overrides pass through the same schema checks.
  setenv("SCCTEST_ppo__iterationss", "5", 1);
  CHECK_THROWS_AS(parse_run_config("{}", true, "SCCTEST_"), ConfigError);
  unsetenv("SCCTEST_ppo__iterationss");

  setenv("SCCTEST_ppo__gamma", "7", 1);
  CHECK_THROWS_AS(parse_run_config("{}", true, "SCCTEST_"), ConfigError);
  unsetenv("SCCTEST_ppo__gamma");

  unsetenv("SCCTEST_ppo__iterations");
  unsetenv("SCCTEST_reward__beta");
  unsetenv("SCCTEST_policy__lstm__hidden");
  unsetenv("SCCTEST_run_id");
}

TEST_CASE("snapshot round-trips through the parser") {
  const RunConfig cfg = parse_run_config(
      R"({
        "run_id": "snap",
        "seed": 3,
        "wrist": {"mode": "vehicle-speed-damped"},
        "policy": {"arch": "transformer"},
        "traffic": {"lead_vehicle_density": 2.5},
        "sim": {"imu_noise_sigma": 0.05}
      })",
      false);
  const std::string snap = run_config_to_json(cfg);
  const RunConfig back = parse_run_config(snap, false);
  CHECK(run_config_to_json(back) == snap);
  CHECK(back.run_id == "snap");
  CHECK(back.wrist.mode == WristModelConfig::Mode::kVehicleSpeedDamped);
  CHECK(back.policy.arch == ArchKind::kTransformer);
  CHECK(back.traffic.lead_vehicle_density == 2.5);
  CHECK(back.sim.imu_noise_sigma == 0.05);
}

TEST_CASE("load_run_config reads files and reports missing ones") {
  const std::string path = "test_config_tmp.json";
  {
    std::ofstream out(path);
    out << R"({"run_id": "file-run", "seed": 12})";
  }
  const RunConfig cfg = load_run_config(path, false);
  CHECK(cfg.run_id == "file-run");
  CHECK(cfg.seed == 12);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_run_config("does_not_exist.json", false), ConfigError);
}

TEST_CASE("make_bench_config mirrors the run configuration") {
  RunConfig cfg = parse_run_config(
      R"({"routes": {"n_checkpoints": 8, "eta_reference_level": 4},
          "policy": {"seq_len": 3}})",
      false);
  const BenchConfig bc = make_bench_config(cfg, {10, 11}, 2);
  CHECK(bc.route_seeds == std::vector<std::uint64_t>{10, 11});
  CHECK(bc.episodes_per_route == 2);
  CHECK(bc.n_checkpoints == 8);
  CHECK(bc.eta_reference_level == 4);
  CHECK(bc.env.k == 3);
  CHECK(bc.env.actions.size() == 11);
}

TEST_CASE("the training env factory samples reproducible scenarios") {
  RunConfig cfg = parse_run_config(
      R"({"routes": {"n_checkpoints": 4, "training_seed_count": 3}})", false);
  const EnvFactory factory = make_training_env_factory(cfg);
  auto roll = [&](std::uint64_t s) {
    std::mt19937_64 rng(s);
    std::unique_ptr<Env> env = factory(rng);
    env->reset();
    double total = 0.0;
    EnvStep st;
    do {
      st = env->step(5);
      total += st.reward;
    } while (!st.done);
    return total;
  };
  CHECK(roll(1) == roll(1));
  CHECK(factory != nullptr);
}
