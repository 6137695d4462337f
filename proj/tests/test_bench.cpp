#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "sleepcc/bench.hpp"

using namespace sleepcc;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

BenchConfig tiny_bench(std::vector<std::uint64_t> seeds, int checkpoints) {
  BenchConfig cfg;
  cfg.route_seeds = std::move(seeds);
  cfg.n_checkpoints = checkpoints;
  return cfg;
}

}  // namespace

TEST_CASE("late_rate definition and clamping") {
  CHECK(late_rate(120.0, 100.0) == doctest::Approx(0.2));
  CHECK(late_rate(100.0, 100.0) == 0.0);
  CHECK(late_rate(80.0, 100.0) == 0.0);  // early trips are not negative-late
  CHECK_THROWS_AS(late_rate(0.0, 100.0), InvalidInput);
  CHECK_THROWS_AS(late_rate(100.0, 0.0), InvalidInput);
}

TEST_CASE("rel_max_movement normalizes by the wake threshold") {
  CHECK(rel_max_movement(1.0, 2.0) == doctest::Approx(0.5));
  CHECK(rel_max_movement(0.0, 2.0) == 0.0);
  CHECK_THROWS_AS(rel_max_movement(1.0, 0.0), InvalidInput);
  CHECK_THROWS_AS(rel_max_movement(-0.1, 2.0), InvalidInput);
  ImuStream s;
  s.samples = {0.5, 1.6, 0.2};
  CHECK(rel_max_movement(s, 2.0) == doctest::Approx(0.8));
  s.samples.clear();
  CHECK_THROWS_AS(rel_max_movement(s, 2.0), InvalidInput);
}

TEST_CASE("categorize: full nine-case boundary grid") {
  // Rows: movement below / between / above the 0.4 and 0.8 cutoffs.
  // Columns: late below / between / above the 1 and 2 cutoffs.
  CHECK(categorize(0.5, 0.2) == TripCategory::kGood);
  CHECK(categorize(1.5, 0.2) == TripCategory::kAcceptable);
  CHECK(categorize(2.5, 0.2) == TripCategory::kPoor);
  CHECK(categorize(0.5, 0.6) == TripCategory::kAcceptable);
  CHECK(categorize(1.5, 0.6) == TripCategory::kAcceptable);
  CHECK(categorize(2.5, 0.6) == TripCategory::kPoor);
  CHECK(categorize(0.5, 0.9) == TripCategory::kPoor);
  CHECK(categorize(1.5, 0.9) == TripCategory::kPoor);
  CHECK(categorize(2.5, 0.9) == TripCategory::kPoor);
  // Boundary semantics: good needs strict <, poor needs strict >.
  CHECK(categorize(1.0, 0.3) == TripCategory::kAcceptable);
  CHECK(categorize(0.3, 0.4) == TripCategory::kAcceptable);
  CHECK(categorize(2.0, 0.5) == TripCategory::kAcceptable);
  CHECK(categorize(0.5, 0.8) == TripCategory::kAcceptable);
  CHECK(categorize(0.0, 0.0) == TripCategory::kGood);
  CHECK_THROWS_AS(categorize(-0.1, 0.5), InvalidInput);
  CHECK_THROWS_AS(categorize(0.5, -0.1), InvalidInput);
}

TEST_CASE("category names round-trip to strings") {
  CHECK(std::string(to_string(TripCategory::kGood)) == "good");
  CHECK(std::string(to_string(TripCategory::kAcceptable)) == "acceptable");
  CHECK(std::string(to_string(TripCategory::kPoor)) == "poor");
}

TEST_CASE("aggregate_policy recomputes the means from the trips") {
  std::vector<TripRecord> trips;
  TripRecord a;
  a.policy = "p";
  a.late_rate = 0.2;
  a.rel_max_movement = 0.3;
  a.woke_up = false;
  a.total_reward = 4.0;
  a.category = TripCategory::kGood;
  TripRecord b = a;
  b.late_rate = 0.6;
  b.rel_max_movement = 0.9;
  b.woke_up = true;
  b.total_reward = 2.0;
  b.category = TripCategory::kPoor;
  TripRecord other = a;
  other.policy = "q";
  other.late_rate = 99.0;
  trips = {a, b, other};

  const PolicyAggregate agg = aggregate_policy("p", trips);
  CHECK(agg.n_trips == 2);
  CHECK(agg.mean_late_rate == doctest::Approx(0.4));
  CHECK(agg.wake_up_rate == doctest::Approx(0.5));
  CHECK(agg.mean_rel_max_movement == doctest::Approx(0.6));
  CHECK(agg.mean_total_reward == doctest::Approx(3.0));
  CHECK(agg.n_good == 1);
  CHECK(agg.n_acceptable == 0);
  CHECK(agg.n_poor == 1);
  CHECK(aggregate_policy("missing", trips).n_trips == 0);
}

TEST_CASE("run_benchmark pairs every policy on identical cells") {
  const std::vector<BenchPolicy> policies{
      BenchPolicy::fixed("actn2", 2), BenchPolicy::fixed("actn8", 8),
      BenchPolicy::random()};
  const BenchConfig cfg = tiny_bench({3, 4}, 6);
  const EvalReport report = run_benchmark(policies, cfg);
  REQUIRE(report.trips.size() == 6);  // 2 routes x 3 policies
  REQUIRE(report.aggregates.size() == 3);
  // Paired cells: per route, every policy sees the same seed and route.
  for (std::size_t r = 0; r < 2; ++r) {
    const auto& base = report.trips[3 * r];
    for (std::size_t p = 1; p < 3; ++p) {
      CHECK(report.trips[3 * r + p].seed == base.seed);
      CHECK(report.trips[3 * r + p].route_id == base.route_id);
    }
  }
  for (const auto& t : report.trips) {
    CHECK(t.steps >= 1);
    CHECK(t.steps <= 6);
    CHECK(t.late_rate >= 0.0);
    CHECK(t.rel_max_movement >= 0.0);
    CHECK(t.category == categorize(t.late_rate, t.rel_max_movement));
  }
  // Determinism: the same benchmark reruns byte-identically.
  const EvalReport again = run_benchmark(policies, cfg);
  REQUIRE(again.trips.size() == report.trips.size());
  for (std::size_t i = 0; i < report.trips.size(); ++i) {
    CHECK(again.trips[i].late_rate == report.trips[i].late_rate);
    CHECK(again.trips[i].rel_max_movement == report.trips[i].rel_max_movement);
    CHECK(again.trips[i].total_reward == report.trips[i].total_reward);
  }
}

TEST_CASE("gentler fixed policies wake less and run later") {
  const std::vector<BenchPolicy> policies{
      BenchPolicy::fixed("actn2", 2), BenchPolicy::fixed("actn8", 8)};
  BenchConfig cfg = tiny_bench({10, 11, 12, 13, 14}, 12);
  const EvalReport report = run_benchmark(policies, cfg);
  const PolicyAggregate a2 = report.aggregates[0];
  const PolicyAggregate a8 = report.aggregates[1];
  CHECK(a2.wake_up_rate < a8.wake_up_rate);
  CHECK(a2.mean_late_rate > a8.mean_late_rate);
  CHECK(a2.mean_rel_max_movement < a8.mean_rel_max_movement);
}

TEST_CASE("checkpoint policies require a network") {
  CHECK_THROWS_AS(
      run_benchmark({BenchPolicy::trained("p", nullptr)}, tiny_bench({1}, 4)),
      InvalidInput);
}

TEST_CASE("CSV writers emit headers and one row per record") {
  const EvalReport report = run_benchmark(
      {BenchPolicy::fixed("actn2", 2), BenchPolicy::random()},
      tiny_bench({5}, 4));
  const std::string rp = "bench_report_tmp.csv";
  const std::string ap = "bench_agg_tmp.csv";
  const std::string bp = "bench_bubbles_tmp.csv";
  write_report_csv(report, rp);
  write_aggregates_csv(report, ap);
  write_bubbles_csv(report, bp);

  const std::string rep = slurp(rp);
  CHECK(rep.find("policy,route_id,seed,steps,late_rate,rel_max_movement,"
                 "woke_up,category,total_reward\n") == 0);
  CHECK(std::count(rep.begin(), rep.end(), '\n') == 1 + 2);
  const std::string agg = slurp(ap);
  CHECK(agg.find("policy,n_trips,") == 0);
  CHECK(std::count(agg.begin(), agg.end(), '\n') == 1 + 2);
  const std::string bub = slurp(bp);
  CHECK(bub.find("policy,rel_max_movement,late_rate,category\n") == 0);
  CHECK(std::count(bub.begin(), bub.end(), '\n') == 1 + 2);

  // Byte-identical on rerun.
  write_report_csv(report, rp);
  CHECK(slurp(rp) == rep);
  std::remove(rp.c_str());
  std::remove(ap.c_str());
  std::remove(bp.c_str());
  CHECK_THROWS(write_report_csv(report, "/no/such/dir/report.csv"));
}
