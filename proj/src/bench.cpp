#include "sleepcc/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "sleepcc/sim.hpp"

namespace sleepcc {

double late_rate(double t_ata_final, double t_eta_final) {
  if (!(t_ata_final > 0.0) || !(t_eta_final > 0.0)) {
    throw InvalidInput("late_rate: times must be positive");
  }
  return std::max((t_ata_final - t_eta_final) / t_eta_final, 0.0);
}

double rel_max_movement(double trip_peak, double m_thres) {
  if (!(m_thres > 0.0)) throw InvalidInput("rel_max_movement: bad threshold");
  if (trip_peak < 0.0) throw InvalidInput("rel_max_movement: negative peak");
  return trip_peak / m_thres;
}

double rel_max_movement(const ImuStream& stream, double m_thres) {
  if (stream.samples.empty()) {
    throw InvalidInput("rel_max_movement: empty stream");
  }
  double peak = 0.0;
  for (double s : stream.samples) peak = std::max(peak, s);
  return rel_max_movement(peak, m_thres);
}

const char* to_string(TripCategory c) {
  switch (c) {
    case TripCategory::kGood: return "good";
    case TripCategory::kAcceptable: return "acceptable";
    case TripCategory::kPoor: return "poor";
  }
  return "acceptable";
}

TripCategory categorize(double late, double movement) {
  if (!(late >= 0.0) || !(movement >= 0.0) || !std::isfinite(late) ||
      !std::isfinite(movement)) {
    throw InvalidInput("categorize: metrics must be finite and nonnegative");
  }
  if (movement > 0.8 || late > 2.0) return TripCategory::kPoor;
  if (movement < 0.4 && late < 1.0) return TripCategory::kGood;
  return TripCategory::kAcceptable;
}

BenchPolicy BenchPolicy::fixed(std::string name, int level) {
  BenchPolicy p;
  p.name = std::move(name);
  p.kind = Kind::kFixed;
  p.fixed_level = level;
  return p;
}

BenchPolicy BenchPolicy::random(std::string name) {
  BenchPolicy p;
  p.name = std::move(name);
  p.kind = Kind::kRandom;
  return p;
}

BenchPolicy BenchPolicy::trained(std::string name,
                                 std::shared_ptr<PolicyNet> net) {
  BenchPolicy p;
  p.name = std::move(name);
  p.kind = Kind::kCheckpoint;
  p.net = std::move(net);
  return p;
}

TripRecord run_trip(const BenchPolicy& policy, DrivingEnv& env,
                    std::uint64_t cell_seed) {
  std::mt19937_64 rng(cell_seed * 0x853c49e6748fea9bULL + 7);
  FeatureMatrix obs = env.reset();
  const int n = env.n_actions();
  std::uniform_int_distribution<int> pick(0, n - 1);

  TripRecord rec;
  rec.policy = policy.name;
  rec.route_id = env.world().route().id;
  rec.seed = cell_seed;
  bool done = false;
  while (!done) {
    int action;
    switch (policy.kind) {
      case BenchPolicy::Kind::kFixed:
        action = policy.fixed_level;
        break;
      case BenchPolicy::Kind::kRandom:
        action = pick(rng);
        break;
      case BenchPolicy::Kind::kCheckpoint:
        action = policy.net->act(obs, /*sample=*/false, rng).action;
        break;
    }
    EnvStep s = env.step(action);
    rec.total_reward += s.reward;
    ++rec.steps;
    done = s.done;
    obs = std::move(s.obs);
  }
  rec.late_rate = late_rate(env.last_ata(), env.last_eta());
  rec.rel_max_movement =
      rel_max_movement(env.trip_imu_peak(), env.world().wake_config().m_thres);
  rec.woke_up = env.woke();
  rec.category = categorize(rec.late_rate, rec.rel_max_movement);
  return rec;
}

PolicyAggregate aggregate_policy(const std::string& name,
                                 const std::vector<TripRecord>& trips) {
  PolicyAggregate agg;
  agg.policy = name;
  for (const auto& t : trips) {
    if (t.policy != name) continue;
    ++agg.n_trips;
    agg.mean_late_rate += t.late_rate;
    agg.mean_rel_max_movement += t.rel_max_movement;
    agg.mean_total_reward += t.total_reward;
    if (t.woke_up) agg.wake_up_rate += 1.0;
    switch (t.category) {
      case TripCategory::kGood: ++agg.n_good; break;
      case TripCategory::kAcceptable: ++agg.n_acceptable; break;
      case TripCategory::kPoor: ++agg.n_poor; break;
    }
  }
  if (agg.n_trips > 0) {
    agg.mean_late_rate /= agg.n_trips;
    agg.mean_rel_max_movement /= agg.n_trips;
    agg.mean_total_reward /= agg.n_trips;
    agg.wake_up_rate /= agg.n_trips;
  }
  return agg;
}

EvalReport run_benchmark(const std::vector<BenchPolicy>& policies,
                         const BenchConfig& cfg) {
  for (const auto& p : policies) {
    if (p.kind == BenchPolicy::Kind::kCheckpoint && !p.net) {
      throw InvalidInput("benchmark policy " + p.name + " has no checkpoint");
    }
  }
  EvalReport report;
  for (std::uint64_t route_seed : cfg.route_seeds) {
    RouteGenConfig rg = cfg.route_gen;
    RouteMap route = generate_route(route_seed, cfg.n_checkpoints, rg);
    route = compute_etas(route, cfg.eta_reference_level, cfg.tuning);
    for (int e = 0; e < cfg.episodes_per_route; ++e) {
      const std::uint64_t cell_seed =
          route_seed * 1000003ULL + static_cast<std::uint64_t>(e);
      TrafficConfig traffic = cfg.traffic;
      traffic.congestion_seed = cell_seed;
      for (const auto& policy : policies) {
        DrivingEnv env(route, traffic, cfg.tuning, cfg.wrist, cfg.wake,
                       cfg.env, cell_seed);
        report.trips.push_back(run_trip(policy, env, cell_seed));
      }
    }
  }
  for (const auto& policy : policies) {
    report.aggregates.push_back(aggregate_policy(policy.name, report.trips));
  }
  return report;
}

namespace {

std::string fmt(double x) {
  std::ostringstream s;
  s << std::setprecision(10) << x;
  return s.str();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

}  // namespace

void write_report_csv(const EvalReport& report, const std::string& path) {
  auto out = open_out(path);
  out << "policy,route_id,seed,steps,late_rate,rel_max_movement,woke_up,"
         "category,total_reward\n";
  for (const auto& t : report.trips) {
    out << t.policy << ',' << t.route_id << ',' << t.seed << ',' << t.steps
        << ',' << fmt(t.late_rate) << ',' << fmt(t.rel_max_movement) << ','
        << (t.woke_up ? 1 : 0) << ',' << to_string(t.category) << ','
        << fmt(t.total_reward) << '\n';
  }
}

void write_aggregates_csv(const EvalReport& report, const std::string& path) {
  auto out = open_out(path);
  out << "policy,n_trips,mean_late_rate,wake_up_rate,mean_rel_max_movement,"
         "mean_total_reward,n_good,n_acceptable,n_poor\n";
  for (const auto& a : report.aggregates) {
    out << a.policy << ',' << a.n_trips << ',' << fmt(a.mean_late_rate) << ','
        << fmt(a.wake_up_rate) << ',' << fmt(a.mean_rel_max_movement) << ','
        << fmt(a.mean_total_reward) << ',' << a.n_good << ','
        << a.n_acceptable << ',' << a.n_poor << '\n';
  }
}

void write_bubbles_csv(const EvalReport& report, const std::string& path) {
  auto out = open_out(path);
  out << "policy,rel_max_movement,late_rate,category\n";
  for (const auto& t : report.trips) {
    out << t.policy << ',' << fmt(t.rel_max_movement) << ','
        << fmt(t.late_rate) << ',' << to_string(t.category) << '\n';
  }
}

}  // namespace sleepcc
