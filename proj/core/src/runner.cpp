#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "distrl/analysis.hpp"
#include "distrl/engine.hpp"
#include "distrl/environments.hpp"
#include "distrl/errors.hpp"
#include "distrl/experiment.hpp"
#include "distrl/projections.hpp"
#include "distrl/random.hpp"
#include "distrl/version.hpp"

namespace distrl {

namespace fs = std::filesystem;

namespace {

using nlohmann::ordered_json;

// Shortest representation that parses back to the same double, so reruns of
// the same config emit byte-identical files.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt_fixed(double v, int places) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", places, v);
  return buf;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  int threads = workers > 0 ? workers : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, n);
  if (threads == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> cursor{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const int i = cursor.fetch_add(1);
        if (i >= n || failed.load()) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          failed.store(true);
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

enum class Method { kSgd, kDp, kGreedyDp };

struct Cell {
  std::string run_id;
  std::string env_key;
  int length = 0;  // 0 for the control environment
  std::string algorithm;
  Strategy strategy = Strategy::kExpectile;
  std::string stat_kind;
  int k = 0;
  std::uint64_t seed = 0;
  Method method = Method::kSgd;
};

struct PairRef {
  int x = 0;
  int a = 0;
};

struct EnvBundle {
  TabularMdp mdp;
  Policy policy;               // evaluation policy; ignored by greedy DP
  DistTable truth;             // filled for recorded pairs
  std::vector<PairRef> record; // pairs written to per-run CSVs, in file order
};

StatisticSet make_set(const std::string& kind, int k, const StatSpec& spec) {
  if (kind == "expectile") return StatisticSet::expectiles(k);
  if (kind == "quantile") return StatisticSet::quantiles(k);
  if (kind == "huber") return StatisticSet::huber_quantiles(k, spec.kappa);
  if (kind == "categorical") return StatisticSet::categorical(spec.z_lo, spec.z_hi, k);
  throw ConfigError("unknown statistics kind '" + kind + "'");
}

// Horizon after which the discounted tail is below 1e-4 of scale 1 rewards.
int mc_horizon(const TabularMdp& mdp) {
  const double g = mdp.gamma();
  if (g <= 0.0) return 1;
  if (g >= 1.0) return 4 * mdp.num_states();
  const double t = std::log(1e-4 * (1.0 - g)) / std::log(g);
  return std::clamp(static_cast<int>(std::ceil(t)), mdp.num_states() + 2, 2'000'000);
}

std::string env_key_for(const EnvSpec& env, int length) {
  return env.name == "control" ? env.name : env.name + std::to_string(length);
}

EnvBundle build_env(const ExperimentConfig& cfg, int length, Method method, int workers) {
  EnvBundle bundle{TabularMdp(2, 1, 0.5), Policy::uniform(2, 1), {}, {}};
  if (cfg.env.name == "nchain") {
    bundle.mdp = build_nchain(length, cfg.env.p_forward, cfg.env.gamma,
                              DiscreteDist::dirac(1.0));
    bundle.policy = Policy::deterministic(bundle.mdp.num_states(), 0, 2);
  } else if (cfg.env.name == "absorbing-chain") {
    bundle.mdp = build_absorbing_chain(length, cfg.env.gamma,
                                       bimodal_reward(cfg.env.reward_atoms));
    bundle.policy = Policy::deterministic(bundle.mdp.num_states(), 0, 1);
  } else if (cfg.env.name == "control") {
    bundle.mdp = build_control_mdp(cfg.env.reward_atoms);
    bundle.policy = Policy::uniform(bundle.mdp.num_states(), bundle.mdp.num_actions());
  } else {
    throw ConfigError("unknown env.name '" + cfg.env.name + "'");
  }

  const TabularMdp& mdp = bundle.mdp;
  const int s = mdp.num_states();
  bundle.truth.assign(static_cast<std::size_t>(s),
                      std::vector<DiscreteDist>(static_cast<std::size_t>(mdp.num_actions()),
                                                DiscreteDist::dirac(0.0)));
  if (method == Method::kGreedyDp) {
    // Truth depends on the learnt greedy policy; each cell computes its own.
    for (int x = 0; x < s; ++x) {
      if (mdp.is_terminal(x)) continue;
      for (int a = 0; a < mdp.num_actions(); ++a) bundle.record.push_back({x, a});
    }
    return bundle;
  }
  if (method == Method::kSgd) {
    // Monte Carlo truth per policy-supported pair, one rollout stream per
    // state so worker count cannot perturb the draw order.
    const std::string key = env_key_for(cfg.env, length);
    const int cap = mc_horizon(mdp);
    std::vector<int> states;
    for (int x = 0; x < s; ++x) {
      if (!mdp.is_terminal(x)) states.push_back(x);
    }
    std::vector<DiscreteDist> dists(states.size(), DiscreteDist::dirac(0.0));
    parallel_for(static_cast<int>(states.size()), workers, [&](int i) {
      Rng rng = make_stream(cfg.mc_seed, "mc-" + key + "-x" + std::to_string(states[i]));
      dists[static_cast<std::size_t>(i)] =
          monte_carlo_return_dist(mdp, bundle.policy, states[i], cfg.mc_rollouts, rng, cap);
    });
    for (std::size_t i = 0; i < states.size(); ++i) {
      const int x = states[i];
      int a = 0;
      for (int cand = 1; cand < mdp.num_actions(); ++cand) {
        if (bundle.policy.prob(x, cand) > bundle.policy.prob(x, a)) a = cand;
      }
      bundle.truth[x][a] = dists[i];
      bundle.record.push_back({x, a});
    }
    return bundle;
  }
  // Plain DP: exact distributions for terminating structures, dense grid
  // otherwise.
  DistTable truth;
  if (cfg.env.name == "nchain") {
    GridReturnDistOptions gopt;
    const double span = 1.0 / (1.0 - mdp.gamma());
    gopt.grid = GridSpec{-span, span, 4001};
    truth = grid_return_dist(mdp, bundle.policy, gopt);
  } else {
    truth = exact_return_dist(mdp, bundle.policy);
  }
  for (int x = 0; x < s; ++x) {
    if (mdp.is_terminal(x)) continue;
    int a = 0;
    for (int cand = 1; cand < mdp.num_actions(); ++cand) {
      if (bundle.policy.prob(x, cand) > bundle.policy.prob(x, a)) a = cand;
    }
    bundle.truth[x][a] = truth[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)];
    bundle.record.push_back({x, a});
  }
  return bundle;
}

Policy greedy_policy(const StatTable& table, const TabularMdp& mdp) {
  std::vector<int> actions(static_cast<std::size_t>(mdp.num_states()), 0);
  for (int x = 0; x < mdp.num_states(); ++x) {
    if (!mdp.is_terminal(x)) actions[static_cast<std::size_t>(x)] = greedy_action(table, x);
  }
  return Policy::deterministic(std::move(actions), mdp.num_actions());
}

struct Snapshot {
  int step = 0;
  std::vector<std::vector<double>> values;  // per record pair
};

struct CellOutput {
  std::string csv;                 // per-run file body
  std::string summary_line;        // one summary.csv row
  std::string control_line;        // fig8 extra row, else empty
};

CellOutput run_cell(const ExperimentConfig& cfg, const Cell& cell, const EnvBundle& env) {
  const TabularMdp& mdp = env.mdp;
  const StatisticSet set = make_set(cell.stat_kind, cell.k, cfg.statistics);
  SolverOptions sopt;
  sopt.tolerance = cfg.solver.tolerance;
  sopt.max_iters = cfg.solver.max_iters;
  sopt.n_atoms = cfg.solver.n_atoms;
  StatTable table(mdp.num_states(), mdp.num_actions(), set, cell.strategy, sopt);

  const auto snap = [&](int step, const StatTable& t) {
    Snapshot s;
    s.step = step;
    s.values.reserve(env.record.size());
    for (const PairRef& p : env.record) s.values.push_back(t.values(p.x, p.a));
    return s;
  };

  std::vector<Snapshot> snapshots;
  DistTable truth = env.truth;
  Policy policy = env.policy;
  bool lenient_imputation = false;

  if (cell.method == Method::kSgd) {
    const int every = cfg.metric_every > 0 ? cfg.metric_every : std::max(1, cfg.steps / 10);
    TrainOptions topt;
    topt.alpha = cfg.alpha;
    topt.steps = cfg.steps;
    topt.seed = cell.seed;
    topt.metric_every = every;
    const TrainResult res =
        train(std::move(table), mdp, &policy, topt,
              [&](int step, const StatTable& t) { snapshots.push_back(snap(step, t)); });
    table = std::move(const_cast<TrainResult&>(res).table);
    if (snapshots.empty() || snapshots.back().step != cfg.steps) {
      snapshots.push_back(snap(cfg.steps, table));
    }
    lenient_imputation = true;  // stochastic estimates may be transiently invalid
  } else if (cell.method == Method::kDp) {
    DpDiagnostics diag;
    table = dp_fixed_point(std::move(table), mdp, policy, cfg.dp_tol, cfg.sweeps, &diag);
    snapshots.push_back(snap(diag.sweeps, table));
  } else {
    // Greedy DP: distributional value iteration against the mean estimates.
    // Converged when the statistics settle and the greedy policy is stable.
    policy = greedy_policy(table, mdp);
    bool done = false;
    for (int sweep = 1; sweep <= cfg.sweeps; ++sweep) {
      const StatTable next = dp_update(table, mdp, policy);
      double residual = 0.0;
      for (const PairRef& p : env.record) {
        const auto& old_v = table.values(p.x, p.a);
        const auto& new_v = next.values(p.x, p.a);
        for (std::size_t i = 0; i < old_v.size(); ++i) {
          residual = std::max(residual, std::abs(new_v[i] - old_v[i]));
        }
      }
      table = next;
      const Policy refreshed = greedy_policy(table, mdp);
      bool stable = true;
      for (int x = 0; x < mdp.num_states() && stable; ++x) {
        stable = refreshed.probs(x) == policy.probs(x);
      }
      policy = refreshed;
      if (residual <= cfg.dp_tol && stable) {
        snapshots.push_back(snap(sweep, table));
        done = true;
        break;
      }
    }
    if (!done) {
      throw ConvergenceError("greedy DP did not settle within the sweep budget", 0.0);
    }
    const DistTable exact = exact_return_dist(mdp, policy);
    for (const PairRef& p : env.record) {
      truth[static_cast<std::size_t>(p.x)][static_cast<std::size_t>(p.a)] =
          exact[static_cast<std::size_t>(p.x)][static_cast<std::size_t>(p.a)];
    }
  }

  // True statistic values per recorded pair.
  std::vector<std::vector<double>> true_stats;
  true_stats.reserve(env.record.size());
  for (const PairRef& p : env.record) {
    true_stats.push_back(
        evaluate(set, truth[static_cast<std::size_t>(p.x)][static_cast<std::size_t>(p.a)]));
  }

  CellOutput out;
  std::string& csv = out.csv;
  csv = "step,state,action,stat_index,tau_or_param,learned_value,true_value\n";
  for (const Snapshot& s : snapshots) {
    for (std::size_t pi = 0; pi < env.record.size(); ++pi) {
      const PairRef& p = env.record[pi];
      for (std::size_t i = 0; i < set.size(); ++i) {
        csv += std::to_string(s.step);
        csv += ',';
        csv += std::to_string(p.x);
        csv += ',';
        csv += std::to_string(p.a);
        csv += ',';
        csv += std::to_string(i);
        csv += ',';
        csv += fmt(set[i].param());
        csv += ',';
        csv += fmt(s.values[pi][i]);
        csv += ',';
        csv += fmt(true_stats[pi][i]);
        csv += '\n';
      }
    }
  }

  // Summary metrics: the paper's start-state error, the sup over recorded
  // pairs, and the W1 reconstruction gap at the start state.
  const int x0 = mdp.start_state();
  int a0 = 0;
  for (int cand = 1; cand < mdp.num_actions(); ++cand) {
    if (policy.prob(x0, cand) > policy.prob(x0, a0)) a0 = cand;
  }
  double avg0 = 0.0, sup = 0.0;
  for (std::size_t pi = 0; pi < env.record.size(); ++pi) {
    const PairRef& p = env.record[pi];
    if (cell.method != Method::kGreedyDp && (p.x != x0 || p.a != a0) &&
        truth[static_cast<std::size_t>(p.x)][static_cast<std::size_t>(p.a)].atoms().empty()) {
      continue;  // unreachable guard; recorded pairs always carry truth
    }
    double avg = 0.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      avg += std::abs(snapshots.back().values[pi][i] - true_stats[pi][i]);
    }
    avg /= static_cast<double>(set.size());
    sup = std::max(sup, avg);
    if (p.x == x0 && p.a == a0) avg0 = avg;
  }
  const DiscreteDist imputed = impute_state_action(table, x0, a0, lenient_imputation);
  const double w1 = wasserstein1(
      imputed, truth[static_cast<std::size_t>(x0)][static_cast<std::size_t>(a0)]);

  out.summary_line = cell.run_id + ',' + cell.algorithm + ',' + std::to_string(cell.k) +
                     ',' + cell.env_key + ',' + std::to_string(cell.seed) + ',' +
                     fmt(avg0) + ',' + fmt(sup) + ',' + fmt(w1);

  if (cell.method == Method::kGreedyDp) {
    out.control_line = cell.run_id + ',' + cell.algorithm;
    for (int a = 0; a < mdp.num_actions(); ++a) {
      out.control_line += ',' + fmt(mean_estimate(table, x0, a));
    }
    out.control_line += ',' + std::to_string(greedy_action(table, x0));
  }
  return out;
}

std::vector<Cell> enumerate_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  const Method method = cfg.method == "dp" ? Method::kDp : Method::kSgd;
  if (cfg.kind == "fig8") {
    struct Fixed {
      const char* algorithm;
      const char* stat_kind;
      int k;
    };
    // The control comparison fixes each algorithm's canonical set: nine
    // expectiles, supports (0, 1, 2), five quantiles.
    const Fixed fixed[] = {{"expectile", "expectile", 9},
                           {"cdrl", "categorical", 3},
                           {"qdrl", "quantile", 5}};
    for (const Fixed& f : fixed) {
      for (std::uint64_t seed : cfg.seeds) {
        Cell cell;
        cell.env_key = "control";
        cell.algorithm = f.algorithm;
        cell.strategy = parse_strategy(f.algorithm);
        cell.stat_kind = f.stat_kind;
        cell.k = f.k;
        cell.seed = seed;
        cell.method = Method::kGreedyDp;
        cell.run_id = cfg.kind + "-control-" + f.algorithm + "-K" + std::to_string(f.k) +
                      "-seed" + std::to_string(seed);
        cells.push_back(std::move(cell));
      }
    }
    return cells;
  }
  for (int length : cfg.env.lengths) {
    for (int k : cfg.statistics.ks) {
      for (const std::string& alg : cfg.algorithms) {
        for (std::uint64_t seed : cfg.seeds) {
          Cell cell;
          cell.env_key = env_key_for(cfg.env, length);
          cell.length = length;
          cell.algorithm = alg;
          cell.strategy = parse_strategy(alg);
          cell.stat_kind = cfg.statistics.kind;
          cell.k = k;
          cell.seed = seed;
          cell.method = method;
          cell.run_id = cfg.kind + "-" + cell.env_key + "-" + alg + "-K" +
                        std::to_string(k) + "-seed" + std::to_string(seed);
          cells.push_back(std::move(cell));
        }
      }
    }
  }
  return cells;
}

void write_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << body;
}

void clear_previous_outputs(const fs::path& out) {
  for (const char* name : {"manifest.json", "summary.csv", "checks.csv",
                           "control_summary.csv"}) {
    fs::remove(out / name);
  }
  fs::remove_all(out / "runs");
  fs::remove_all(out / "plot");
}

std::string check_csv(const std::vector<CheckRow>& rows) {
  std::string csv = "check,params,observed,limit,pass\n";
  for (const CheckRow& row : rows) {
    csv += row.check + ',' + row.params + ',' + fmt(row.observed) + ',' + fmt(row.limit) +
           ',' + (row.pass ? "1" : "0") + '\n';
  }
  return csv;
}

std::string manifest_json(const ExperimentConfig& cfg,
                          const std::vector<CellResult>& cells,
                          const std::vector<std::string>& artifacts) {
  ordered_json doc;
  doc["schema_version"] = 1;
  doc["library_version"] = kVersion;
  doc["config"] = ordered_json::parse(config_to_json(cfg));
  doc["seeds"] = cfg.seeds;
  ordered_json cell_rows = ordered_json::array();
  int failures = 0;
  for (const CellResult& c : cells) {
    ordered_json row;
    row["run_id"] = c.run_id;
    row["ok"] = c.ok;
    row["error"] = c.error;
    row["wall_time_s"] = c.wall_time_s;
    cell_rows.push_back(row);
    if (!c.ok) ++failures;
  }
  doc["cells"] = cell_rows;
  doc["failures"] = failures;
  doc["artifacts"] = artifacts;
  return doc.dump(2) + "\n";
}

}  // namespace

std::vector<CheckRow> run_bounds_check(std::span<const std::uint64_t> seeds, int workers) {
  (void)workers;  // the bound checks parallelise internally
  std::vector<CheckRow> rows;
  const BoundReport thm2 = check_theorem2_bound(seeds, 11);
  const BoundReport thm3 = check_theorem3_bound(seeds, 20);
  for (const BoundCheck& c : thm2.checks) {
    rows.push_back({"theorem2", "seed=" + std::to_string(c.seed) + " K=11 gamma=0.9",
                    c.error, c.bound + c.truth_noise, c.pass});
  }
  for (const BoundCheck& c : thm3.checks) {
    rows.push_back({"theorem3", "seed=" + std::to_string(c.seed) + " K=20 gamma=0.9",
                    c.error, c.bound + c.truth_noise, c.pass});
  }
  return rows;
}

std::vector<CheckRow> run_closedness_check(int workers) {
  std::vector<CheckRow> rows;

  // Lemma 1: CDRL's projected-distribution DP and statistic DP coincide.
  {
    constexpr int kSeeds = 50;
    std::vector<double> gaps(kSeeds, 0.0);
    parallel_for(kSeeds, workers, [&](int i) {
      const std::uint64_t seed = static_cast<std::uint64_t>(i) + 1;
      const TabularMdp mdp = random_mdp(seed, {});
      const Policy pi = random_policy(seed, mdp);
      const double span = 1.0 / (1.0 - mdp.gamma());
      gaps[static_cast<std::size_t>(i)] = cdrl_equivalence_gap(mdp, pi, -span, span, 11);
    });
    for (int i = 0; i < kSeeds; ++i) {
      rows.push_back({"lemma1-cdrl-equivalence", "seed=" + std::to_string(i + 1) + " K=11",
                      gaps[static_cast<std::size_t>(i)], 1e-12,
                      gaps[static_cast<std::size_t>(i)] <= 1e-12});
    }
  }

  // Lemma 2: moment DP equals the exact return moments on terminating MDPs.
  {
    constexpr int kSeeds = 50;
    std::vector<double> gaps(kSeeds, 0.0);
    parallel_for(kSeeds, workers, [&](int i) {
      const std::uint64_t seed = static_cast<std::uint64_t>(i) + 1;
      RandomMdpOptions opt;
      opt.acyclic = true;
      const TabularMdp mdp = random_mdp(seed, opt);
      const Policy pi = random_policy(seed, mdp);
      const int order = 1 + static_cast<int>(seed % 4);
      const MomentTable learned = moment_fixed_point(mdp, pi, order);
      const DistTable truth = exact_return_dist(mdp, pi);
      double gap = 0.0;
      for (int x = 0; x < mdp.num_states(); ++x) {
        for (int a = 0; a < mdp.num_actions(); ++a) {
          for (int j = 1; j <= order; ++j) {
            gap = std::max(gap, std::abs(learned[static_cast<std::size_t>(x)]
                                                [static_cast<std::size_t>(a)]
                                                [static_cast<std::size_t>(j - 1)] -
                                         truth[static_cast<std::size_t>(x)]
                                              [static_cast<std::size_t>(a)]
                                                  .moment(j)));
          }
        }
      }
      gaps[static_cast<std::size_t>(i)] = gap;
    });
    for (int i = 0; i < kSeeds; ++i) {
      rows.push_back({"lemma2-moment-closure",
                      "seed=" + std::to_string(i + 1) + " K<=4 acyclic",
                      gaps[static_cast<std::size_t>(i)], 1e-8,
                      gaps[static_cast<std::size_t>(i)] <= 1e-8});
    }
  }

  // Lemma 3: midpoint quantiles are not Bellman closed.
  {
    const QuantileNonclosednessReport rep = demo_quantile_nonclosedness(2, 0.9);
    const double gap_uniform = std::abs(rep.x0_quantile_uniform - rep.expected_uniform);
    const double gap_comb = std::abs(rep.x0_quantile_comb - rep.expected_comb);
    rows.push_back({"lemma3-quantile-nonclosedness", "variant=uniform K=2 gamma=0.9",
                    gap_uniform, rep.uniform_tol, rep.pass && gap_uniform <= rep.uniform_tol});
    rows.push_back({"lemma3-quantile-nonclosedness", "variant=comb K=2 gamma=0.9", gap_comb,
                    rep.exact_tol, rep.pass && gap_comb <= rep.exact_tol});
  }

  // Lemma 4: mean consistency for CDRL/EDRL, counterexample for QDRL.
  {
    constexpr int kSeeds = 10;
    std::vector<double> cdrl_gaps(kSeeds, 0.0), edrl_gaps(kSeeds, 0.0);
    parallel_for(kSeeds, workers, [&](int i) {
      const std::uint64_t seed = static_cast<std::uint64_t>(i) + 1;
      const TabularMdp mdp = random_mdp(seed, {});
      const Policy pi = random_policy(seed, mdp);
      const double span = 1.0 / (1.0 - mdp.gamma());
      cdrl_gaps[static_cast<std::size_t>(i)] =
          check_mean_consistency(Strategy::kCdrl,
                                 StatisticSet::categorical(-2.0 * span, 2.0 * span, 21), mdp,
                                 pi)
              .sup_gap;
      edrl_gaps[static_cast<std::size_t>(i)] =
          check_mean_consistency(Strategy::kExpectile,
                                 StatisticSet::expectiles(std::vector<double>{0.1, 0.5, 0.9}),
                                 mdp, pi, 1e-7)
              .sup_gap;
    });
    for (int i = 0; i < kSeeds; ++i) {
      rows.push_back({"lemma4-cdrl-mean", "seed=" + std::to_string(i + 1) + " K=21",
                      cdrl_gaps[static_cast<std::size_t>(i)], 1e-8,
                      cdrl_gaps[static_cast<std::size_t>(i)] <= 1e-8});
      rows.push_back({"lemma4-edrl-mean",
                      "seed=" + std::to_string(i + 1) + " taus={0.1,0.5,0.9}",
                      edrl_gaps[static_cast<std::size_t>(i)], 1e-7,
                      edrl_gaps[static_cast<std::size_t>(i)] <= 1e-7});
    }
    const TabularMdp counter = build_qdrl_mean_counterexample(5);
    const Policy pi = Policy::uniform(counter.num_states(), counter.num_actions());
    const MeanConsistencyReport rep =
        check_mean_consistency(Strategy::kQdrl, StatisticSet::quantiles(5), counter, pi);
    const int x0 = counter.start_state();
    const double dev = std::max(
        {std::abs(rep.implied[x0][0] - 0.0), std::abs(rep.implied[x0][1] - 0.025),
         std::abs(rep.classical[x0][0] - 0.05), std::abs(rep.classical[x0][1] - 0.025)});
    rows.push_back({"lemma4-qdrl-counterexample", "K=5 expected means (0, 0.025)", dev,
                    1e-9, dev <= 1e-9 && rep.greedy_at_start == 1});
  }

  // Nonuniform error growth: the bin-boundary and median constructions.
  for (int l : {4, 6}) {
    NonuniformParams params;
    params.m = 1;
    params.l = l;
    const NonuniformErrorReport rep =
        demo_nonuniform_error(NonuniformCase::kCdrlBin, params);
    rows.push_back({"appendixC1-cdrl-bin", "m=1 L=" + std::to_string(l),
                    std::abs(rep.gap - rep.expected_gap), 1e-9, rep.pass});
  }
  {
    const NonuniformErrorReport rep = demo_nonuniform_error(NonuniformCase::kQdrlMedian, {});
    rows.push_back({"appendixC2-qdrl-median", "K=3 eps=0.01 gamma=0.9",
                    std::abs(rep.gap - 0.9), 1e-9, rep.pass});
  }
  return rows;
}

RunReport run_experiment(const ExperimentConfig& config, const RunFlags& flags) {
  ExperimentConfig cfg = config;
  if (!flags.out_dir.empty()) cfg.out_dir = flags.out_dir;
  if (!flags.seeds.empty()) cfg.seeds = flags.seeds;
  {
    const std::vector<std::string> violations = validate_config(cfg);
    if (!violations.empty()) {
      std::string msg = "invalid config:";
      for (const std::string& v : violations) msg += "\n  - " + v;
      throw ConfigError(msg);
    }
  }

  RunReport report;
  report.out_dir = fs::path(cfg.out_dir);
  if (fs::exists(report.out_dir)) {
    if (!fs::is_directory(report.out_dir)) {
      throw ConfigError("out_dir '" + cfg.out_dir + "' is not a directory");
    }
    if (!fs::is_empty(report.out_dir)) {
      if (!flags.overwrite) {
        throw ConfigError("out_dir '" + cfg.out_dir +
                          "' is not empty; pass --overwrite to replace previous outputs");
      }
      clear_previous_outputs(report.out_dir);
    }
  }
  fs::create_directories(report.out_dir);

  if (cfg.kind == "bounds" || cfg.kind == "closedness") {
    const std::vector<CheckRow> rows = cfg.kind == "bounds"
                                           ? run_bounds_check(cfg.seeds, flags.workers)
                                           : run_closedness_check(flags.workers);
    write_file(report.out_dir / "checks.csv", check_csv(rows));
    report.artifacts = {"checks.csv", "manifest.json"};
    for (const CheckRow& row : rows) {
      report.cells.push_back({row.check + " " + row.params, row.pass,
                              row.pass ? "" : "check failed", 0.0});
      if (!row.pass) report.exit_code = 1;
    }
    write_file(report.out_dir / "manifest.json",
               manifest_json(cfg, report.cells, report.artifacts));
    return report;
  }

  const std::vector<Cell> cells = enumerate_cells(cfg);
  fs::create_directories(report.out_dir / "runs");

  // Environments and their truths are shared by every cell that uses them;
  // build them up front so workers only read.
  std::map<std::string, EnvBundle> envs;
  for (const Cell& cell : cells) {
    if (envs.count(cell.env_key)) continue;
    envs.emplace(cell.env_key, build_env(cfg, cell.length, cell.method, flags.workers));
  }

  const int n = static_cast<int>(cells.size());
  std::vector<CellResult> results(static_cast<std::size_t>(n));
  std::vector<CellOutput> outputs(static_cast<std::size_t>(n));
  parallel_for(n, flags.workers, [&](int i) {
    const Cell& cell = cells[static_cast<std::size_t>(i)];
    CellResult& res = results[static_cast<std::size_t>(i)];
    res.run_id = cell.run_id;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      outputs[static_cast<std::size_t>(i)] = run_cell(cfg, cell, envs.at(cell.env_key));
      write_file(report.out_dir / "runs" / (cell.run_id + ".csv"),
                 outputs[static_cast<std::size_t>(i)].csv);
    } catch (const std::exception& e) {
      res.ok = false;
      res.error = e.what();
    }
    res.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  });

  // Single-threaded reduce: summary rows sorted by run id, then the manifest.
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return cells[static_cast<std::size_t>(a)].run_id < cells[static_cast<std::size_t>(b)].run_id;
  });

  std::string summary =
      "run_id,algorithm,K,env,seed,avg_stat_error,sup_stat_error,w1_error,wall_time_s\n";
  std::string control =
      "run_id,algorithm,mean_action0,mean_action1,greedy_action\n";
  bool any_control = false;
  std::vector<CellResult> ordered_results;
  ordered_results.reserve(static_cast<std::size_t>(n));
  for (int idx : order) {
    const CellResult& res = results[static_cast<std::size_t>(idx)];
    const CellOutput& out = outputs[static_cast<std::size_t>(idx)];
    ordered_results.push_back(res);
    if (!res.ok) {
      report.exit_code = 1;
      continue;
    }
    summary += out.summary_line + ',' + fmt_fixed(res.wall_time_s, 3) + '\n';
    report.artifacts.push_back("runs/" + res.run_id + ".csv");
    if (!out.control_line.empty()) {
      control += out.control_line + '\n';
      any_control = true;
    }
  }
  report.cells = std::move(ordered_results);

  write_file(report.out_dir / "summary.csv", summary);
  report.artifacts.push_back("summary.csv");
  if (any_control) {
    write_file(report.out_dir / "control_summary.csv", control);
    report.artifacts.push_back("control_summary.csv");
  }
  report.artifacts.push_back("manifest.json");
  std::sort(report.artifacts.begin(), report.artifacts.end());
  write_file(report.out_dir / "manifest.json",
             manifest_json(cfg, report.cells, report.artifacts));
  return report;
}

}  // namespace distrl
