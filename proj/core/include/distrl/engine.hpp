#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "distrl/discrete_dist.hpp"
#include "distrl/imputation.hpp"
#include "distrl/mdp.hpp"
#include "distrl/statistics.hpp"

namespace distrl {

// How a statistic table turns its values back into a distribution (and which
// loss its stochastic updates descend). The naive variants skip imputation
// and reuse the stored statistic values directly as sample atoms, conflating
// statistics with outcomes; they exist as the comparison baseline.
enum class Strategy {
  kQdrl,            // quantiles; values reused as equally weighted atoms
  kCdrl,            // categorical expectations; values inverted to bin masses
  kExpectile,       // expectiles via the root-finding imputation solver
  kHuber,           // Huber quantiles via the root-finding imputation solver
  kNaiveExpectile,  // expectile losses on values-as-samples targets
  kNaiveHuber,      // Huber losses on values-as-samples targets
};

const char* strategy_name(Strategy strategy);
Strategy parse_strategy(const std::string& name);

// Per-(state, action) statistic estimates for one algorithm: the strategy
// tag, the statistic set it tracks, and the solver configuration used
// whenever values are imputed back into a distribution. Fresh tables hold
// the statistics of delta_0 everywhere (zero-return prior).
class StatTable {
 public:
  StatTable(int num_states, int num_actions, StatisticSet set, Strategy strategy,
            SolverOptions solver = {});

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  const StatisticSet& set() const { return set_; }
  Strategy strategy() const { return strategy_; }
  const SolverOptions& solver() const { return solver_; }

  std::vector<double>& values(int x, int a) { return values_[idx(x, a)]; }
  const std::vector<double>& values(int x, int a) const { return values_[idx(x, a)]; }

 private:
  std::size_t idx(int x, int a) const {
    return static_cast<std::size_t>(x) * num_actions_ + a;
  }

  int num_states_;
  int num_actions_;
  StatisticSet set_;
  Strategy strategy_;
  SolverOptions solver_;
  std::vector<std::vector<double>> values_;
};

// One application of the distributional Bellman operator at (x, a): the
// mixture over (r, x', a') of the pushforward r + gamma * eta(x', a'), with
// weights R(r | x, a, x') p(x' | x, a) pi(a' | x'). Terminal next states
// contribute delta_r, and the return from a terminal x itself is delta_0.
DiscreteDist dist_bellman(const DistTable& eta, const TabularMdp& mdp, const Policy& pi,
                          int x, int a);

// The distribution the table's strategy imputes from the values at (x, a).
// Solver-backed strategies run best-effort (the best iterate is returned and
// `diag` reports convergence); malformed inputs still throw unless `lenient`
// is set, which clamps them instead (stochastic-training mode).
DiscreteDist impute_state_action(const StatTable& table, int x, int a,
                                 bool lenient = false, SolveDiagnostics* diag = nullptr);
DistTable impute_table(const StatTable& table, bool lenient = false);

struct DpDiagnostics {
  int sweeps = 0;
  double residual = 0.0;                  // last sweep's max statistic change
  std::vector<double> residual_history;   // one entry per sweep
  double worst_impute_residual = 0.0;     // solver-backed strategies only
  bool all_imputations_converged = true;
};

// One Jacobi sweep of the generic statistic-DP update: impute the current
// table, back up through dist_bellman, evaluate the statistic set on the
// target. Every new value reads the pre-sweep table, so enumeration order
// cannot matter.
StatTable dp_update(const StatTable& table, const TabularMdp& mdp, const Policy& pi,
                    DpDiagnostics* diag = nullptr);

// Iterates dp_update until the max statistic change drops to `tol` or the
// sweep budget runs out; the latter throws ConvergenceError (history is in
// `diag` when supplied).
StatTable dp_fixed_point(StatTable table, const TabularMdp& mdp, const Policy& pi,
                         double tol, int max_sweeps, DpDiagnostics* diag = nullptr);

// Target construction for one stochastic update: imputing restores a
// distribution from the next pair's statistics first; naive reuses the raw
// values as sample atoms.
enum class UpdateMode { kImputing, kNaive };
UpdateMode default_update_mode(Strategy strategy);

struct SgdStepInfo {
  bool imputation_converged = true;
  bool inputs_clamped = false;  // lenient imputation or CDRL value clamping
};

// One stochastic gradient step at (t.state, t.action) from the sampled
// transition: build the target r + gamma * Z' (delta_r when t ends the
// episode), then descend each statistic's loss at its stored value. CDRL
// steps along the Cramer-distance gradient in value space and clamps the
// result back to a valid monotone [0, 1] vector.
SgdStepInfo sgd_update_inplace(StatTable& table, const Transition& t, double alpha,
                               double gamma, UpdateMode mode);
StatTable sgd_update(StatTable table, const Transition& t, double alpha, double gamma,
                     UpdateMode mode);

// Mean return implied by the values at (x, a): the tau = 0.5 entry for
// expectile strategies (UnsupportedControlError when absent), the imputed
// distribution's mean for CDRL and Huber, the sample average for QDRL and
// the naive variants.
double mean_estimate(const StatTable& table, int x, int a);

// Argmax of mean_estimate over actions; ties resolve to the lowest index.
int greedy_action(const StatTable& table, int x);

struct TrainOptions {
  double alpha = 0.05;
  int steps = 30000;
  std::uint64_t seed = 0;
  int horizon_cap = 10000;  // per-episode transition limit
  bool control = false;     // false: evaluate the supplied policy on-policy
  double epsilon = 0.05;    // exploration rate for control mode
  int metric_every = 0;     // invoke the sink every this many steps (0: never)
};

struct TrainResult {
  StatTable table;
  int steps = 0;
  int episodes = 0;
  int clamp_events = 0;     // stochastic updates that had to clamp inputs
  int impute_failures = 0;  // best-effort solves that missed the tolerance
};

using MetricSink = std::function<void(int step, const StatTable& table)>;

// Runs `steps` transitions of stochastic training from the MDP's start
// state, applying sgd_update_inplace per transition. Evaluation mode follows
// `policy` on-policy; control mode ignores it and behaves epsilon-greedily
// against the current table. Deterministic given options.seed.
TrainResult train(StatTable table, const TabularMdp& mdp, const Policy* policy,
                  const TrainOptions& options, const MetricSink& sink = nullptr);

}  // namespace distrl
