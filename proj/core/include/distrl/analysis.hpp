#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "distrl/engine.hpp"
#include "distrl/mdp.hpp"

namespace distrl {

// Per-pair error table with its supremum. `per_pair[x][a]` holds the mean
// absolute statistic error at (x, a) for statistic_error, or the W1
// reconstruction distance for w1_reconstruction_error. The metadata fields
// are carried along for reporting and never interpreted here.
struct ErrorReport {
  std::vector<std::vector<double>> per_pair;
  double sup = 0.0;
  int num_statistics = 0;
  std::string algorithm;
  std::string env;
  std::uint64_t seed = 0;
};

// (1/K) sum_k |s_k(truth(x, a)) - learned(x, a)[k]| per pair, evaluating the
// table's statistic set on the truth distributions. Throws
// InvalidArgumentError on shape mismatch.
ErrorReport statistic_error(const StatTable& learned, const DistTable& truth);

// W1 between each pair's imputed distribution and the truth. Imputation
// runs in strict input mode, so malformed statistic vectors propagate as
// InfeasibleStatisticsError.
ErrorReport w1_reconstruction_error(const StatTable& learned, const DistTable& truth);

// Return-distribution moments indexed [x][a][j] holding E[Z^(j+1)], i.e.
// slot j is the moment of order j + 1.
using MomentTable = std::vector<std::vector<std::vector<double>>>;

// One application of the closed-form moment backup: conditional on a
// transition, E[(r + gamma Z')^k] expands binomially into the next pair's
// lower-order moments, so the backup never leaves moment space. Terminal
// states keep every moment at zero (their return is identically 0), and a
// transition into one contributes the raw reward moments.
MomentTable moment_bellman_operator(const MomentTable& moments, const TabularMdp& mdp,
                                    const Policy& pi);

// Iterates the moment backup from all-zeros until the largest entry change
// drops to `tol`. Order k entries contract at rate gamma^k >= gamma per
// sweep, so the iteration is geometric; exhausting max_sweeps throws
// ConvergenceError.
MomentTable moment_fixed_point(const TabularMdp& mdp, const Policy& pi, int num_moments,
                               double tol = 1e-12, int max_sweeps = 100000);

// Classical policy evaluation: Q(x, a) = rbar(x, a) + gamma sum_x' p V(x')
// with V the state values, solved exactly by Gaussian elimination over the
// non-terminal states (partial pivoting; the system matrix I - gamma M is
// nonsingular for gamma < 1 and for the acyclic gamma = 1 case alike).
std::vector<std::vector<double>> classical_q(const TabularMdp& mdp, const Policy& pi);

// Family of small random MDPs for the bound checks. Transition rows and
// reward weights are drawn uniformly from the probability simplex, reward
// atoms uniformly from [-r_max, r_max]; the state count is uniform on
// [2, max_states]. With `acyclic` set, transitions only lead to
// higher-indexed states and the last state is terminal, which keeps
// exact_return_dist's supports finite; otherwise every row may reach every
// state and there are no terminals.
struct RandomMdpOptions {
  int max_states = 5;
  int num_actions = 2;
  double r_max = 1.0;
  double gamma = 0.9;
  int max_reward_atoms = 4;
  bool acyclic = false;
};

TabularMdp random_mdp(std::uint64_t seed, const RandomMdpOptions& options = {});

// Uniformly random stochastic policy for the given MDP, drawn from a stream
// independent of random_mdp's for the same seed.
Policy random_policy(std::uint64_t seed, const TabularMdp& mdp);

// gamma / (2 (1 - gamma) (K - 1)) for K evenly spaced supports.
double theorem2_bound(double gamma, int k_supports);
// 2 R_max (5 - 2 gamma) / ((1 - gamma)^2 K) for K quantiles.
double theorem3_bound(double gamma, double r_max, int k_quantiles);

struct BoundCheck {
  std::uint64_t seed = 0;
  double error = 0.0;       // sup over pairs of the mean absolute stat error
  double truth_noise = 0.0; // certified bound on the grid-truth contribution
  double bound = 0.0;
  bool pass = false;        // error <= bound + truth_noise
};

struct BoundReport {
  std::vector<BoundCheck> checks;
  bool all_pass = true;
  double worst_margin = 0.0;  // min over checks of bound + truth_noise - error
  std::string failing_mdp;    // JSON dump of the first violator, else empty
};

// Runs CDRL statistic-DP with supports spanning +-r_max / (1 - gamma) on
// each seeded MDP (with its seeded random policy) and compares against
// grid-DP ground truth. The categorical statistics are (1 / window)-
// Lipschitz in W1, so the grid's certified W1 error converts into the
// per-check truth_noise; pass requires error <= bound + truth_noise.
BoundReport check_theorem2_bound(std::span<const std::uint64_t> seeds, int k_supports,
                                 const RandomMdpOptions& options = {});

// Same protocol for QDRL with K midpoint quantiles. Quantiles admit no
// W1-Lipschitz certificate (flat CDF stretches), so truth_noise stays 0 and
// the comparison leans on the bound's slack, which is three orders of
// magnitude above the observed errors on this family.
BoundReport check_theorem3_bound(std::span<const std::uint64_t> seeds, int k_quantiles,
                                 const RandomMdpOptions& options = {});

// Quantile non-closedness demonstration: two reward pairings whose K
// midpoint quantiles agree at both next states while the return quantile at
// the start state differs, so no update rule driven by next-state midpoint
// quantiles alone can learn the start state's quantile in both MDPs.
struct QuantileNonclosednessReport {
  int k = 0;
  double gamma = 0.0;
  double x0_quantile_uniform = 0.0;  // upper 1/(2K)-quantile, uniform pairing
  double x0_quantile_comb = 0.0;     // same statistic, comb pairing
  double expected_uniform = 0.0;     // gamma / K
  double expected_comb = 0.0;        // 3 gamma / (2 K)
  double next_state_quantile_gap = 0.0;  // max cross-pairing midpoint gap
  double comb_quantile_gap = 0.0;        // comb pairing vs exact midpoints
  double uniform_tol = 1e-3;  // discretized-uniform comparisons
  double exact_tol = 1e-9;    // finite-support comparisons
  bool pass = false;
};

QuantileNonclosednessReport demo_quantile_nonclosedness(int k, double gamma,
                                                        int reward_atoms = 1000);

// Non-uniform approximation error demonstrations: for non-closed statistic
// sets, some single statistic keeps an O(1) error no matter how fine the
// approximation gets.
enum class NonuniformCase {
  kCdrlBin,     // two-state chain; one bin statistic stays off by a constant
  kQdrlMedian,  // three-state branch; the learnt median lands at -gamma
};

struct NonuniformParams {
  int m = 1;             // kCdrlBin: gamma = 2^m / (2^m + 1)
  int l = 4;             // kCdrlBin: bin width 2^-l; requires l > m + 1
  int k = 3;             // kQdrlMedian: odd quantile count
  double epsilon = 0.01; // kQdrlMedian: branch bias, in (0, 1/(2k))
  double gamma = 0.9;    // kQdrlMedian only; kCdrlBin derives gamma from m
};

struct NonuniformErrorReport {
  NonuniformCase which = NonuniformCase::kCdrlBin;
  double learned = 0.0;       // statistic at the fixed point (equal across
                              // the paired MDPs for kCdrlBin)
  double true_a = 0.0;        // first MDP's true statistic value
  double true_b = 0.0;        // second MDP's (kCdrlBin; else = true_a)
  double gap = 0.0;           // kCdrlBin: |true_b - true_a|; kQdrlMedian:
                              // |learned - true_a|
  double expected_gap = 0.0;  // 1 / (2 (2^m + 1)) resp. gamma
  bool fitted_match = true;   // kCdrlBin: fitted next-state dists coincide
  bool pass = false;
};

NonuniformErrorReport demo_nonuniform_error(NonuniformCase which,
                                            const NonuniformParams& params = {});

// Mean consistency of a DP fixed point: compares mean_estimate against
// classical_q. CDRL (rewards inside the support span) and expectile sets
// containing tau = 0.5 carry the mean exactly, so those strategies assert
// sup_gap <= tol; quantile-family strategies only report the gap.
struct MeanConsistencyReport {
  std::vector<std::vector<double>> implied;    // mean_estimate per pair
  std::vector<std::vector<double>> classical;  // Q^pi per pair
  double sup_gap = 0.0;
  bool asserted = false;  // whether pass demanded sup_gap <= tol
  bool pass = true;
  double tol = 0.0;
  int greedy_at_start = -1;  // greedy action at mdp.start_state()
};

MeanConsistencyReport check_mean_consistency(Strategy strategy, const StatisticSet& set,
                                             const TabularMdp& mdp, const Policy& pi,
                                             double tol = 1e-8);

// CDRL admits two equivalent formulations: a distribution-space DP that
// projects every Bellman backup onto the fixed support grid, and the generic
// statistic DP on the categorical window expectations. The projection
// preserves window expectations exactly, so the two iterates coincide sweep
// by sweep. Runs both for `sweeps` Jacobi sweeps from matching initial
// conditions and returns the largest statistic gap seen at any sweep; only
// floating-point noise should remain.
double cdrl_equivalence_gap(const TabularMdp& mdp, const Policy& pi, double z_lo,
                            double z_hi, int k_supports, int sweeps = 64);

}  // namespace distrl
