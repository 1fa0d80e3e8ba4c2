#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "distrl/analysis.hpp"
#include "distrl/environments.hpp"
#include "distrl/errors.hpp"
#include "distrl/imputation.hpp"
#include "distrl/projections.hpp"
#include "distrl/random.hpp"

namespace distrl {

namespace {

void check_shapes(const StatTable& learned, const DistTable& truth, const char* who) {
  if (static_cast<int>(truth.size()) != learned.num_states()) {
    throw InvalidArgumentError(std::string(who) + ": state counts differ");
  }
  for (const auto& row : truth) {
    if (static_cast<int>(row.size()) != learned.num_actions()) {
      throw InvalidArgumentError(std::string(who) + ": action counts differ");
    }
  }
}

ErrorReport make_report(const StatTable& learned) {
  ErrorReport report;
  report.per_pair.assign(learned.num_states(),
                         std::vector<double>(learned.num_actions(), 0.0));
  report.num_statistics = static_cast<int>(learned.set().size());
  report.algorithm = strategy_name(learned.strategy());
  return report;
}

// Runs fn(0..n-1) across a work-stealing pool sized to the hardware; the
// first exception thrown by any worker is rethrown on the caller.
template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  const int hw = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const int workers = std::min(hw, n);
  if (workers <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> cursor{0};
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int i = cursor.fetch_add(1); i < n; i = cursor.fetch_add(1)) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Weights of a uniform draw from the probability simplex over the index set
// `support` (Dirichlet(1, ..., 1) via normalised exponentials); indices
// outside the support get zero.
std::vector<double> simplex_row(Rng& rng, int n, const std::vector<int>& support) {
  std::vector<double> row(n, 0.0);
  double sum = 0.0;
  for (int i : support) {
    const double e = -std::log1p(-uniform01(rng));
    row[i] = e;
    sum += e;
  }
  if (sum <= 0.0) {
    for (int i : support) row[i] = 1.0 / static_cast<double>(support.size());
  } else {
    for (int i : support) row[i] /= sum;
  }
  return row;
}

DiscreteDist random_reward(Rng& rng, double r_max, int max_atoms) {
  const int n = 1 + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(max_atoms)));
  std::vector<double> atoms(n), weights(n);
  for (double& v : atoms) v = uniform(rng, -r_max, r_max);
  double sum = 0.0;
  for (double& w : weights) {
    w = -std::log1p(-uniform01(rng));
    sum += w;
  }
  if (sum <= 0.0) {
    std::fill(weights.begin(), weights.end(), 1.0 / n);
  } else {
    for (double& w : weights) w /= sum;
  }
  return DiscreteDist(std::move(atoms), std::move(weights));
}

std::string mdp_to_json(const TabularMdp& mdp, const Policy& pi, std::uint64_t seed) {
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["num_states"] = mdp.num_states();
  j["num_actions"] = mdp.num_actions();
  j["gamma"] = mdp.gamma();
  j["start_state"] = mdp.start_state();
  auto terminal = nlohmann::ordered_json::array();
  for (int x = 0; x < mdp.num_states(); ++x) terminal.push_back(mdp.is_terminal(x));
  j["terminal"] = terminal;
  auto transitions = nlohmann::ordered_json::array();
  auto rewards = nlohmann::ordered_json::array();
  for (int x = 0; x < mdp.num_states(); ++x) {
    auto trow = nlohmann::ordered_json::array();
    auto rrow = nlohmann::ordered_json::array();
    for (int a = 0; a < mdp.num_actions(); ++a) {
      const auto& probs = mdp.transition_row(x, a);
      trow.push_back(probs);
      auto rcell = nlohmann::ordered_json::array();
      for (int y = 0; y < mdp.num_states(); ++y) {
        if (probs[y] <= 0.0) {
          rcell.push_back(nullptr);
          continue;
        }
        const DiscreteDist& r = mdp.reward(x, a, y);
        nlohmann::ordered_json law;
        law["atoms"] = std::vector<double>(r.atoms().begin(), r.atoms().end());
        law["weights"] = std::vector<double>(r.weights().begin(), r.weights().end());
        rcell.push_back(law);
      }
      rrow.push_back(rcell);
    }
    transitions.push_back(trow);
    rewards.push_back(rrow);
  }
  j["transitions"] = transitions;
  j["rewards"] = rewards;
  auto policy = nlohmann::ordered_json::array();
  for (int x = 0; x < mdp.num_states(); ++x) policy.push_back(pi.probs(x));
  j["policy"] = policy;
  return j.dump(2);
}

// Ground truth for the bound checks. Exact supports stay finite when gamma
// is zero (one-step returns) or the family is acyclic; everything else goes
// through the fixed grid, whose W1 error certificate is returned alongside.
constexpr int kTruthGridAtoms = 8001;

DistTable bound_check_truth(const TabularMdp& mdp, const Policy& pi,
                            const RandomMdpOptions& options, double span,
                            double* w1_certificate) {
  if (options.gamma == 0.0 || options.acyclic) {
    ReturnDistOptions ropt;
    // Supports are finite here, but weight renormalisation keeps the sweeps
    // from becoming bitwise stationary, so stop at rounding scale instead
    // of zero. A residual r leaves the iterate within r / (1 - gamma) of
    // the fixed point.
    ropt.tol = 1e-14;
    ropt.max_sweeps = 200;
    *w1_certificate = ropt.tol / (1.0 - options.gamma);
    return exact_return_dist(mdp, pi, ropt);
  }
  GridReturnDistOptions gopt;
  gopt.grid = GridSpec{-span, span, kTruthGridAtoms};
  gopt.tol = 1e-9;
  *w1_certificate = gopt.grid.step() / (2.0 * (1.0 - options.gamma)) +
                    gopt.tol * options.gamma / (1.0 - options.gamma);
  return grid_return_dist(mdp, pi, gopt);
}

struct BoundProtocol {
  StatisticSet set;
  double bound;
  double stat_lipschitz;  // per-statistic error per unit of truth W1 error
};

BoundReport run_bound_check(std::span<const std::uint64_t> seeds,
                            const RandomMdpOptions& options, Strategy strategy,
                            const BoundProtocol& protocol) {
  if (!(options.gamma >= 0.0 && options.gamma < 1.0)) {
    throw InvalidArgumentError("bound check: gamma must lie in [0, 1)");
  }
  const int n = static_cast<int>(seeds.size());
  const double span = options.r_max / (1.0 - options.gamma);
  BoundReport report;
  report.checks.resize(n);
  std::vector<std::string> dumps(n);
  parallel_for(n, [&](int i) {
    const std::uint64_t seed = seeds[i];
    const TabularMdp mdp = random_mdp(seed, options);
    const Policy pi = random_policy(seed, mdp);
    double w1_cert = 0.0;
    const DistTable truth = bound_check_truth(mdp, pi, options, span, &w1_cert);
    StatTable table(mdp.num_states(), mdp.num_actions(), protocol.set, strategy);
    table = dp_fixed_point(std::move(table), mdp, pi, 1e-11, 100000);
    const ErrorReport err = statistic_error(table, truth);
    BoundCheck& check = report.checks[i];
    check.seed = seed;
    check.error = err.sup;
    check.truth_noise = w1_cert * protocol.stat_lipschitz;
    check.bound = protocol.bound;
    // The measured error carries truth-discretisation noise, so the bound is
    // only refuted when the error exceeds it by more than that allowance.
    check.pass = check.error <= check.bound + check.truth_noise;
    if (!check.pass) dumps[i] = mdp_to_json(mdp, pi, seed);
  });
  report.worst_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    const BoundCheck& check = report.checks[i];
    report.all_pass = report.all_pass && check.pass;
    report.worst_margin =
        std::min(report.worst_margin, check.bound + check.truth_noise - check.error);
    if (!check.pass && report.failing_mdp.empty()) report.failing_mdp = dumps[i];
  }
  if (n == 0) report.worst_margin = 0.0;
  return report;
}

double binomial(int n, int k) {
  double acc = 1.0;
  for (int i = 1; i <= k; ++i) acc = acc * (n - k + i) / i;
  return acc;
}

double int_pow(double base, int exp) {
  double acc = 1.0;
  for (int i = 0; i < exp; ++i) acc *= base;
  return acc;
}

}  // namespace

ErrorReport statistic_error(const StatTable& learned, const DistTable& truth) {
  check_shapes(learned, truth, "statistic_error");
  ErrorReport report = make_report(learned);
  const StatisticSet& set = learned.set();
  for (int x = 0; x < learned.num_states(); ++x) {
    for (int a = 0; a < learned.num_actions(); ++a) {
      const std::vector<double> exact = evaluate(set, truth[x][a]);
      const std::vector<double>& got = learned.values(x, a);
      double acc = 0.0;
      for (std::size_t k = 0; k < exact.size(); ++k) acc += std::abs(exact[k] - got[k]);
      report.per_pair[x][a] = acc / static_cast<double>(exact.size());
      report.sup = std::max(report.sup, report.per_pair[x][a]);
    }
  }
  return report;
}

ErrorReport w1_reconstruction_error(const StatTable& learned, const DistTable& truth) {
  check_shapes(learned, truth, "w1_reconstruction_error");
  ErrorReport report = make_report(learned);
  for (int x = 0; x < learned.num_states(); ++x) {
    for (int a = 0; a < learned.num_actions(); ++a) {
      const DiscreteDist imputed = impute_state_action(learned, x, a);
      report.per_pair[x][a] = wasserstein1(imputed, truth[x][a]);
      report.sup = std::max(report.sup, report.per_pair[x][a]);
    }
  }
  return report;
}

MomentTable moment_bellman_operator(const MomentTable& moments, const TabularMdp& mdp,
                                    const Policy& pi) {
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  if (static_cast<int>(moments.size()) != S || moments.empty() ||
      static_cast<int>(moments.front().size()) != A) {
    throw InvalidArgumentError("moment_bellman_operator: table shape does not match the MDP");
  }
  const int K = static_cast<int>(moments.front().front().size());
  const double gamma = mdp.gamma();

  // State moments under pi: nu[y][j] = E[Z^(j+1) | X = y], zero at terminals.
  std::vector<std::vector<double>> nu(S, std::vector<double>(K, 0.0));
  for (int y = 0; y < S; ++y) {
    if (mdp.is_terminal(y)) continue;
    for (int b = 0; b < A; ++b) {
      const double p = pi.prob(y, b);
      if (p <= 0.0) continue;
      for (int j = 0; j < K; ++j) nu[y][j] += p * moments[y][b][j];
    }
  }

  MomentTable out(S, std::vector<std::vector<double>>(A, std::vector<double>(K, 0.0)));
  for (int x = 0; x < S; ++x) {
    if (mdp.is_terminal(x)) continue;
    for (int a = 0; a < A; ++a) {
      const auto& row = mdp.transition_row(x, a);
      for (int y = 0; y < S; ++y) {
        if (row[y] <= 0.0) continue;
        const DiscreteDist& r = mdp.reward(x, a, y);
        for (std::size_t i = 0; i < r.size(); ++i) {
          const double rv = r.atoms()[i];
          const double w = row[y] * r.weights()[i];
          for (int k = 1; k <= K; ++k) {
            // E[(rv + gamma Z')^k] with Z' the return from y; the m = k term
            // is rv^k and survives alone at terminal y.
            double term = int_pow(rv, k);
            for (int m = 0; m < k; ++m) {
              term += binomial(k, m) * int_pow(rv, m) * int_pow(gamma, k - m) * nu[y][k - m - 1];
            }
            out[x][a][k - 1] += w * term;
          }
        }
      }
    }
  }
  return out;
}

MomentTable moment_fixed_point(const TabularMdp& mdp, const Policy& pi, int num_moments,
                               double tol, int max_sweeps) {
  if (num_moments < 1) {
    throw InvalidArgumentError("moment_fixed_point: need at least one moment");
  }
  mdp.validate();
  MomentTable table(mdp.num_states(),
                    std::vector<std::vector<double>>(
                        mdp.num_actions(), std::vector<double>(num_moments, 0.0)));
  double change = 0.0;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    MomentTable next = moment_bellman_operator(table, mdp, pi);
    change = 0.0;
    for (std::size_t x = 0; x < table.size(); ++x) {
      for (std::size_t a = 0; a < table[x].size(); ++a) {
        for (int k = 0; k < num_moments; ++k) {
          // Relative to the entry's scale: high orders of long returns sit
          // orders of magnitude above 1 and would never meet an absolute tol.
          const double d = std::abs(next[x][a][k] - table[x][a][k]) /
                           (1.0 + std::abs(next[x][a][k]));
          change = std::max(change, d);
        }
      }
    }
    table = std::move(next);
    if (change <= tol) return table;
  }
  throw ConvergenceError("moment_fixed_point: sweep change still " + std::to_string(change) +
                             " after " + std::to_string(max_sweeps) + " sweeps",
                         change);
}

std::vector<std::vector<double>> classical_q(const TabularMdp& mdp, const Policy& pi) {
  mdp.validate();
  if (pi.num_states() != mdp.num_states() || pi.num_actions() != mdp.num_actions()) {
    throw InvalidArgumentError("classical_q: policy shape does not match the MDP");
  }
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  const double gamma = mdp.gamma();

  std::vector<std::vector<double>> rbar(S, std::vector<double>(A, 0.0));
  for (int x = 0; x < S; ++x) {
    if (mdp.is_terminal(x)) continue;
    for (int a = 0; a < A; ++a) {
      const auto& row = mdp.transition_row(x, a);
      for (int y = 0; y < S; ++y) {
        if (row[y] > 0.0) rbar[x][a] += row[y] * mdp.reward(x, a, y).mean();
      }
    }
  }

  // V restricted to non-terminal states: (I - gamma M) V = b with M the
  // policy-averaged transition matrix. Solved by Gaussian elimination with
  // partial pivoting; strict diagonal dominance (gamma < 1) or acyclicity
  // (gamma = 1) keeps the matrix nonsingular.
  std::vector<int> live;
  std::vector<int> slot(S, -1);
  for (int x = 0; x < S; ++x) {
    if (!mdp.is_terminal(x)) {
      slot[x] = static_cast<int>(live.size());
      live.push_back(x);
    }
  }
  const int n = static_cast<int>(live.size());
  std::vector<std::vector<double>> m(n, std::vector<double>(n + 1, 0.0));
  for (int i = 0; i < n; ++i) {
    const int x = live[i];
    m[i][i] = 1.0;
    for (int a = 0; a < A; ++a) {
      const double pa = pi.prob(x, a);
      if (pa <= 0.0) continue;
      m[i][n] += pa * rbar[x][a];
      const auto& row = mdp.transition_row(x, a);
      for (int y = 0; y < S; ++y) {
        if (row[y] > 0.0 && slot[y] >= 0) m[i][slot[y]] -= gamma * pa * row[y];
      }
    }
  }
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    }
    std::swap(m[col], m[pivot]);
    if (m[col][col] == 0.0) {
      throw InvalidArgumentError("classical_q: singular evaluation system");
    }
    for (int r = col + 1; r < n; ++r) {
      const double f = m[r][col] / m[col][col];
      if (f == 0.0) continue;
      for (int c = col; c <= n; ++c) m[r][c] -= f * m[col][c];
    }
  }
  std::vector<double> v_live(n, 0.0);
  for (int r = n - 1; r >= 0; --r) {
    double acc = m[r][n];
    for (int c = r + 1; c < n; ++c) acc -= m[r][c] * v_live[c];
    v_live[r] = acc / m[r][r];
  }
  std::vector<double> v(S, 0.0);
  for (int i = 0; i < n; ++i) v[live[i]] = v_live[i];

  std::vector<std::vector<double>> q(S, std::vector<double>(A, 0.0));
  for (int x = 0; x < S; ++x) {
    if (mdp.is_terminal(x)) continue;
    for (int a = 0; a < A; ++a) {
      double acc = rbar[x][a];
      const auto& row = mdp.transition_row(x, a);
      for (int y = 0; y < S; ++y) {
        if (row[y] > 0.0) acc += gamma * row[y] * v[y];
      }
      q[x][a] = acc;
    }
  }
  return q;
}

TabularMdp random_mdp(std::uint64_t seed, const RandomMdpOptions& options) {
  if (options.max_states < 2 || options.num_actions < 1 || options.max_reward_atoms < 1 ||
      !(options.r_max > 0.0)) {
    throw InvalidArgumentError("random_mdp: invalid family options");
  }
  Rng rng = make_stream(seed, "random-mdp");
  const int S = 2 + static_cast<int>(uniform_index(
                        rng, static_cast<std::uint64_t>(options.max_states - 1)));
  TabularMdp mdp(S, options.num_actions, options.gamma);
  std::vector<int> everyone(S);
  for (int i = 0; i < S; ++i) everyone[i] = i;
  for (int x = 0; x < S; ++x) {
    if (options.acyclic && x == S - 1) break;
    for (int a = 0; a < options.num_actions; ++a) {
      std::vector<int> support;
      if (options.acyclic) {
        for (int y = x + 1; y < S; ++y) support.push_back(y);
      } else {
        support = everyone;
      }
      mdp.set_transition(x, a, simplex_row(rng, S, support));
      mdp.set_reward(x, a, random_reward(rng, options.r_max, options.max_reward_atoms));
    }
  }
  if (options.acyclic) mdp.set_terminal(S - 1);
  mdp.validate();
  return mdp;
}

Policy random_policy(std::uint64_t seed, const TabularMdp& mdp) {
  Rng rng = make_stream(seed, "random-policy");
  std::vector<int> actions(mdp.num_actions());
  for (int a = 0; a < mdp.num_actions(); ++a) actions[a] = a;
  std::vector<std::vector<double>> probs(mdp.num_states());
  for (auto& row : probs) row = simplex_row(rng, mdp.num_actions(), actions);
  return Policy(std::move(probs));
}

double theorem2_bound(double gamma, int k_supports) {
  if (k_supports < 2 || !(gamma >= 0.0 && gamma < 1.0)) {
    throw InvalidArgumentError("theorem2_bound: need K >= 2 supports and gamma in [0, 1)");
  }
  return gamma / (2.0 * (1.0 - gamma) * (k_supports - 1));
}

double theorem3_bound(double gamma, double r_max, int k_quantiles) {
  if (k_quantiles < 1 || !(gamma >= 0.0 && gamma < 1.0) || !(r_max > 0.0)) {
    throw InvalidArgumentError("theorem3_bound: need K >= 1 quantiles, gamma in [0, 1), R_max > 0");
  }
  return 2.0 * r_max * (5.0 - 2.0 * gamma) / ((1.0 - gamma) * (1.0 - gamma) * k_quantiles);
}

BoundReport check_theorem2_bound(std::span<const std::uint64_t> seeds, int k_supports,
                                 const RandomMdpOptions& options) {
  const double span = options.r_max / (1.0 - options.gamma);
  BoundProtocol protocol{StatisticSet::categorical(-span, span, k_supports),
                         theorem2_bound(options.gamma, k_supports),
                         // h_{z_k, z_k+1} is 1/window-Lipschitz, so a W1
                         // perturbation of the truth moves each statistic by
                         // at most W1 / window.
                         static_cast<double>(k_supports - 1) / (2.0 * span)};
  return run_bound_check(seeds, options, Strategy::kCdrl, protocol);
}

BoundReport check_theorem3_bound(std::span<const std::uint64_t> seeds, int k_quantiles,
                                 const RandomMdpOptions& options) {
  BoundProtocol protocol{StatisticSet::quantiles(k_quantiles),
                         theorem3_bound(options.gamma, options.r_max, k_quantiles), 0.0};
  return run_bound_check(seeds, options, Strategy::kQdrl, protocol);
}

QuantileNonclosednessReport demo_quantile_nonclosedness(int k, double gamma,
                                                        int reward_atoms) {
  if (k < 1 || !(gamma > 0.0 && gamma <= 1.0)) {
    throw InvalidArgumentError("demo_quantile_nonclosedness: need K >= 1 and gamma in (0, 1]");
  }
  QuantileNonclosednessReport report;
  report.k = k;
  report.gamma = gamma;
  report.expected_uniform = gamma / k;
  report.expected_comb = 3.0 * gamma / (2.0 * k);

  const TabularMdp uniform_mdp =
      build_quantile_nonclosed_mdp(NonclosedVariant::kUniform, k, gamma, reward_atoms);
  const TabularMdp comb_mdp =
      build_quantile_nonclosed_mdp(NonclosedVariant::kComb, k, gamma, reward_atoms);
  const Policy pi = Policy::deterministic(uniform_mdp.num_states(), 0, 1);
  const DistTable uniform_truth = exact_return_dist(uniform_mdp, pi);
  const DistTable comb_truth = exact_return_dist(comb_mdp, pi);

  const double tau0 = 1.0 / (2.0 * k);
  report.x0_quantile_uniform = uniform_truth[0][0].quantile_upper(tau0);
  report.x0_quantile_comb = comb_truth[0][0].quantile_upper(tau0);

  // The K midpoint quantiles at the two next states coincide across the two
  // pairings; exactly so for the comb laws, and up to the reward
  // discretization for the uniform ones.
  const StatisticSet mids = StatisticSet::quantiles(k);
  for (int state = 1; state <= 2; ++state) {
    const std::vector<double> qu = evaluate(mids, uniform_truth[state][0]);
    const std::vector<double> qc = evaluate(mids, comb_truth[state][0]);
    for (int j = 0; j < k; ++j) {
      const double ideal = (2.0 * j + (state == 1 ? 1.0 : 3.0)) / (2.0 * k);
      report.next_state_quantile_gap =
          std::max(report.next_state_quantile_gap, std::abs(qu[j] - qc[j]));
      report.comb_quantile_gap =
          std::max(report.comb_quantile_gap, std::abs(qc[j] - ideal));
    }
  }

  report.pass = std::abs(report.x0_quantile_comb - report.expected_comb) <= report.exact_tol &&
                report.comb_quantile_gap <= report.exact_tol &&
                std::abs(report.x0_quantile_uniform - report.expected_uniform) <=
                    report.uniform_tol &&
                report.next_state_quantile_gap <= report.uniform_tol;
  return report;
}

namespace {

// Two-state chain (plus hidden sink) paying `reward` on the transition out
// of the second state; the first state transitions there silently.
TabularMdp two_step_chain(double gamma, const DiscreteDist& reward) {
  TabularMdp mdp(3, 1, gamma);
  mdp.set_transition(0, 0, {0.0, 1.0, 0.0});
  mdp.set_reward(0, 0, DiscreteDist::dirac(0.0));
  mdp.set_transition(1, 0, {0.0, 0.0, 1.0});
  mdp.set_reward(1, 0, reward);
  mdp.set_terminal(2);
  mdp.validate();
  return mdp;
}

NonuniformErrorReport demo_cdrl_bin(const NonuniformParams& params) {
  const int m = params.m;
  const int l = params.l;
  if (m < 1 || l <= m + 1 || l > 20) {
    throw InvalidArgumentError("demo_nonuniform_error: kCdrlBin needs m >= 1 and m + 1 < l <= 20");
  }
  NonuniformErrorReport report;
  report.which = NonuniformCase::kCdrlBin;
  const double pow_m = std::ldexp(1.0, m);       // 2^m
  const double gamma = pow_m / (pow_m + 1.0);
  const double width = std::ldexp(1.0, -l);      // bin width 2^-l
  const double c = 0.5 + std::ldexp(1.0, -(m + 1));

  // The two reward laws share their categorical projection: a's single atom
  // sits exactly halfway between b's two grid atoms.
  const DiscreteDist reward_a = DiscreteDist::dirac(c + 1.5 * width);
  const DiscreteDist reward_b({c + width, c + 2.0 * width}, {0.5, 0.5});
  const TabularMdp mdp_a = two_step_chain(gamma, reward_a);
  const TabularMdp mdp_b = two_step_chain(gamma, reward_b);
  const Policy pi = Policy::deterministic(3, 0, 1);

  const int supports = (1 << l) + 1;
  const StatisticSet set = StatisticSet::categorical(0.0, 1.0, supports);
  auto solve = [&](const TabularMdp& mdp) {
    StatTable table(3, 1, set, Strategy::kCdrl);
    return dp_fixed_point(std::move(table), mdp, pi, 1e-13, 50);
  };
  const StatTable table_a = solve(mdp_a);
  const StatTable table_b = solve(mdp_b);

  const int window = 1 << (l - 1);  // the window starting at 1/2
  const double learned_a = table_a.values(0, 0)[window];
  const double learned_b = table_b.values(0, 0)[window];
  report.learned = learned_a;
  report.fitted_match =
      wasserstein1(impute_state_action(table_a, 1, 0), impute_state_action(table_b, 1, 0)) <=
          1e-12 &&
      std::abs(learned_a - learned_b) <= 1e-12;

  const DistTable truth_a = exact_return_dist(mdp_a, pi);
  const DistTable truth_b = exact_return_dist(mdp_b, pi);
  report.true_a = categorical_expectation(truth_a[0][0], 0.5, 0.5 + width);
  report.true_b = categorical_expectation(truth_b[0][0], 0.5, 0.5 + width);
  report.gap = std::abs(report.true_b - report.true_a);
  report.expected_gap = 0.5 / (pow_m + 1.0);
  report.pass = report.fitted_match && std::abs(report.gap - report.expected_gap) <= 1e-9 &&
                std::abs(report.learned - report.true_b) <= 1e-9;
  return report;
}

NonuniformErrorReport demo_qdrl_median(const NonuniformParams& params) {
  const int k = params.k;
  const double eps = params.epsilon;
  const double gamma = params.gamma;
  if (k < 1 || k % 2 == 0 || !(eps > 0.0) || !(eps < 1.0 / (2.0 * k)) ||
      !(gamma > 0.0 && gamma < 1.0)) {
    throw InvalidArgumentError(
        "demo_nonuniform_error: kQdrlMedian needs odd K, epsilon in (0, 1/(2K)), gamma in (0, 1)");
  }
  NonuniformErrorReport report;
  report.which = NonuniformCase::kQdrlMedian;

  // x0 branches to two terminal-paying states whose reward laws put just
  // under 1/(2K) mass on zero and the rest on +1 resp. -1, so every midpoint
  // quantile collapses to the majority atom.
  TabularMdp mdp(4, 1, gamma);
  mdp.set_transition(0, 0, {0.0, 0.5 - eps, 0.5 + eps, 0.0});
  mdp.set_reward(0, 0, DiscreteDist::dirac(0.0));
  const double p0 = 1.0 / (2.0 * k) - eps;
  mdp.set_transition(1, 0, {0.0, 0.0, 0.0, 1.0});
  mdp.set_reward(1, 0, DiscreteDist({0.0, 1.0}, {p0, 1.0 - p0}));
  mdp.set_transition(2, 0, {0.0, 0.0, 0.0, 1.0});
  mdp.set_reward(2, 0, DiscreteDist({0.0, -1.0}, {p0, 1.0 - p0}));
  mdp.set_terminal(3);
  mdp.validate();
  const Policy pi = Policy::deterministic(4, 0, 1);

  StatTable table(4, 1, StatisticSet::quantiles(k), Strategy::kQdrl);
  table = dp_fixed_point(std::move(table), mdp, pi, 1e-13, 50);
  report.learned = table.values(0, 0)[(k - 1) / 2];

  const DistTable truth = exact_return_dist(mdp, pi);
  report.true_a = truth[0][0].quantile(0.5);
  report.true_b = report.true_a;
  report.gap = std::abs(report.learned - report.true_a);
  report.expected_gap = gamma;
  report.pass = std::abs(report.learned + gamma) <= 1e-9 && std::abs(report.true_a) <= 1e-9 &&
                std::abs(report.gap - report.expected_gap) <= 1e-9;
  return report;
}

}  // namespace

NonuniformErrorReport demo_nonuniform_error(NonuniformCase which,
                                            const NonuniformParams& params) {
  return which == NonuniformCase::kCdrlBin ? demo_cdrl_bin(params) : demo_qdrl_median(params);
}

MeanConsistencyReport check_mean_consistency(Strategy strategy, const StatisticSet& set,
                                             const TabularMdp& mdp, const Policy& pi,
                                             double tol) {
  MeanConsistencyReport report;
  report.tol = tol;
  StatTable table(mdp.num_states(), mdp.num_actions(), set, strategy);
  table = dp_fixed_point(std::move(table), mdp, pi, 1e-12, 100000);
  report.classical = classical_q(mdp, pi);
  report.implied.assign(mdp.num_states(), std::vector<double>(mdp.num_actions(), 0.0));
  for (int x = 0; x < mdp.num_states(); ++x) {
    for (int a = 0; a < mdp.num_actions(); ++a) {
      report.implied[x][a] = mean_estimate(table, x, a);
      report.sup_gap =
          std::max(report.sup_gap, std::abs(report.implied[x][a] - report.classical[x][a]));
    }
  }
  report.greedy_at_start = greedy_action(table, mdp.start_state());
  // The mean rides along exactly for CDRL (affine in the window statistics
  // while the support contains the returns) and for imputing expectile sets
  // holding tau = 0.5; quantile strategies and the naive variants (whose
  // target mean is the statistic average, not the tau = 0.5 entry) only
  // report their gap.
  report.asserted = strategy == Strategy::kCdrl || strategy == Strategy::kExpectile;
  report.pass = !report.asserted || report.sup_gap <= tol;
  return report;
}

double cdrl_equivalence_gap(const TabularMdp& mdp, const Policy& pi, double z_lo,
                            double z_hi, int k_supports, int sweeps) {
  if (sweeps < 1) throw InvalidArgumentError("cdrl_equivalence_gap: sweeps must be >= 1");
  const StatisticSet set = StatisticSet::categorical(z_lo, z_hi, k_supports);
  std::vector<double> supports(static_cast<std::size_t>(k_supports));
  for (int i = 0; i < k_supports; ++i) {
    supports[static_cast<std::size_t>(i)] =
        z_lo + (z_hi - z_lo) * i / static_cast<double>(k_supports - 1);
  }
  const int s = mdp.num_states(), na = mdp.num_actions();
  StatTable table(s, na, set, Strategy::kCdrl);
  DistTable eta(static_cast<std::size_t>(s));
  for (auto& row : eta) {
    row.assign(static_cast<std::size_t>(na), cramer_project(DiscreteDist::dirac(0.0), supports));
  }
  double worst = 0.0;
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    table = dp_update(table, mdp, pi);
    DistTable next = eta;
    for (int x = 0; x < s; ++x) {
      for (int a = 0; a < na; ++a) {
        next[x][a] = cramer_project(dist_bellman(eta, mdp, pi, x, a), supports);
      }
    }
    eta = std::move(next);
    for (int x = 0; x < s; ++x) {
      for (int a = 0; a < na; ++a) {
        const std::vector<double> stats = evaluate(set, eta[x][a]);
        const std::vector<double>& learned = table.values(x, a);
        for (std::size_t i = 0; i < stats.size(); ++i) {
          worst = std::max(worst, std::abs(stats[i] - learned[i]));
        }
      }
    }
  }
  return worst;
}

}  // namespace distrl
