#pragma once

#include <span>
#include <vector>

#include "distrl/discrete_dist.hpp"
#include "distrl/statistics.hpp"

namespace distrl {

// Options for the iterative imputation solvers. `tolerance` bounds the
// worst-case loss-gradient residual at the returned atoms; `n_atoms` is the
// number N of imputed atoms (0 means N = K, the number of statistics).
// With `throw_on_failure` cleared the solver returns its best iterate
// instead of raising SolverConvergenceError.
struct SolverOptions {
  double tolerance = 1e-7;
  int max_iters = 10000;
  int n_atoms = 0;
  bool throw_on_failure = true;
};

// Outcome of one imputation solve; populated when a pointer is supplied.
struct SolveDiagnostics {
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;               // max_i |gradient_i| at the final atoms
  bool clamped_inputs = false;         // lenient mode reordered/clipped inputs
  std::vector<double> objective_trace; // sum of squared gradients per iteration
};

// Uniform mixture of point masses at the given values (the quantile
// imputation: statistics are reused as samples). Values may be unsorted.
DiscreteDist impute_qdrl(std::span<const double> values);

// Inverts the categorical statistics: p_1 = v_1, p_k = v_k - v_{k-1},
// p_K = 1 - v_{K-1}, placed on the supports. Requires |values| =
// |supports| - 1, values nondecreasing within 1e-9 and contained in
// [0, 1 + 1e-9]; violations raise InfeasibleStatisticsError.
DiscreteDist impute_cdrl(std::span<const double> values, std::span<const double> supports);

// Finds N atoms whose uniform mixture has expectiles `values` at levels
// `taus`: drives every er_loss_grad(values[i]; mixture, taus[i]) below
// options.tolerance in absolute value. Values must be nondecreasing (else
// InfeasibleStatisticsError); non-convergence raises SolverConvergenceError
// in strict mode. The root system is solved directly: atoms between
// consecutive values enter it only through their count and sum, which
// reduces the solve to a chain of integer counts plus per-interval linear
// equations. Damped Gauss-Newton on the squared-gradient objective is kept
// as a best-effort fallback for tied or infeasible inputs; that objective
// has non-global local minima, so descent alone is not reliable.
DiscreteDist impute_expectiles(std::span<const double> values, std::span<const double> taus,
                               const SolverOptions& options = {},
                               SolveDiagnostics* diag = nullptr);

// Same contract for Huber quantile statistics of width kappa.
DiscreteDist impute_huber_quantiles(std::span<const double> values,
                                    std::span<const double> taus, double kappa,
                                    const SolverOptions& options = {},
                                    SolveDiagnostics* diag = nullptr);

// Dispatch on the statistic set kind. Moment sets have no imputation
// strategy and raise InvalidArgumentError.
DiscreteDist impute(const StatisticSet& set, std::span<const double> values,
                    const SolverOptions& options = {}, SolveDiagnostics* diag = nullptr);

// Best-effort variant for stochastic training: enforces monotone inputs by
// a running maximum (clipping categorical values to [0, 1] as well), never
// throws on non-convergence, and reports what happened through `diag`.
DiscreteDist impute_lenient(const StatisticSet& set, std::vector<double> values,
                            const SolverOptions& options, SolveDiagnostics* diag);

// max_i |evaluate(set[i], d) - values[i]|: how far the distribution is from
// carrying the requested statistics.
double imputation_residual(const DiscreteDist& d, const StatisticSet& set,
                           std::span<const double> values);

}  // namespace distrl
