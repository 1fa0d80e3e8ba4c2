#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "distrl/random.hpp"

namespace distrl {

// A finitely supported probability distribution over the reals, held in
// canonical form:
//   * atoms strictly increasing,
//   * weights strictly positive and summing to one,
//   * atoms closer than kMergeTol merged (weights summed, position of the
//     first atom of the cluster kept),
//   * weights below kPruneTol dropped and the remainder renormalised.
// The support may never be empty. Instances are immutable after
// construction; all operations return new values.
class DiscreteDist {
 public:
  static constexpr double kMergeTol = 1e-12;   // absolute atom merge radius
  static constexpr double kPruneTol = 1e-15;   // weights below this are dropped
  static constexpr double kWeightSumTol = 1e-12;

  // Point mass at `value`.
  static DiscreteDist dirac(double value);

  // General constructor; atoms need not be sorted or unique. Throws
  // InvalidArgumentError if the inputs are empty, a weight is negative,
  // or the weight sum deviates from one by more than kWeightSumTol.
  DiscreteDist(std::vector<double> atoms, std::vector<double> weights);

  // Equal weights 1/n on the given atoms.
  static DiscreteDist uniform_atoms(std::vector<double> atoms);

  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }
  std::size_t size() const { return atoms_.size(); }
  double min() const { return atoms_.front(); }
  double max() const { return atoms_.back(); }

  // Law of r + gamma * Z. gamma may be any real (gamma = 0 collapses the
  // support onto {r}); the result is re-canonicalised.
  DiscreteDist pushforward(double r, double gamma) const;

  // P(Z <= t).
  double cdf(double t) const;

  // Lower generalised inverse inf{x : F(x) >= tau}, tau in [0, 1]; tau = 0
  // returns the least atom. A snap tolerance of 1e-12 guards against
  // accumulated rounding in the cumulative weights. Throws on tau outside
  // [0, 1].
  double quantile(double tau) const;

  // Upper generalised inverse inf{x : F(x) > tau}. Differs from quantile()
  // only when tau exactly hits a CDF plateau level; together the two span
  // the interval of valid tau-quantiles.
  double quantile_upper(double tau) const;

  // E[Z^k], k >= 0.
  double moment(int k) const;
  double mean() const;
  double variance() const;

  // One draw using the shared uniform helper; deterministic given the
  // engine state.
  double sample(Rng& rng) const;

  bool operator==(const DiscreteDist& other) const {
    return atoms_ == other.atoms_ && weights_ == other.weights_;
  }

 private:
  DiscreteDist() = default;
  void canonicalize();

  std::vector<double> atoms_;
  std::vector<double> weights_;
};

// Mixture sum_i weights[i] * parts[i]. Weights must be nonnegative and sum
// to one within DiscreteDist::kWeightSumTol; parts must be nonempty.
DiscreteDist mixture(std::span<const DiscreteDist> parts, std::span<const double> weights);

// Convenience overload for (weight, dist) pairs.
DiscreteDist mixture(const std::vector<std::pair<double, DiscreteDist>>& parts);

// 1-Wasserstein distance, computed exactly as the integral of |F1 - F2|
// over the union of the two supports.
double wasserstein1(const DiscreteDist& a, const DiscreteDist& b);

// Cramer l2 distance (integral of (F1 - F2)^2, then square root), exact.
double cramer_l2(const DiscreteDist& a, const DiscreteDist& b);

// Discretisation of a continuous law onto `n` equal-probability atoms placed
// at the quantiles of the midpoints (2i - 1) / (2n). `inverse_cdf` maps
// (0, 1) -> R and must be nondecreasing.
template <typename F>
DiscreteDist discretize_quantiles(F&& inverse_cdf, int n) {
  std::vector<double> atoms;
  atoms.reserve(static_cast<std::size_t>(n));
  for (int i = 1; i <= n; ++i) {
    atoms.push_back(inverse_cdf((2.0 * i - 1.0) / (2.0 * n)));
  }
  return DiscreteDist::uniform_atoms(std::move(atoms));
}

// Quantile function of the standard normal; absolute error below 1e-13.
double normal_quantile(double u);

// Neumaier-compensated sum; rounding error O(eps) independent of length.
double compensated_sum(const std::vector<double>& xs);

}  // namespace distrl
