#include "distrl/discrete_dist.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "distrl/errors.hpp"

namespace distrl {

// Rounding error stays O(eps) regardless of the number of terms, so the
// sum-to-one checks below test the caller's weights rather than
// accumulation noise.
double compensated_sum(const std::vector<double>& xs) {
  double sum = 0.0;
  double comp = 0.0;
  for (double x : xs) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x)) {
      comp += (sum - t) + x;
    } else {
      comp += (x - t) + sum;
    }
    sum = t;
  }
  return sum + comp;
}

DiscreteDist DiscreteDist::dirac(double value) {
  DiscreteDist d;
  d.atoms_ = {value};
  d.weights_ = {1.0};
  return d;
}

DiscreteDist::DiscreteDist(std::vector<double> atoms, std::vector<double> weights)
    : atoms_(std::move(atoms)), weights_(std::move(weights)) {
  if (atoms_.empty()) {
    throw InvalidArgumentError("DiscreteDist: empty support");
  }
  if (atoms_.size() != weights_.size()) {
    throw InvalidArgumentError("DiscreteDist: atoms/weights size mismatch");
  }
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (!std::isfinite(atoms_[i])) {
      throw InvalidArgumentError("DiscreteDist: non-finite atom");
    }
    if (!(weights_[i] >= 0.0)) {
      throw InvalidArgumentError("DiscreteDist: negative or NaN weight");
    }
  }
  const double sum = compensated_sum(weights_);
  if (std::abs(sum - 1.0) > kWeightSumTol) {
    throw InvalidArgumentError("DiscreteDist: weights sum to " + std::to_string(sum) +
                               ", expected 1 within 1e-12");
  }
  canonicalize();
}

DiscreteDist DiscreteDist::uniform_atoms(std::vector<double> atoms) {
  const std::size_t n = atoms.size();
  if (n == 0) {
    throw InvalidArgumentError("DiscreteDist::uniform_atoms: empty support");
  }
  std::vector<double> weights(n, 1.0 / static_cast<double>(n));
  return DiscreteDist(std::move(atoms), std::move(weights));
}

void DiscreteDist::canonicalize() {
  if (!std::is_sorted(atoms_.begin(), atoms_.end())) {
    std::vector<std::size_t> order(atoms_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return atoms_[a] < atoms_[b]; });
    std::vector<double> a(atoms_.size()), w(atoms_.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
      a[i] = atoms_[order[i]];
      w[i] = weights_[order[i]];
    }
    atoms_ = std::move(a);
    weights_ = std::move(w);
  }

  // Merge clusters of atoms within kMergeTol of the running representative,
  // then prune near-zero weights and renormalise.
  std::vector<double> a, w;
  a.reserve(atoms_.size());
  w.reserve(atoms_.size());
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    if (!a.empty() && atoms_[i] - a.back() < kMergeTol) {
      w.back() += weights_[i];
    } else {
      a.push_back(atoms_[i]);
      w.push_back(weights_[i]);
    }
  }

  std::vector<double> pa, pw;
  pa.reserve(a.size());
  pw.reserve(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (w[i] >= kPruneTol) {
      pa.push_back(a[i]);
      pw.push_back(w[i]);
    }
  }
  if (pa.empty()) {
    // Degenerate but possible if every weight fell below the prune
    // threshold; keep the heaviest original atom instead of erroring.
    std::size_t best = 0;
    for (std::size_t i = 1; i < w.size(); ++i) {
      if (w[i] > w[best]) best = i;
    }
    pa = {a[best]};
    pw = {1.0};
  }
  const double kept = compensated_sum(pw);
  for (double& x : pw) x /= kept;
  atoms_ = std::move(pa);
  weights_ = std::move(pw);
}

DiscreteDist DiscreteDist::pushforward(double r, double gamma) const {
  if (!std::isfinite(r) || !std::isfinite(gamma)) {
    throw InvalidArgumentError("pushforward: non-finite parameters");
  }
  DiscreteDist out;
  if (gamma == 0.0) {
    out.atoms_ = {r};
    out.weights_ = {1.0};
    return out;
  }
  out.atoms_.resize(atoms_.size());
  out.weights_ = weights_;
  if (gamma > 0.0) {
    for (std::size_t i = 0; i < atoms_.size(); ++i) out.atoms_[i] = r + gamma * atoms_[i];
  } else {
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      out.atoms_[atoms_.size() - 1 - i] = r + gamma * atoms_[i];
    }
    std::reverse(out.weights_.begin(), out.weights_.end());
  }
  out.canonicalize();
  return out;
}

double DiscreteDist::cdf(double t) const {
  double c = 0.0;
  for (std::size_t i = 0; i < atoms_.size() && atoms_[i] <= t; ++i) c += weights_[i];
  return c;
}

double DiscreteDist::quantile(double tau) const {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw InvalidArgumentError("quantile: tau outside [0, 1]");
  }
  const double snap = 1e-12;
  double c = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    c += weights_[i];
    if (c >= tau - snap) return atoms_[i];
  }
  return atoms_.back();
}

double DiscreteDist::quantile_upper(double tau) const {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw InvalidArgumentError("quantile_upper: tau outside [0, 1]");
  }
  const double snap = 1e-12;
  double c = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    c += weights_[i];
    if (c > tau + snap) return atoms_[i];
  }
  return atoms_.back();
}

double DiscreteDist::moment(int k) const {
  if (k < 0) {
    throw InvalidArgumentError("moment: negative order");
  }
  if (k == 0) return 1.0;
  double m = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    m += weights_[i] * std::pow(atoms_[i], k);
  }
  return m;
}

double DiscreteDist::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) m += weights_[i] * atoms_[i];
  return m;
}

double DiscreteDist::variance() const {
  const double m = mean();
  double v = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    const double d = atoms_[i] - m;
    v += weights_[i] * d * d;
  }
  return v;
}

double DiscreteDist::sample(Rng& rng) const {
  const double u = uniform01(rng);
  double c = 0.0;
  for (std::size_t i = 0; i < atoms_.size(); ++i) {
    c += weights_[i];
    if (u < c) return atoms_[i];
  }
  return atoms_.back();
}

DiscreteDist mixture(std::span<const DiscreteDist> parts, std::span<const double> weights) {
  if (parts.empty() || parts.size() != weights.size()) {
    throw InvalidArgumentError("mixture: empty parts or size mismatch");
  }
  for (double w : weights) {
    if (!(w >= 0.0)) {
      throw InvalidArgumentError("mixture: negative or NaN weight");
    }
  }
  const double sum = compensated_sum({weights.begin(), weights.end()});
  if (std::abs(sum - 1.0) > DiscreteDist::kWeightSumTol) {
    throw InvalidArgumentError("mixture: weights sum to " + std::to_string(sum) +
                               ", expected 1 within 1e-12");
  }
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  std::vector<double> atoms, w;
  atoms.reserve(total);
  w.reserve(total);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (weights[i] == 0.0) continue;
    for (std::size_t j = 0; j < parts[i].size(); ++j) {
      atoms.push_back(parts[i].atoms()[j]);
      w.push_back(weights[i] * parts[i].weights()[j]);
    }
  }
  return DiscreteDist(std::move(atoms), std::move(w));
}

DiscreteDist mixture(const std::vector<std::pair<double, DiscreteDist>>& parts) {
  std::vector<DiscreteDist> ds;
  std::vector<double> ws;
  ds.reserve(parts.size());
  ws.reserve(parts.size());
  for (const auto& [w, d] : parts) {
    ws.push_back(w);
    ds.push_back(d);
  }
  return mixture(std::span<const DiscreteDist>(ds), std::span<const double>(ws));
}

namespace {

// Walks the union of two supports accumulating f(F1 - F2) * dt between
// consecutive breakpoints; both CDFs are piecewise constant so the result
// is exact up to rounding.
template <typename F>
double cdf_gap_integral(const DiscreteDist& a, const DiscreteDist& b, F&& f) {
  const auto& xa = a.atoms();
  const auto& xb = b.atoms();
  std::size_t ia = 0, ib = 0;
  double fa = 0.0, fb = 0.0;
  double acc = 0.0;
  double prev = 0.0;
  bool started = false;
  while (ia < xa.size() || ib < xb.size()) {
    double t;
    if (ib >= xb.size() || (ia < xa.size() && xa[ia] <= xb[ib])) {
      t = xa[ia];
    } else {
      t = xb[ib];
    }
    if (started && t > prev) {
      acc += f(fa - fb) * (t - prev);
    }
    while (ia < xa.size() && xa[ia] <= t) fa += a.weights()[ia++];
    while (ib < xb.size() && xb[ib] <= t) fb += b.weights()[ib++];
    prev = t;
    started = true;
  }
  return acc;
}

}  // namespace

double wasserstein1(const DiscreteDist& a, const DiscreteDist& b) {
  return cdf_gap_integral(a, b, [](double d) { return std::abs(d); });
}

double cramer_l2(const DiscreteDist& a, const DiscreteDist& b) {
  return std::sqrt(cdf_gap_integral(a, b, [](double d) { return d * d; }));
}

// Acklam's rational approximation to the standard normal quantile, followed
// by one Halley refinement step against erfc, which brings the absolute
// error to ~1e-15.
double normal_quantile(double u) {
  if (!(u > 0.0 && u < 1.0)) {
    throw InvalidArgumentError("normal_quantile: u outside (0, 1)");
  }
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (u < plow) {
    const double q = std::sqrt(-2.0 * std::log(u));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (u <= 1.0 - plow) {
    const double q = u - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - u));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley step: e = Phi(x) - u.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - u;
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  const double t = e / pdf;
  x -= t / (1.0 + x * t / 2.0);
  return x;
}

}  // namespace distrl
