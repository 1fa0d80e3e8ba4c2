#include "distrl/statistics.hpp"

#include <algorithm>
#include <cmath>

#include "distrl/errors.hpp"

namespace distrl {

const char* stat_kind_name(StatKind kind) {
  switch (kind) {
    case StatKind::kExpectile: return "expectile";
    case StatKind::kQuantile: return "quantile";
    case StatKind::kHuberQuantile: return "huber_quantile";
    case StatKind::kCategoricalExpectation: return "categorical_expectation";
    case StatKind::kMoment: return "moment";
  }
  return "unknown";
}

namespace {

void require_tau(double tau, const char* who) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw InvalidArgumentError(std::string(who) + ": tau must lie in (0, 1)");
  }
}

}  // namespace

StatisticFamily StatisticFamily::expectile(double tau) {
  require_tau(tau, "StatisticFamily::expectile");
  StatisticFamily f;
  f.kind = StatKind::kExpectile;
  f.tau = tau;
  return f;
}

StatisticFamily StatisticFamily::quantile(double tau) {
  require_tau(tau, "StatisticFamily::quantile");
  StatisticFamily f;
  f.kind = StatKind::kQuantile;
  f.tau = tau;
  return f;
}

StatisticFamily StatisticFamily::huber_quantile(double tau, double kappa) {
  require_tau(tau, "StatisticFamily::huber_quantile");
  if (!(kappa > 0.0)) {
    throw InvalidArgumentError("StatisticFamily::huber_quantile: kappa must be positive");
  }
  StatisticFamily f;
  f.kind = StatKind::kHuberQuantile;
  f.tau = tau;
  f.kappa = kappa;
  return f;
}

StatisticFamily StatisticFamily::categorical_expectation(double z_lo, double z_hi) {
  if (!(z_lo < z_hi)) {
    throw InvalidArgumentError(
        "StatisticFamily::categorical_expectation: requires z_lo < z_hi");
  }
  StatisticFamily f;
  f.kind = StatKind::kCategoricalExpectation;
  f.z_lo = z_lo;
  f.z_hi = z_hi;
  return f;
}

StatisticFamily StatisticFamily::moment(int order) {
  if (order < 1) {
    throw InvalidArgumentError("StatisticFamily::moment: order must be >= 1");
  }
  StatisticFamily f;
  f.kind = StatKind::kMoment;
  f.order = order;
  return f;
}

double StatisticFamily::param() const {
  switch (kind) {
    case StatKind::kExpectile:
    case StatKind::kQuantile:
    case StatKind::kHuberQuantile:
      return tau;
    case StatKind::kCategoricalExpectation:
      return z_lo;
    case StatKind::kMoment:
      return static_cast<double>(order);
  }
  return 0.0;
}

StatisticSet::StatisticSet(std::vector<StatisticFamily> families)
    : families_(std::move(families)) {
  if (families_.empty()) {
    throw InvalidArgumentError("StatisticSet: empty");
  }
  kind_ = families_.front().kind;
  for (const auto& f : families_) {
    if (f.kind != kind_) {
      throw InvalidArgumentError("StatisticSet: mixed statistic kinds are not supported");
    }
  }
  switch (kind_) {
    case StatKind::kExpectile:
    case StatKind::kQuantile:
    case StatKind::kHuberQuantile:
      for (std::size_t i = 0; i < families_.size(); ++i) {
        require_tau(families_[i].tau, "StatisticSet");
        if (i > 0 && !(families_[i].tau > families_[i - 1].tau)) {
          throw InvalidArgumentError("StatisticSet: tau levels must be strictly increasing");
        }
        if (kind_ == StatKind::kHuberQuantile &&
            families_[i].kappa != families_.front().kappa) {
          throw InvalidArgumentError("StatisticSet: huber families must share kappa");
        }
      }
      break;
    case StatKind::kCategoricalExpectation:
      for (std::size_t i = 0; i < families_.size(); ++i) {
        if (!(families_[i].z_lo < families_[i].z_hi)) {
          throw InvalidArgumentError("StatisticSet: categorical window must have z_lo < z_hi");
        }
        if (i > 0 && families_[i].z_lo != families_[i - 1].z_hi) {
          throw InvalidArgumentError(
              "StatisticSet: categorical windows must be contiguous (z_hi[k] == z_lo[k+1])");
        }
      }
      break;
    case StatKind::kMoment:
      for (std::size_t i = 0; i < families_.size(); ++i) {
        if (families_[i].order < 1) {
          throw InvalidArgumentError("StatisticSet: moment orders must be >= 1");
        }
        if (i > 0 && !(families_[i].order > families_[i - 1].order)) {
          throw InvalidArgumentError("StatisticSet: moment orders must be strictly increasing");
        }
      }
      break;
  }
}

std::vector<double> StatisticSet::categorical_supports() const {
  if (kind_ != StatKind::kCategoricalExpectation) {
    throw InvalidArgumentError("categorical_supports: not a categorical statistic set");
  }
  std::vector<double> z;
  z.reserve(families_.size() + 1);
  z.push_back(families_.front().z_lo);
  for (const auto& f : families_) z.push_back(f.z_hi);
  return z;
}

StatisticSet StatisticSet::expectiles(int k) {
  if (k < 1) {
    throw InvalidArgumentError("StatisticSet::expectiles: k must be >= 1");
  }
  std::vector<double> taus;
  taus.reserve(static_cast<std::size_t>(k));
  for (int i = 1; i <= k; ++i) taus.push_back(static_cast<double>(i) / (k + 1));
  return expectiles(std::move(taus));
}

StatisticSet StatisticSet::expectiles(std::vector<double> taus) {
  std::vector<StatisticFamily> f;
  f.reserve(taus.size());
  for (double t : taus) f.push_back(StatisticFamily::expectile(t));
  return StatisticSet(std::move(f));
}

StatisticSet StatisticSet::quantiles(int k) {
  if (k < 1) {
    throw InvalidArgumentError("StatisticSet::quantiles: k must be >= 1");
  }
  std::vector<double> taus;
  taus.reserve(static_cast<std::size_t>(k));
  for (int i = 1; i <= k; ++i) taus.push_back((2.0 * i - 1.0) / (2.0 * k));
  return quantiles(std::move(taus));
}

StatisticSet StatisticSet::quantiles(std::vector<double> taus) {
  std::vector<StatisticFamily> f;
  f.reserve(taus.size());
  for (double t : taus) f.push_back(StatisticFamily::quantile(t));
  return StatisticSet(std::move(f));
}

StatisticSet StatisticSet::huber_quantiles(int k, double kappa) {
  if (k < 1) {
    throw InvalidArgumentError("StatisticSet::huber_quantiles: k must be >= 1");
  }
  std::vector<double> taus;
  taus.reserve(static_cast<std::size_t>(k));
  for (int i = 1; i <= k; ++i) taus.push_back((2.0 * i - 1.0) / (2.0 * k));
  return huber_quantiles(std::move(taus), kappa);
}

StatisticSet StatisticSet::huber_quantiles(std::vector<double> taus, double kappa) {
  std::vector<StatisticFamily> f;
  f.reserve(taus.size());
  for (double t : taus) f.push_back(StatisticFamily::huber_quantile(t, kappa));
  return StatisticSet(std::move(f));
}

StatisticSet StatisticSet::categorical(double z_lo, double z_hi, int k_supports) {
  if (k_supports < 2) {
    throw InvalidArgumentError("StatisticSet::categorical: need at least 2 supports");
  }
  if (!(z_lo < z_hi)) {
    throw InvalidArgumentError("StatisticSet::categorical: z_lo must be < z_hi");
  }
  std::vector<double> z;
  z.reserve(static_cast<std::size_t>(k_supports));
  const double step = (z_hi - z_lo) / (k_supports - 1);
  for (int i = 0; i < k_supports; ++i) z.push_back(z_lo + step * i);
  z.back() = z_hi;
  return categorical(std::move(z));
}

StatisticSet StatisticSet::categorical(std::vector<double> supports) {
  if (supports.size() < 2) {
    throw InvalidArgumentError("StatisticSet::categorical: need at least 2 supports");
  }
  std::vector<StatisticFamily> f;
  f.reserve(supports.size() - 1);
  for (std::size_t i = 0; i + 1 < supports.size(); ++i) {
    f.push_back(StatisticFamily::categorical_expectation(supports[i], supports[i + 1]));
  }
  return StatisticSet(std::move(f));
}

StatisticSet StatisticSet::moments(int k) {
  if (k < 1) {
    throw InvalidArgumentError("StatisticSet::moments: k must be >= 1");
  }
  std::vector<StatisticFamily> f;
  f.reserve(static_cast<std::size_t>(k));
  for (int i = 1; i <= k; ++i) f.push_back(StatisticFamily::moment(i));
  return StatisticSet(std::move(f));
}

double er_loss(double q, const DiscreteDist& d, double tau) {
  require_tau(tau, "er_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double z = d.atoms()[i];
    const double w = d.weights()[i];
    const double u = z - q;
    acc += w * (z > q ? tau : 1.0 - tau) * u * u;
  }
  return acc;
}

double er_loss_grad(double q, const DiscreteDist& d, double tau) {
  require_tau(tau, "er_loss_grad");
  double below = 0.0;  // E[(q - Z) 1{Z <= q}]
  double above = 0.0;  // E[(Z - q) 1{Z > q}]
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double z = d.atoms()[i];
    const double w = d.weights()[i];
    if (z <= q) {
      below += w * (q - z);
    } else {
      above += w * (z - q);
    }
  }
  return 2.0 * ((1.0 - tau) * below - tau * above);
}

double qr_loss(double q, const DiscreteDist& d, double tau) {
  require_tau(tau, "qr_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double z = d.atoms()[i];
    const double w = d.weights()[i];
    acc += w * (z > q ? tau : 1.0 - tau) * std::abs(z - q);
  }
  return acc;
}

double qr_loss_grad(double q, const DiscreteDist& d, double tau) {
  require_tau(tau, "qr_loss_grad");
  const double p_below = d.cdf(q);
  return (1.0 - tau) * p_below - tau * (1.0 - p_below);
}

namespace {

double huber_kink(double u, double kappa) {
  const double a = std::abs(u);
  return a <= kappa ? 0.5 * u * u : kappa * (a - 0.5 * kappa);
}

}  // namespace

double huber_loss(double q, const DiscreteDist& d, double tau, double kappa) {
  require_tau(tau, "huber_loss");
  if (!(kappa > 0.0)) {
    throw InvalidArgumentError("huber_loss: kappa must be positive");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double z = d.atoms()[i];
    const double w = d.weights()[i];
    if (z == q) continue;
    acc += w * (z > q ? tau : 1.0 - tau) * huber_kink(z - q, kappa);
  }
  return acc;
}

double huber_loss_grad(double q, const DiscreteDist& d, double tau, double kappa) {
  require_tau(tau, "huber_loss_grad");
  if (!(kappa > 0.0)) {
    throw InvalidArgumentError("huber_loss_grad: kappa must be positive");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double z = d.atoms()[i];
    const double w = d.weights()[i];
    const double v = std::clamp(q - z, -kappa, kappa);
    acc += w * (z > q ? tau : 1.0 - tau) * v;
  }
  return acc;
}

double expectile(const DiscreteDist& d, double tau) {
  require_tau(tau, "expectile");
  const auto& atoms = d.atoms();
  const auto& weights = d.weights();
  const std::size_t n = atoms.size();
  if (n == 1) return atoms[0];

  double m1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) m1 += weights[i] * atoms[i];

  // The gradient is continuous, strictly increasing and linear between
  // atoms. Find the first atom where it is nonnegative, then solve the
  // linear segment just below it. Mass and partial first moment at an atom
  // include the atom itself (ties on the lower branch).
  double mass = 0.0;
  double sum = 0.0;
  std::size_t j = n - 1;
  double mass_prev = 0.0, sum_prev = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mass_prev = mass;
    sum_prev = sum;
    mass += weights[i];
    sum += weights[i] * atoms[i];
    const double q = atoms[i];
    const double grad = (1.0 - tau) * (q * mass - sum) + tau * (q * (1.0 - mass) - (m1 - sum));
    if (grad >= 0.0) {
      j = i;
      break;
    }
    if (i == n - 1) {
      // grad(max) >= 0 always holds in exact arithmetic; guard rounding.
      return atoms.back();
    }
  }
  if (j == 0) return atoms[0];
  const double denom = (1.0 - tau) * mass_prev + tau * (1.0 - mass_prev);
  const double root = ((1.0 - tau) * sum_prev + tau * (m1 - sum_prev)) / denom;
  return std::clamp(root, atoms[j - 1], atoms[j]);
}

double huber_quantile(const DiscreteDist& d, double tau, double kappa) {
  require_tau(tau, "huber_quantile");
  if (!(kappa > 0.0)) {
    throw InvalidArgumentError("huber_quantile: kappa must be positive");
  }
  double lo = d.min() - kappa;
  double hi = d.max() + kappa;
  double glo = huber_loss_grad(lo, d, tau, kappa);
  if (glo >= 0.0) return lo;
  double ghi = huber_loss_grad(hi, d, tau, kappa);
  if (ghi <= 0.0) return hi;
  while (hi - lo > 1e-10) {
    const double mid = 0.5 * (lo + hi);
    // For extreme supports the midpoint can land on an endpoint (interval
    // below one ulp); stop rather than spin.
    if (mid <= lo || mid >= hi) break;
    if (huber_loss_grad(mid, d, tau, kappa) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double categorical_expectation(const DiscreteDist& d, double z_lo, double z_hi) {
  if (!(z_lo < z_hi)) {
    throw InvalidArgumentError("categorical_expectation: requires z_lo < z_hi");
  }
  double acc = 0.0;
  const double width = z_hi - z_lo;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double z = d.atoms()[i];
    const double w = d.weights()[i];
    if (z <= z_lo) {
      acc += w;
    } else if (z < z_hi) {
      acc += w * (z_hi - z) / width;
    }
  }
  return acc;
}

double evaluate(const StatisticFamily& family, const DiscreteDist& d) {
  switch (family.kind) {
    case StatKind::kExpectile:
      return expectile(d, family.tau);
    case StatKind::kQuantile:
      return d.quantile(family.tau);
    case StatKind::kHuberQuantile:
      return huber_quantile(d, family.tau, family.kappa);
    case StatKind::kCategoricalExpectation:
      return categorical_expectation(d, family.z_lo, family.z_hi);
    case StatKind::kMoment:
      return d.moment(family.order);
  }
  throw InvalidArgumentError("evaluate: unknown statistic kind");
}

std::vector<double> evaluate(const StatisticSet& set, const DiscreteDist& d) {
  std::vector<double> out;
  out.reserve(set.size());
  for (const auto& f : set.families()) out.push_back(evaluate(f, d));
  return out;
}

}  // namespace distrl
