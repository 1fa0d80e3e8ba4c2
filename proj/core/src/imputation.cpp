#include "distrl/imputation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>

#include "distrl/errors.hpp"

namespace distrl {

DiscreteDist impute_qdrl(std::span<const double> values) {
  if (values.empty()) {
    throw InvalidArgumentError("impute_qdrl: empty statistic vector");
  }
  return DiscreteDist::uniform_atoms(std::vector<double>(values.begin(), values.end()));
}

DiscreteDist impute_cdrl(std::span<const double> values, std::span<const double> supports) {
  if (supports.size() < 2 || values.size() + 1 != supports.size()) {
    throw InvalidArgumentError("impute_cdrl: need |values| = |supports| - 1 >= 1");
  }
  for (std::size_t i = 1; i < supports.size(); ++i) {
    if (!(supports[i] > supports[i - 1])) {
      throw InvalidArgumentError("impute_cdrl: supports must be strictly increasing");
    }
  }
  const double slack = 1e-9;
  std::vector<double> p(supports.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (v < -slack || v > 1.0 + slack || v < prev - slack) {
      throw InfeasibleStatisticsError(
          "impute_cdrl: values must be nondecreasing within [0, 1]");
    }
    const double clipped = std::clamp(v, prev, 1.0);
    p[i] = clipped - prev;
    prev = clipped;
  }
  p.back() = 1.0 - prev;
  return DiscreteDist(std::vector<double>(supports.begin(), supports.end()), std::move(p));
}

namespace {

// Shared driver for the expectile and Huber systems. `grad` fills the K
// loss gradients at the current atoms, `jac` the K x N Jacobian (row-major).
// Minimises the sum of squared gradients; converged when the worst gradient
// is within tolerance.
struct PwaSystem {
  std::function<void(const std::vector<double>&, std::vector<double>&)> grad;
  std::function<void(const std::vector<double>&, std::vector<double>&)> jac;
};

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double sumsq(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

PwaSystem make_expectile_system(std::vector<double> v, std::vector<double> t) {
  const std::size_t k = v.size();
  PwaSystem sys;
  sys.grad = [v, t, k](const std::vector<double>& z, std::vector<double>& g) {
    for (std::size_t i = 0; i < k; ++i) {
      double below = 0.0, above = 0.0;
      for (double zp : z) {
        if (zp <= v[i]) {
          below += v[i] - zp;
        } else {
          above += zp - v[i];
        }
      }
      g[i] = 2.0 * ((1.0 - t[i]) * below - t[i] * above) / static_cast<double>(z.size());
    }
  };
  sys.jac = [v, t, k](const std::vector<double>& z, std::vector<double>& jac) {
    const std::size_t n = z.size();
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t p = 0; p < n; ++p) {
        const double w = (z[p] <= v[i]) ? (1.0 - t[i]) : t[i];
        jac[i * n + p] = -2.0 * w / static_cast<double>(n);
      }
    }
  };
  return sys;
}

PwaSystem make_huber_system(std::vector<double> v, std::vector<double> t, double kappa) {
  const std::size_t k = v.size();
  PwaSystem sys;
  sys.grad = [v, t, k, kappa](const std::vector<double>& z, std::vector<double>& g) {
    for (std::size_t i = 0; i < k; ++i) {
      double acc = 0.0;
      for (double zp : z) {
        const double w = (zp > v[i]) ? t[i] : (1.0 - t[i]);
        acc += w * std::clamp(v[i] - zp, -kappa, kappa);
      }
      g[i] = acc / static_cast<double>(z.size());
    }
  };
  sys.jac = [v, t, k, kappa](const std::vector<double>& z, std::vector<double>& jac) {
    const std::size_t n = z.size();
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t p = 0; p < n; ++p) {
        const double u = v[i] - z[p];
        if (u > -kappa && u < kappa) {
          const double w = (z[p] > v[i]) ? t[i] : (1.0 - t[i]);
          jac[i * n + p] = -w / static_cast<double>(n);
        } else {
          jac[i * n + p] = 0.0;
        }
      }
    }
  };
  return sys;
}

// Solves A x = b for symmetric positive definite A (in-place Cholesky).
// Returns false when A is numerically indefinite.
bool spd_solve(std::vector<double>& a, std::vector<double>& b, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0)) return false;
    const double l = std::sqrt(d);
    a[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / l;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
    b[i] = s / a[i * n + i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= a[k * n + ii] * b[k];
    b[ii] = s / a[ii * n + ii];
  }
  return true;
}

std::vector<double> init_atoms(std::span<const double> values, std::size_t n_atoms) {
  const std::size_t k = values.size();
  std::vector<double> z(n_atoms);
  if (n_atoms == k) {
    std::copy(values.begin(), values.end(), z.begin());
  } else {
    for (std::size_t n = 0; n < n_atoms; ++n) {
      const double pos = (n_atoms == 1) ? 0.0
                                        : static_cast<double>(n) * (k - 1) /
                                              static_cast<double>(n_atoms - 1);
      const std::size_t lo = static_cast<std::size_t>(pos);
      const std::size_t hi = std::min(lo + 1, k - 1);
      const double frac = pos - static_cast<double>(lo);
      z[n] = values[lo] * (1.0 - frac) + values[hi] * frac;
    }
  }
  return z;
}

std::vector<double> solve_imputation(const PwaSystem& sys, std::vector<double> z,
                                     std::size_t k, const SolverOptions& options,
                                     SolveDiagnostics* diag, const char* who) {
  const std::size_t n = z.size();
  std::vector<double> g(k), jac(k * n);
  std::vector<double> a(n * n), rhs(n), trial(n), gt(k);

  sys.grad(z, g);
  double f = sumsq(g);
  double lambda = 1e-3;
  int iters = 0;
  if (diag) {
    diag->objective_trace.clear();
    diag->objective_trace.push_back(f);
  }

  std::vector<double> best_z = z;
  double best_residual = max_abs(g);

  while (best_residual > options.tolerance && iters < options.max_iters) {
    ++iters;
    sys.jac(z, jac);

    // Normal equations with Marquardt damping; the diagonal shift keeps the
    // system positive definite even when whole Jacobian columns vanish.
    std::fill(a.begin(), a.end(), 0.0);
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t p = 0; p < n; ++p) {
        const double jip = jac[i * n + p];
        if (jip == 0.0) continue;
        for (std::size_t q = p; q < n; ++q) {
          a[p * n + q] += jip * jac[i * n + q];
        }
      }
    }
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = 0; q < p; ++q) a[p * n + q] = a[q * n + p];
    }
    double diag_max = 0.0;
    for (std::size_t p = 0; p < n; ++p) diag_max = std::max(diag_max, a[p * n + p]);
    if (diag_max == 0.0) diag_max = 1.0;

    bool stepped = false;
    for (int attempt = 0; attempt < 60; ++attempt) {
      std::vector<double> am = a;
      for (std::size_t p = 0; p < n; ++p) {
        am[p * n + p] += lambda * (a[p * n + p] + 1e-12 * diag_max);
      }
      for (std::size_t p = 0; p < n; ++p) {
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) s += jac[i * n + p] * g[i];
        rhs[p] = -s;
      }
      if (spd_solve(am, rhs, n)) {
        for (std::size_t p = 0; p < n; ++p) trial[p] = z[p] + rhs[p];
        sys.grad(trial, gt);
        const double ft = sumsq(gt);
        if (ft < f) {
          z = trial;
          g = gt;
          f = ft;
          lambda = std::max(lambda / 3.0, 1e-12);
          stepped = true;
          break;
        }
      }
      lambda *= 4.0;
      if (lambda > 1e16) break;
    }
    if (diag) diag->objective_trace.push_back(f);
    const double res = max_abs(g);
    if (res < best_residual) {
      best_residual = res;
      best_z = z;
    }
    if (!stepped) break;  // no descent direction left: piecewise-flat minimum
  }

  if (diag) {
    diag->iterations = iters;
    diag->residual = best_residual;
    diag->converged = best_residual <= options.tolerance;
  }
  if (best_residual > options.tolerance && options.throw_on_failure) {
    throw SolverConvergenceError(std::string(who) + ": residual " +
                                     std::to_string(best_residual) + " above tolerance after " +
                                     std::to_string(iters) + " iterations",
                                 best_residual, iters);
  }
  return best_z;
}

// ---------------------------------------------------------------------------
// Direct expectile construction.
//
// With M_i = #{atoms <= v_i}, S_i their sum and T the total atom sum, the
// root equation (1 - tau_i) sum (v_i - z)^+ = tau_i sum (z - v_i)^+ is
// equivalent to S_i = v_i M_i + c_i with c_i = tau_i (v_i N - T)/(1 - 2 tau_i)
// (tau_i = 1/2 instead pins T = N v_i). Atoms inside an interval
// (v_{j-1}, v_j] enter the system only through their count and sum, so a root
// exists exactly when monotone integer counts satisfy per-interval box
// constraints; a small feasibility chain search finds them and the atoms are
// placed at each interval's mean. Descent on the squared-gradient surface is
// only a fallback: that surface has genuine non-global local minima, so it
// cannot serve as the primary solver.
// ---------------------------------------------------------------------------

double expectile_residual(const std::vector<double>& z, const std::vector<double>& v,
                          const std::vector<double>& tau) {
  double worst = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    double below = 0.0, above = 0.0;
    for (double zp : z) {
      if (zp <= v[i]) {
        below += v[i] - zp;
      } else {
        above += zp - v[i];
      }
    }
    const double g =
        2.0 * ((1.0 - tau[i]) * below - tau[i] * above) / static_cast<double>(z.size());
    worst = std::max(worst, std::abs(g));
  }
  return worst;
}

// One construction attempt at a fixed atom total. Returns sorted atoms whose
// count chain satisfies every box constraint up to slack, or nullopt when no
// integer chain fits. `mid` is the index with tau = 1/2, or -1.
std::optional<std::vector<double>> attempt_direct(const std::vector<double>& v,
                                                  const std::vector<double>& tau, int n,
                                                  int mid, double total) {
  const int k = static_cast<int>(v.size());
  std::vector<double> c(k, 0.0);
  double cmax = 0.0;
  for (int i = 0; i < k; ++i) {
    if (i == mid) continue;
    c[i] = tau[i] * (v[i] * n - total) / (1.0 - 2.0 * tau[i]);
    cmax = std::max(cmax, std::abs(c[i]));
  }
  double vmax = 0.0;
  for (double x : v) vmax = std::max(vmax, std::abs(x));
  const double eps = 1e-9 * std::max({1.0, cmax, n * vmax, std::abs(total)});

  const int ns = n + 1;
  std::vector<unsigned char> reach(static_cast<std::size_t>(k) * ns, 0);
  std::vector<int> par(static_cast<std::size_t>(k) * ns, -1);
  std::vector<int> pick(static_cast<std::size_t>(k) * ns, -1);
  const auto at = [ns](int i, int m) { return static_cast<std::size_t>(i) * ns + m; };

  std::vector<int> order;
  order.reserve(k);
  for (int i = 0; i < k; ++i) {
    if (i != mid) order.push_back(i);
  }

  // Seed the chain at its first count index.
  if (order.front() == 0) {
    // Interval 0 is (-inf, v_0]: its sum v_0 M_0 + c_0 needs mean <= v_0,
    // i.e. c_0 <= 0, and must vanish when empty.
    for (int m = 0; m <= n; ++m) {
      const bool ok = (m == 0) ? std::abs(c[0]) <= eps : c[0] <= eps;
      if (ok) reach[at(0, m)] = 1;
    }
  } else {
    // mid == 0: intervals 0 and 1 only pin their combined sum S_1.
    for (int m1 = 0; m1 <= n; ++m1) {
      const double sum = v[1] * m1 + c[1];
      for (int m0 = 0; m0 <= m1; ++m0) {
        const int n1 = m1 - m0;
        bool ok;
        if (m0 == 0) {
          ok = (n1 == 0) ? std::abs(sum) <= eps
                         : (sum >= n1 * v[0] - eps && sum <= n1 * v[1] + eps);
        } else {
          ok = sum <= m0 * v[0] + n1 * v[1] + eps;  // part below v_0 is unbounded down
        }
        if (ok) {
          reach[at(1, m1)] = 1;
          pick[at(1, m1)] = m0;
          break;
        }
      }
    }
  }

  for (std::size_t s = 1; s < order.size(); ++s) {
    const int b = order[s], a = order[s - 1];
    if (b == a + 1) {
      const double dc = c[b] - c[a];
      for (int mp = 0; mp <= n; ++mp) {
        if (!reach[at(a, mp)]) continue;
        for (int mc = mp; mc <= n; ++mc) {
          if (reach[at(b, mc)]) continue;
          const int nj = mc - mp;
          const double sigma = v[b] * mc - v[a] * mp + dc;
          const bool ok = (nj == 0)
                              ? std::abs(sigma) <= eps
                              : (sigma >= nj * v[a] - eps && sigma <= nj * v[b] + eps);
          if (ok) {
            reach[at(b, mc)] = 1;
            par[at(b, mc)] = mp;
          }
        }
      }
    } else {
      // Hop over the pinned-mean index: intervals mid and mid+1 couple
      // through their combined sum, split anywhere the two boxes allow.
      for (int mp = 0; mp <= n; ++mp) {
        if (!reach[at(a, mp)]) continue;
        for (int mc = mp; mc <= n; ++mc) {
          if (reach[at(b, mc)]) continue;
          const double sum = (v[b] * mc + c[b]) - (v[a] * mp + c[a]);
          for (int m = mp; m <= mc; ++m) {
            const int n1 = m - mp, n2 = mc - m;
            const double lo = n1 * v[a] + n2 * v[mid];
            const double hi = n1 * v[mid] + n2 * v[b];
            if (sum >= lo - eps && sum <= hi + eps) {
              reach[at(b, mc)] = 1;
              par[at(b, mc)] = mp;
              pick[at(b, mc)] = m;
              break;
            }
          }
        }
      }
    }
  }

  // Close the chain with the top interval (v_{K-1}, inf).
  const int last = order.back();
  int final_m = -1, final_mk = -1;
  if (last == k - 1) {
    for (int m = 0; m <= n; ++m) {
      if (!reach[at(last, m)]) continue;
      const double sk = total - (v[k - 1] * m + c[k - 1]);
      const int nk = n - m;
      const bool ok = (nk == 0) ? std::abs(sk) <= eps : sk >= nk * v[k - 1] - eps;
      if (ok) {
        final_m = m;
        break;
      }
    }
  } else {
    // mid == k-1: intervals k-1 and k couple through T - S_{k-2}.
    for (int m = 0; m <= n && final_m < 0; ++m) {
      if (!reach[at(last, m)]) continue;
      const double sum = total - (v[k - 2] * m + c[k - 2]);
      for (int mk = m; mk <= n; ++mk) {
        const int n1 = mk - m, n2 = n - mk;
        const double lo = n1 * v[k - 2] + n2 * v[k - 1];
        bool ok = sum >= lo - eps;
        if (n2 == 0) ok = ok && sum <= n1 * v[k - 1] + eps;
        if (n1 == 0 && n2 == 0) ok = std::abs(sum) <= eps;
        if (ok) {
          final_m = m;
          final_mk = mk;
          break;
        }
      }
    }
  }
  if (final_m < 0) return std::nullopt;

  std::vector<int> mc(k, 0);
  {
    int m = final_m;
    for (std::size_t pos = order.size(); pos-- > 0;) {
      const int i = order[pos];
      mc[i] = m;
      if (pos == 0) break;
      if (order[pos - 1] == i - 2) mc[i - 1] = pick[at(i, m)];
      m = par[at(i, m)];
    }
    if (order.front() == 1) mc[0] = pick[at(1, mc[1])];
    if (last == k - 2) mc[k - 1] = final_mk;
  }

  // Interval sums, then one shared atom value per occupied interval.
  std::vector<double> sig(k + 1, 0.0);
  if (mid != 0 && mc[0] > 0) sig[0] = v[0] * mc[0] + c[0];
  for (int j = 1; j < k; ++j) {
    if (j == mid || j - 1 == mid) continue;
    const int nj = mc[j] - mc[j - 1];
    if (nj > 0) sig[j] = v[j] * mc[j] - v[j - 1] * mc[j - 1] + (c[j] - c[j - 1]);
  }
  if (mid != k - 1) {
    const int nk = n - mc[k - 1];
    if (nk > 0) sig[k] = total - (v[k - 1] * mc[k - 1] + c[k - 1]);
  }
  if (mid == 0) {
    const double sum = v[1] * mc[1] + c[1];
    const int n1 = mc[1] - mc[0];
    if (mc[0] == 0) {
      sig[1] = (n1 > 0) ? sum : 0.0;
    } else if (n1 == 0) {
      sig[0] = sum;
    } else {
      const double lo = std::max(static_cast<double>(n1) * v[0], sum - mc[0] * v[0]);
      const double hi = n1 * v[1];
      sig[1] = std::clamp(0.5 * (lo + hi), std::min(lo, hi), hi);
      sig[0] = sum - sig[1];
    }
  } else if (mid == k - 1) {
    const double sum = total - (v[k - 2] * mc[k - 2] + c[k - 2]);
    const int n1 = mc[k - 1] - mc[k - 2], n2 = n - mc[k - 1];
    if (n1 == 0) {
      sig[k] = (n2 > 0) ? sum : 0.0;
    } else if (n2 == 0) {
      sig[k - 1] = sum;
    } else {
      const double lo = n1 * v[k - 2];
      const double hi = std::min(n1 * v[k - 1], sum - n2 * v[k - 1]);
      sig[k - 1] = std::clamp(0.5 * (lo + hi), lo, std::max(lo, hi));
      sig[k] = sum - sig[k - 1];
    }
  } else if (mid > 0) {
    const double sum = (v[mid + 1] * mc[mid + 1] + c[mid + 1]) - (v[mid - 1] * mc[mid - 1] + c[mid - 1]);
    const int n1 = mc[mid] - mc[mid - 1], n2 = mc[mid + 1] - mc[mid];
    if (n1 == 0) {
      sig[mid + 1] = (n2 > 0) ? sum : 0.0;
    } else if (n2 == 0) {
      sig[mid] = sum;
    } else {
      const double lo = std::max(n1 * v[mid - 1], sum - n2 * v[mid + 1]);
      const double hi = std::min(n1 * v[mid], sum - n2 * v[mid]);
      sig[mid] = std::clamp(0.5 * (lo + hi), std::min(lo, hi), std::max(lo, hi));
      sig[mid + 1] = sum - sig[mid];
    }
  }

  std::vector<double> z;
  z.reserve(n);
  const double inf = std::numeric_limits<double>::infinity();
  for (int j = 0; j <= k; ++j) {
    const int nj = (j == 0) ? mc[0] : (j == k) ? n - mc[k - 1] : mc[j] - mc[j - 1];
    if (nj <= 0) continue;
    double atom = sig[j] / nj;
    if (j == 0) {
      atom = std::min(atom, v[0]);
    } else if (j == k) {
      atom = std::max(atom, std::nextafter(v[k - 1], inf));
    } else {
      atom = std::min(atom, v[j]);
      if (atom <= v[j - 1]) atom = std::nextafter(v[j - 1], inf);
    }
    z.insert(z.end(), nj, atom);
  }
  return z;
}

std::optional<std::vector<double>> direct_expectile_atoms(const std::vector<double>& v,
                                                          const std::vector<double>& tau,
                                                          int n) {
  const int k = static_cast<int>(v.size());
  if (n < k || n > 4096) return std::nullopt;
  if (k == 1) return std::vector<double>(n, v[0]);  // a point mass has every expectile
  for (int i = 1; i < k; ++i) {
    if (!(v[i] > v[i - 1])) return std::nullopt;  // tied values: no exact uniform root
  }
  int mid = -1;
  for (int i = 0; i < k; ++i) {
    if (std::abs(tau[i] - 0.5) <= 1e-12) {
      mid = i;
      break;
    }
  }

  std::vector<double> totals;
  if (mid >= 0) {
    totals.push_back(n * v[mid]);  // tau = 1/2 pins the mean
  } else {
    // Without a pinned mean the total T is free. Count feasibility only
    // changes where some box bound crosses an integer; those crossings are
    // affine in T, so probing every crossing and the midpoints in between
    // covers all regimes.
    std::vector<double> a(k), b(k);
    for (int i = 0; i < k; ++i) {
      a[i] = tau[i] * v[i] * n / (1.0 - 2.0 * tau[i]);
      b[i] = tau[i] / (1.0 - 2.0 * tau[i]);
    }
    std::vector<double> crit;
    for (int j = 1; j < k; ++j) {
      const double da = a[j] - a[j - 1], db = b[j] - b[j - 1], dv = v[j] - v[j - 1];
      if (db == 0.0) continue;
      for (int m = 0; m <= n; ++m) crit.push_back((da + m * dv) / db);
    }
    crit.push_back(n * v[0]);
    if (b[k - 1] != -1.0) crit.push_back((a[k - 1] + n * v[k - 1]) / (1.0 + b[k - 1]));
    const double span = v[k - 1] - v[0];
    const double lo = n * (v[0] - span - 1.0), hi = n * (v[k - 1] + span + 1.0);
    std::sort(crit.begin(), crit.end());
    std::vector<double> keep;
    for (double t : crit) {
      if (t < lo || t > hi) continue;
      if (keep.empty() || t > keep.back() + 1e-12 * std::max(1.0, std::abs(t))) {
        keep.push_back(t);
      }
    }
    for (std::size_t i = 0; i < keep.size(); ++i) {
      totals.push_back(keep[i]);
      if (i + 1 < keep.size()) totals.push_back(0.5 * (keep[i] + keep[i + 1]));
    }
    if (totals.empty()) totals.push_back(0.5 * n * (v[0] + v[k - 1]));
  }

  double vmax = 0.0;
  for (double x : v) vmax = std::max(vmax, std::abs(x));
  const double exact = 1e-11 * std::max(1.0, vmax);

  std::optional<std::vector<double>> best;
  double best_res = std::numeric_limits<double>::infinity();
  for (double total : totals) {
    auto z = attempt_direct(v, tau, n, mid, total);
    if (!z) continue;
    const double res = expectile_residual(*z, v, tau);
    if (res < best_res) {
      best_res = res;
      best = std::move(z);
    }
    if (best_res <= exact) break;
  }
  return best;
}

// Per-atom term of the Huber gradient: h_i(t) = w * clamp(v_i - t, +-kappa)
// with w = tau on the right branch. Continuous, nonincreasing, piecewise
// affine in t with kinks at v_i - kappa, v_i, v_i + kappa.
double huber_h(double t, double v, double tau, double kappa) {
  const double w = (t > v) ? tau : (1.0 - tau);
  return w * std::clamp(v - t, -kappa, kappa);
}

// Exact Huber imputation by count search. Cutting the line at every kink of
// every equation yields cells on which all K gradient terms are affine, so a
// fixed per-cell atom count reduces the system to linear equations in the
// per-cell atom sums. Counts are searched depth-first in cell order; interval
// bounds on each equation's attainable value prune the tree, and a surviving
// assignment is resolved by a small least-squares solve checked against the
// cell boxes and the exact gradient.
struct HuberCountSearch {
  std::vector<double> v, tau;
  double kappa = 1.0;
  int n_atoms = 0;
  double eps = 0.0;     // slack on the unnormalised equations sum_p h_i
  double tol = 0.0;     // acceptance threshold on max_i |g_i|
  long budget = 0;      // node limit

  std::vector<double> bp;                   // cell boundaries, merged
  std::vector<std::vector<double>> hl, hr;  // h_i at the cell edges
  std::vector<int> seed;                    // heuristic count per cell
  std::vector<int> cnt;
  std::vector<double> lo, hi;  // committed contribution bounds per equation
  long nodes = 0;
  bool found = false;
  std::vector<double> root;
  std::vector<double> best;
  double best_res = std::numeric_limits<double>::infinity();

  double residual(const std::vector<double>& z) const {
    double m = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      double acc = 0.0;
      for (double t : z) acc += huber_h(t, v[i], tau[i], kappa);
      m = std::max(m, std::abs(acc) / static_cast<double>(z.size()));
    }
    return m;
  }

  void build(const std::vector<double>& seed_atoms) {
    const std::size_t k = v.size();
    std::vector<double> raw;
    raw.reserve(3 * k);
    for (std::size_t i = 0; i < k; ++i) {
      raw.push_back(v[i] - kappa);
      raw.push_back(v[i]);
      raw.push_back(v[i] + kappa);
    }
    std::sort(raw.begin(), raw.end());
    const double scale = std::max({1.0, std::abs(raw.front()), std::abs(raw.back())});
    bp.clear();
    for (double b : raw) {
      if (bp.empty() || b - bp.back() > 1e-12 * scale) bp.push_back(b);
    }
    const std::size_t cells = bp.size() + 1;
    hl.assign(k, std::vector<double>(cells));
    hr.assign(k, std::vector<double>(cells));
    for (std::size_t i = 0; i < k; ++i) {
      for (std::size_t c = 0; c < cells; ++c) {
        hl[i][c] = (c == 0) ? (1.0 - tau[i]) * kappa
                            : huber_h(bp[c - 1], v[i], tau[i], kappa);
        hr[i][c] = (c == cells - 1) ? -tau[i] * kappa
                                    : huber_h(bp[c], v[i], tau[i], kappa);
      }
    }
    seed.assign(cells, 0);
    for (double t : seed_atoms) {
      const std::size_t c = std::lower_bound(bp.begin(), bp.end(), t) - bp.begin();
      seed[c]++;
    }
    cnt.assign(cells, 0);
    lo.assign(k, 0.0);
    hi.assign(k, 0.0);
  }

  bool run() {
    dfs(0, n_atoms);
    return found;
  }

  void dfs(std::size_t cell, int rem) {
    if (found || ++nodes > budget) return;
    const std::size_t k = v.size();
    const std::size_t cells = bp.size() + 1;
    for (std::size_t i = 0; i < k; ++i) {
      double l = lo[i], h = hi[i];
      if (rem > 0) {
        // remaining atoms sit in this cell or beyond; h_i is nonincreasing
        l -= rem * tau[i] * kappa;
        h += rem * (cell < cells ? hl[i][cell] : -tau[i] * kappa);
      }
      if (l > eps || h < -eps) return;
    }
    if (cell == cells) {
      if (rem == 0) leaf();
      return;
    }
    const int s = std::clamp(seed[cell], 0, rem);
    const int span = std::max(s, rem - s);
    for (int d = 0; d <= span && !found; ++d) {
      for (int sgn = 0; sgn < (d == 0 ? 1 : 2); ++sgn) {
        const int n = s + (sgn == 0 ? d : -d);
        if (n < 0 || n > rem) continue;
        if (cell == cells - 1 && n != rem) continue;
        cnt[cell] = n;
        for (std::size_t i = 0; i < k; ++i) {
          lo[i] += n * hr[i][cell];
          hi[i] += n * hl[i][cell];
        }
        dfs(cell + 1, rem - n);
        for (std::size_t i = 0; i < k; ++i) {
          lo[i] -= n * hr[i][cell];
          hi[i] -= n * hl[i][cell];
        }
        if (found) return;
      }
    }
  }

  void leaf() {
    const std::size_t k = v.size();
    const std::size_t cells = bp.size() + 1;
    const double smax = std::max({1.0, std::abs(bp.front()), std::abs(bp.back())});

    // Slopes and anchors per occupied cell; cells where every equation is
    // saturated contribute a constant and pin no atom sum. Cells with equal
    // coefficient columns are merged: only their combined sum is determined,
    // and solving per group keeps the normal equations full rank.
    std::vector<std::size_t> active;
    std::vector<int> group;  // group id per active cell
    std::vector<double> r(k, 0.0);
    std::vector<double> beta;  // k x group, column-major chunks appended
    for (std::size_t c = 0; c < cells; ++c) {
      if (cnt[c] == 0) continue;
      const bool interior = c > 0 && c + 1 < cells;
      const double tm = interior ? 0.5 * (bp[c - 1] + bp[c])
                        : (c == 0 ? bp.front() : bp.back() + kappa);
      bool live = false;
      std::vector<double> col(k, 0.0);
      for (std::size_t i = 0; i < k; ++i) {
        double b = 0.0;
        if (interior && std::abs(v[i] - tm) < kappa) {
          b = (tm > v[i]) ? -tau[i] : -(1.0 - tau[i]);
        }
        col[i] = b;
        if (b != 0.0) live = true;
        r[i] -= cnt[c] * huber_h(tm, v[i], tau[i], kappa) - b * cnt[c] * tm;
      }
      if (!live) continue;
      int g = -1;
      for (std::size_t q = 0; q * k < beta.size(); ++q) {
        if (std::equal(col.begin(), col.end(), beta.begin() + q * k)) {
          g = static_cast<int>(q);
          break;
        }
      }
      if (g < 0) {
        g = static_cast<int>(beta.size() / k);
        beta.insert(beta.end(), col.begin(), col.end());
      }
      active.push_back(c);
      group.push_back(g);
    }
    const std::size_t m = beta.size() / k;
    std::vector<double> gsig(m, 0.0);
    if (m > 0) {
      std::vector<double> a(m * m, 0.0), rhs(m, 0.0);
      for (std::size_t p = 0; p < m; ++p) {
        for (std::size_t q = 0; q < m; ++q) {
          double s = 0.0;
          for (std::size_t i = 0; i < k; ++i) s += beta[p * k + i] * beta[q * k + i];
          a[p * m + q] = s;
        }
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) s += beta[p * k + i] * r[i];
        rhs[p] = s;
      }
      double dmax = 0.0;
      for (std::size_t p = 0; p < m; ++p) dmax = std::max(dmax, a[p * m + p]);
      auto am = a;
      auto rh = rhs;
      if (!spd_solve(am, rh, m)) {
        am = a;
        rh = rhs;
        for (std::size_t p = 0; p < m; ++p) am[p * m + p] += 1e-10 * std::max(dmax, 1.0);
        if (!spd_solve(am, rh, m)) return;
      }
      gsig = rh;
      // consistency of the overdetermined system
      for (std::size_t i = 0; i < k; ++i) {
        double acc = -r[i];
        for (std::size_t p = 0; p < m; ++p) acc += beta[p * k + i] * gsig[p];
        if (std::abs(acc) > eps) return;
      }
      // box check on each group's combined sum
      for (std::size_t g = 0; g < m; ++g) {
        double blo = 0.0, bhi = 0.0;
        int ng = 0;
        for (std::size_t p = 0; p < active.size(); ++p) {
          if (group[p] != static_cast<int>(g)) continue;
          const std::size_t c = active[p];
          blo += cnt[c] * bp[c - 1];
          bhi += cnt[c] * bp[c];
          ng += cnt[c];
        }
        const double slack = 1e-9 * smax * ng;
        if (gsig[g] < blo - slack || gsig[g] > bhi + slack) return;
        gsig[g] = std::clamp(gsig[g], blo, bhi);
      }
    }

    // split each group's sum over its cells: lower edges first, then surplus
    std::vector<double> sig(active.size(), 0.0);
    for (std::size_t g = 0; g < m; ++g) {
      double surplus = gsig[g];
      for (std::size_t p = 0; p < active.size(); ++p) {
        if (group[p] != static_cast<int>(g)) continue;
        const std::size_t c = active[p];
        sig[p] = cnt[c] * bp[c - 1];
        surplus -= sig[p];
      }
      for (std::size_t p = 0; p < active.size() && surplus > 0.0; ++p) {
        if (group[p] != static_cast<int>(g)) continue;
        const std::size_t c = active[p];
        const double add = std::min(surplus, cnt[c] * (bp[c] - bp[c - 1]));
        sig[p] += add;
        surplus -= add;
      }
    }

    std::vector<double> z;
    z.reserve(static_cast<std::size_t>(n_atoms));
    std::size_t ap = 0;
    for (std::size_t c = 0; c < cells; ++c) {
      if (cnt[c] == 0) continue;
      double pos;
      if (ap < active.size() && active[ap] == c) {
        pos = sig[ap] / cnt[c];
        pos = std::clamp(pos, bp[c - 1], bp[c]);
        ++ap;
      } else if (c == 0) {
        pos = bp.front();
      } else if (c + 1 == cells) {
        pos = bp.back() + kappa;
      } else {
        pos = 0.5 * (bp[c - 1] + bp[c]);
      }
      z.insert(z.end(), static_cast<std::size_t>(cnt[c]), pos);
    }
    const double res = residual(z);
    if (res <= tol) {
      found = true;
      root = std::move(z);
    } else if (res < best_res) {
      best_res = res;
      best = std::move(z);
    }
  }
};

void check_tau_grid(std::span<const double> values, std::span<const double> taus,
                    const char* who) {
  if (values.empty() || values.size() != taus.size()) {
    throw InvalidArgumentError(std::string(who) + ": values/taus size mismatch");
  }
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0 && taus[i] < 1.0)) {
      throw InvalidArgumentError(std::string(who) + ": tau outside (0, 1)");
    }
    if (i > 0 && !(taus[i] > taus[i - 1])) {
      throw InvalidArgumentError(std::string(who) + ": taus must be strictly increasing");
    }
    if (i > 0 && values[i] < values[i - 1] - 1e-12) {
      throw InfeasibleStatisticsError(std::string(who) +
                                      ": statistic values must be nondecreasing");
    }
  }
}

std::size_t resolve_n_atoms(const SolverOptions& options, std::size_t k, const char* who) {
  const std::size_t n =
      options.n_atoms == 0 ? k : static_cast<std::size_t>(options.n_atoms);
  if (options.n_atoms < 0 || (options.n_atoms != 0 && n < k)) {
    throw InvalidArgumentError(std::string(who) + ": n_atoms must be 0 (= K) or >= K");
  }
  return n;
}

}  // namespace

DiscreteDist impute_expectiles(std::span<const double> values, std::span<const double> taus,
                               const SolverOptions& options, SolveDiagnostics* diag) {
  check_tau_grid(values, taus, "impute_expectiles");
  const std::size_t k = values.size();
  const std::size_t n = resolve_n_atoms(options, k, "impute_expectiles");
  std::vector<double> v(values.begin(), values.end());
  std::vector<double> t(taus.begin(), taus.end());

  int mid = -1;
  for (std::size_t i = 0; i < k; ++i) {
    if (std::abs(t[i] - 0.5) <= 1e-12) {
      mid = static_cast<int>(i);
      break;
    }
  }
  // The tau = 1/2 expectile is the mean, and a uniform shift moves the mean
  // one-for-one. Pin it exactly after any solve; keep the shift unless it
  // breaks a tolerance the solve had already met.
  auto pin_mean = [&](std::vector<double>& z, double res) {
    if (mid < 0) return res;
    double s = 0.0;
    for (double x : z) s += x;
    const double delta = v[static_cast<std::size_t>(mid)] - s / static_cast<double>(z.size());
    if (delta == 0.0) return res;
    for (double& x : z) x += delta;
    const double shifted = expectile_residual(z, v, t);
    if (res <= options.tolerance && shifted > options.tolerance) {
      for (double& x : z) x -= delta;
      return res;
    }
    return shifted;
  };

  if (auto z = direct_expectile_atoms(v, t, static_cast<int>(n))) {
    double res = expectile_residual(*z, v, t);
    if (res <= options.tolerance) {
      res = pin_mean(*z, res);
      if (diag) {
        *diag = SolveDiagnostics{};
        diag->converged = true;
        diag->residual = res;
        std::vector<double> g(k);
        make_expectile_system(v, t).grad(*z, g);
        diag->objective_trace = {sumsq(g)};
      }
      return DiscreteDist::uniform_atoms(std::move(*z));
    }
  }

  // Tied or otherwise infeasible inputs: fall back to descent for a
  // best-effort approximation (or a diagnosed failure in strict mode).
  auto sys = make_expectile_system(v, t);
  SolveDiagnostics local;
  auto z = solve_imputation(sys, init_atoms(values, n), k, options, &local,
                            "impute_expectiles");
  local.residual = pin_mean(z, local.residual);
  if (diag) *diag = local;
  return DiscreteDist::uniform_atoms(std::move(z));
}

DiscreteDist impute_huber_quantiles(std::span<const double> values,
                                    std::span<const double> taus, double kappa,
                                    const SolverOptions& options, SolveDiagnostics* diag) {
  check_tau_grid(values, taus, "impute_huber_quantiles");
  if (!(kappa > 0.0)) {
    throw InvalidArgumentError("impute_huber_quantiles: kappa must be positive");
  }
  const std::size_t k = values.size();
  const std::size_t n = resolve_n_atoms(options, k, "impute_huber_quantiles");
  std::vector<double> v(values.begin(), values.end());
  std::vector<double> t(taus.begin(), taus.end());

  auto sys = make_huber_system(v, t, kappa);
  SolverOptions attempt = options;
  attempt.throw_on_failure = false;
  SolveDiagnostics best_d;
  auto z = solve_imputation(sys, init_atoms(values, n), k, attempt, &best_d,
                            "impute_huber_quantiles");

  if (!best_d.converged) {
    // Descent stalls on saturated plateaus of the squared-gradient surface,
    // so resolve the root exactly by count search (see HuberCountSearch).
    // Strict callers get a deep search; best-effort callers a bounded one,
    // since their targets are usually infeasible and would pay the full
    // exhaustion cost on every call. When n is a multiple of k, a k-atom
    // root replicated n/k times leaves every per-atom average unchanged and
    // so solves the n-atom system exactly; that stage runs first on the
    // smallest tree, with the full n-atom search as fallback for targets
    // only reachable with n distinct atoms.
    std::vector<double> zs = z;
    std::sort(zs.begin(), zs.end());
    auto search_stage = [&](std::size_t sn) {
      HuberCountSearch hs;
      hs.v = v;
      hs.tau = t;
      hs.kappa = kappa;
      hs.n_atoms = static_cast<int>(sn);
      hs.eps = 1e-9 * static_cast<double>(sn) * std::max(1.0, kappa);
      hs.tol = options.tolerance;
      hs.budget = options.throw_on_failure ? 1000000 : 1000;
      hs.build(init_atoms(values, sn));
      if (!hs.run()) {
        // second pass seeded by the descent iterate, which approximates the
        // root's spread better than the raw values when atoms sit far
        // outside the value range
        hs.nodes = 0;
        hs.budget = options.throw_on_failure ? 1000000 : 500;
        hs.build(init_atoms(zs, sn));
        hs.run();
      }
      best_d.iterations += static_cast<int>(hs.nodes);
      auto expand = [&](const std::vector<double>& atoms) {
        std::vector<double> out;
        out.reserve(n);
        for (double x : atoms) out.insert(out.end(), n / sn, x);
        return out;
      };
      if (hs.found) {
        z = expand(hs.root);
        best_d.converged = true;
        best_d.residual = hs.residual(z);
        std::vector<double> g(k);
        sys.grad(z, g);
        best_d.objective_trace = {sumsq(g)};
      } else if (hs.best_res < best_d.residual) {
        // replication keeps per-atom averages, so the k-atom residual is
        // the n-atom residual of the expanded vector
        z = expand(hs.best);
        best_d.residual = hs.best_res;
      }
    };
    if (n > k && n % k == 0) search_stage(k);
    if (!best_d.converged) search_stage(n);
  }

  if (diag) *diag = best_d;
  if (!best_d.converged && options.throw_on_failure) {
    throw SolverConvergenceError("impute_huber_quantiles: residual " +
                                     std::to_string(best_d.residual) +
                                     " above tolerance after " +
                                     std::to_string(best_d.iterations) + " iterations",
                                 best_d.residual, best_d.iterations);
  }
  return DiscreteDist::uniform_atoms(std::move(z));
}

DiscreteDist impute(const StatisticSet& set, std::span<const double> values,
                    const SolverOptions& options, SolveDiagnostics* diag) {
  if (values.size() != set.size()) {
    throw InvalidArgumentError("impute: statistic vector size mismatch");
  }
  switch (set.kind()) {
    case StatKind::kQuantile: {
      if (diag) {
        *diag = SolveDiagnostics{};
        diag->converged = true;
      }
      return impute_qdrl(values);
    }
    case StatKind::kCategoricalExpectation: {
      if (diag) {
        *diag = SolveDiagnostics{};
        diag->converged = true;
      }
      const auto z = set.categorical_supports();
      return impute_cdrl(values, z);
    }
    case StatKind::kExpectile: {
      std::vector<double> taus;
      taus.reserve(set.size());
      for (const auto& f : set.families()) taus.push_back(f.tau);
      return impute_expectiles(values, taus, options, diag);
    }
    case StatKind::kHuberQuantile: {
      std::vector<double> taus;
      taus.reserve(set.size());
      for (const auto& f : set.families()) taus.push_back(f.tau);
      return impute_huber_quantiles(values, taus, set.families().front().kappa, options,
                                    diag);
    }
    case StatKind::kMoment:
      throw InvalidArgumentError("impute: moment statistics have no imputation strategy");
  }
  throw InvalidArgumentError("impute: unknown statistic kind");
}

DiscreteDist impute_lenient(const StatisticSet& set, std::vector<double> values,
                            const SolverOptions& options, SolveDiagnostics* diag) {
  if (values.size() != set.size()) {
    throw InvalidArgumentError("impute_lenient: statistic vector size mismatch");
  }
  SolveDiagnostics local;
  SolveDiagnostics* d = diag ? diag : &local;
  *d = SolveDiagnostics{};

  // Enforce feasibility of the inputs: clip categorical values into [0, 1]
  // and force monotonicity with a running maximum. Stochastic updates can
  // transiently violate both.
  const bool categorical = set.kind() == StatKind::kCategoricalExpectation;
  bool clamped = false;
  double run = categorical ? 0.0 : -std::numeric_limits<double>::infinity();
  for (double& v : values) {
    double nv = categorical ? std::clamp(v, 0.0, 1.0) : v;
    if (nv < run) {
      nv = run;
    } else {
      run = nv;
    }
    if (nv != v) clamped = true;
    v = nv;
  }

  SolverOptions opts = options;
  opts.throw_on_failure = false;

  DiscreteDist out = [&] {
    switch (set.kind()) {
      case StatKind::kQuantile:
        d->converged = true;
        return impute_qdrl(values);
      case StatKind::kCategoricalExpectation: {
        d->converged = true;
        return impute_cdrl(values, set.categorical_supports());
      }
      case StatKind::kExpectile: {
        std::vector<double> taus;
        for (const auto& f : set.families()) taus.push_back(f.tau);
        return impute_expectiles(values, taus, opts, d);
      }
      case StatKind::kHuberQuantile: {
        std::vector<double> taus;
        for (const auto& f : set.families()) taus.push_back(f.tau);
        return impute_huber_quantiles(values, taus, set.families().front().kappa, opts, d);
      }
      case StatKind::kMoment:
        throw InvalidArgumentError("impute_lenient: moment statistics have no imputation");
    }
    throw InvalidArgumentError("impute_lenient: unknown statistic kind");
  }();
  d->clamped_inputs = clamped;
  return out;
}

double imputation_residual(const DiscreteDist& d, const StatisticSet& set,
                           std::span<const double> values) {
  if (values.size() != set.size()) {
    throw InvalidArgumentError("imputation_residual: statistic vector size mismatch");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    worst = std::max(worst, std::abs(evaluate(set[i], d) - values[i]));
  }
  return worst;
}

}  // namespace distrl
