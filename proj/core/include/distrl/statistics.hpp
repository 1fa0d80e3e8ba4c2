#pragma once

#include <string>
#include <vector>

#include "distrl/discrete_dist.hpp"

namespace distrl {

// Kinds of statistic functionals the framework can track. A statistic maps
// a distribution to a real number; algorithms learn vectors of them.
enum class StatKind {
  kExpectile,              // argmin of the asymmetric squared loss at level tau
  kQuantile,               // lower tau-quantile
  kHuberQuantile,          // minimiser of the tau-weighted Huber loss, width kappa
  kCategoricalExpectation, // E[h_{z_lo, z_hi}(Z)] with the piecewise-linear kink h
  kMoment,                 // E[Z^k]
};

const char* stat_kind_name(StatKind kind);

// One statistic functional. Only the fields relevant to `kind` are used.
struct StatisticFamily {
  StatKind kind = StatKind::kExpectile;
  double tau = 0.5;     // expectile / quantile / huber-quantile level
  double kappa = 1.0;   // huber width
  double z_lo = 0.0;    // categorical kink: h = 1 below z_lo ...
  double z_hi = 1.0;    // ... 0 above z_hi, linear in between
  int order = 1;        // moment order

  static StatisticFamily expectile(double tau);
  static StatisticFamily quantile(double tau);
  static StatisticFamily huber_quantile(double tau, double kappa);
  static StatisticFamily categorical_expectation(double z_lo, double z_hi);
  static StatisticFamily moment(int order);

  // Scalar identifying the family within its set (tau, z_lo, or order);
  // used for reporting.
  double param() const;
};

// A homogeneous, validated collection of statistic families. Construction
// rejects mixed kinds, non-increasing tau levels, inconsistent kappa,
// non-contiguous categorical windows and duplicate moment orders.
class StatisticSet {
 public:
  explicit StatisticSet(std::vector<StatisticFamily> families);

  StatKind kind() const { return kind_; }
  const std::vector<StatisticFamily>& families() const { return families_; }
  std::size_t size() const { return families_.size(); }
  const StatisticFamily& operator[](std::size_t i) const { return families_[i]; }

  // For categorical sets: the K support points z_1 < ... < z_K whose
  // adjacent pairs form the windows. Throws for other kinds.
  std::vector<double> categorical_supports() const;

  // Levels k / (K + 1), k = 1..K; includes 0.5 for odd K.
  static StatisticSet expectiles(int k);
  static StatisticSet expectiles(std::vector<double> taus);
  // Levels (2k - 1) / (2K), k = 1..K.
  static StatisticSet quantiles(int k);
  static StatisticSet quantiles(std::vector<double> taus);
  static StatisticSet huber_quantiles(int k, double kappa);
  static StatisticSet huber_quantiles(std::vector<double> taus, double kappa);
  // K evenly spaced supports on [z_lo, z_hi] giving K - 1 windows.
  static StatisticSet categorical(double z_lo, double z_hi, int k_supports);
  static StatisticSet categorical(std::vector<double> supports);
  // Orders 1..k.
  static StatisticSet moments(int k);

 private:
  std::vector<StatisticFamily> families_;
  StatKind kind_;
};

// --- Losses and their q-gradients -----------------------------------------
// Conventions: ties Z == q fall on the "below" branch of the expectile and
// quantile losses. The Huber loss is insensitive to the tie convention since
// the per-sample loss and gradient both vanish at Z == q.

// E[(tau 1{Z>q} + (1-tau) 1{Z<=q}) (Z-q)^2].
double er_loss(double q, const DiscreteDist& d, double tau);
// 2 [(1-tau) E[(q-Z) 1{Z<=q}] - tau E[(Z-q) 1{Z>q}]].
double er_loss_grad(double q, const DiscreteDist& d, double tau);

// E[(tau 1{Z>q} + (1-tau) 1{Z<=q}) |Z-q|].
double qr_loss(double q, const DiscreteDist& d, double tau);
// Subgradient (1-tau) P(Z<=q) - tau P(Z>q).
double qr_loss_grad(double q, const DiscreteDist& d, double tau);

// E[(tau 1{Z>q} + (1-tau) 1{Z<q}) H_kappa(Z-q)] with H the Huber kink.
double huber_loss(double q, const DiscreteDist& d, double tau, double kappa);
// E[(tau 1{Z>q} + (1-tau) 1{Z<q}) clamp(q-Z, -kappa, kappa)]; nondecreasing
// and continuous in q.
double huber_loss_grad(double q, const DiscreteDist& d, double tau, double kappa);

// --- Exact statistic evaluators --------------------------------------------

// Unique root of er_loss_grad, found exactly by scanning the piecewise
// linear segments of the gradient. tau in (0, 1).
double expectile(const DiscreteDist& d, double tau);

// Root of huber_loss_grad via bisection on [min - kappa, max + kappa] to an
// interval width of 1e-10.
double huber_quantile(const DiscreteDist& d, double tau, double kappa);

// E[h_{z_lo, z_hi}(Z)]; requires z_lo < z_hi.
double categorical_expectation(const DiscreteDist& d, double z_lo, double z_hi);

// Dispatch on the family kind.
double evaluate(const StatisticFamily& family, const DiscreteDist& d);
std::vector<double> evaluate(const StatisticSet& set, const DiscreteDist& d);

}  // namespace distrl
