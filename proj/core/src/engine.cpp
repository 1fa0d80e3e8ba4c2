#include "distrl/engine.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <utility>

#include "distrl/errors.hpp"

namespace distrl {

namespace {

bool is_naive(Strategy s) {
  return s == Strategy::kNaiveExpectile || s == Strategy::kNaiveHuber;
}

StatKind required_kind(Strategy s) {
  switch (s) {
    case Strategy::kQdrl:
      return StatKind::kQuantile;
    case Strategy::kCdrl:
      return StatKind::kCategoricalExpectation;
    case Strategy::kExpectile:
    case Strategy::kNaiveExpectile:
      return StatKind::kExpectile;
    case Strategy::kHuber:
    case Strategy::kNaiveHuber:
      return StatKind::kHuberQuantile;
  }
  throw InvalidArgumentError("unknown strategy");
}

int mid_expectile_index(const StatisticSet& set) {
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (std::abs(set[i].tau - 0.5) <= 1e-12) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace

const char* strategy_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::kQdrl:
      return "qdrl";
    case Strategy::kCdrl:
      return "cdrl";
    case Strategy::kExpectile:
      return "expectile";
    case Strategy::kHuber:
      return "huber";
    case Strategy::kNaiveExpectile:
      return "naive-expectile";
    case Strategy::kNaiveHuber:
      return "naive-huber";
  }
  return "?";
}

Strategy parse_strategy(const std::string& name) {
  if (name == "qdrl") return Strategy::kQdrl;
  if (name == "cdrl") return Strategy::kCdrl;
  if (name == "expectile") return Strategy::kExpectile;
  if (name == "huber") return Strategy::kHuber;
  if (name == "naive-expectile") return Strategy::kNaiveExpectile;
  if (name == "naive-huber") return Strategy::kNaiveHuber;
  throw InvalidArgumentError("unknown strategy '" + name + "'");
}

StatTable::StatTable(int num_states, int num_actions, StatisticSet set, Strategy strategy,
                     SolverOptions solver)
    : num_states_(num_states),
      num_actions_(num_actions),
      set_(std::move(set)),
      strategy_(strategy),
      solver_(solver) {
  if (num_states_ <= 0 || num_actions_ <= 0) {
    throw InvalidArgumentError("StatTable: need at least one state and action");
  }
  if (set_.kind() != required_kind(strategy_)) {
    throw InvalidArgumentError(std::string("StatTable: strategy ") +
                               strategy_name(strategy_) + " requires " +
                               stat_kind_name(required_kind(strategy_)) +
                               " statistics, got " + stat_kind_name(set_.kind()));
  }
  const std::vector<double> init = evaluate(set_, DiscreteDist::dirac(0.0));
  values_.assign(static_cast<std::size_t>(num_states_) * num_actions_, init);
}

DiscreteDist dist_bellman(const DistTable& eta, const TabularMdp& mdp, const Policy& pi,
                          int x, int a) {
  if (mdp.is_terminal(x)) return DiscreteDist::dirac(0.0);
  std::vector<std::pair<double, DiscreteDist>> parts;
  const auto& row = mdp.transition_row(x, a);
  for (int xn = 0; xn < mdp.num_states(); ++xn) {
    const double p = row[xn];
    if (p == 0.0) continue;
    const DiscreteDist& rdist = mdp.reward(x, a, xn);
    const auto& ratoms = rdist.atoms();
    const auto& rweights = rdist.weights();
    for (std::size_t j = 0; j < ratoms.size(); ++j) {
      const double pr = p * rweights[j];
      if (mdp.is_terminal(xn)) {
        parts.emplace_back(pr, DiscreteDist::dirac(ratoms[j]));
        continue;
      }
      for (int an = 0; an < mdp.num_actions(); ++an) {
        const double pa = pi.prob(xn, an);
        if (pa == 0.0) continue;
        parts.emplace_back(pr * pa, eta[xn][an].pushforward(ratoms[j], mdp.gamma()));
      }
    }
  }
  return mixture(parts);
}

DiscreteDist impute_state_action(const StatTable& table, int x, int a, bool lenient,
                                 SolveDiagnostics* diag) {
  const auto& v = table.values(x, a);
  if (is_naive(table.strategy())) {
    if (diag) {
      *diag = SolveDiagnostics{};
      diag->converged = true;
    }
    return DiscreteDist::uniform_atoms(v);
  }
  SolverOptions opts = table.solver();
  opts.throw_on_failure = false;
  if (lenient) return impute_lenient(table.set(), v, opts, diag);
  return impute(table.set(), v, opts, diag);
}

DistTable impute_table(const StatTable& table, bool lenient) {
  DistTable eta(table.num_states());
  for (int x = 0; x < table.num_states(); ++x) {
    eta[x].reserve(table.num_actions());
    for (int a = 0; a < table.num_actions(); ++a) {
      eta[x].push_back(impute_state_action(table, x, a, lenient));
    }
  }
  return eta;
}

StatTable dp_update(const StatTable& table, const TabularMdp& mdp, const Policy& pi,
                    DpDiagnostics* diag) {
  if (table.num_states() != mdp.num_states() || table.num_actions() != mdp.num_actions()) {
    throw InvalidArgumentError("dp_update: table shape does not match the MDP");
  }
  double worst = 0.0;
  bool all_ok = true;

  DistTable eta(table.num_states());
  for (int x = 0; x < table.num_states(); ++x) {
    eta[x].reserve(table.num_actions());
    for (int a = 0; a < table.num_actions(); ++a) {
      SolveDiagnostics d;
      try {
        eta[x].push_back(impute_state_action(table, x, a, false, &d));
      } catch (const Error& e) {
        throw InfeasibleStatisticsError("dp_update: imputation at (x=" +
                                        std::to_string(x) + ", a=" + std::to_string(a) +
                                        ") failed: " + e.what());
      }
      worst = std::max(worst, d.residual);
      all_ok = all_ok && d.converged;
    }
  }

  StatTable next = table;
  for (int x = 0; x < table.num_states(); ++x) {
    for (int a = 0; a < table.num_actions(); ++a) {
      next.values(x, a) = evaluate(table.set(), dist_bellman(eta, mdp, pi, x, a));
    }
  }
  if (diag) {
    diag->worst_impute_residual = std::max(diag->worst_impute_residual, worst);
    diag->all_imputations_converged = diag->all_imputations_converged && all_ok;
  }
  return next;
}

StatTable dp_fixed_point(StatTable table, const TabularMdp& mdp, const Policy& pi,
                         double tol, int max_sweeps, DpDiagnostics* diag) {
  if (!(tol > 0.0)) throw InvalidArgumentError("dp_fixed_point: tol must be positive");
  DpDiagnostics local;
  DpDiagnostics* d = diag ? diag : &local;
  *d = DpDiagnostics{};
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    StatTable next = dp_update(table, mdp, pi, d);
    double change = 0.0;
    for (int x = 0; x < table.num_states(); ++x) {
      for (int a = 0; a < table.num_actions(); ++a) {
        const auto& old_v = table.values(x, a);
        const auto& new_v = next.values(x, a);
        for (std::size_t i = 0; i < old_v.size(); ++i) {
          change = std::max(change, std::abs(new_v[i] - old_v[i]));
        }
      }
    }
    table = std::move(next);
    d->sweeps = sweep;
    d->residual = change;
    d->residual_history.push_back(change);
    if (change <= tol) return table;
  }
  char msg[192];
  std::snprintf(msg, sizeof(msg),
                "dp_fixed_point: residual %.3e above %.3e after %d sweeps%s", d->residual,
                tol, max_sweeps,
                d->all_imputations_converged
                    ? ""
                    : "; imputation is inexact at some (x, a), the imputed operator "
                      "may have no fixed point at this statistic count");
  throw ConvergenceError(msg, d->residual);
}

UpdateMode default_update_mode(Strategy strategy) {
  return is_naive(strategy) ? UpdateMode::kNaive : UpdateMode::kImputing;
}

SgdStepInfo sgd_update_inplace(StatTable& table, const Transition& t, double alpha,
                               double gamma, UpdateMode mode) {
  if (!(alpha > 0.0)) {
    throw InvalidArgumentError("sgd_update: alpha must be positive");
  }
  if (mode == UpdateMode::kNaive && table.strategy() == Strategy::kCdrl) {
    throw InvalidArgumentError("sgd_update: cdrl has no naive mode");
  }
  SgdStepInfo info;

  DiscreteDist target = DiscreteDist::dirac(t.reward);
  if (!t.next_terminal) {
    if (t.next_action < 0) {
      throw InvalidArgumentError("sgd_update: bootstrapping needs next_action");
    }
    const auto& nv = table.values(t.next_state, t.next_action);
    if (mode == UpdateMode::kNaive) {
      target = DiscreteDist::uniform_atoms(nv).pushforward(t.reward, gamma);
    } else {
      SolverOptions opts = table.solver();
      opts.throw_on_failure = false;
      SolveDiagnostics d;
      target = impute_lenient(table.set(), nv, opts, &d).pushforward(t.reward, gamma);
      info.imputation_converged = d.converged;
      info.inputs_clamped = d.clamped_inputs;
    }
  }

  auto& v = table.values(t.state, t.action);
  const StatisticSet& set = table.set();
  if (set.kind() == StatKind::kCategoricalExpectation) {
    // The Cramer distance between value vectors on the shared support is
    // dz * sum_k (v_k - u_k)^2, since the values are the CDF at the inner
    // supports; its gradient drives v toward the target's statistics, which
    // the projection onto the support preserves exactly.
    const auto z = set.categorical_supports();
    const double dz = z[1] - z[0];
    const std::vector<double> u = evaluate(set, target);
    bool clamped = false;
    double run = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      double nv = v[i] - alpha * 2.0 * dz * (v[i] - u[i]);
      const double clipped = std::clamp(nv, 0.0, 1.0);
      if (clipped < run) {
        clamped = clamped || run != nv;
        nv = run;
      } else {
        clamped = clamped || clipped != nv;
        nv = clipped;
        run = nv;
      }
      v[i] = nv;
    }
    info.inputs_clamped = info.inputs_clamped || clamped;
    return info;
  }

  for (std::size_t i = 0; i < v.size(); ++i) {
    const StatisticFamily& f = set[i];
    double g = 0.0;
    switch (set.kind()) {
      case StatKind::kExpectile:
        g = er_loss_grad(v[i], target, f.tau);
        break;
      case StatKind::kQuantile:
        g = qr_loss_grad(v[i], target, f.tau);
        break;
      case StatKind::kHuberQuantile:
        g = huber_loss_grad(v[i], target, f.tau, f.kappa);
        break;
      default:
        throw InvalidArgumentError("sgd_update: unsupported statistic kind");
    }
    v[i] -= alpha * g;
  }
  return info;
}

StatTable sgd_update(StatTable table, const Transition& t, double alpha, double gamma,
                     UpdateMode mode) {
  sgd_update_inplace(table, t, alpha, gamma, mode);
  return table;
}

double mean_estimate(const StatTable& table, int x, int a) {
  const auto& v = table.values(x, a);
  switch (table.strategy()) {
    case Strategy::kExpectile:
    case Strategy::kNaiveExpectile: {
      const int mid = mid_expectile_index(table.set());
      if (mid < 0) {
        throw UnsupportedControlError(
            "mean_estimate: expectile control needs tau = 0.5 in the set");
      }
      return v[mid];
    }
    case Strategy::kQdrl:
    case Strategy::kNaiveHuber: {
      double s = 0.0;
      for (double x_i : v) s += x_i;
      return s / static_cast<double>(v.size());
    }
    case Strategy::kCdrl:
    case Strategy::kHuber: {
      SolverOptions opts = table.solver();
      opts.throw_on_failure = false;
      return impute_lenient(table.set(), v, opts, nullptr).mean();
    }
  }
  throw InvalidArgumentError("mean_estimate: unknown strategy");
}

int greedy_action(const StatTable& table, int x) {
  int best = 0;
  double best_mean = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < table.num_actions(); ++a) {
    const double m = mean_estimate(table, x, a);
    if (m > best_mean) {
      best_mean = m;
      best = a;
    }
  }
  return best;
}

namespace {

int behaviour_action(const StatTable& table, const Policy* policy, bool control,
                     double epsilon, int x, Rng& rng) {
  if (!control) return policy->sample(x, rng);
  if (uniform01(rng) < epsilon) {
    return static_cast<int>(
        uniform_index(rng, static_cast<std::uint64_t>(table.num_actions())));
  }
  return greedy_action(table, x);
}

}  // namespace

TrainResult train(StatTable table, const TabularMdp& mdp, const Policy* policy,
                  const TrainOptions& options, const MetricSink& sink) {
  if (table.num_states() != mdp.num_states() || table.num_actions() != mdp.num_actions()) {
    throw InvalidArgumentError("train: table shape does not match the MDP");
  }
  if (!options.control && policy == nullptr) {
    throw InvalidArgumentError("train: evaluation mode needs a policy");
  }
  if (options.steps < 0) throw InvalidArgumentError("train: steps must be >= 0");

  const UpdateMode mode = default_update_mode(table.strategy());
  Rng rng = make_stream(options.seed, "train");

  TrainResult result{std::move(table)};
  int x = mdp.start_state();
  int a = -1;
  int episode_len = 0;

  for (int step = 1; step <= options.steps; ++step) {
    if (a < 0) {
      a = behaviour_action(result.table, policy, options.control, options.epsilon, x, rng);
    }
    const int xn = [&] {
      const auto& row = mdp.transition_row(x, a);
      const double u = uniform01(rng);
      double acc = 0.0;
      for (int s = 0; s < mdp.num_states(); ++s) {
        acc += row[s];
        if (u < acc) return s;
      }
      return mdp.num_states() - 1;
    }();
    const double r = mdp.reward(x, a, xn).sample(rng);
    const bool terminal = mdp.is_terminal(xn);
    int an = -1;
    if (!terminal) {
      an = behaviour_action(result.table, policy, options.control, options.epsilon, xn,
                            rng);
    }

    const SgdStepInfo info =
        sgd_update_inplace(result.table, Transition{x, a, r, xn, terminal, an},
                           options.alpha, mdp.gamma(), mode);
    if (info.inputs_clamped) ++result.clamp_events;
    if (!info.imputation_converged) ++result.impute_failures;
    ++result.steps;
    ++episode_len;

    if (sink && options.metric_every > 0 && step % options.metric_every == 0) {
      sink(step, result.table);
    }

    if (terminal || episode_len >= options.horizon_cap) {
      ++result.episodes;
      x = mdp.start_state();
      a = -1;
      episode_len = 0;
    } else {
      x = xn;
      a = an;
    }
  }
  return result;
}

}  // namespace distrl
