#include "distrl/environments.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "distrl/errors.hpp"

namespace distrl {

namespace {

void check_atoms(int n, const char* who) {
  if (n < 1) throw InvalidArgumentError(std::string(who) + ": need at least one atom");
}

}  // namespace

DiscreteDist discretized_uniform(double lo, double hi, int n) {
  check_atoms(n, "discretized_uniform");
  if (!(hi > lo)) throw InvalidArgumentError("discretized_uniform: need hi > lo");
  return discretize_quantiles([&](double u) { return lo + (hi - lo) * u; }, n);
}

DiscreteDist discretized_gaussian(double mean, double stddev, int n) {
  check_atoms(n, "discretized_gaussian");
  if (!(stddev > 0.0)) throw InvalidArgumentError("discretized_gaussian: need stddev > 0");
  return discretize_quantiles([&](double u) { return mean + stddev * normal_quantile(u); },
                              n);
}

DiscreteDist discretized_exponential(double rate, int n) {
  check_atoms(n, "discretized_exponential");
  if (!(rate > 0.0)) throw InvalidArgumentError("discretized_exponential: need rate > 0");
  return discretize_quantiles([&](double u) { return -std::log1p(-u) / rate; }, n);
}

DiscreteDist discretized_reflected_exponential(double hi, int n) {
  check_atoms(n, "discretized_reflected_exponential");
  return discretize_quantiles([&](double u) { return hi + std::log(u); }, n);
}

DiscreteDist bimodal_reward(int n) {
  check_atoms(n, "bimodal_reward");
  const int half = n / 2;
  if (half < 1 || n % 2 != 0) {
    throw InvalidArgumentError("bimodal_reward: need an even atom count");
  }
  const DiscreteDist lobes[] = {discretized_gaussian(-1.0, 0.25, half),
                                discretized_gaussian(1.0, 0.25, half)};
  const double weights[] = {0.5, 0.5};
  return mixture(std::span<const DiscreteDist>(lobes), std::span<const double>(weights));
}

TabularMdp build_nchain(int n, double p_forward, double gamma,
                        const DiscreteDist& goal_reward) {
  if (n < 2) throw InvalidArgumentError("build_nchain: need n >= 2");
  if (!(p_forward > 0.0) || p_forward > 1.0) {
    throw InvalidArgumentError("build_nchain: need p_forward in (0, 1]");
  }
  const int goal = n - 1;
  TabularMdp mdp(n, 2, gamma);
  for (int x = 0; x < goal; ++x) {
    std::vector<double> advance(n, 0.0), reset(n, 0.0);
    advance[x + 1] += p_forward;
    advance[0] += 1.0 - p_forward;
    reset[0] += p_forward;
    reset[x + 1] += 1.0 - p_forward;
    mdp.set_transition(x, 0, advance);
    mdp.set_transition(x, 1, reset);
    for (int a = 0; a < 2; ++a) {
      mdp.set_reward(x, a, 0, DiscreteDist::dirac(-1.0));
      if (x + 1 == goal) mdp.set_reward(x, a, goal, goal_reward);
    }
  }
  mdp.set_terminal(goal);
  mdp.set_start_state(0);
  mdp.validate();
  return mdp;
}

TabularMdp build_absorbing_chain(int len, double gamma, const DiscreteDist& terminal_reward) {
  if (len < 2) throw InvalidArgumentError("build_absorbing_chain: need len >= 2");
  const int sink = len;
  TabularMdp mdp(len + 1, 1, gamma);
  for (int x = 0; x + 1 < len; ++x) {
    std::vector<double> row(len + 1, 0.0);
    row[x + 1] = 1.0;
    mdp.set_transition(x, 0, row);
  }
  std::vector<double> last(len + 1, 0.0);
  last[sink] = 1.0;
  mdp.set_transition(len - 1, 0, last);
  mdp.set_reward(len - 1, 0, sink, terminal_reward);
  mdp.set_terminal(sink);
  mdp.set_start_state(0);
  mdp.validate();
  return mdp;
}

TabularMdp build_control_mdp(int reward_atoms) {
  check_atoms(reward_atoms, "build_control_mdp");
  const int sink = 5;
  TabularMdp mdp(6, 2, 1.0);
  auto go = [&](int x, int a, int y) {
    std::vector<double> row(6, 0.0);
    row[y] = 1.0;
    mdp.set_transition(x, a, row);
  };
  go(0, 0, 1);
  go(0, 1, 2);
  for (int a = 0; a < 2; ++a) {
    go(1, a, 3);
    go(2, a, 4);
    go(3, a, sink);
    go(4, a, sink);
    mdp.set_reward(3, a, sink, discretized_exponential(1.0, reward_atoms));
    mdp.set_reward(4, a, sink, discretized_reflected_exponential(1.85, reward_atoms));
  }
  mdp.set_terminal(sink);
  mdp.set_start_state(0);
  mdp.validate();
  return mdp;
}

TabularMdp build_quantile_nonclosed_mdp(NonclosedVariant variant, int k_quantiles,
                                        double gamma, int reward_atoms) {
  if (k_quantiles < 1) throw InvalidArgumentError("build_quantile_nonclosed_mdp: need K >= 1");
  const double k = k_quantiles;
  DiscreteDist r1 = DiscreteDist::dirac(0.0), r2 = DiscreteDist::dirac(0.0);
  if (variant == NonclosedVariant::kUniform) {
    r1 = discretized_uniform(0.0, 1.0, reward_atoms);
    r2 = discretized_uniform(1.0 / k, 1.0 + 1.0 / k, reward_atoms);
  } else {
    std::vector<double> a1, a2;
    for (int i = 1; i <= k_quantiles; ++i) {
      a1.push_back((2.0 * i - 1.0) / (2.0 * k));
      a2.push_back((2.0 * i + 1.0) / (2.0 * k));
    }
    r1 = DiscreteDist::uniform_atoms(std::move(a1));
    r2 = DiscreteDist::uniform_atoms(std::move(a2));
  }

  const int sink = 3;
  TabularMdp mdp(4, 1, gamma);
  std::vector<double> split(4, 0.0);
  split[1] = 0.5;
  split[2] = 0.5;
  mdp.set_transition(0, 0, split);
  std::vector<double> to_sink(4, 0.0);
  to_sink[sink] = 1.0;
  mdp.set_transition(1, 0, to_sink);
  mdp.set_transition(2, 0, to_sink);
  mdp.set_reward(1, 0, sink, r1);
  mdp.set_reward(2, 0, sink, r2);
  mdp.set_terminal(sink);
  mdp.set_start_state(0);
  mdp.validate();
  return mdp;
}

TabularMdp build_qdrl_mean_counterexample(int k_quantiles) {
  if (k_quantiles < 1) {
    throw InvalidArgumentError("build_qdrl_mean_counterexample: need K >= 1");
  }
  const double k = k_quantiles;
  TabularMdp mdp(2, 2, 1.0);
  std::vector<double> to_sink = {0.0, 1.0};
  mdp.set_transition(0, 0, to_sink);
  mdp.set_transition(0, 1, to_sink);
  mdp.set_reward(0, 0, 1,
                 DiscreteDist({0.0, 1.0}, {(4.0 * k - 1.0) / (4.0 * k), 1.0 / (4.0 * k)}));
  mdp.set_reward(0, 1, 1, DiscreteDist::dirac(1.0 / (8.0 * k)));
  mdp.set_terminal(1);
  mdp.set_start_state(0);
  mdp.validate();
  return mdp;
}

}  // namespace distrl
