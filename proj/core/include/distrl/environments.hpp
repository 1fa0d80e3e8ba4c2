#pragma once

#include "distrl/discrete_dist.hpp"
#include "distrl/mdp.hpp"

namespace distrl {

// Equal-probability discretisations of continuous reward laws (atoms at the
// quantiles of the midpoints (2i - 1) / (2n)).
DiscreteDist discretized_uniform(double lo, double hi, int n = 1000);
DiscreteDist discretized_gaussian(double mean, double stddev, int n = 1000);
// Exp(rate): density rate * exp(-rate * x) on x >= 0, mean 1 / rate.
DiscreteDist discretized_exponential(double rate, int n = 1000);
// Reflected shifted exponential: density exp(x - hi) on x <= hi, mean hi - 1.
DiscreteDist discretized_reflected_exponential(double hi, int n = 1000);
// Equal mixture of N(-1, 0.25^2) and N(1, 0.25^2): two well-separated modes,
// the default terminal reward of the absorbing chain demos.
DiscreteDist bimodal_reward(int n = 1000);

// Chain of n states with a terminal goal at the right end. Two actions:
// `forward` (0) advances right with probability p_forward and otherwise
// resets to the leftmost state; `backward` (1) resets with probability
// p_forward and otherwise advances. Every transition into the leftmost state
// carries reward -1 (including resets from it), reaching the goal carries
// goal_reward, all else 0. Start state is the leftmost.
TabularMdp build_nchain(int n, double p_forward, double gamma,
                        const DiscreteDist& goal_reward);

// One action, deterministic rightward moves with zero reward; the final
// visible state pays terminal_reward once and the episode ends. (The payout
// rides on a transition into a hidden sink state appended at index len, so
// the return distribution at the final visible state is terminal_reward
// itself.)
TabularMdp build_absorbing_chain(int len, double gamma, const DiscreteDist& terminal_reward);

// Two-action control problem: the first action leads in two steps to a
// terminal paying a discretized Exp(1) (mean 1), the second to a terminal
// paying a discretized reflected exponential on (-inf, 1.85] (mean 0.85).
// gamma = 1; every path terminates within three steps. The mean-optimal
// first action is action 0. States: x0..x4 plus a hidden sink at index 5.
TabularMdp build_control_mdp(int reward_atoms = 1000);

// Reward pair for the quantile-projection counterexample: both choices give
// terminal reward laws whose K learned quantiles coincide at the midpoint
// grid while the laws themselves differ.
enum class NonclosedVariant {
  kUniform,  // Unif([0, 1]) vs Unif([1/K, 1 + 1/K]), discretized
  kComb,     // (1/K) sum_k delta_{(2k-1)/2K} vs (1/K) sum_k delta_{(2k+1)/2K}
};

// Single action; x0 branches equally to x1 and x2, which pay the variant's
// two reward laws and terminate. States: x0, x1, x2 plus a hidden sink.
TabularMdp build_quantile_nonclosed_mdp(NonclosedVariant variant, int k_quantiles,
                                        double gamma, int reward_atoms = 1000);

// Single decision state with two one-step actions: action 0 pays
// ((4K-1)/4K) delta_0 + (1/4K) delta_1 (mean 1/4K), action 1 pays
// delta_{1/8K}. Quantile imputation at K midpoint levels sees action 0 as
// identically zero, so mean-greedy control on imputed quantiles prefers the
// worse action 1.
TabularMdp build_qdrl_mean_counterexample(int k_quantiles);

}  // namespace distrl
