#pragma once

#include <optional>
#include <vector>

#include "distrl/discrete_dist.hpp"
#include "distrl/random.hpp"

namespace distrl {

// A stationary randomised policy over a finite state/action space.
class Policy {
 public:
  explicit Policy(std::vector<std::vector<double>> probs);
  static Policy deterministic(int num_states, int action, int num_actions);
  static Policy deterministic(std::vector<int> actions, int num_actions);
  static Policy uniform(int num_states, int num_actions);

  int num_states() const { return static_cast<int>(probs_.size()); }
  int num_actions() const { return static_cast<int>(probs_.front().size()); }
  const std::vector<double>& probs(int x) const { return probs_[x]; }
  double prob(int x, int a) const { return probs_[x][a]; }
  int sample(int x, Rng& rng) const;

 private:
  std::vector<std::vector<double>> probs_;
};

// A finite MDP with finitely supported reward distributions. Rewards are
// attached per (state, action, next state) so that laws which depend on the
// realised transition (e.g. a penalty for falling back to the start state)
// keep the reward/next-state correlation that return distributions are
// sensitive to; the per-(x, a) case is the special case of a constant row.
// Terminal states self-loop with reward zero, so the return from a terminal
// state is identically 0 and the transition into one contributes exactly
// its reward.
class TabularMdp {
 public:
  TabularMdp(int num_states, int num_actions, double gamma);

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  double gamma() const { return gamma_; }
  int start_state() const { return start_state_; }
  void set_start_state(int x);

  void set_transition(int x, int a, std::vector<double> probs);
  // Same reward law for every realised next state.
  void set_reward(int x, int a, const DiscreteDist& r);
  void set_reward(int x, int a, int x_next, const DiscreteDist& r);
  // Marks x terminal: self-loop under every action with reward 0.
  void set_terminal(int x);

  const std::vector<double>& transition_row(int x, int a) const;
  const DiscreteDist& reward(int x, int a, int x_next) const;
  bool is_terminal(int x) const { return terminal_[x]; }

  // Checks stochastic rows and the discount; gamma = 1 is admitted only
  // when the directed graph over non-terminal states is acyclic (episodes
  // then end in at most num_states steps). Throws InvalidArgumentError.
  void validate() const;

 private:
  std::size_t idx(int x, int a) const {
    return static_cast<std::size_t>(x) * num_actions_ + a;
  }

  int num_states_;
  int num_actions_;
  double gamma_;
  int start_state_ = 0;
  std::vector<std::vector<double>> transitions_;        // [x * A + a] -> probs over x'
  std::vector<std::vector<DiscreteDist>> rewards_;      // [x * A + a][x'] -> law
  std::vector<bool> terminal_;
};

// Return distributions per state/action pair, indexed [x][a].
using DistTable = std::vector<std::vector<DiscreteDist>>;

// One step of an episode. next_action is the action taken from next_state
// by the same behaviour that produced this step (-1 when the episode ends
// there); bootstrapped targets need the (x', a') pair, not just x'.
struct Transition {
  int state;
  int action;
  double reward;
  int next_state;
  bool next_terminal;
  int next_action = -1;
};

// Samples one episode from `start`; stops on entering a terminal state or
// after horizon_cap transitions. Returns the discounted return and
// optionally the trajectory.
double rollout(const TabularMdp& mdp, const Policy& policy, int start, Rng& rng,
               int horizon_cap, std::vector<Transition>* trajectory = nullptr);

// Empirical distribution of n independent rollouts from `start`.
DiscreteDist monte_carlo_return_dist(const TabularMdp& mdp, const Policy& policy, int start,
                                     int n, Rng& rng, int horizon_cap);

struct ReturnDistOptions {
  double tol = 1e-9;          // stop when the sup-W1 sweep change drops below this
  int max_sweeps = 100000;
  std::size_t support_guard = 4'000'000;  // per-distribution atom budget
};

// Distributional policy evaluation by fixed-point iteration from delta_0,
// keeping exact finite supports. Exact (up to the stopping rule) whenever
// supports stay finite, i.e. for terminating transition structures; cyclic
// MDPs make supports grow without bound, which trips the support guard with
// a ConvergenceError - use grid_return_dist for those.
DistTable exact_return_dist(const TabularMdp& mdp, const Policy& policy,
                            const ReturnDistOptions& options = {});

struct GridSpec {
  double lo;
  double hi;
  int n;  // number of grid atoms, >= 2
  double step() const { return (hi - lo) / (n - 1); }
  double atom(int i) const { return lo + step() * i; }
};

struct GridReturnDistOptions {
  GridSpec grid;
  double tol = 1e-6;
  int max_sweeps = 100000;
};

// Policy evaluation with supports capped to a fixed uniform grid: every
// sweep applies the distributional backup followed by the mean-preserving
// two-neighbour split onto the grid. The projection is a W1 non-expansion,
// so the iteration converges to within
//   step / (2 (1 - gamma)) + tol * gamma / (1 - gamma)
// of the true return distributions in sup-W1. Mass that would land outside
// the grid is clamped to the boundary atoms.
DistTable grid_return_dist(const TabularMdp& mdp, const Policy& policy,
                           const GridReturnDistOptions& options);

}  // namespace distrl
