#include "distrl/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "distrl/errors.hpp"

namespace distrl {

namespace {

constexpr double kRowSumTol = 1e-12;

void check_row(const std::vector<double>& probs, std::size_t n, const char* what) {
  if (probs.size() != n) {
    throw InvalidArgumentError(std::string(what) + ": row has " +
                               std::to_string(probs.size()) + " entries, expected " +
                               std::to_string(n));
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw InvalidArgumentError(std::string(what) + ": probabilities must be finite and >= 0");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kRowSumTol) {
    throw InvalidArgumentError(std::string(what) + ": probabilities sum to " +
                               std::to_string(sum) + ", expected 1");
  }
}

int sample_row(const std::vector<double>& probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  // u landed in the rounding slack past the last positive entry.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace

Policy::Policy(std::vector<std::vector<double>> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw InvalidArgumentError("Policy: no states");
  const std::size_t num_actions = probs_.front().size();
  if (num_actions == 0) throw InvalidArgumentError("Policy: no actions");
  for (const auto& row : probs_) check_row(row, num_actions, "Policy");
}

Policy Policy::deterministic(int num_states, int action, int num_actions) {
  return deterministic(std::vector<int>(num_states, action), num_actions);
}

Policy Policy::deterministic(std::vector<int> actions, int num_actions) {
  std::vector<std::vector<double>> probs(actions.size());
  for (std::size_t x = 0; x < actions.size(); ++x) {
    if (actions[x] < 0 || actions[x] >= num_actions) {
      throw InvalidArgumentError("Policy::deterministic: action out of range");
    }
    probs[x].assign(num_actions, 0.0);
    probs[x][actions[x]] = 1.0;
  }
  return Policy(std::move(probs));
}

Policy Policy::uniform(int num_states, int num_actions) {
  if (num_actions <= 0) throw InvalidArgumentError("Policy::uniform: no actions");
  return Policy(std::vector<std::vector<double>>(
      num_states, std::vector<double>(num_actions, 1.0 / num_actions)));
}

int Policy::sample(int x, Rng& rng) const { return sample_row(probs_[x], rng); }

TabularMdp::TabularMdp(int num_states, int num_actions, double gamma)
    : num_states_(num_states), num_actions_(num_actions), gamma_(gamma) {
  if (num_states <= 0 || num_actions <= 0) {
    throw InvalidArgumentError("TabularMdp: need at least one state and one action");
  }
  if (!(gamma >= 0.0) || gamma > 1.0) {
    throw InvalidArgumentError("TabularMdp: gamma must lie in [0, 1]");
  }
  const std::size_t pairs = static_cast<std::size_t>(num_states) * num_actions;
  transitions_.assign(pairs, {});
  rewards_.assign(pairs, std::vector<DiscreteDist>(num_states, DiscreteDist::dirac(0.0)));
  terminal_.assign(num_states, false);
}

void TabularMdp::set_start_state(int x) {
  if (x < 0 || x >= num_states_) throw InvalidArgumentError("set_start_state: out of range");
  start_state_ = x;
}

void TabularMdp::set_transition(int x, int a, std::vector<double> probs) {
  if (x < 0 || x >= num_states_ || a < 0 || a >= num_actions_) {
    throw InvalidArgumentError("set_transition: state/action out of range");
  }
  check_row(probs, static_cast<std::size_t>(num_states_), "set_transition");
  transitions_[idx(x, a)] = std::move(probs);
}

void TabularMdp::set_reward(int x, int a, const DiscreteDist& r) {
  for (int x_next = 0; x_next < num_states_; ++x_next) set_reward(x, a, x_next, r);
}

void TabularMdp::set_reward(int x, int a, int x_next, const DiscreteDist& r) {
  if (x < 0 || x >= num_states_ || a < 0 || a >= num_actions_ || x_next < 0 ||
      x_next >= num_states_) {
    throw InvalidArgumentError("set_reward: state/action out of range");
  }
  rewards_[idx(x, a)][x_next] = r;
}

void TabularMdp::set_terminal(int x) {
  if (x < 0 || x >= num_states_) throw InvalidArgumentError("set_terminal: out of range");
  terminal_[x] = true;
  std::vector<double> self(num_states_, 0.0);
  self[x] = 1.0;
  for (int a = 0; a < num_actions_; ++a) {
    transitions_[idx(x, a)] = self;
    rewards_[idx(x, a)].assign(num_states_, DiscreteDist::dirac(0.0));
  }
}

const std::vector<double>& TabularMdp::transition_row(int x, int a) const {
  const auto& row = transitions_[idx(x, a)];
  if (row.empty()) {
    throw InvalidArgumentError("transition_row: (" + std::to_string(x) + ", " +
                               std::to_string(a) + ") was never set");
  }
  return row;
}

const DiscreteDist& TabularMdp::reward(int x, int a, int x_next) const {
  return rewards_[idx(x, a)][x_next];
}

void TabularMdp::validate() const {
  for (int x = 0; x < num_states_; ++x) {
    for (int a = 0; a < num_actions_; ++a) {
      const auto& row = transitions_[idx(x, a)];
      if (row.empty()) {
        throw InvalidArgumentError("validate: transition (" + std::to_string(x) + ", " +
                                   std::to_string(a) + ") was never set");
      }
      check_row(row, static_cast<std::size_t>(num_states_), "validate");
      if (terminal_[x]) {
        if (row[x] != 1.0) {
          throw InvalidArgumentError("validate: terminal state " + std::to_string(x) +
                                     " must self-loop");
        }
        const DiscreteDist& r = rewards_[idx(x, a)][x];
        if (r.size() != 1 || r.atoms()[0] != 0.0) {
          throw InvalidArgumentError("validate: terminal state " + std::to_string(x) +
                                     " must have zero reward");
        }
      }
    }
  }
  if (gamma_ == 1.0) {
    // Undiscounted returns are only finite when every trajectory leaves the
    // non-terminal part in bounded time: require that subgraph acyclic.
    // Colours: 0 unvisited, 1 on stack, 2 done.
    std::vector<int> colour(num_states_, 0);
    std::vector<int> stack;
    for (int root = 0; root < num_states_; ++root) {
      if (colour[root] != 0 || terminal_[root]) continue;
      stack.push_back(root);
      while (!stack.empty()) {
        const int x = stack.back();
        if (colour[x] == 0) {
          colour[x] = 1;
          for (int a = 0; a < num_actions_; ++a) {
            const auto& row = transitions_[idx(x, a)];
            for (int y = 0; y < num_states_; ++y) {
              if (row[y] <= 0.0 || terminal_[y]) continue;
              if (colour[y] == 1) {
                throw InvalidArgumentError(
                    "validate: gamma = 1 requires an acyclic non-terminal transition "
                    "graph, but a cycle passes through state " +
                    std::to_string(y));
              }
              if (colour[y] == 0) stack.push_back(y);
            }
          }
        } else {
          colour[x] = 2;
          stack.pop_back();
        }
      }
    }
  }
}

double rollout(const TabularMdp& mdp, const Policy& policy, int start, Rng& rng,
               int horizon_cap, std::vector<Transition>* trajectory) {
  if (horizon_cap < 0) throw InvalidArgumentError("rollout: horizon_cap must be >= 0");
  if (start < 0 || start >= mdp.num_states()) {
    throw InvalidArgumentError("rollout: start state out of range");
  }
  double ret = 0.0;
  double disc = 1.0;
  int x = start;
  const std::size_t base = trajectory ? trajectory->size() : 0;
  for (int t = 0; t < horizon_cap && !mdp.is_terminal(x); ++t) {
    const int a = policy.sample(x, rng);
    const int x_next = sample_row(mdp.transition_row(x, a), rng);
    const double r = mdp.reward(x, a, x_next).sample(rng);
    ret += disc * r;
    disc *= mdp.gamma();
    if (trajectory) {
      if (trajectory->size() > base) trajectory->back().next_action = a;
      trajectory->push_back({x, a, r, x_next, mdp.is_terminal(x_next), -1});
    }
    x = x_next;
  }
  return ret;
}

DiscreteDist monte_carlo_return_dist(const TabularMdp& mdp, const Policy& policy, int start,
                                     int n, Rng& rng, int horizon_cap) {
  if (n <= 0) throw InvalidArgumentError("monte_carlo_return_dist: need n >= 1");
  std::vector<double> returns(n);
  for (int i = 0; i < n; ++i) returns[i] = rollout(mdp, policy, start, rng, horizon_cap);
  return DiscreteDist::uniform_atoms(std::move(returns));
}

}  // namespace distrl
