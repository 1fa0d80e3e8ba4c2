#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "distrl/errors.hpp"
#include "distrl/mdp.hpp"

namespace distrl {

namespace {

// One reachable (next state, next action) pair of a backup, with its joint
// probability P(x'|x, a) pi(a'|x').
struct Branch {
  int x_next;
  int a_next;
  double p;
};

std::vector<std::vector<Branch>> collect_branches(const TabularMdp& mdp,
                                                  const Policy& policy) {
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  std::vector<std::vector<Branch>> branches(static_cast<std::size_t>(S) * A);
  for (int x = 0; x < S; ++x) {
    for (int a = 0; a < A; ++a) {
      auto& out = branches[static_cast<std::size_t>(x) * A + a];
      const auto& row = mdp.transition_row(x, a);
      for (int y = 0; y < S; ++y) {
        if (row[y] <= 0.0) continue;
        for (int b = 0; b < A; ++b) {
          const double p = row[y] * policy.prob(y, b);
          if (p > 0.0) out.push_back({y, b, p});
        }
      }
    }
  }
  return branches;
}

void check_policy_shape(const TabularMdp& mdp, const Policy& policy, const char* who) {
  if (policy.num_states() != mdp.num_states() ||
      policy.num_actions() != mdp.num_actions()) {
    throw InvalidArgumentError(std::string(who) + ": policy shape does not match the MDP");
  }
}

}  // namespace

DistTable exact_return_dist(const TabularMdp& mdp, const Policy& policy,
                            const ReturnDistOptions& options) {
  mdp.validate();
  check_policy_shape(mdp, policy, "exact_return_dist");
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  const double gamma = mdp.gamma();
  const auto branches = collect_branches(mdp, policy);

  DistTable table(S, std::vector<DiscreteDist>(A, DiscreteDist::dirac(0.0)));
  double residual = 0.0;
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    DistTable next(S, std::vector<DiscreteDist>(A, DiscreteDist::dirac(0.0)));
    residual = 0.0;
    for (int x = 0; x < S; ++x) {
      for (int a = 0; a < A; ++a) {
        const auto& out = branches[static_cast<std::size_t>(x) * A + a];
        std::size_t total = 0;
        for (const Branch& br : out) {
          total += mdp.reward(x, a, br.x_next).size() * table[br.x_next][br.a_next].size();
        }
        if (total > options.support_guard) {
          throw ConvergenceError(
              "exact_return_dist: the backup for state " + std::to_string(x) +
                  ", action " + std::to_string(a) + " needs " + std::to_string(total) +
                  " atoms (guard " + std::to_string(options.support_guard) +
                  "); supports grow without bound on cyclic transition structures - "
                  "use grid_return_dist for those",
              static_cast<double>(total));
        }
        std::vector<double> atoms, weights;
        atoms.reserve(total);
        weights.reserve(total);
        for (const Branch& br : out) {
          const DiscreteDist& r = mdp.reward(x, a, br.x_next);
          const DiscreteDist& src = table[br.x_next][br.a_next];
          for (std::size_t i = 0; i < r.size(); ++i) {
            const double rv = r.atoms()[i];
            const double pw = br.p * r.weights()[i];
            for (std::size_t j = 0; j < src.size(); ++j) {
              atoms.push_back(rv + gamma * src.atoms()[j]);
              weights.push_back(pw * src.weights()[j]);
            }
          }
        }
        // Row tolerances stack multiplicatively across the branch product;
        // renormalise before the constructor's own sum check.
        const double sum = compensated_sum(weights);
        for (double& w : weights) w /= sum;
        next[x][a] = DiscreteDist(std::move(atoms), std::move(weights));
        residual = std::max(residual, wasserstein1(next[x][a], table[x][a]));
      }
    }
    table = std::move(next);
    if (residual <= options.tol) return table;
  }
  throw ConvergenceError("exact_return_dist: sweep change still " +
                             std::to_string(residual) + " after " +
                             std::to_string(options.max_sweeps) + " sweeps",
                         residual);
}

DistTable grid_return_dist(const TabularMdp& mdp, const Policy& policy,
                           const GridReturnDistOptions& options) {
  mdp.validate();
  check_policy_shape(mdp, policy, "grid_return_dist");
  const GridSpec& grid = options.grid;
  if (grid.n < 2 || !(grid.hi > grid.lo)) {
    throw InvalidArgumentError("grid_return_dist: grid needs n >= 2 and hi > lo");
  }
  const int S = mdp.num_states();
  const int A = mdp.num_actions();
  const int n = grid.n;
  const double step = grid.step();
  const double gamma = mdp.gamma();

  using Row = std::vector<double>;
  auto deposit = [&](Row& row, double u, double w) {
    // u is the fractional grid index of the target position; mass outside
    // the grid is clamped to the boundary atoms.
    if (u <= 0.0) {
      row[0] += w;
    } else if (u >= n - 1) {
      row[n - 1] += w;
    } else {
      const int i0 = static_cast<int>(u);
      const double frac = u - i0;
      row[i0] += w * (1.0 - frac);
      row[i0 + 1] += w * frac;
    }
  };

  std::vector<Row> table(static_cast<std::size_t>(S) * A, Row(n, 0.0));
  for (auto& row : table) deposit(row, -grid.lo / step, 1.0);

  // Residual between same-grid weight vectors: W1 = step * sum |cumulative
  // difference|, exact because the supports coincide.
  auto grid_w1 = [&](const Row& a, const Row& b) {
    double acc = 0.0;
    double cum = 0.0;
    for (int j = 0; j + 1 < n; ++j) {
      cum += a[j] - b[j];
      acc += std::abs(cum);
    }
    return step * acc;
  };

  std::vector<Row> eta_pi(S, Row(n, 0.0));
  std::vector<Row> next(static_cast<std::size_t>(S) * A, Row(n, 0.0));
  double residual = 0.0;
  for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
    for (int y = 0; y < S; ++y) {
      Row& mixed = eta_pi[y];
      std::fill(mixed.begin(), mixed.end(), 0.0);
      for (int b = 0; b < A; ++b) {
        const double p = policy.prob(y, b);
        if (p <= 0.0) continue;
        const Row& src = table[static_cast<std::size_t>(y) * A + b];
        for (int j = 0; j < n; ++j) mixed[j] += p * src[j];
      }
    }
    residual = 0.0;
    for (int x = 0; x < S; ++x) {
      for (int a = 0; a < A; ++a) {
        Row& out = next[static_cast<std::size_t>(x) * A + a];
        std::fill(out.begin(), out.end(), 0.0);
        const auto& row = mdp.transition_row(x, a);
        for (int y = 0; y < S; ++y) {
          if (row[y] <= 0.0) continue;
          const DiscreteDist& r = mdp.reward(x, a, y);
          const Row& src = eta_pi[y];
          for (std::size_t i = 0; i < r.size(); ++i) {
            const double scale = row[y] * r.weights()[i];
            // Grid atom j maps to r + gamma * (lo + step j), i.e. fractional
            // index base + gamma * j.
            const double base = (r.atoms()[i] - grid.lo * (1.0 - gamma)) / step;
            for (int j = 0; j < n; ++j) {
              const double w = src[j];
              if (w > 0.0) deposit(out, base + gamma * j, scale * w);
            }
          }
        }
        residual = std::max(residual, grid_w1(out, table[static_cast<std::size_t>(x) * A + a]));
      }
    }
    table.swap(next);
    if (residual <= options.tol) break;
    if (sweep + 1 == options.max_sweeps) {
      throw ConvergenceError("grid_return_dist: sweep change still " +
                                 std::to_string(residual) + " after " +
                                 std::to_string(options.max_sweeps) + " sweeps",
                             residual);
    }
  }

  DistTable result(S, std::vector<DiscreteDist>(A, DiscreteDist::dirac(0.0)));
  for (int x = 0; x < S; ++x) {
    for (int a = 0; a < A; ++a) {
      const Row& row = table[static_cast<std::size_t>(x) * A + a];
      std::vector<double> atoms, weights;
      for (int j = 0; j < n; ++j) {
        if (row[j] > 0.0) {
          atoms.push_back(grid.atom(j));
          weights.push_back(row[j]);
        }
      }
      // Per-sweep rounding drifts the total mass by O(sweeps * n * eps).
      const double sum = compensated_sum(weights);
      for (double& w : weights) w /= sum;
      result[x][a] = DiscreteDist(std::move(atoms), std::move(weights));
    }
  }
  return result;
}

}  // namespace distrl
