#include "distrl/projections.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "distrl/errors.hpp"

namespace distrl {

DiscreteDist cramer_project(const DiscreteDist& d, std::span<const double> supports) {
  const std::size_t k = supports.size();
  if (k < 2) {
    throw InvalidArgumentError("cramer_project: need at least two supports");
  }
  const double step = (supports.back() - supports.front()) / static_cast<double>(k - 1);
  if (!(step > 0.0)) {
    throw InvalidArgumentError("cramer_project: supports must be increasing");
  }
  const double slack = 1e-9 * step;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    if (std::abs(supports[i + 1] - supports[i] - step) > slack) {
      throw InvalidArgumentError("cramer_project: supports must be evenly spaced");
    }
  }

  std::vector<double> mass(k, 0.0);
  const auto& atoms = d.atoms();
  const auto& weights = d.weights();
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const double w = atoms[i];
    if (w <= supports.front()) {
      mass[0] += weights[i];
      continue;
    }
    if (w >= supports.back()) {
      mass[k - 1] += weights[i];
      continue;
    }
    auto j = static_cast<std::size_t>((w - supports.front()) / step);
    j = std::min(j, k - 2);
    // Rounding in the bucket index can land w just outside [z_j, z_{j+1}].
    while (j > 0 && w < supports[j]) --j;
    while (j + 2 < k && w > supports[j + 1]) ++j;
    const double frac =
        std::clamp((w - supports[j]) / (supports[j + 1] - supports[j]), 0.0, 1.0);
    mass[j] += weights[i] * (1.0 - frac);
    mass[j + 1] += weights[i] * frac;
  }
  return DiscreteDist(std::vector<double>(supports.begin(), supports.end()),
                      std::move(mass));
}

DiscreteDist w1_project(const DiscreteDist& d, int k) {
  if (k < 1) throw InvalidArgumentError("w1_project: need k >= 1");
  std::vector<double> atoms;
  atoms.reserve(static_cast<std::size_t>(k));
  for (int i = 1; i <= k; ++i) {
    atoms.push_back(d.quantile((2.0 * i - 1.0) / (2.0 * k)));
  }
  return DiscreteDist::uniform_atoms(std::move(atoms));
}

}  // namespace distrl
