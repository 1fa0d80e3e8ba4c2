#pragma once

#include <span>

#include "distrl/discrete_dist.hpp"

namespace distrl {

// Projection onto a fixed evenly spaced support z_1 < ... < z_K (K >= 2):
// mass at w in [z_k, z_{k+1}] splits between the two neighbours with weights
// proportional to proximity, and mass outside [z_1, z_K] is clamped to the
// end supports. Mass-preserving and a W1 non-expansion; preserves every
// categorical expectation E[h_{z_k, z_{k+1}}] exactly. Throws
// InvalidArgumentError on fewer than two supports or uneven spacing.
DiscreteDist cramer_project(const DiscreteDist& d, std::span<const double> supports);

// W1-optimal approximation by k equally weighted atoms: Diracs at the
// (2i - 1) / (2k) quantiles, i = 1..k. W1(projected, d) is at most
// (d.max() - d.min()) / k.
DiscreteDist w1_project(const DiscreteDist& d, int k);

}  // namespace distrl
