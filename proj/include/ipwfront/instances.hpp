#pragma once

#include "ipwfront/domain.hpp"
#include "ipwfront/rng.hpp"

namespace ipwfront {

// Random instances used by the verification paths and property tests:
// means standard normal, variances uniform on [0.1, 2], observational rows
// flat on the simplex.
CounterfactualModel random_model(Rng& rng, int n_units, int n_arms);
Policy random_obs_policy(Rng& rng, int n_units, int n_arms);

// A random policy bounded away from the boundary: a flat-Dirichlet draw
// mixed with the uniform row, so every entry is at least
// (1 - weight) / n_arms.
Policy random_interior_policy(Rng& rng, int n_units, int n_arms, double weight = 0.9);

} // namespace ipwfront
