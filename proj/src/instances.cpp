#include "ipwfront/instances.hpp"

namespace ipwfront {

CounterfactualModel random_model(Rng& rng, int n_units, int n_arms) {
    CounterfactualModel m;
    m.mu = Matrix(n_units, n_arms);
    m.sigma2 = Matrix(n_units, n_arms);
    for (int n = 0; n < n_units; ++n) {
        for (int t = 0; t < n_arms; ++t) {
            m.mu.at(n, t) = rng.normal();
            m.sigma2.at(n, t) = rng.uniform(0.1, 2.0);
        }
    }
    return m;
}

Policy random_obs_policy(Rng& rng, int n_units, int n_arms) {
    Policy p;
    p.probs = Matrix(n_units, n_arms);
    for (int n = 0; n < n_units; ++n) {
        const std::vector<double> row = rng.simplex_uniform(n_arms);
        for (int t = 0; t < n_arms; ++t) p.probs.at(n, t) = row[t];
    }
    return p;
}

Policy random_interior_policy(Rng& rng, int n_units, int n_arms, double weight) {
    Policy p = random_obs_policy(rng, n_units, n_arms);
    for (int n = 0; n < n_units; ++n)
        for (int t = 0; t < n_arms; ++t)
            p.probs.at(n, t) = weight * p.probs.at(n, t) + (1.0 - weight) / n_arms;
    return p;
}

} // namespace ipwfront
