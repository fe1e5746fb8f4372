#pragma once

#include <optional>
#include <vector>

#include "ipwfront/domain.hpp"

namespace ipwfront {

// Sample-based IPW evaluation of a candidate policy on logged data.
struct EvalReport {
    double tau_hat = 0.0;            // IPW point estimate of the improvement
    double s_hat = 0.0;              // sample standard error of tau_hat
    std::optional<double> z;         // tau_hat / s_hat; empty when s_hat == 0
    std::vector<double> weights;     // importance weight per unit
};

// Model-implied expected improvement of `candidate` over `obs`:
// (1/N) * sum_n sum_t mu[n][t] * (candidate[n][t] - obs[n][t]).
double true_tau(const CounterfactualModel& model, const Policy& obs, const Policy& candidate);

// Model-implied variance of the IPW estimator tau_hat under data generated
// by `obs`.  Zero exactly when candidate == obs; grows with the mismatch.
double true_variance(const CounterfactualModel& model, const Policy& obs, const Policy& candidate);

// tau / sqrt(variance); empty when the variance is zero.
std::optional<double> expected_z(const CounterfactualModel& model, const Policy& obs,
                                 const Policy& candidate);

// Evaluate `candidate` on one logged draw per unit.  Throws DegenerateSE for
// N = 1 (the sample standard error divides by N-1).
EvalReport ipw_estimate(const ObservationalDataset& obs_data, const Policy& candidate);

} // namespace ipwfront
