#pragma once

#include <span>
#include <vector>

#include "ipwfront/domain.hpp"

namespace ipwfront {

// Result of one independent solve of the variance-vs-improvement trade-off.
struct OracleSolution {
    Policy policy;
    double objective = 0.0;     // s^2(policy) minus xi times the improvement
    long iterations = 0;        // summed across units
    double grad_residual = 0.0; // worst per-unit projected-gradient norm
};

struct OracleOptions {
    double tol = 1e-10;       // projected-gradient norm declaring convergence
    long max_iter = 100000;   // per-unit iteration cap
    const Policy* init = nullptr; // warm start (defaults to the observational policy)
    int n_threads = 1;
};

// Numerically minimize s^2(pi) - (xi/N) * sum mu*(pi - obs) over the product
// of per-unit simplices by projected gradient descent with an exact
// line search on each step.  Exists to certify the closed-form path without
// sharing any of its algebra.
OracleSolution solve_at_xi(const CounterfactualModel& model, const Policy& obs, double xi,
                           const OracleOptions& opts = {});

// Exact Euclidean projection onto the probability simplex (sort-based).
void project_to_simplex(std::span<double> v);

// Analytic partial derivatives of the variance and the improvement with
// respect to each propensity.
Matrix grad_variance(const CounterfactualModel& model, const Policy& obs, const Policy& candidate);
Matrix grad_tau(const CounterfactualModel& model);

// Max relative error between the analytic partials (both functions) and
// central finite differences with step h, measured against
// max(1, |analytic|, |numeric|).  The policy must be at least h from the
// lower boundary in every coordinate.
double gradient_check(const CounterfactualModel& model, const Policy& obs, const Policy& policy,
                      double h);

// Lagrangian stationarity diagnostics at (policy, xi): per unit the dual of
// the row-sum constraint is recovered by averaging over active arms; the
// residual is how far active coordinates deviate from it and kappa is the
// recovered multiplier on eliminated arms (nonnegative at an optimum).
struct KktReport {
    double max_stationarity_residual = 0.0;
    double min_kappa = 0.0; // 0 when no arm is eliminated
};
KktReport kkt_residuals(const CounterfactualModel& model, const Policy& obs, const Policy& policy,
                        double xi);

// Minimum-variance policy at each improvement target, found by bisecting xi
// (the improvement is monotone along the path).
struct LambdaPoint {
    double lambda = 0.0;   // requested improvement
    double s2 = 0.0;       // variance achieved
    Policy policy;
    double xi = 0.0;       // trade-off value the bisection settled on
};
std::vector<LambdaPoint> sweep_lambda(const CounterfactualModel& model, const Policy& obs,
                                      const std::vector<double>& lambdas,
                                      const OracleOptions& opts = {});

} // namespace ipwfront
