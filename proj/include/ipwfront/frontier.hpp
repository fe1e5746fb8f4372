#pragma once

#include <vector>

#include "ipwfront/domain.hpp"

namespace ipwfront {

// Grid of trade-off values for pareto_frontier: either an explicit sorted
// list, or "every knot plus n_fill log-spaced points" between xi_min and
// xi_max (policy shape changes only at knots, so knots are always included).
struct GridSpec {
    enum class Kind { ExplicitList, KnotsPlusLog };
    Kind kind = Kind::KnotsPlusLog;
    std::vector<double> values; // ExplicitList only
    int n_fill = 25;            // KnotsPlusLog only

    static GridSpec explicit_list(std::vector<double> xs);
    static GridSpec knots_plus_log(int n_fill);
};

// Closed form for two arms: arm-1 propensity moves linearly in xi away from
// the observational value, clipped into [0, 1]; arm 0 takes the complement.
Policy binary_policy_at_xi(const CounterfactualModel& model, const Policy& obs, double xi);

// Run the per-unit elimination procedure: repeatedly find the smallest
// reparameterized threshold at which some active arm's propensity reaches 0,
// record the event, and remove the arm, until all surviving arms share one
// mean.  Independent per unit; n_threads > 1 splits units across threads
// with bit-identical output.
KnotTable build_knot_table(const CounterfactualModel& model, const Policy& obs, int n_threads = 1);

// Evaluate the optimal-policy path at trade-off xi using a prebuilt knot
// table, attaching the model-implied tau, s, and expected z.
FrontierPoint policy_at_xi(const CounterfactualModel& model, const Policy& obs,
                           const KnotTable& knots, double xi);

// The Pareto-optimal segment of the path: grid restricted to
// [xi_min, xi_max] with both endpoints always included.
std::vector<FrontierPoint> pareto_frontier(const CounterfactualModel& model, const Policy& obs,
                                           const GridSpec& grid, int n_threads = 1);

// Conservative trade-off choice targeting improvement lambda_target with
// z-score at least z_min: 2*lambda/z_min^2.
double select_xi(double lambda_target, double z_min);

// Apply the closed form to fresh units.  Generalization is literally
// re-running the per-unit procedure on new estimates, so this is a named
// composition of build_knot_table and policy_at_xi.
Policy generalize_policy(const CounterfactualModel& model_new_units, const Policy& obs_new_units,
                         double xi);

// Largest achievable improvement: every unit puts all mass on its best arm.
double tau_max(const CounterfactualModel& model, const Policy& obs);

} // namespace ipwfront
