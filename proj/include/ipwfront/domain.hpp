#pragma once

#include <optional>
#include <vector>

#include "ipwfront/errors.hpp"
#include "ipwfront/numeric.hpp"

namespace ipwfront {

// Tolerances shared across modules.
namespace tol {
inline constexpr double simplex_row_sum = 1e-9; // accepted deviation of a policy row sum from 1
inline constexpr double zero_snap = 1e-12;      // propensities this close to 0 are snapped to exact 0
inline constexpr double knot_tie_rel = 1e-9;    // relative tolerance grouping tied elimination thresholds
} // namespace tol

// Per-unit, per-arm outcome means and variances.  Row n describes unit n;
// column t describes arm t.  Every cell must satisfy mu^2 + sigma2 > 0 so
// the propensity reweighting below is well defined.
struct CounterfactualModel {
    Matrix mu;     // n_units x n_arms
    Matrix sigma2; // n_units x n_arms, entries >= 0

    int n_units() const { return mu.rows; }
    int n_arms() const { return mu.cols; }
    // E[Y^2] for unit n under arm t.
    double second_moment(int n, int t) const {
        double m = mu.at(n, t);
        return m * m + sigma2.at(n, t);
    }
};

// Throws on non-finite entries, negative variances, empty shapes, shape
// mismatch, or a cell with mu = sigma2 = 0.  Returns the model for chaining.
const CounterfactualModel& validate_model(const CounterfactualModel& m);

// Stochastic treatment assignment: row n is a probability vector over arms.
struct Policy {
    Matrix probs; // n_units x n_arms

    int n_units() const { return probs.rows; }
    int n_arms() const { return probs.cols; }
};

// Rows must be finite, entries in [-1e-12, 1 + 1e-12], and sum to 1 within
// tol::simplex_row_sum.  `require_positive` additionally rejects any entry
// <= 0 (observational policies must have full support).
const Policy& validate_policy(const Policy& p, bool require_positive = false);

Policy uniform_policy(int n_units, int n_arms);

// Snap near-zero entries to exact 0 and clamp into [0, 1].  Applied to every
// policy this library emits, so "arm eliminated" is representable exactly.
void snap_policy(Policy& p);

// One observation per unit: the arm the logged policy drew and its outcome.
struct ObservationalDataset {
    Policy obs_policy;            // logging propensities, strictly positive
    std::vector<int> treatments;  // arm index per unit
    std::vector<double> outcomes; // realized outcome per unit

    int n_units() const { return obs_policy.n_units(); }
    int n_arms() const { return obs_policy.n_arms(); }
};

const ObservationalDataset& validate_dataset(const ObservationalDataset& d);

// One point on the improvement-vs-significance frontier.
struct FrontierPoint {
    double xi = 0.0;                              // trade-off parameter that produced the policy
    Policy policy;                                //
    double tau = 0.0;                             // model-implied expected improvement
    double s = 0.0;                               // model-implied standard error of the IPW estimator
    std::optional<double> expected_z;             // tau / s; empty when s == 0
    std::vector<std::vector<int>> zero_sets;      // per unit: arms with exactly zero propensity
};

// A single elimination event for one unit: at trade-off >= xi_knot the listed
// arms drop out of the unit's optimal policy.  omega_hat is the internal
// reparameterized threshold at which the elimination happens.
struct KnotEvent {
    double omega_hat = 0.0;
    double xi_knot = 0.0;
    std::vector<int> eliminated_arms;
};

// All elimination events for every unit, plus the global interval of
// interest.  xi_min is the smallest knot anywhere (the last point where the
// z-maximizing plateau ends); xi_max is the largest finite knot (beyond it
// every unit's policy is constant).  Both are empty when no unit ever
// eliminates an arm (all units have equal means across arms).
struct KnotTable {
    std::vector<std::vector<KnotEvent>> unit_events; // indexed by unit
    std::optional<double> xi_min;
    std::optional<double> xi_max;

    int n_units() const { return static_cast<int>(unit_events.size()); }
    // Arms of `unit` eliminated at trade-off parameter xi (events with
    // xi_knot <= xi), ascending.
    std::vector<int> zero_set_at(int unit, double xi) const;
};

// Shape compatibility helpers (throw DimensionMismatch).
void require_same_shape(const CounterfactualModel& m, const Policy& p, const char* what);
void require_same_shape(const Policy& a, const Policy& b, const char* what);

} // namespace ipwfront
