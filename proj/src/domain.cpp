#include "ipwfront/domain.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ipwfront {

const CounterfactualModel& validate_model(const CounterfactualModel& m) {
    if (m.mu.rows <= 0 || m.mu.cols <= 0)
        fail(ErrorCode::InvalidDimension, "model must have at least one unit and one arm", "mu");
    if (!m.mu.same_shape(m.sigma2))
        fail(ErrorCode::DimensionMismatch, "mu and sigma2 shapes differ", "sigma2");
    if (!all_finite(m.mu.data))
        fail(ErrorCode::NonFiniteInput, "mu contains a non-finite entry", "mu");
    if (!all_finite(m.sigma2.data))
        fail(ErrorCode::NonFiniteInput, "sigma2 contains a non-finite entry", "sigma2");
    for (int n = 0; n < m.n_units(); ++n) {
        for (int t = 0; t < m.n_arms(); ++t) {
            if (m.sigma2.at(n, t) < 0.0)
                fail(ErrorCode::NegativeVariance,
                     "sigma2[" + std::to_string(n) + "][" + std::to_string(t) + "] < 0", "sigma2");
            if (m.second_moment(n, t) <= 0.0)
                fail(ErrorCode::ZeroSecondMoment,
                     "mu^2 + sigma2 vanishes for unit " + std::to_string(n) + ", arm " + std::to_string(t),
                     "model");
        }
    }
    return m;
}

const Policy& validate_policy(const Policy& p, bool require_positive) {
    if (p.probs.rows <= 0 || p.probs.cols <= 0)
        fail(ErrorCode::InvalidDimension, "policy must have at least one unit and one arm", "probs");
    if (!all_finite(p.probs.data))
        fail(ErrorCode::NonFiniteInput, "policy contains a non-finite entry", "probs");
    for (int n = 0; n < p.n_units(); ++n) {
        KahanSum row_sum;
        for (int t = 0; t < p.n_arms(); ++t) {
            double v = p.probs.at(n, t);
            if (v < -tol::zero_snap || v > 1.0 + tol::zero_snap)
                fail(ErrorCode::NonPositiveInput,
                     "policy entry out of [0,1] at unit " + std::to_string(n) + ", arm " + std::to_string(t),
                     "probs");
            if (require_positive && v <= 0.0)
                fail(ErrorCode::ZeroPropensity,
                     "observational policy must be strictly positive (unit " + std::to_string(n) +
                         ", arm " + std::to_string(t) + ")",
                     "probs");
            row_sum.add(v);
        }
        if (std::abs(row_sum.value() - 1.0) > tol::simplex_row_sum)
            fail(ErrorCode::NonPositiveInput,
                 "policy row " + std::to_string(n) + " sums to " + std::to_string(row_sum.value()) +
                     ", expected 1",
                 "probs");
    }
    return p;
}

Policy uniform_policy(int n_units, int n_arms) {
    if (n_units <= 0 || n_arms < 2)
        fail(ErrorCode::InvalidDimension,
             "uniform policy needs a positive unit count and at least two arms");
    Policy p;
    p.probs = Matrix(n_units, n_arms, 1.0 / n_arms);
    return p;
}

void snap_policy(Policy& p) {
    for (double& v : p.probs.data) {
        if (std::abs(v) <= tol::zero_snap) v = 0.0;
        v = std::clamp(v, 0.0, 1.0);
    }
}

const ObservationalDataset& validate_dataset(const ObservationalDataset& d) {
    validate_policy(d.obs_policy, /*require_positive=*/true);
    const int n = d.obs_policy.n_units();
    if (static_cast<int>(d.treatments.size()) != n)
        fail(ErrorCode::DimensionMismatch, "treatments length != number of units", "treatments");
    if (static_cast<int>(d.outcomes.size()) != n)
        fail(ErrorCode::DimensionMismatch, "outcomes length != number of units", "outcomes");
    for (int i = 0; i < n; ++i) {
        if (d.treatments[i] < 0 || d.treatments[i] >= d.obs_policy.n_arms())
            fail(ErrorCode::InvalidDimension, "treatment index out of range at unit " + std::to_string(i),
                 "treatments");
        if (!std::isfinite(d.outcomes[i]))
            fail(ErrorCode::NonFiniteInput, "non-finite outcome at unit " + std::to_string(i), "outcomes");
    }
    return d;
}

std::vector<int> KnotTable::zero_set_at(int unit, double xi) const {
    std::vector<int> zs;
    for (const KnotEvent& ev : unit_events.at(unit)) {
        if (ev.xi_knot <= xi)
            zs.insert(zs.end(), ev.eliminated_arms.begin(), ev.eliminated_arms.end());
    }
    std::sort(zs.begin(), zs.end());
    return zs;
}

void require_same_shape(const CounterfactualModel& m, const Policy& p, const char* what) {
    if (m.mu.rows != p.probs.rows || m.mu.cols != p.probs.cols)
        fail(ErrorCode::DimensionMismatch, std::string(what) + ": policy shape does not match model");
}

void require_same_shape(const Policy& a, const Policy& b, const char* what) {
    if (!a.probs.same_shape(b.probs))
        fail(ErrorCode::DimensionMismatch, std::string(what) + ": policy shapes differ");
}

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::NonFiniteInput: return "NonFiniteInput";
        case ErrorCode::NegativeVariance: return "NegativeVariance";
        case ErrorCode::ZeroSecondMoment: return "ZeroSecondMoment";
        case ErrorCode::InvalidDimension: return "InvalidDimension";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::ZeroPropensity: return "ZeroPropensity";
        case ErrorCode::DegenerateSE: return "DegenerateSE";
        case ErrorCode::NotBinary: return "NotBinary";
        case ErrorCode::NegativeXi: return "NegativeXi";
        case ErrorCode::EmptyFrontier: return "EmptyFrontier";
        case ErrorCode::NonPositiveInput: return "NonPositiveInput";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::BoundaryPolicy: return "BoundaryPolicy";
        case ErrorCode::LambdaOutOfRange: return "LambdaOutOfRange";
        case ErrorCode::InsufficientSupport: return "InsufficientSupport";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::IoError: return "IoError";
    }
    return "UnknownError";
}

} // namespace ipwfront
