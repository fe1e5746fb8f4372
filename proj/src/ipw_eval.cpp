#include "ipwfront/ipw_eval.hpp"

#include <cmath>
#include <string>

namespace ipwfront {

namespace {

void check_obs_positive(const Policy& obs) {
    for (int n = 0; n < obs.n_units(); ++n)
        for (int t = 0; t < obs.n_arms(); ++t)
            if (obs.probs.at(n, t) <= 0.0)
                fail(ErrorCode::ZeroPropensity,
                     "observational propensity not positive at unit " + std::to_string(n) + ", arm " +
                         std::to_string(t));
}

} // namespace

double true_tau(const CounterfactualModel& model, const Policy& obs, const Policy& candidate) {
    require_same_shape(model, obs, "true_tau obs");
    require_same_shape(model, candidate, "true_tau candidate");
    const int N = model.n_units();
    const int A = model.n_arms();
    KahanSum total;
    for (int n = 0; n < N; ++n) {
        KahanSum unit;
        for (int t = 0; t < A; ++t)
            unit.add(model.mu.at(n, t) * (candidate.probs.at(n, t) - obs.probs.at(n, t)));
        total.add(unit.value());
    }
    return total.value() / N;
}

double true_variance(const CounterfactualModel& model, const Policy& obs, const Policy& candidate) {
    require_same_shape(model, obs, "true_variance obs");
    require_same_shape(model, candidate, "true_variance candidate");
    check_obs_positive(obs);
    const int N = model.n_units();
    const int A = model.n_arms();
    // Per unit: sum_t [ sigma2*d^2/po + po*(mu*d/po - sum_v mu_v*d_v)^2 ],
    // where d = candidate - obs.  Grouped by arm of the logged draw; the
    // second term is the variance contributed by which arm was logged.
    KahanSum total;
    for (int n = 0; n < N; ++n) {
        KahanSum mu_dot_d;
        for (int v = 0; v < A; ++v)
            mu_dot_d.add(model.mu.at(n, v) * (candidate.probs.at(n, v) - obs.probs.at(n, v)));
        const double dsum = mu_dot_d.value();
        KahanSum unit;
        for (int t = 0; t < A; ++t) {
            const double po = obs.probs.at(n, t);
            const double d = candidate.probs.at(n, t) - po;
            const double centered = model.mu.at(n, t) * d / po - dsum;
            unit.add(model.sigma2.at(n, t) * d * d / po + po * centered * centered);
        }
        total.add(unit.value());
    }
    double v = total.value() / (static_cast<double>(N) * N);
    return v < 0.0 ? 0.0 : v;
}

std::optional<double> expected_z(const CounterfactualModel& model, const Policy& obs,
                                 const Policy& candidate) {
    const double tau = true_tau(model, obs, candidate);
    const double var = true_variance(model, obs, candidate);
    if (var <= 0.0) return std::nullopt;
    return tau / std::sqrt(var);
}

EvalReport ipw_estimate(const ObservationalDataset& obs_data, const Policy& candidate) {
    validate_dataset(obs_data);
    require_same_shape(obs_data.obs_policy, candidate, "ipw_estimate candidate");
    const int N = obs_data.n_units();
    if (N < 2)
        fail(ErrorCode::DegenerateSE, "sample standard error needs at least 2 units (divides by N-1)");

    EvalReport report;
    report.weights.resize(N);
    std::vector<double> terms(N);
    KahanSum sum;
    for (int n = 0; n < N; ++n) {
        const int arm = obs_data.treatments[n];
        const double w = candidate.probs.at(n, arm) / obs_data.obs_policy.probs.at(n, arm);
        report.weights[n] = w;
        terms[n] = obs_data.outcomes[n] * (w - 1.0);
        sum.add(terms[n]);
    }
    report.tau_hat = sum.value() / N;

    KahanSum sq;
    for (int n = 0; n < N; ++n) {
        const double dev = terms[n] - report.tau_hat;
        sq.add(dev * dev);
    }
    const double var_hat = sq.value() / (static_cast<double>(N) * (N - 1));
    report.s_hat = var_hat > 0.0 ? std::sqrt(var_hat) : 0.0;
    if (report.s_hat > 0.0) report.z = report.tau_hat / report.s_hat;
    return report;
}

} // namespace ipwfront
