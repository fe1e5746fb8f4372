#include "ipwfront/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "ipwfront/frontier.hpp"
#include "ipwfront/ipw_eval.hpp"

namespace ipwfront {

void validate_config(const SimConfig& config) {
    if (config.n_types <= 0 || config.n_arms < 2 || config.clusters_per_type <= 0 ||
        config.train_size <= 0 || config.test_size <= 0 || config.n_covariates_informative <= 0 ||
        config.n_covariates_noise < 0)
        fail(ErrorCode::InvalidDimension, "simulation sizes must be positive (noise covariates >= 0)");
    const double wsum =
        config.mean_mixture[0] + config.mean_mixture[1] + config.mean_mixture[2];
    if (std::abs(wsum - 1.0) > 1e-9)
        fail(ErrorCode::NonPositiveInput, "mean mixture weights must sum to 1", "mean_mixture");
    for (double w : config.mean_mixture)
        if (w < 0.0) fail(ErrorCode::NonPositiveInput, "mixture weights must be nonnegative", "mean_mixture");
    if (config.perturbation_variance < 0.0)
        fail(ErrorCode::NegativeVariance, "perturbation variance must be nonnegative");
    if (config.cluster_separation <= 0.0)
        fail(ErrorCode::NonPositiveInput, "cluster separation must be positive");
}

std::string to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::Oracle: return "oracle";
        case EstimatorKind::PerTypeEmpirical: return "per-type-empirical";
        case EstimatorKind::Knn: return "knn";
    }
    return "unknown";
}

std::optional<EstimatorKind> estimator_from_string(std::string_view name) {
    if (name == "oracle") return EstimatorKind::Oracle;
    if (name == "per-type-empirical") return EstimatorKind::PerTypeEmpirical;
    if (name == "knn") return EstimatorKind::Knn;
    return std::nullopt;
}

TypeTable generate_type_table(const SimConfig& config, Rng& rng) {
    validate_config(config);
    TypeTable table;
    table.n_types = config.n_types;
    table.n_arms = config.n_arms;
    table.mu_by_type = Matrix(config.n_types, config.n_arms);
    table.sigma2_by_type = Matrix(config.n_types, config.n_arms);
    const double sd = std::sqrt(config.perturbation_variance);
    for (int th = 0; th < config.n_types; ++th) {
        for (int t = 0; t < config.n_arms; ++t) {
            // Arm is good / bad / neutral for this type.
            const double u = rng.uniform01();
            double center = 0.0;
            if (u < config.mean_mixture[0])
                center = 1.0;
            else if (u < config.mean_mixture[0] + config.mean_mixture[1])
                center = -1.0;
            const double mu = rng.normal(center, sd);
            table.mu_by_type.at(th, t) = mu;
            table.sigma2_by_type.at(th, t) = 1.0 + 3.0 * mu * mu;
        }
    }
    return table;
}

Population generate_population(const SimConfig& config, int n_units, Rng& rng) {
    validate_config(config);
    if (n_units <= 0) fail(ErrorCode::InvalidDimension, "population size must be positive");
    const int d_inf = config.n_covariates_informative;
    const int n_centers = config.n_types * config.clusters_per_type;
    if (d_inf < 63 && (1ULL << d_inf) < static_cast<uint64_t>(n_centers))
        fail(ErrorCode::InvalidDimension,
             "informative subspace has fewer hypercube vertices than requested cluster centers");

    // Distinct hypercube vertices as cluster centers: every pair of centers
    // differs by at least 2*separation in some informative coordinate.
    std::set<uint64_t> used;
    std::vector<uint64_t> vertex(n_centers);
    for (int c = 0; c < n_centers; ++c) {
        uint64_t v;
        do {
            v = rng.below(1ULL << d_inf);
        } while (!used.insert(v).second);
        vertex[c] = v;
    }

    Population pop;
    const int d = d_inf + config.n_covariates_noise;
    pop.covariates = Matrix(n_units, d);
    pop.labels.resize(n_units);
    for (int i = 0; i < n_units; ++i) {
        const int label = static_cast<int>(rng.below(config.n_types));
        const int cluster = static_cast<int>(rng.below(config.clusters_per_type));
        const uint64_t center = vertex[label * config.clusters_per_type + cluster];
        pop.labels[i] = label;
        for (int j = 0; j < d_inf; ++j) {
            const double base =
                (center >> j) & 1ULL ? config.cluster_separation : -config.cluster_separation;
            pop.covariates.at(i, j) = base + rng.normal();
        }
        for (int j = d_inf; j < d; ++j) pop.covariates.at(i, j) = rng.normal();
    }
    return pop;
}

ObservationalDataset generate_observational_data(const TypeTable& table,
                                                 const std::vector<int>& labels, const Policy& obs,
                                                 Rng& rng) {
    const int n = static_cast<int>(labels.size());
    if (obs.n_units() != n)
        fail(ErrorCode::DimensionMismatch, "logging policy does not cover every unit");
    if (obs.n_arms() != table.n_arms)
        fail(ErrorCode::DimensionMismatch, "logging policy arm count differs from the table");
    ObservationalDataset data;
    data.obs_policy = obs;
    data.treatments.resize(n);
    data.outcomes.resize(n);
    for (int i = 0; i < n; ++i) {
        const int th = labels[i];
        if (th < 0 || th >= table.n_types)
            fail(ErrorCode::InvalidDimension, "type label out of range at unit " + std::to_string(i));
        const int arm = rng.categorical(obs.probs.row(i));
        data.treatments[i] = arm;
        data.outcomes[i] =
            rng.normal(table.mu_by_type.at(th, arm), std::sqrt(table.sigma2_by_type.at(th, arm)));
    }
    return data;
}

CounterfactualModel expand_from_table(const TypeTable& table, const std::vector<int>& labels) {
    const int n = static_cast<int>(labels.size());
    CounterfactualModel model;
    model.mu = Matrix(n, table.n_arms);
    model.sigma2 = Matrix(n, table.n_arms);
    for (int i = 0; i < n; ++i) {
        for (int t = 0; t < table.n_arms; ++t) {
            model.mu.at(i, t) = table.mu_by_type.at(labels[i], t);
            model.sigma2.at(i, t) = table.sigma2_by_type.at(labels[i], t);
        }
    }
    return model;
}

namespace {

struct Welford {
    long count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++count;
        const double d = x - mean;
        mean += d / count;
        m2 += d * (x - mean);
    }
    double variance() const { return m2 / (count - 1); } // unbiased; needs count >= 2
};

EstimatedModel estimate_per_type(const TrainSet& train, const Population& query, int n_types,
                                 int n_arms) {
    std::vector<Welford> cells(static_cast<size_t>(n_types) * n_arms);
    for (int i = 0; i < train.pop.n_units(); ++i) {
        const int th = train.pop.labels[i];
        const int arm = train.treatments[i];
        cells[static_cast<size_t>(th) * n_arms + arm].add(train.outcomes[i]);
    }
    Matrix mu(n_types, n_arms), s2(n_types, n_arms);
    for (int th = 0; th < n_types; ++th) {
        for (int t = 0; t < n_arms; ++t) {
            const Welford& w = cells[static_cast<size_t>(th) * n_arms + t];
            if (w.count < 2)
                fail(ErrorCode::InsufficientSupport,
                     "type " + std::to_string(th) + ", arm " + std::to_string(t) + " has " +
                         std::to_string(w.count) + " training observations; need at least 2");
            mu.at(th, t) = w.mean;
            s2.at(th, t) = w.variance();
        }
    }
    TypeTable est;
    est.n_types = n_types;
    est.n_arms = n_arms;
    est.mu_by_type = std::move(mu);
    est.sigma2_by_type = std::move(s2);
    return {expand_from_table(est, query.labels), EstimatorKind::PerTypeEmpirical};
}

EstimatedModel estimate_knn(const TrainSet& train, const Population& query, int n_arms,
                            const EstimateParams& params) {
    if (params.knn_k < 2)
        fail(ErrorCode::InsufficientSupport, "knn needs k >= 2 for variance estimation");
    const int d_inf = std::min(params.n_covariates_informative, train.pop.covariates.cols);
    std::vector<std::vector<int>> by_arm(n_arms);
    for (int i = 0; i < train.pop.n_units(); ++i) by_arm[train.treatments[i]].push_back(i);
    for (int t = 0; t < n_arms; ++t)
        if (static_cast<int>(by_arm[t].size()) < 2)
            fail(ErrorCode::InsufficientSupport,
                 "arm " + std::to_string(t) + " has " + std::to_string(by_arm[t].size()) +
                     " training observations; need at least 2");

    const int nq = query.n_units();
    CounterfactualModel model;
    model.mu = Matrix(nq, n_arms);
    model.sigma2 = Matrix(nq, n_arms);
    std::vector<std::pair<double, int>> dist;
    for (int i = 0; i < nq; ++i) {
        for (int t = 0; t < n_arms; ++t) {
            dist.clear();
            dist.reserve(by_arm[t].size());
            for (int j : by_arm[t]) {
                double d2 = 0.0;
                for (int c = 0; c < d_inf; ++c) {
                    const double d = query.covariates.at(i, c) - train.pop.covariates.at(j, c);
                    d2 += d * d;
                }
                dist.emplace_back(d2, j);
            }
            const int k = std::min<int>(params.knn_k, static_cast<int>(dist.size()));
            // Tie-break on training index so the neighbor set is deterministic.
            std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
            Welford w;
            for (int r = 0; r < k; ++r) w.add(train.outcomes[dist[r].second]);
            model.mu.at(i, t) = w.mean;
            model.sigma2.at(i, t) = w.variance();
        }
    }
    return {std::move(model), EstimatorKind::Knn};
}

} // namespace

EstimatedModel estimate_model(const TrainSet& train, const Population& query, EstimatorKind kind,
                              const EstimateParams& params, const TypeTable* table) {
    const int n_train = train.pop.n_units();
    if (static_cast<int>(train.treatments.size()) != n_train ||
        static_cast<int>(train.outcomes.size()) != n_train)
        fail(ErrorCode::DimensionMismatch, "training treatments/outcomes do not cover every unit");
    switch (kind) {
        case EstimatorKind::Oracle:
            if (!table)
                fail(ErrorCode::InvalidDimension, "oracle estimation requires the true type table");
            return {expand_from_table(*table, query.labels), EstimatorKind::Oracle};
        case EstimatorKind::PerTypeEmpirical: {
            int n_types = 0;
            for (int th : train.pop.labels) n_types = std::max(n_types, th + 1);
            for (int th : query.labels) n_types = std::max(n_types, th + 1);
            return estimate_per_type(train, query, n_types, train.obs_policy.n_arms());
        }
        case EstimatorKind::Knn:
            return estimate_knn(train, query, train.obs_policy.n_arms(), params);
    }
    fail(ErrorCode::InvalidDimension, "unknown estimator");
}

ExperimentReport run_experiment(const SimConfig& config, const std::vector<double>& xi_grid,
                                EstimatorKind method, const EstimateParams& params) {
    validate_config(config);
    Rng root(config.seed);

    // Stage streams: each consumes an independent substream of the seed.
    Rng rng_table = root.substream("type-table");
    Rng rng_train_pop = root.substream("train-population");
    Rng rng_train_draw = root.substream("train-draw");
    Rng rng_test_pop = root.substream("test-population");
    Rng rng_test_draw = root.substream("test-draw");

    const TypeTable table = generate_type_table(config, rng_table);

    TrainSet train;
    train.pop = generate_population(config, config.train_size, rng_train_pop);
    train.obs_policy = uniform_policy(config.train_size, config.n_arms);
    {
        ObservationalDataset d =
            generate_observational_data(table, train.pop.labels, train.obs_policy, rng_train_draw);
        train.treatments = std::move(d.treatments);
        train.outcomes = std::move(d.outcomes);
    }

    const Population test_pop = generate_population(config, config.test_size, rng_test_pop);
    const Policy test_obs = uniform_policy(config.test_size, config.n_arms);

    EstimateParams eff_params = params;
    eff_params.n_covariates_informative = config.n_covariates_informative;
    const EstimatedModel est = estimate_model(train, test_pop, method, eff_params, &table);
    validate_model(est.model);

    // Policy construction sees only test covariates/estimates and the
    // logging propensities.  Held-out treatments and outcomes are drawn
    // after every policy is fixed.
    const KnotTable knots = build_knot_table(est.model, test_obs);
    std::vector<Policy> policies;
    policies.reserve(xi_grid.size());
    for (double xi : xi_grid)
        policies.push_back(policy_at_xi(est.model, test_obs, knots, xi).policy);

    const ObservationalDataset test_data =
        generate_observational_data(table, test_pop.labels, test_obs, rng_test_draw);
    const CounterfactualModel truth = expand_from_table(table, test_pop.labels);

    ExperimentReport report;
    report.est_xi_min = knots.xi_min;
    report.est_xi_max = knots.xi_max;
    report.rows.reserve(xi_grid.size());
    for (size_t i = 0; i < xi_grid.size(); ++i) {
        ExperimentRow row;
        row.seed = config.seed;
        row.xi = xi_grid[i];
        row.tau_est = true_tau(est.model, test_obs, policies[i]);
        row.tau_true = true_tau(truth, test_obs, policies[i]);
        const EvalReport eval = ipw_estimate(test_data, policies[i]);
        row.tau_hat_ipw = eval.tau_hat;
        row.s_hat = eval.s_hat;
        row.z = eval.z;
        report.rows.push_back(std::move(row));
    }
    return report;
}

std::vector<double> log_grid(double lo, double hi, int n) {
    if (!(lo > 0.0) || !(hi > lo)) fail(ErrorCode::NonPositiveInput, "log grid needs 0 < lo < hi");
    if (n < 2) fail(ErrorCode::InvalidDimension, "log grid needs at least 2 points");
    std::vector<double> xs(n);
    const double la = std::log(lo), lb = std::log(hi);
    for (int i = 0; i < n; ++i) xs[i] = std::exp(la + (lb - la) * i / (n - 1));
    xs.front() = lo;
    xs.back() = hi;
    return xs;
}

} // namespace ipwfront
