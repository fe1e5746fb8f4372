#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ipwfront/ipw_eval.hpp"
#include "ipwfront/rng.hpp"
#include "ipwfront/sim.hpp"
#include "test_util.hpp"

using namespace ipwfront;
using namespace ipwfront::testutil;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error to be thrown");
    return ErrorCode::NonFiniteInput;
}

Population zero_population(std::vector<int> labels, int n_cols = 1) {
    Population pop;
    pop.covariates = Matrix(static_cast<int>(labels.size()), n_cols);
    pop.labels = std::move(labels);
    return pop;
}

} // namespace

TEST_CASE("config validation") {
    SimConfig ok;
    validate_config(ok);

    SimConfig bad = ok;
    bad.n_arms = 1;
    CHECK(code_of([&] { validate_config(bad); }) == ErrorCode::InvalidDimension);

    bad = ok;
    bad.mean_mixture = {0.5, 0.5, 0.5};
    CHECK(code_of([&] { validate_config(bad); }) == ErrorCode::NonPositiveInput);

    bad = ok;
    bad.perturbation_variance = -1.0;
    CHECK(code_of([&] { validate_config(bad); }) == ErrorCode::NegativeVariance);

    bad = ok;
    bad.cluster_separation = 0.0;
    CHECK(code_of([&] { validate_config(bad); }) == ErrorCode::NonPositiveInput);
}

TEST_CASE("type table: variance law and mean mixture") {
    SimConfig config;
    config.n_types = 1000;
    config.n_arms = 100;
    Rng rng(5);
    const TypeTable table = generate_type_table(config, rng);

    int near_good = 0, near_bad = 0, near_neutral = 0;
    for (int th = 0; th < table.n_types; ++th) {
        for (int t = 0; t < table.n_arms; ++t) {
            const double mu = table.mu_by_type.at(th, t);
            const double s2 = table.sigma2_by_type.at(th, t);
            CHECK(s2 == 1.0 + 3.0 * mu * mu); // exact, not approximate
            if (mu > 0.5)
                ++near_good;
            else if (mu < -0.5)
                ++near_bad;
            else
                ++near_neutral;
        }
    }
    const double total = static_cast<double>(table.n_types) * table.n_arms;
    CHECK(std::abs(near_good / total - 0.1) <= 0.005);
    CHECK(std::abs(near_bad / total - 0.1) <= 0.005);
    CHECK(std::abs(near_neutral / total - 0.8) <= 0.005);
}

TEST_CASE("population: informative coordinates carry the cluster structure") {
    SimConfig config;
    config.n_types = 3;
    config.clusters_per_type = 2;
    config.n_covariates_informative = 8;
    config.n_covariates_noise = 6;
    config.cluster_separation = 10.0;
    Rng rng(6);
    const Population pop = generate_population(config, 4000, rng);

    double inf_abs = 0.0, noise_abs = 0.0;
    for (int i = 0; i < pop.n_units(); ++i) {
        for (int j = 0; j < 8; ++j) inf_abs += std::abs(pop.covariates.at(i, j));
        for (int j = 8; j < 14; ++j) noise_abs += std::abs(pop.covariates.at(i, j));
    }
    inf_abs /= pop.n_units() * 8.0;
    noise_abs /= pop.n_units() * 6.0;
    CHECK(inf_abs > 9.5);
    CHECK(inf_abs < 10.5);
    CHECK(noise_abs < 1.2);

    // Noise coordinates are uncorrelated with the type label.
    for (int j = 8; j < 14; ++j) {
        double mx = 0.0, my = 0.0;
        for (int i = 0; i < pop.n_units(); ++i) {
            mx += pop.covariates.at(i, j);
            my += pop.labels[i];
        }
        mx /= pop.n_units();
        my /= pop.n_units();
        double sxy = 0.0, sxx = 0.0, syy = 0.0;
        for (int i = 0; i < pop.n_units(); ++i) {
            const double dx = pop.covariates.at(i, j) - mx;
            const double dy = pop.labels[i] - my;
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
        CHECK(std::abs(sxy / std::sqrt(sxx * syy)) <= 0.05);
    }
}

TEST_CASE("population: nearest neighbor recovers the hidden type") {
    SimConfig config;
    config.n_types = 5;
    config.clusters_per_type = 3;
    config.cluster_separation = 3.0;
    Rng rng(7);
    const Population pop = generate_population(config, 3000, rng);

    const int n_ref = 2500;
    int correct = 0, probes = 0;
    for (int i = n_ref; i < pop.n_units(); ++i) {
        double best = 1e300;
        int best_label = -1;
        for (int j = 0; j < n_ref; ++j) {
            double d2 = 0.0;
            for (int c = 0; c < config.n_covariates_informative; ++c) {
                const double d = pop.covariates.at(i, c) - pop.covariates.at(j, c);
                d2 += d * d;
            }
            if (d2 < best) {
                best = d2;
                best_label = pop.labels[j];
            }
        }
        ++probes;
        if (best_label == pop.labels[i]) ++correct;
    }
    CHECK(static_cast<double>(correct) / probes >= 0.98);
}

TEST_CASE("population: rejects more centers than hypercube vertices") {
    SimConfig config;
    config.n_types = 5;
    config.clusters_per_type = 3; // 15 centers
    config.n_covariates_informative = 3; // 8 vertices only
    Rng rng(8);
    CHECK(code_of([&] { generate_population(config, 10, rng); }) == ErrorCode::InvalidDimension);
}

TEST_CASE("observational draws: arm frequencies and cell means") {
    SimConfig config;
    config.n_types = 2;
    config.n_arms = 3;
    Rng table_rng(9);
    const TypeTable table = generate_type_table(config, table_rng);

    const int n = 18000;
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) labels[i] = i % 2;
    const Policy obs = uniform_policy(n, 3);
    Rng rng(10);
    const ObservationalDataset data = generate_observational_data(table, labels, obs, rng);

    std::vector<int> arm_count(3, 0);
    std::vector<double> cell_sum(6, 0.0);
    std::vector<int> cell_count(6, 0);
    for (int i = 0; i < n; ++i) {
        const int arm = data.treatments[i];
        ++arm_count[arm];
        cell_sum[labels[i] * 3 + arm] += data.outcomes[i];
        ++cell_count[labels[i] * 3 + arm];
    }
    for (int t = 0; t < 3; ++t)
        CHECK(std::abs(arm_count[t] / static_cast<double>(n) - 1.0 / 3.0) <= 0.012);
    for (int th = 0; th < 2; ++th) {
        for (int t = 0; t < 3; ++t) {
            const int c = cell_count[th * 3 + t];
            REQUIRE(c > 100);
            const double mean = cell_sum[th * 3 + t] / c;
            const double se = std::sqrt(table.sigma2_by_type.at(th, t) / c);
            CHECK(std::abs(mean - table.mu_by_type.at(th, t)) <= 4.0 * se);
        }
    }
}

TEST_CASE("observational draws: label and shape validation") {
    SimConfig config;
    Rng rng(11);
    const TypeTable table = generate_type_table(config, rng);
    const Policy obs = uniform_policy(3, config.n_arms);
    CHECK(code_of([&] {
              Rng r(1);
              generate_observational_data(table, {0, 1}, obs, r);
          }) == ErrorCode::DimensionMismatch);
    CHECK(code_of([&] {
              Rng r(1);
              generate_observational_data(table, {0, 1, 99}, obs, r);
          }) == ErrorCode::InvalidDimension);
}

TEST_CASE("expand_from_table copies the labeled rows") {
    TypeTable table;
    table.n_types = 2;
    table.n_arms = 2;
    table.mu_by_type = make_matrix({{1.0, 2.0}, {3.0, 4.0}});
    table.sigma2_by_type = make_matrix({{0.1, 0.2}, {0.3, 0.4}});
    const CounterfactualModel m = expand_from_table(table, {1, 0, 1});
    CHECK(m.mu.at(0, 0) == 3.0);
    CHECK(m.mu.at(1, 1) == 2.0);
    CHECK(m.sigma2.at(2, 1) == 0.4);
}

TEST_CASE("estimator names round-trip") {
    for (EstimatorKind k :
         {EstimatorKind::Oracle, EstimatorKind::PerTypeEmpirical, EstimatorKind::Knn})
        CHECK(estimator_from_string(to_string(k)) == k);
    CHECK(!estimator_from_string("nonsense").has_value());
}

TEST_CASE("per-type estimation: exact cell means and variances") {
    TrainSet train;
    train.pop = zero_population({0, 0, 0, 0, 1, 1, 1, 1});
    train.obs_policy = uniform_policy(8, 2);
    train.treatments = {0, 0, 1, 1, 0, 0, 1, 1};
    train.outcomes = {1.0, 3.0, 2.0, 4.0, 5.0, 9.0, -1.0, 1.0};

    const Population query = zero_population({1, 0});
    const EstimatedModel est =
        estimate_model(train, query, EstimatorKind::PerTypeEmpirical, {});
    CHECK(est.provenance == EstimatorKind::PerTypeEmpirical);
    // Query row 0 is type 1: cells {5,9} and {-1,1}.
    CHECK(est.model.mu.at(0, 0) == 7.0);
    CHECK(est.model.sigma2.at(0, 0) == 8.0);
    CHECK(est.model.mu.at(0, 1) == 0.0);
    CHECK(est.model.sigma2.at(0, 1) == 2.0);
    // Query row 1 is type 0: cells {1,3} and {2,4}.
    CHECK(est.model.mu.at(1, 0) == 2.0);
    CHECK(est.model.sigma2.at(1, 0) == 2.0);
    CHECK(est.model.mu.at(1, 1) == 3.0);
    CHECK(est.model.sigma2.at(1, 1) == 2.0);

    // A cell with fewer than two observations is an error naming the cell.
    train.treatments = {0, 0, 1, 1, 0, 0, 1, 0};
    try {
        estimate_model(train, query, EstimatorKind::PerTypeEmpirical, {});
        FAIL("expected InsufficientSupport");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InsufficientSupport);
        CHECK(std::string(e.what()).find("type 1") != std::string::npos);
        CHECK(std::string(e.what()).find("arm 1") != std::string::npos);
    }
}

TEST_CASE("knn estimation: deterministic ties, pooling, and informative columns") {
    // Three training points at the same informative location.
    TrainSet train;
    train.pop = zero_population({0, 0, 0});
    train.obs_policy = make_policy({{1.0}, {1.0}, {1.0}});
    train.treatments = {0, 0, 0};
    train.outcomes = {1.0, 2.0, 3.0};
    const Population query = zero_population({0});

    EstimateParams params;
    params.knn_k = 2;
    params.n_covariates_informative = 1;
    EstimatedModel est = estimate_model(train, query, EstimatorKind::Knn, params);
    CHECK(est.provenance == EstimatorKind::Knn);
    // All distances tie; lowest training indices win.
    CHECK(est.model.mu.at(0, 0) == 1.5);
    CHECK(est.model.sigma2.at(0, 0) == 0.5);

    // k >= train size pools every observation of the arm.
    params.knn_k = 3;
    est = estimate_model(train, query, EstimatorKind::Knn, params);
    CHECK(est.model.mu.at(0, 0) == 2.0);
    CHECK(est.model.sigma2.at(0, 0) == 1.0);

    // Distance ignores columns past n_covariates_informative.
    TrainSet spread;
    spread.pop = zero_population({0, 0, 0}, 2);
    spread.pop.covariates.at(0, 0) = 0.0;
    spread.pop.covariates.at(0, 1) = 100.0; // huge but non-informative
    spread.pop.covariates.at(1, 0) = 5.0;
    spread.pop.covariates.at(2, 0) = 6.0;
    spread.obs_policy = make_policy({{1.0}, {1.0}, {1.0}});
    spread.treatments = {0, 0, 0};
    spread.outcomes = {10.0, 20.0, 30.0};
    Population q2 = zero_population({0}, 2);
    params.knn_k = 2;
    params.n_covariates_informative = 1;
    est = estimate_model(spread, q2, EstimatorKind::Knn, params);
    CHECK(est.model.mu.at(0, 0) == 15.0); // neighbors are units 0 and 1

    params.knn_k = 1;
    CHECK(code_of([&] { estimate_model(spread, q2, EstimatorKind::Knn, params); }) ==
          ErrorCode::InsufficientSupport);
}

TEST_CASE("knn estimation: an arm without two training draws is an error") {
    TrainSet train;
    train.pop = zero_population({0, 0, 0});
    train.obs_policy = uniform_policy(3, 2);
    train.treatments = {0, 0, 1}; // arm 1 has one observation
    train.outcomes = {1.0, 2.0, 3.0};
    EstimateParams params;
    params.knn_k = 2;
    CHECK(code_of([&] {
              estimate_model(train, zero_population({0}), EstimatorKind::Knn, params);
          }) == ErrorCode::InsufficientSupport);
}

TEST_CASE("oracle estimation requires and copies the true table") {
    TrainSet train;
    train.pop = zero_population({0});
    train.obs_policy = uniform_policy(1, 2);
    train.treatments = {0};
    train.outcomes = {0.0};
    const Population query = zero_population({1, 0});
    CHECK(code_of([&] { estimate_model(train, query, EstimatorKind::Oracle, {}); }) ==
          ErrorCode::InvalidDimension);

    TypeTable table;
    table.n_types = 2;
    table.n_arms = 2;
    table.mu_by_type = make_matrix({{0.0, 1.0}, {2.0, 3.0}});
    table.sigma2_by_type = make_matrix({{1.0, 1.0}, {1.0, 1.0}});
    const EstimatedModel est = estimate_model(train, query, EstimatorKind::Oracle, {}, &table);
    CHECK(est.model.mu.at(0, 0) == 2.0);
    CHECK(est.model.mu.at(1, 1) == 1.0);
}

TEST_CASE("per-type estimation error shrinks as training data grows") {
    SimConfig config;
    config.n_types = 4;
    config.n_arms = 5;
    config.n_covariates_informative = 6;
    config.n_covariates_noise = 4;
    config.clusters_per_type = 2;
    Rng rng(12);
    const TypeTable table = generate_type_table(config, rng);

    auto mse_at = [&](int train_size, uint64_t seed) {
        SimConfig c = config;
        c.train_size = train_size;
        Rng r(seed);
        TrainSet train;
        Rng pop_rng = r.substream("pop");
        Rng draw_rng = r.substream("draw");
        train.pop = generate_population(c, train_size, pop_rng);
        train.obs_policy = uniform_policy(train_size, c.n_arms);
        ObservationalDataset d =
            generate_observational_data(table, train.pop.labels, train.obs_policy, draw_rng);
        train.treatments = std::move(d.treatments);
        train.outcomes = std::move(d.outcomes);

        const EstimatedModel est =
            estimate_model(train, train.pop, EstimatorKind::PerTypeEmpirical, {});
        const CounterfactualModel truth = expand_from_table(table, train.pop.labels);
        double mse = 0.0;
        for (size_t i = 0; i < est.model.mu.data.size(); ++i) {
            const double d2 = est.model.mu.data[i] - truth.mu.data[i];
            mse += d2 * d2;
        }
        return mse / est.model.mu.data.size();
    };

    const double coarse = mse_at(600, 13);
    const double fine = mse_at(6000, 13);
    CHECK(fine < 0.5 * coarse);
}

TEST_CASE("experiment pipeline: determinism and grid independence") {
    SimConfig config;
    config.n_types = 3;
    config.n_arms = 4;
    config.n_covariates_informative = 6;
    config.n_covariates_noise = 4;
    config.clusters_per_type = 2;
    config.train_size = 600;
    config.test_size = 300;
    config.seed = 21;

    EstimateParams params;
    params.knn_k = 20;

    const std::vector<double> grid = {0.0, 0.3, 1.1};
    const ExperimentReport a = run_experiment(config, grid, EstimatorKind::Knn, params);
    const ExperimentReport b = run_experiment(config, grid, EstimatorKind::Knn, params);
    REQUIRE(a.rows.size() == 3);
    REQUIRE(b.rows.size() == 3);
    for (size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].tau_est == b.rows[i].tau_est);
        CHECK(a.rows[i].tau_true == b.rows[i].tau_true);
        CHECK(a.rows[i].tau_hat_ipw == b.rows[i].tau_hat_ipw);
        CHECK(a.rows[i].s_hat == b.rows[i].s_hat);
        CHECK(a.rows[i].z == b.rows[i].z);
    }

    // The row at a given xi does not depend on what else is on the grid: the
    // held-out draw happens on its own stream after all policies are built.
    const ExperimentReport c = run_experiment(config, {0.3}, EstimatorKind::Knn, params);
    CHECK(c.rows[0].tau_hat_ipw == a.rows[1].tau_hat_ipw);
    CHECK(c.rows[0].s_hat == a.rows[1].s_hat);
    CHECK(c.rows[0].tau_true == a.rows[1].tau_true);

    // xi = 0 keeps the logging policy: zero improvement, undefined z.
    CHECK(a.rows[0].tau_est == 0.0);
    CHECK(a.rows[0].tau_true == 0.0);
    CHECK(a.rows[0].tau_hat_ipw == 0.0);
    CHECK(a.rows[0].s_hat == 0.0);
    CHECK(!a.rows[0].z.has_value());

    CHECK(a.est_xi_min.has_value());
    CHECK(a.est_xi_max.has_value());
}

TEST_CASE("experiment pipeline: oracle estimates make believed and true gains agree") {
    SimConfig config;
    config.n_types = 3;
    config.n_arms = 4;
    config.n_covariates_informative = 6;
    config.n_covariates_noise = 4;
    config.clusters_per_type = 2;
    config.train_size = 400;
    config.test_size = 250;
    config.seed = 22;

    const ExperimentReport rep =
        run_experiment(config, {0.0, 0.5, 2.0}, EstimatorKind::Oracle, {});
    for (const ExperimentRow& row : rep.rows) {
        CHECK(row.tau_est == doctest::Approx(row.tau_true).epsilon(1e-12));
        CHECK(std::isfinite(row.tau_hat_ipw));
    }
}

TEST_CASE("substreams are independent of consumption order") {
    Rng a(99);
    (void)a.uniform01();
    (void)a.normal();
    Rng a_sub = a.substream("stage");

    Rng b(99);
    Rng b_sub = b.substream("stage");
    for (int i = 0; i < 10; ++i) CHECK(a_sub.next_u64() == b_sub.next_u64());

    Rng c_sub = Rng(99).substream("other");
    bool all_equal = true;
    Rng d_sub = Rng(99).substream("stage");
    for (int i = 0; i < 10; ++i)
        if (c_sub.next_u64() != d_sub.next_u64()) all_equal = false;
    CHECK(!all_equal);

    Rng i0 = Rng(99).substream("stage", 0);
    Rng i1 = Rng(99).substream("stage", 1);
    CHECK(i0.next_u64() != i1.next_u64());
}

TEST_CASE("log grid: endpoints, monotonicity, and validation") {
    const std::vector<double> g = log_grid(0.0004, 40.0, 25);
    REQUIRE(g.size() == 25);
    CHECK(g.front() == 0.0004);
    CHECK(g.back() == 40.0);
    for (size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);

    CHECK(code_of([&] { log_grid(0.0, 1.0, 5); }) == ErrorCode::NonPositiveInput);
    CHECK(code_of([&] { log_grid(1.0, 1.0, 5); }) == ErrorCode::NonPositiveInput);
    CHECK(code_of([&] { log_grid(0.1, 1.0, 1); }) == ErrorCode::InvalidDimension);
}
