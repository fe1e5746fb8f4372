#include <doctest.h>

#include <cmath>

#include "ipwfront/instances.hpp"
#include "ipwfront/ipw_eval.hpp"
#include "ipwfront/rng.hpp"
#include "test_util.hpp"

using namespace ipwfront;
using namespace ipwfront::testutil;

namespace {

// Independent route to the variance: the expanded per-unit form
// (1/N^2) * sum_n [ sum_t (mu^2+sigma2) d^2/po - (sum_t mu*d)^2 ].
double variance_expanded(const CounterfactualModel& m, const Policy& obs, const Policy& cand) {
    const int N = m.n_units();
    double total = 0.0;
    for (int n = 0; n < N; ++n) {
        double quad = 0.0, dot = 0.0;
        for (int t = 0; t < m.n_arms(); ++t) {
            const double d = cand.probs.at(n, t) - obs.probs.at(n, t);
            quad += m.second_moment(n, t) * d * d / obs.probs.at(n, t);
            dot += m.mu.at(n, t) * d;
        }
        total += quad - dot * dot;
    }
    return total / (static_cast<double>(N) * N);
}

ObservationalDataset draw_dataset(const CounterfactualModel& m, const Policy& obs, Rng& rng) {
    ObservationalDataset d;
    d.obs_policy = obs;
    const int N = m.n_units();
    d.treatments.resize(N);
    d.outcomes.resize(N);
    for (int n = 0; n < N; ++n) {
        const int arm = rng.categorical(obs.probs.row(n));
        d.treatments[n] = arm;
        d.outcomes[n] = rng.normal(m.mu.at(n, arm), std::sqrt(m.sigma2.at(n, arm)));
    }
    return d;
}

} // namespace

TEST_CASE("true_tau: hand value, identity and linearity") {
    const CounterfactualModel m = binary_model();
    const Policy obs = binary_obs();
    CHECK(true_tau(m, obs, obs) == 0.0);
    const Policy all_on = make_policy({{0.0, 1.0}});
    CHECK(true_tau(m, obs, all_on) == doctest::Approx(0.5).epsilon(1e-15));

    CounterfactualModel scaled = m;
    for (double& v : scaled.mu.data) v *= 3.0;
    CHECK(true_tau(scaled, obs, all_on) == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("true_variance: zero at obs, exact hand value") {
    const CounterfactualModel m = binary_model();
    const Policy obs = binary_obs();
    CHECK(true_variance(m, obs, obs) == 0.0);
    // Hand evaluation: T=1 w.p. 1/2 gives outcome*(2-1) ~ N(1,1); T=0 gives
    // -outcome ~ N(0,1); variance of the mixture is 1.5 - 0.25 = 1.25.
    const Policy all_on = make_policy({{0.0, 1.0}});
    CHECK(true_variance(m, obs, all_on) == doctest::Approx(1.25).epsilon(1e-14));
}

TEST_CASE("true_variance matches a 1e6-draw Monte-Carlo estimate") {
    const CounterfactualModel m = binary_model();
    const Policy obs = binary_obs();
    const Policy all_on = make_policy({{0.0, 1.0}});
    const double s2 = true_variance(m, obs, all_on);

    Rng rng(20240817);
    const int draws = 1000000;
    double mean = 0.0, m2 = 0.0, m4_acc = 0.0;
    std::vector<double> samples(draws);
    for (int i = 0; i < draws; ++i) {
        const ObservationalDataset d = draw_dataset(m, obs, rng);
        const double w = all_on.probs.at(0, d.treatments[0]) / 0.5;
        samples[i] = d.outcomes[0] * (w - 1.0);
        mean += samples[i];
    }
    mean /= draws;
    for (double x : samples) {
        const double c = x - mean;
        m2 += c * c;
        m4_acc += c * c * c * c;
    }
    const double var = m2 / (draws - 1);
    const double m4 = m4_acc / draws;
    const double se_var = std::sqrt((m4 - var * var) / draws);
    CHECK(std::abs(var - s2) <= 3.0 * se_var);
}

TEST_CASE("duplicating the single unit halves the variance") {
    const CounterfactualModel m1 = binary_model();
    const Policy obs1 = binary_obs();
    const Policy cand1 = make_policy({{0.0, 1.0}});
    const CounterfactualModel m2 = make_model({{0.0, 1.0}, {0.0, 1.0}}, {{1.0, 1.0}, {1.0, 1.0}});
    const Policy obs2 = make_policy({{0.5, 0.5}, {0.5, 0.5}});
    const Policy cand2 = make_policy({{0.0, 1.0}, {0.0, 1.0}});
    CHECK(true_variance(m2, obs2, cand2) ==
          doctest::Approx(0.5 * true_variance(m1, obs1, cand1)).epsilon(1e-14));
}

TEST_CASE("grouped and expanded variance forms agree to 1e-10 relative") {
    Rng rng(7);
    for (int rep = 0; rep < 50; ++rep) {
        const int N = 1 + static_cast<int>(rng.below(5));
        const int A = 2 + static_cast<int>(rng.below(4));
        const CounterfactualModel m = random_model(rng, N, A);
        const Policy obs = random_obs_policy(rng, N, A);
        const Policy cand = random_obs_policy(rng, N, A);
        const double grouped = true_variance(m, obs, cand);
        const double expanded = variance_expanded(m, obs, cand);
        CHECK(std::abs(grouped - expanded) <= 1e-10 * std::max(1.0, std::abs(grouped)));
    }
}

TEST_CASE("tau is affine and variance is convex along policy mixtures") {
    Rng rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        const int N = 1 + static_cast<int>(rng.below(4));
        const int A = 2 + static_cast<int>(rng.below(4));
        const CounterfactualModel m = random_model(rng, N, A);
        const Policy obs = random_obs_policy(rng, N, A);
        const Policy p1 = random_obs_policy(rng, N, A);
        const Policy p2 = random_obs_policy(rng, N, A);
        const double alpha = rng.uniform01();
        Policy mix = p1;
        for (size_t i = 0; i < mix.probs.data.size(); ++i)
            mix.probs.data[i] = alpha * p1.probs.data[i] + (1.0 - alpha) * p2.probs.data[i];

        const double lhs = true_tau(m, obs, mix);
        const double rhs = alpha * true_tau(m, obs, p1) + (1.0 - alpha) * true_tau(m, obs, p2);
        CHECK(std::abs(lhs - rhs) <= 1e-12);

        Policy mid = p1;
        for (size_t i = 0; i < mid.probs.data.size(); ++i)
            mid.probs.data[i] = 0.5 * (p1.probs.data[i] + p2.probs.data[i]);
        CHECK(true_variance(m, obs, mid) <=
              0.5 * (true_variance(m, obs, p1) + true_variance(m, obs, p2)) + 1e-12);
    }
}

TEST_CASE("ipw_estimate: hand-evaluated two-unit example") {
    ObservationalDataset d;
    d.obs_policy = make_policy({{0.5, 0.5}, {0.5, 0.5}});
    d.treatments = {1, 0};
    d.outcomes = {2.0, 0.0};
    const Policy cand = make_policy({{1.0, 0.0}, {1.0, 0.0}});
    const EvalReport r = ipw_estimate(d, cand);
    CHECK(r.weights == std::vector<double>{0.0, 2.0});
    CHECK(r.tau_hat == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(r.s_hat > 0.0);
    CHECK(r.z.has_value());
}

TEST_CASE("ipw_estimate: candidate == obs gives zero estimate and undefined z") {
    ObservationalDataset d;
    d.obs_policy = make_policy({{0.5, 0.5}, {0.25, 0.75}});
    d.treatments = {1, 0};
    d.outcomes = {2.0, -1.0};
    const EvalReport r = ipw_estimate(d, d.obs_policy);
    CHECK(r.tau_hat == 0.0);
    CHECK(r.s_hat == 0.0);
    CHECK(!r.z.has_value());
    CHECK(r.weights == std::vector<double>{1.0, 1.0});
}

TEST_CASE("ipw_estimate rejects a single-unit dataset") {
    ObservationalDataset d;
    d.obs_policy = binary_obs();
    d.treatments = {0};
    d.outcomes = {1.0};
    try {
        ipw_estimate(d, binary_obs());
        FAIL("expected DegenerateSE");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DegenerateSE);
    }
}

TEST_CASE("ipw_estimate is unbiased for a fixed candidate (Monte-Carlo)") {
    Rng rng(99);
    const int N = 8, A = 3;
    const CounterfactualModel m = random_model(rng, N, A);
    const Policy obs = random_obs_policy(rng, N, A);
    const Policy cand = random_obs_policy(rng, N, A);
    const double tau = true_tau(m, obs, cand);

    const int draws = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < draws; ++i) {
        const ObservationalDataset d = draw_dataset(m, obs, rng);
        const double t = ipw_estimate(d, cand).tau_hat;
        sum += t;
        sumsq += t * t;
    }
    const double mean = sum / draws;
    const double var = (sumsq - draws * mean * mean) / (draws - 1);
    const double se = std::sqrt(var / draws);
    CHECK(std::abs(mean - tau) <= 3.0 * se);
}

TEST_CASE("expected_z composes tau and the variance") {
    const CounterfactualModel m = binary_model();
    const Policy obs = binary_obs();
    CHECK(!expected_z(m, obs, obs).has_value());
    const Policy all_on = make_policy({{0.0, 1.0}});
    const auto z = expected_z(m, obs, all_on);
    REQUIRE(z.has_value());
    CHECK(*z == doctest::Approx(0.5 / std::sqrt(1.25)).epsilon(1e-14));
}

TEST_CASE("reduction order independence: unit sums agree after permutation") {
    Rng rng(123);
    const int N = 64, A = 4;
    const CounterfactualModel m = random_model(rng, N, A);
    const Policy obs = random_obs_policy(rng, N, A);
    const Policy cand = random_obs_policy(rng, N, A);

    // Reverse all unit rows; per-unit quantities are identical, so any
    // discrepancy is pure reduction order.
    CounterfactualModel mr = m;
    Policy obs_r = obs, cand_r = cand;
    for (int n = 0; n < N; ++n)
        for (int t = 0; t < A; ++t) {
            mr.mu.at(n, t) = m.mu.at(N - 1 - n, t);
            mr.sigma2.at(n, t) = m.sigma2.at(N - 1 - n, t);
            obs_r.probs.at(n, t) = obs.probs.at(N - 1 - n, t);
            cand_r.probs.at(n, t) = cand.probs.at(N - 1 - n, t);
        }
    CHECK(std::abs(true_tau(m, obs, cand) - true_tau(mr, obs_r, cand_r)) <= 1e-12);
    CHECK(std::abs(true_variance(m, obs, cand) - true_variance(mr, obs_r, cand_r)) <= 1e-12);
}
