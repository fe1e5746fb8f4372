#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ipwfront/domain.hpp"
#include "ipwfront/rng.hpp"

namespace ipwfront {

// Hidden-type outcome table: unit types share outcome distributions.
struct TypeTable {
    int n_types = 0;
    int n_arms = 0;
    Matrix mu_by_type;     // n_types x n_arms
    Matrix sigma2_by_type; // n_types x n_arms
};

struct SimConfig {
    int n_types = 5;
    int n_arms = 10;
    int n_covariates_informative = 10;
    int n_covariates_noise = 10;
    int clusters_per_type = 3;
    int train_size = 2000;
    int test_size = 2500;
    uint64_t seed = 1;
    // Arm means are good/bad/neutral: centers +1, -1, 0 with these weights,
    // each perturbed by a normal with the variance below.
    std::array<double, 3> mean_mixture{0.1, 0.1, 0.8};
    double perturbation_variance = 1e-4;
    // Half-width of the hypercube on which cluster centers sit in the
    // informative subspace; larger separates types more cleanly.
    double cluster_separation = 3.0;
};

void validate_config(const SimConfig& config);

// Units with covariates and their hidden type labels; no outcomes yet.
// Frontier construction may see everything here (plus the logging policy)
// but never a logged treatment or outcome.
struct Population {
    Matrix covariates; // n_units x (informative + noise); informative first
    std::vector<int> labels;

    int n_units() const { return static_cast<int>(labels.size()); }
};

enum class EstimatorKind { Oracle, PerTypeEmpirical, Knn };

std::string to_string(EstimatorKind kind);
std::optional<EstimatorKind> estimator_from_string(std::string_view name);

struct EstimatedModel {
    CounterfactualModel model; // one row per query unit
    EstimatorKind provenance = EstimatorKind::Oracle;
};

struct EstimateParams {
    int knn_k = 50;
    int n_covariates_informative = 10; // distance uses only these columns
};

// Training data: population plus one logged (treatment, outcome) per unit.
struct TrainSet {
    Population pop;
    Policy obs_policy;
    std::vector<int> treatments;
    std::vector<double> outcomes;
};

TypeTable generate_type_table(const SimConfig& config, Rng& rng);

Population generate_population(const SimConfig& config, int n_units, Rng& rng);

// Draw one logged observation per unit from the table and logging policy.
ObservationalDataset generate_observational_data(const TypeTable& table,
                                                 const std::vector<int>& labels, const Policy& obs,
                                                 Rng& rng);

// Per-unit true model implied by the table and unit labels.
CounterfactualModel expand_from_table(const TypeTable& table, const std::vector<int>& labels);

// Counterfactual estimates for every unit of `query`.
//  - PerTypeEmpirical: group train rows by (true type, arm); cell means and
//    unbiased cell variances.
//  - Knn: per query unit and arm, mean/variance of the k nearest training
//    outcomes under that arm (Euclidean distance on informative covariates).
//  - Oracle: copy the true table rows (table must be provided).
EstimatedModel estimate_model(const TrainSet& train, const Population& query, EstimatorKind kind,
                              const EstimateParams& params, const TypeTable* table = nullptr);

// One evaluated grid point of an end-to-end experiment.
struct ExperimentRow {
    uint64_t seed = 0;
    double xi = 0.0;
    double tau_est = 0.0;          // improvement the estimated model believes
    double tau_true = 0.0;         // improvement under the true table
    double tau_hat_ipw = 0.0;      // held-out IPW estimate
    double s_hat = 0.0;
    std::optional<double> z;
};

struct ExperimentReport {
    std::vector<ExperimentRow> rows;
    std::optional<double> est_xi_min; // knot interval of the estimated model
    std::optional<double> est_xi_max;
};

// Full pipeline: generate table and populations, estimate counterfactuals on
// the training split, build the policy path from estimates on test units,
// then (and only then) draw the held-out test observations and evaluate each
// grid policy with IPW.
ExperimentReport run_experiment(const SimConfig& config, const std::vector<double>& xi_grid,
                                EstimatorKind method, const EstimateParams& params = {});

// Default experiment grid: n points log-spaced over [lo, hi], inclusive.
std::vector<double> log_grid(double lo, double hi, int n);

} // namespace ipwfront
