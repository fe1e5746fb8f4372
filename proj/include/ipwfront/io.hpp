#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ipwfront/domain.hpp"
#include "ipwfront/ipw_eval.hpp"
#include "ipwfront/sim.hpp"

namespace ipwfront {

// Shortest decimal representation that round-trips the exact double
// (std::to_chars); parsing one of these reproduces the bits.
std::string format_double(double x);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// JSON codecs.  Schemas are documented in docs/file-formats.md; every writer
// output is accepted by the matching reader bit-exactly.
std::string model_to_json(const CounterfactualModel& model);
CounterfactualModel model_from_json(const std::string& text);

std::string policy_to_json(const Policy& policy);
Policy policy_from_json(const std::string& text);

std::string eval_report_to_json(const EvalReport& report);
EvalReport eval_report_from_json(const std::string& text);

std::string frontier_to_json(const std::vector<FrontierPoint>& points);
std::vector<FrontierPoint> frontier_from_json(const std::string& text);

std::string sim_config_to_json(const SimConfig& config);
SimConfig sim_config_from_json(const std::string& text);

// CSV codec for logged data: header
//   unit,arm,prob_arm_0,...,prob_arm_K,outcome
// one row per unit, units in order 0..N-1.
std::string dataset_to_csv(const ObservationalDataset& data);
ObservationalDataset dataset_from_csv(const std::string& text);

// CSV codec for experiment reports: header
//   seed,xi,tau_est,tau_true,tau_hat_ipw,s_hat,z
// with "nan" in the z column when it is undefined.
std::string experiment_rows_to_csv(const std::vector<ExperimentRow>& rows);
std::vector<ExperimentRow> experiment_rows_from_csv(const std::string& text);

// (tau_hat, z) pairs for plotting; rows with undefined z are skipped.
std::string plot_data_to_csv(const std::vector<ExperimentRow>& rows);

// Reproducibility sidecar written next to every file output.
struct RunManifest {
    std::string subcommand;
    std::map<std::string, std::string> inputs; // flag name -> path
    std::optional<uint64_t> seed;
    std::map<std::string, double> tolerance_overrides;
    double wall_clock_seconds = 0.0;
};

// Writes <output_path>.manifest.json.
void write_manifest(const std::string& output_path, const RunManifest& manifest);

} // namespace ipwfront
