#include "ipwfront/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ipwfront/version.hpp"

namespace ipwfront {

using nlohmann::json;

std::string format_double(double x) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open " + path, path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path, path);
    out << content;
    if (!out) fail(ErrorCode::IoError, "short write to " + path, path);
}

namespace {

json parse_json(const std::string& text) {
    json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) fail(ErrorCode::ParseError, "malformed JSON");
    return j;
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows; ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols; ++c) row.push_back(m.at(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j, const std::string& field) {
    if (!j.is_array() || j.empty()) fail(ErrorCode::ParseError, field + " must be a nonempty array");
    const int rows = static_cast<int>(j.size());
    if (!j[0].is_array() || j[0].empty())
        fail(ErrorCode::ParseError, field + " rows must be nonempty arrays");
    const int cols = static_cast<int>(j[0].size());
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        if (!j[r].is_array() || static_cast<int>(j[r].size()) != cols)
            fail(ErrorCode::ParseError, field + " has ragged rows", field);
        for (int c = 0; c < cols; ++c) {
            if (!j[r][c].is_number())
                fail(ErrorCode::ParseError, field + " has a non-numeric entry", field);
            m.at(r, c) = j[r][c].get<double>();
        }
    }
    return m;
}

json optional_to_json(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

std::optional<double> optional_from_json(const json& j) {
    if (j.is_null()) return std::nullopt;
    if (!j.is_number()) fail(ErrorCode::ParseError, "expected number or null");
    return j.get<double>();
}

} // namespace

std::string model_to_json(const CounterfactualModel& model) {
    json j;
    j["mu"] = matrix_to_json(model.mu);
    j["sigma2"] = matrix_to_json(model.sigma2);
    return j.dump(2) + "\n";
}

CounterfactualModel model_from_json(const std::string& text) {
    json j = parse_json(text);
    if (!j.contains("mu") || !j.contains("sigma2"))
        fail(ErrorCode::ParseError, "model JSON needs \"mu\" and \"sigma2\"");
    CounterfactualModel model;
    model.mu = matrix_from_json(j["mu"], "mu");
    model.sigma2 = matrix_from_json(j["sigma2"], "sigma2");
    validate_model(model);
    return model;
}

std::string policy_to_json(const Policy& policy) {
    json j;
    j["probs"] = matrix_to_json(policy.probs);
    return j.dump(2) + "\n";
}

Policy policy_from_json(const std::string& text) {
    json j = parse_json(text);
    if (!j.contains("probs")) fail(ErrorCode::ParseError, "policy JSON needs \"probs\"");
    Policy p;
    p.probs = matrix_from_json(j["probs"], "probs");
    validate_policy(p);
    return p;
}

std::string eval_report_to_json(const EvalReport& report) {
    json j;
    j["tau_hat"] = report.tau_hat;
    j["s_hat"] = report.s_hat;
    j["z"] = optional_to_json(report.z);
    return j.dump(2) + "\n";
}

EvalReport eval_report_from_json(const std::string& text) {
    json j = parse_json(text);
    EvalReport r;
    r.tau_hat = j.at("tau_hat").get<double>();
    r.s_hat = j.at("s_hat").get<double>();
    r.z = optional_from_json(j.at("z"));
    return r;
}

std::string frontier_to_json(const std::vector<FrontierPoint>& points) {
    json arr = json::array();
    for (const FrontierPoint& p : points) {
        json j;
        j["xi"] = p.xi;
        j["tau"] = p.tau;
        j["s"] = p.s;
        j["expected_z"] = optional_to_json(p.expected_z);
        j["policy"] = matrix_to_json(p.policy.probs);
        j["zero_sets"] = p.zero_sets;
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

std::vector<FrontierPoint> frontier_from_json(const std::string& text) {
    json arr = parse_json(text);
    if (!arr.is_array()) fail(ErrorCode::ParseError, "frontier JSON must be an array");
    std::vector<FrontierPoint> points;
    points.reserve(arr.size());
    for (const json& j : arr) {
        FrontierPoint p;
        p.xi = j.at("xi").get<double>();
        p.tau = j.at("tau").get<double>();
        p.s = j.at("s").get<double>();
        p.expected_z = optional_from_json(j.at("expected_z"));
        p.policy.probs = matrix_from_json(j.at("policy"), "policy");
        p.zero_sets = j.at("zero_sets").get<std::vector<std::vector<int>>>();
        points.push_back(std::move(p));
    }
    return points;
}

std::string sim_config_to_json(const SimConfig& c) {
    json j;
    j["n_types"] = c.n_types;
    j["n_arms"] = c.n_arms;
    j["n_covariates_informative"] = c.n_covariates_informative;
    j["n_covariates_noise"] = c.n_covariates_noise;
    j["clusters_per_type"] = c.clusters_per_type;
    j["train_size"] = c.train_size;
    j["test_size"] = c.test_size;
    j["seed"] = c.seed;
    j["mean_mixture"] = c.mean_mixture;
    j["perturbation_variance"] = c.perturbation_variance;
    j["cluster_separation"] = c.cluster_separation;
    return j.dump(2) + "\n";
}

SimConfig sim_config_from_json(const std::string& text) {
    json j = parse_json(text);
    SimConfig c;
    // Every field optional: absent fields keep the documented defaults.
    c.n_types = j.value("n_types", c.n_types);
    c.n_arms = j.value("n_arms", c.n_arms);
    c.n_covariates_informative = j.value("n_covariates_informative", c.n_covariates_informative);
    c.n_covariates_noise = j.value("n_covariates_noise", c.n_covariates_noise);
    c.clusters_per_type = j.value("clusters_per_type", c.clusters_per_type);
    c.train_size = j.value("train_size", c.train_size);
    c.test_size = j.value("test_size", c.test_size);
    c.seed = j.value("seed", c.seed);
    if (j.contains("mean_mixture")) {
        auto v = j["mean_mixture"].get<std::vector<double>>();
        if (v.size() != 3) fail(ErrorCode::ParseError, "mean_mixture must have 3 weights");
        std::copy(v.begin(), v.end(), c.mean_mixture.begin());
    }
    c.perturbation_variance = j.value("perturbation_variance", c.perturbation_variance);
    c.cluster_separation = j.value("cluster_separation", c.cluster_separation);
    validate_config(c);
    return c;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double_field(const std::string& s, const char* what) {
    if (s == "nan") return std::nan("");
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        fail(ErrorCode::ParseError, std::string("bad numeric field for ") + what + ": '" + s + "'");
    return v;
}

long parse_int_field(const std::string& s, const char* what) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        fail(ErrorCode::ParseError, std::string("bad integer field for ") + what + ": '" + s + "'");
    return v;
}

} // namespace

std::string dataset_to_csv(const ObservationalDataset& data) {
    std::ostringstream out;
    const int A = data.n_arms();
    out << "unit,arm";
    for (int t = 0; t < A; ++t) out << ",prob_arm_" << t;
    out << ",outcome\n";
    for (int n = 0; n < data.n_units(); ++n) {
        out << n << ',' << data.treatments[n];
        for (int t = 0; t < A; ++t) out << ',' << format_double(data.obs_policy.probs.at(n, t));
        out << ',' << format_double(data.outcomes[n]) << '\n';
    }
    return out.str();
}

ObservationalDataset dataset_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::ParseError, "empty dataset CSV");
    const std::vector<std::string> header = split_line(line);
    if (header.size() < 4 || header[0] != "unit" || header[1] != "arm" ||
        header.back() != "outcome")
        fail(ErrorCode::ParseError, "dataset CSV header must be unit,arm,prob_arm_0,...,outcome");
    const int A = static_cast<int>(header.size()) - 3;
    for (int t = 0; t < A; ++t)
        if (header[2 + t] != "prob_arm_" + std::to_string(t))
            fail(ErrorCode::ParseError, "unexpected propensity column '" + header[2 + t] + "'");

    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        rows.push_back(split_line(line));
        if (rows.back().size() != header.size())
            fail(ErrorCode::ParseError,
                 "ragged CSV row " + std::to_string(rows.size()) + ": expected " +
                     std::to_string(header.size()) + " fields, got " +
                     std::to_string(rows.back().size()));
    }
    if (rows.empty()) fail(ErrorCode::ParseError, "dataset CSV has no data rows");

    const int N = static_cast<int>(rows.size());
    ObservationalDataset data;
    data.obs_policy.probs = Matrix(N, A);
    data.treatments.resize(N);
    data.outcomes.resize(N);
    for (int n = 0; n < N; ++n) {
        const auto& f = rows[n];
        if (parse_int_field(f[0], "unit") != n)
            fail(ErrorCode::ParseError, "unit column must run 0..N-1 in order (row " +
                                            std::to_string(n) + " says '" + f[0] + "')");
        data.treatments[n] = static_cast<int>(parse_int_field(f[1], "arm"));
        for (int t = 0; t < A; ++t)
            data.obs_policy.probs.at(n, t) = parse_double_field(f[2 + t], "propensity");
        data.outcomes[n] = parse_double_field(f[2 + A], "outcome");
    }
    validate_dataset(data);
    return data;
}

std::string experiment_rows_to_csv(const std::vector<ExperimentRow>& rows) {
    std::ostringstream out;
    out << "seed,xi,tau_est,tau_true,tau_hat_ipw,s_hat,z\n";
    for (const ExperimentRow& r : rows) {
        out << r.seed << ',' << format_double(r.xi) << ',' << format_double(r.tau_est) << ','
            << format_double(r.tau_true) << ',' << format_double(r.tau_hat_ipw) << ','
            << format_double(r.s_hat) << ',' << (r.z ? format_double(*r.z) : "nan") << '\n';
    }
    return out.str();
}

std::vector<ExperimentRow> experiment_rows_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::ParseError, "empty experiment CSV");
    if (split_line(line) != std::vector<std::string>{"seed", "xi", "tau_est", "tau_true",
                                                     "tau_hat_ipw", "s_hat", "z"})
        fail(ErrorCode::ParseError, "unexpected experiment CSV header");
    std::vector<ExperimentRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_line(line);
        if (f.size() != 7) fail(ErrorCode::ParseError, "ragged experiment CSV row");
        ExperimentRow r;
        r.seed = static_cast<uint64_t>(parse_int_field(f[0], "seed"));
        r.xi = parse_double_field(f[1], "xi");
        r.tau_est = parse_double_field(f[2], "tau_est");
        r.tau_true = parse_double_field(f[3], "tau_true");
        r.tau_hat_ipw = parse_double_field(f[4], "tau_hat_ipw");
        r.s_hat = parse_double_field(f[5], "s_hat");
        const double z = parse_double_field(f[6], "z");
        if (!std::isnan(z)) r.z = z;
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string plot_data_to_csv(const std::vector<ExperimentRow>& rows) {
    std::ostringstream out;
    out << "tau_hat_ipw,z\n";
    for (const ExperimentRow& r : rows)
        if (r.z) out << format_double(r.tau_hat_ipw) << ',' << format_double(*r.z) << '\n';
    return out.str();
}

void write_manifest(const std::string& output_path, const RunManifest& manifest) {
    json j;
    j["subcommand"] = manifest.subcommand;
    j["inputs"] = manifest.inputs;
    j["seed"] = manifest.seed ? json(*manifest.seed) : json(nullptr);
    j["tolerance_overrides"] = manifest.tolerance_overrides;
    j["tool"] = std::string(kToolName);
    j["version"] = std::string(kToolVersion);
    j["wall_clock_seconds"] = manifest.wall_clock_seconds;
    write_text_file(output_path + ".manifest.json", j.dump(2) + "\n");
}

} // namespace ipwfront
