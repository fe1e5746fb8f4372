// Command-line front end: evaluate / frontier / select / policy-at / verify /
// simulate.  Data goes to --out (default stdout); a reproducibility manifest
// is written next to every file output.  Exit codes: 0 success, 1 validation
// or usage error (structured JSON on stderr), 2 verification failure.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ipwfront/frontier.hpp"
#include "ipwfront/instances.hpp"
#include "ipwfront/io.hpp"
#include "ipwfront/ipw_eval.hpp"
#include "ipwfront/oracle.hpp"
#include "ipwfront/rng.hpp"
#include "ipwfront/sim.hpp"
#include "ipwfront/version.hpp"

namespace {

using namespace ipwfront;

struct OutputSink {
    std::string path = "-";

    void deliver(const std::string& content, RunManifest manifest, double seconds) const {
        if (path == "-") {
            std::cout << content;
            return;
        }
        manifest.wall_clock_seconds = seconds;
        write_text_file(path, content);
        write_manifest(path, manifest);
    }
};

// Grid specs accepted by `frontier` and `simulate`:
//   "knots+log:N"          knots plus N log-spaced fill points (frontier)
//   "log:N:LO:HI"          N log-spaced points on [LO, HI], inclusive
//   "X1,X2,..."            explicit comma-separated values
GridSpec parse_frontier_grid(const std::string& spec) {
    if (spec.rfind("knots+log:", 0) == 0) {
        const int n = static_cast<int>(std::stol(spec.substr(10)));
        return GridSpec::knots_plus_log(n);
    }
    if (spec == "auto") return GridSpec::knots_plus_log(25);
    if (spec.rfind("log:", 0) == 0) {
        std::vector<std::string> parts;
        std::string cur;
        for (char ch : spec.substr(4)) {
            if (ch == ':') {
                parts.push_back(cur);
                cur.clear();
            } else
                cur.push_back(ch);
        }
        parts.push_back(cur);
        if (parts.size() != 3) fail(ErrorCode::ParseError, "log grid spec is log:N:LO:HI", "--grid");
        return GridSpec::explicit_list(
            log_grid(std::stod(parts[1]), std::stod(parts[2]), static_cast<int>(std::stol(parts[0]))));
    }
    std::vector<double> xs;
    std::string cur;
    for (char ch : spec + ",") {
        if (ch == ',') {
            if (!cur.empty()) xs.push_back(std::stod(cur));
            cur.clear();
        } else
            cur.push_back(ch);
    }
    if (xs.empty()) fail(ErrorCode::ParseError, "empty grid spec", "--grid");
    std::sort(xs.begin(), xs.end());
    return GridSpec::explicit_list(std::move(xs));
}

std::vector<double> parse_value_grid(const std::string& spec) {
    GridSpec g = parse_frontier_grid(spec);
    if (g.kind != GridSpec::Kind::ExplicitList)
        fail(ErrorCode::ParseError, "this subcommand needs an explicit or log:N:LO:HI grid", "--grid");
    return g.values;
}

int run_verify(const std::string& model_path, const std::string& obs_path, int trials,
               uint64_t seed, int xi_count, double tolerance, bool inject_fault,
               const OutputSink& out, int threads) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng root(seed);
    double worst_diff = 0.0, worst_foc = 0.0, worst_kappa = 0.0;
    double worst_diff_xi = 0.0;
    int points = 0;

    std::vector<std::pair<CounterfactualModel, Policy>> cases;
    if (!model_path.empty()) {
        cases.emplace_back(model_from_json(read_text_file(model_path)),
                           policy_from_json(read_text_file(obs_path)));
    } else {
        Rng gen = root.substream("instances");
        for (int i = 0; i < trials; ++i) {
            const int n_units = 1 + static_cast<int>(gen.below(6));
            const int n_arms = 2 + static_cast<int>(gen.below(4));
            cases.emplace_back(random_model(gen, n_units, n_arms),
                               random_obs_policy(gen, n_units, n_arms));
        }
    }

    Rng fault_rng = root.substream("fault");
    for (size_t c = 0; c < cases.size(); ++c) {
        const CounterfactualModel& model = cases[c].first;
        const Policy& obs = cases[c].second;
        const KnotTable knots = build_knot_table(model, obs, threads);
        const double xi_hi = knots.xi_max ? 1.5 * *knots.xi_max : 1.0;

        OracleOptions opts;
        opts.n_threads = threads;
        Policy warm = obs;
        for (int k = 0; k < xi_count; ++k) {
            const double xi = xi_hi * k / (xi_count - 1);
            FrontierPoint closed = policy_at_xi(model, obs, knots, xi);
            if (inject_fault) {
                const int n = static_cast<int>(fault_rng.below(model.n_units()));
                closed.policy.probs.at(n, 0) += 1e-3;
            }
            opts.init = &warm;
            const OracleSolution sol = solve_at_xi(model, obs, xi, opts);
            warm = sol.policy;
            ++points;
            for (int n = 0; n < model.n_units(); ++n) {
                for (int t = 0; t < model.n_arms(); ++t) {
                    const double d =
                        std::abs(closed.policy.probs.at(n, t) - sol.policy.probs.at(n, t));
                    if (d > worst_diff) {
                        worst_diff = d;
                        worst_diff_xi = xi;
                    }
                }
            }
            const KktReport kkt = kkt_residuals(model, obs, closed.policy, xi);
            worst_foc = std::max(worst_foc, kkt.max_stationarity_residual);
            worst_kappa = std::min(worst_kappa, kkt.min_kappa);
        }
    }

    const bool pass = worst_diff <= tolerance;
    std::ostringstream report;
    report << "verify: " << cases.size() << " instance(s), " << points << " path points\n"
           << "  max |closed-form - oracle| entry difference: " << format_double(worst_diff)
           << " at xi = " << format_double(worst_diff_xi) << " (tolerance "
           << format_double(tolerance) << ")\n"
           << "  max stationarity residual (closed form): " << format_double(worst_foc) << "\n"
           << "  min recovered eliminated-arm multiplier: " << format_double(worst_kappa) << "\n"
           << (pass ? "PASS" : "FAIL") << "\n";
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    RunManifest manifest;
    manifest.subcommand = "verify";
    if (!model_path.empty()) {
        manifest.inputs["--model"] = model_path;
        manifest.inputs["--obs-policy"] = obs_path;
    }
    manifest.seed = seed;
    manifest.tolerance_overrides["tolerance"] = tolerance;
    out.deliver(report.str(), manifest, secs);
    return pass ? 0 : 2;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(kToolName) +
                 " — exact improvement-vs-significance frontiers for stochastic "
                 "treatment policies (version " +
                 std::string(kToolVersion) + ")"};
    app.require_subcommand(1);
    argv = app.ensure_utf8(argv);

    int threads = 1;
    app.add_option("--threads", threads, "worker threads for per-unit loops")
        ->envname("IPWFRONT_THREADS")
        ->check(CLI::PositiveNumber);

    // ---- evaluate ----
    auto* cmd_eval = app.add_subcommand("evaluate", "IPW-evaluate a policy on logged data");
    std::string eval_dataset, eval_policy;
    OutputSink eval_out;
    cmd_eval->add_option("--dataset", eval_dataset, "logged data CSV")->required();
    cmd_eval->add_option("--policy", eval_policy, "candidate policy JSON")->required();
    cmd_eval->add_option("--out", eval_out.path, "output path ('-' = stdout)");

    // ---- frontier ----
    auto* cmd_front = app.add_subcommand("frontier", "compute the Pareto frontier of a model");
    std::string front_model, front_obs, front_grid = "knots+log:25";
    OutputSink front_out;
    cmd_front->add_option("--model", front_model, "counterfactual model JSON")->required();
    cmd_front->add_option("--obs-policy", front_obs, "observational policy JSON")->required();
    cmd_front->add_option("--grid", front_grid, "grid spec (knots+log:N | log:N:LO:HI | list)");
    cmd_front->add_option("--out", front_out.path, "output path ('-' = stdout)");

    // ---- select ----
    auto* cmd_select = app.add_subcommand("select", "trade-off value for an improvement target");
    double sel_lambda = 0.0, sel_zmin = 0.0;
    cmd_select->add_option("--lambda", sel_lambda, "improvement target")->required();
    cmd_select->add_option("--zmin", sel_zmin, "required z-score")->required();

    // ---- policy-at ----
    auto* cmd_pol = app.add_subcommand("policy-at", "optimal policy at one trade-off value");
    std::string pol_model, pol_obs;
    double pol_xi = 0.0;
    OutputSink pol_out;
    cmd_pol->add_option("--model", pol_model, "counterfactual model JSON")->required();
    cmd_pol->add_option("--obs-policy", pol_obs, "observational policy JSON")->required();
    cmd_pol->add_option("--xi", pol_xi, "trade-off value")->required();
    cmd_pol->add_option("--out", pol_out.path, "output path ('-' = stdout)");

    // ---- verify ----
    auto* cmd_verify =
        app.add_subcommand("verify", "check the closed form against the independent solver");
    std::string ver_model, ver_obs;
    int ver_trials = 20, ver_xi_count = 10;
    uint64_t ver_seed = 0;
    double ver_tol = 1e-5;
    bool ver_fault = false;
    OutputSink ver_out;
    cmd_verify->add_option("--model", ver_model, "model JSON (omit to use random instances)");
    cmd_verify->add_option("--obs-policy", ver_obs, "observational policy JSON");
    cmd_verify->add_option("--trials", ver_trials, "random instances to draw")
        ->check(CLI::PositiveNumber);
    cmd_verify->add_option("--seed", ver_seed, "RNG seed")->required();
    cmd_verify->add_option("--xi-count", ver_xi_count, "path points per instance")
        ->check(CLI::Range(2, 1000));
    cmd_verify->add_option("--tolerance", ver_tol, "max allowed per-entry difference");
    cmd_verify->add_flag("--inject-fault", ver_fault, "perturb the closed form (self-test hook)")
        ->group(""); // hidden
    cmd_verify->add_option("--out", ver_out.path, "output path ('-' = stdout)");

    // ---- simulate ----
    auto* cmd_sim = app.add_subcommand("simulate", "run the synthetic end-to-end experiment");
    std::string sim_config_path, sim_grid = "log:25:0.0004:40", sim_method = "per-type-empirical";
    std::string sim_plot;
    std::optional<uint64_t> sim_seed;
    int sim_knn_k = 50;
    OutputSink sim_out;
    cmd_sim->add_option("--config", sim_config_path, "simulation config JSON")->required();
    cmd_sim->add_option("--grid", sim_grid, "grid spec (log:N:LO:HI | list)");
    cmd_sim->add_option("--method", sim_method, "oracle | per-type-empirical | knn");
    cmd_sim->add_option("--knn-k", sim_knn_k, "neighbors for knn estimation");
    cmd_sim->add_option("--seed", sim_seed, "override the config seed");
    cmd_sim->add_option("--plot-data", sim_plot, "also write (tau_hat, z) pairs to this CSV");
    cmd_sim->add_option("--out", sim_out.path, "output CSV path ('-' = stdout)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        nlohmann::json err;
        err["error"] = "UsageError";
        err["detail"] = e.what();
        err["field"] = "";
        std::cerr << err.dump() << "\n";
        std::cout << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        const auto t0 = std::chrono::steady_clock::now();
        auto elapsed = [&t0] {
            return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        };

        if (app.got_subcommand(cmd_eval)) {
            const ObservationalDataset data = dataset_from_csv(read_text_file(eval_dataset));
            const Policy cand = policy_from_json(read_text_file(eval_policy));
            const EvalReport report = ipw_estimate(data, cand);
            RunManifest m;
            m.subcommand = "evaluate";
            m.inputs["--dataset"] = eval_dataset;
            m.inputs["--policy"] = eval_policy;
            eval_out.deliver(eval_report_to_json(report), m, elapsed());
        } else if (app.got_subcommand(cmd_front)) {
            const CounterfactualModel model = model_from_json(read_text_file(front_model));
            const Policy obs = policy_from_json(read_text_file(front_obs));
            const auto points = pareto_frontier(model, obs, parse_frontier_grid(front_grid), threads);
            RunManifest m;
            m.subcommand = "frontier";
            m.inputs["--model"] = front_model;
            m.inputs["--obs-policy"] = front_obs;
            front_out.deliver(frontier_to_json(points), m, elapsed());
        } else if (app.got_subcommand(cmd_select)) {
            std::cout << format_double(select_xi(sel_lambda, sel_zmin)) << "\n";
        } else if (app.got_subcommand(cmd_pol)) {
            const CounterfactualModel model = model_from_json(read_text_file(pol_model));
            const Policy obs = policy_from_json(read_text_file(pol_obs));
            const KnotTable knots = build_knot_table(model, obs, threads);
            const FrontierPoint point = policy_at_xi(model, obs, knots, pol_xi);
            RunManifest m;
            m.subcommand = "policy-at";
            m.inputs["--model"] = pol_model;
            m.inputs["--obs-policy"] = pol_obs;
            pol_out.deliver(policy_to_json(point.policy), m, elapsed());
        } else if (app.got_subcommand(cmd_verify)) {
            if (ver_model.empty() != ver_obs.empty())
                fail(ErrorCode::ParseError, "--model and --obs-policy must be given together");
            return run_verify(ver_model, ver_obs, ver_trials, ver_seed, ver_xi_count, ver_tol,
                              ver_fault, ver_out, threads);
        } else if (app.got_subcommand(cmd_sim)) {
            SimConfig config = sim_config_from_json(read_text_file(sim_config_path));
            if (sim_seed) config.seed = *sim_seed;
            const auto kind = estimator_from_string(sim_method);
            if (!kind) fail(ErrorCode::ParseError, "unknown method '" + sim_method + "'", "--method");
            EstimateParams params;
            params.knn_k = sim_knn_k;
            const ExperimentReport report =
                run_experiment(config, parse_value_grid(sim_grid), *kind, params);
            RunManifest m;
            m.subcommand = "simulate";
            m.inputs["--config"] = sim_config_path;
            m.seed = config.seed;
            sim_out.deliver(experiment_rows_to_csv(report.rows), m, elapsed());
            if (!sim_plot.empty()) {
                write_text_file(sim_plot, plot_data_to_csv(report.rows));
                RunManifest pm = m;
                pm.subcommand = "simulate --plot-data";
                write_manifest(sim_plot, pm);
            }
        }
        return 0;
    } catch (const Error& e) {
        nlohmann::json err;
        err["error"] = std::string(to_string(e.code()));
        err["detail"] = e.detail();
        err["field"] = e.field();
        std::cerr << err.dump() << "\n";
        std::cout << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        nlohmann::json err;
        err["error"] = "InternalError";
        err["detail"] = e.what();
        std::cerr << err.dump() << "\n";
        std::cout << "error: " << e.what() << "\n";
        return 1;
    }
}
