#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "gridloop/certificates.hpp"
#include "gridloop/closed_loop.hpp"
#include "gridloop/error.hpp"
#include "gridloop/results_io.hpp"
#include "gridloop/scenario.hpp"

namespace {

using namespace gridloop;

std::string default_out_dir() {
    const char* env = std::getenv("GRIDLOOP_OUT_DIR");
    return env && *env ? env : ".";
}

struct CommonOpts {
    std::string scenario_path;
    std::string out_dir = default_out_dir();
    long long seed_override = -1;
    std::string plant_override;
};

Scenario load_with_overrides(const CommonOpts& opts) {
    Scenario sc = load_scenario(opts.scenario_path);
    if (opts.seed_override >= 0) sc.seed = static_cast<std::uint64_t>(opts.seed_override);
    if (!opts.plant_override.empty())
        sc.plant = opts.plant_override == "linear" ? PlantMode::Linear : PlantMode::Nonlinear;
    return sc;
}

CertificateReport certify_scenario(const Scenario& sc) {
    const Mat p0 = sc.p0_variance * Mat::Identity(2 * sc.lin.n_state, 2 * sc.lin.n_state);
    return build_certificate_report(sc.lin.b_c, sc.objective, sc.eps, sc.sigma_l(),
                                    sc.meas.sigma_y, sc.meas.h, p0, sc.horizon);
}

int cmd_run(const CommonOpts& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    Scenario sc = load_with_overrides(opts);
    sc.record = RecordLevel::Standard;

    ResultsBundle bundle;
    bundle.meta.scenario_name = sc.name;
    bundle.meta.seed = sc.seed;
    bundle.meta.plant_mode = sc.plant == PlantMode::Linear ? "linear" : "nonlinear";
    bundle.certificate = certify_scenario(sc);
    bundle.trajectory = run_closed_loop(sc);
    bundle.summary = compute_metrics(bundle.trajectory, sc.objective);
    bundle.node_labels = state_node_labels(sc.grid);
    bundle.meta.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::filesystem::create_directories(opts.out_dir);
    const std::string csv_path = opts.out_dir + "/" + sc.name + "_trajectory.csv";
    const std::string json_path = opts.out_dir + "/" + sc.name + "_results.json";
    export_results(bundle, csv_path, ResultsFormat::TableCsv);
    export_results(bundle, json_path, ResultsFormat::StructuredJson);

    std::printf("run %s: %ld steps, plant=%s, seed=%llu\n", sc.name.c_str(),
                bundle.trajectory.steps(), bundle.meta.plant_mode.c_str(),
                static_cast<unsigned long long>(sc.seed));
    std::printf("  est error tail mean  %.6e (settling step %ld)\n",
                bundle.summary.est_tail_mean, bundle.summary.est_settling);
    std::printf("  opt error tail mean  %.6e (settling step %ld)\n",
                bundle.summary.opt_tail_mean, bundle.summary.opt_settling);
    std::printf("  voltage violations   %ld (max depth %.3e)\n",
                bundle.summary.violation_count, bundle.summary.max_violation_depth);
    std::printf("  wrote %s\n  wrote %s\n", csv_path.c_str(), json_path.c_str());
    return 0;
}

int cmd_certify(const CommonOpts& opts, const std::string& out_file) {
    Scenario sc = load_with_overrides(opts);
    const CertificateReport rep = certify_scenario(sc);
    const std::string text = certificate_to_json_text(rep);
    std::fputs(text.c_str(), stdout);
    if (!out_file.empty()) {
        std::ofstream out(out_file, std::ios::binary);
        if (!out) throw Error::io("cannot open '" + out_file + "' for writing");
        out << text;
    }
    return 0;
}

int cmd_ensemble(const CommonOpts& opts, int runs) {
    Scenario sc = load_with_overrides(opts);
    if (runs <= 0) runs = sc.ensemble_size;
    const CertificateReport rep = certify_scenario(sc);

    const std::vector<Trajectory> ensemble = run_ensemble(sc, runs);
    const BoundCheckRecord rec = verify_bounds(ensemble, rep);

    Scenario quiet = sc;
    quiet.noise_enabled = false;
    quiet.record = RecordLevel::Metrics;
    // The deterministic contraction shrinks the error by roughly (1 - eta eps)
    // per step; give it enough steps to pass well below the 1e-6 gate.
    quiet.horizon = std::max(sc.horizon,
                             static_cast<long>(std::ceil(16.0 / (sc.objective.eta * sc.eps))));
    const Trajectory noise_free = run_closed_loop(quiet);
    const double nf_est = noise_free.est_err_norm.back();
    const double nf_opt = noise_free.opt_err_norm.back();
    const bool nf_pass = nf_est < 1e-6 && nf_opt < 1e-6;

    std::printf("ensemble %s: %d runs, horizon %ld\n", sc.name.c_str(), runs, sc.horizon);
    std::printf("C_V bound: %s (tail E|v_hat-v|^2 %.6e <= %.6e, margin %.3e)\n",
                rec.estimation.pass ? "PASS" : "FAIL", rec.estimation.empirical,
                rec.estimation.bound, rec.estimation.margin);
    std::printf("C_S bound: %s (tail E|S_c-S_c*| %.6e <= %.6e, margin %.3e)\n",
                rec.optimization.pass ? "PASS" : "FAIL", rec.optimization.empirical,
                rec.optimization.bound, rec.optimization.margin);
    std::printf("noise-free convergence: %s (terminal est %.3e, opt %.3e)\n",
                nf_pass ? "PASS" : "FAIL", nf_est, nf_opt);
    return 0;
}

int cmd_oracle(const CommonOpts& opts) {
    Scenario sc = load_with_overrides(opts);
    const Vec s_star =
        instantaneous_optimum(sc.loads.base, sc.lin, sc.objective, sc.feasible);
    std::printf("{\n  \"s_c_star\": [");
    for (Eigen::Index i = 0; i < s_star.size(); ++i)
        std::printf("%s%.17g", i ? ", " : "", s_star[i]);
    std::printf("],\n  \"norm\": %.17g\n}\n", s_star.norm());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gridloop: closed-loop grid state estimation and feedback optimization"};
    app.require_subcommand(1);

    CommonOpts opts;
    long long runs = 0;  // 0: take the scenario's ensemble_size
    std::string certify_out;

    auto add_common = [&](CLI::App* cmd, bool with_overrides) {
        cmd->add_option("scenario", opts.scenario_path, "scenario JSON file")->required();
        if (with_overrides) {
            cmd->add_option("--seed", opts.seed_override, "override the scenario seed");
            cmd->add_option("--plant", opts.plant_override, "override the plant model")
                ->check(CLI::IsMember({"linear", "nonlinear"}));
        }
    };

    CLI::App* run_cmd = app.add_subcommand("run", "simulate the closed loop and write results");
    add_common(run_cmd, true);
    run_cmd->add_option("--out", opts.out_dir, "output directory");

    CLI::App* certify_cmd =
        app.add_subcommand("certify", "compute the convergence certificate only");
    add_common(certify_cmd, false);
    certify_cmd->add_option("--out", certify_out, "also write the certificate to this file");

    CLI::App* ensemble_cmd =
        app.add_subcommand("ensemble", "Monte Carlo verification of the stochastic bounds");
    add_common(ensemble_cmd, true);
    ensemble_cmd->add_option("--runs", runs, "number of seeded runs")
        ->check(CLI::PositiveNumber);

    CLI::App* oracle_cmd =
        app.add_subcommand("oracle", "print the instantaneous optimum for the base loads");
    add_common(oracle_cmd, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "error[usage]: %s\n", e.what());
        std::fprintf(stderr, "Run with --help for more information.\n");
        return 1;
    }

    try {
        if (app.got_subcommand(run_cmd)) return cmd_run(opts);
        if (app.got_subcommand(certify_cmd)) return cmd_certify(opts, certify_out);
        if (app.got_subcommand(ensemble_cmd)) return cmd_ensemble(opts, static_cast<int>(runs));
        if (app.got_subcommand(oracle_cmd)) return cmd_oracle(opts);
    } catch (const gridloop::Error& e) {
        std::fprintf(stderr, "%s\n", e.tagged().c_str());
        using Kind = gridloop::Error::Kind;
        return (e.kind() == Kind::Schema || e.kind() == Kind::Physics) ? 1 : 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error[runtime]: %s\n", e.what());
        return 2;
    }
    return 0;
}
