// Experiment runner for the jump-diffusion flow/BSDE toolkit: simulates
// forward flows, constructs inverse flows, solves backward equations, and
// runs the verification pipelines, emitting CSV/JSON artifacts.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "jumpflow/experiment.hpp"

namespace {

struct Overrides {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<std::size_t> steps;
    std::optional<std::string> out_dir;
    std::optional<std::string> format;
    std::optional<int> workers;
    std::optional<std::string> problem;
    std::optional<std::string> inverse_method;
    std::optional<std::string> galerkin_name;
    std::optional<std::string> wentzell_name;
    std::optional<std::size_t> refinements;
};

jumpflow::ExperimentConfig build_config(const Overrides& ov) {
    jumpflow::ExperimentConfig config;
    if (!ov.config_path.empty())
        config = jumpflow::ExperimentConfig::from_json_file(ov.config_path);
    if (ov.seed) config.seed = *ov.seed;
    if (ov.paths) config.paths = *ov.paths;
    if (ov.steps) config.steps = *ov.steps;
    if (ov.out_dir) config.out_dir = *ov.out_dir;
    if (ov.format) config.format = *ov.format;
    if (ov.workers) config.workers = *ov.workers;
    if (ov.problem) config.problem = *ov.problem;
    if (ov.inverse_method) config.inverse_method = *ov.inverse_method;
    if (ov.galerkin_name) config.galerkin_name = *ov.galerkin_name;
    if (ov.wentzell_name) config.wentzell_name = *ov.wentzell_name;
    if (ov.refinements) config.refinements = *ov.refinements;
    config.validate();
    return config;
}

int run(const Overrides& ov, const std::string& command) {
    const auto config = build_config(ov);
    const auto output = jumpflow::run_experiment(config, command);
    jumpflow::emit_outputs(output, config);
    for (const auto& check : output.summary.checks)
        std::printf("[%s] %s: statistic %.6g (tolerance %.6g)\n", check.pass ? "PASS" : "FAIL",
                    check.name.c_str(), check.statistic, check.tolerance);
    std::printf("%s: %s (artifacts in %s)\n", command.c_str(),
                output.summary.all_pass() ? "all checks passed" : "CHECK FAILURE",
                config.out_dir.c_str());
    return output.summary.all_pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"jumpflow: jump-diffusion stochastic flow and BSDE verification toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    Overrides ov;
    app.add_option("--config", ov.config_path, "JSON config file (flags override fields)");
    app.add_option("--seed", ov.seed, "master seed");
    app.add_option("--paths", ov.paths, "Monte Carlo path count");
    app.add_option("--steps", ov.steps, "base grid step count");
    app.add_option("--out-dir", ov.out_dir, "output directory");
    app.add_option("--format", ov.format, "table format: csv or json");
    app.add_option("--workers", ov.workers, "worker thread count");
    app.add_option("--problem", ov.problem, "catalog problem name");
    app.add_option("--refinements", ov.refinements, "dyadic refinement levels");

    auto* simulate = app.add_subcommand("simulate", "simulate the forward flow over a mesh");
    auto* invert = app.add_subcommand("invert", "construct the inverse flow");
    invert->add_option("--method", ov.inverse_method, "grid | sipde | backward");
    auto* bsde = app.add_subcommand("bsde", "solve the backward equation by regression");
    auto* compose = app.add_subcommand("compose", "compose the solution fields (p, q, r)");
    auto* galerkin = app.add_subcommand("galerkin", "solve a finite-basis evolution system");
    galerkin->add_option("--system", ov.galerkin_name, "galerkin system name");
    auto* verify = app.add_subcommand("verify", "run a verification pipeline");
    verify->require_subcommand(1);
    auto* v_wentzell = verify->add_subcommand("wentzell", "chain-rule identity");
    v_wentzell->add_option("--spec", ov.wentzell_name, "field spec name");
    auto* v_residual = verify->add_subcommand("residual", "backward-system residual");
    auto* v_energy = verify->add_subcommand("energy", "energy identity");
    v_energy->add_option("--system", ov.galerkin_name, "galerkin system name");
    auto* v_flow = verify->add_subcommand("flow", "flow/semigroup identities");
    auto* convergence = app.add_subcommand("convergence", "strong convergence study");
    auto* catalog = app.add_subcommand("catalog", "list catalog problems and systems");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    std::string command;
    if (simulate->parsed()) command = "simulate";
    else if (invert->parsed()) command = "invert";
    else if (bsde->parsed()) command = "bsde";
    else if (compose->parsed()) command = "compose";
    else if (galerkin->parsed()) command = "galerkin";
    else if (convergence->parsed()) command = "convergence";
    else if (catalog->parsed()) command = "catalog";
    else if (verify->parsed()) {
        if (v_wentzell->parsed()) command = "verify-wentzell";
        else if (v_residual->parsed()) command = "verify-residual";
        else if (v_energy->parsed()) command = "verify-energy";
        else if (v_flow->parsed()) command = "verify-flow";
    }

    try {
        return run(ov, command);
    } catch (const jumpflow::ConfigError& err) {
        std::cerr << "config error: " << err.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& err) {
        std::cerr << "usage error: " << err.what() << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
}
