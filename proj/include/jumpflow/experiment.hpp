#pragma once

#include <map>
#include <string>
#include <vector>

#include "jumpflow/feynman_kac.hpp"
#include "jumpflow/galerkin.hpp"
#include "jumpflow/wentzell.hpp"

namespace jumpflow {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One experiment definition: problem selection, discretization, sampling,
/// method choices, and output routing. A JSON config file is the source of
/// truth; CLI flags override individual fields.
struct ExperimentConfig {
    std::string problem = "linear-jump-diffusion";
    std::map<std::string, double> problem_params;
    double horizon = 1.0;
    std::size_t steps = 256;
    double mesh_lo = 0.5;
    double mesh_hi = 2.5;
    std::size_t mesh_points = 33;
    std::size_t paths = 64;
    std::uint64_t seed = 12345;
    int workers = 1;
    std::string inverse_method = "grid";  // grid | sipde | backward
    std::string galerkin_name = "scalar-jump";
    int galerkin_basis = 4;
    std::string wentzell_name = "all";  // or one spec name
    RegressionConfig regression;
    std::size_t refinements = 3;  // dyadic levels, coarsest = steps / 2^(refinements-1)
    std::string out_dir = "out";
    std::string format = "csv";  // csv | json

    void validate() const;  // throws ConfigError naming the offending field
    std::string to_json_string() const;
    static ExperimentConfig from_json_string(const std::string& text);
    static ExperimentConfig from_json_file(const std::string& path);
};

struct CheckResult {
    std::string name;
    double statistic = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

struct RunSummary {
    std::string command;
    std::vector<CheckResult> checks;
    std::map<std::string, double> slopes;
    std::map<std::string, double> timings_s;
    std::uint64_t seed = 0;

    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return true;
    }
};

struct RunOutput {
    RunSummary summary;
    // Table name -> body (CSV text or a JSON document, per config.format).
    std::map<std::string, std::string> tables;
};

/// Shared noise, flows over the initial-point mesh, the BSDE family, the
/// chosen inverse construction, and the composed triple; the building block
/// of the composition pipelines.
struct CompositionResult {
    std::vector<double> x0s;
    std::vector<double> xmesh;
    std::vector<NoiseBundle> bundles;
    std::vector<FlowPath> flows;
    std::vector<BsdeSolution> family;
    std::vector<InverseField> inverses;
    RandomFieldTriple triple;
};

CompositionResult run_composition(const TestProblem& problem, const ExperimentConfig& config);

/// Executes one subcommand pipeline. Valid commands: simulate, invert, bsde,
/// compose, galerkin, verify-wentzell, verify-residual, verify-energy,
/// verify-flow, convergence, catalog.
RunOutput run_experiment(const ExperimentConfig& config, const std::string& command);

/// Writes the tables, a JSON summary, and a reproducibility manifest (config
/// echo, seed, config hash) into config.out_dir.
void emit_outputs(const RunOutput& output, const ExperimentConfig& config);

/// Stable text rendering used by every table writer: shortest round-trip
/// representation of a double, locale-independent.
std::string format_double(double v);

}  // namespace jumpflow
