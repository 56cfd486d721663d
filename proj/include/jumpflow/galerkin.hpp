#pragma once

#include <functional>
#include <string>
#include <vector>

#include "jumpflow/flow.hpp"

namespace jumpflow {

/// Finite-basis evolution system. Operator matrices act on coefficient
/// vectors (the coefficient representation of A, B^k, A~_e); the Gram
/// matrices of the basis supply the H- and V-inner products for norms,
/// energy terms, and the coercivity probe. Between jumps the compensated
/// jump measure cancels the explicit v(de) drift, so the net drift is A
/// alone, with g <- g + A~_e g applied exactly at jump times.
struct EvolutionSystem {
    int basis_size = 1;
    int dim_brownian = 1;
    MarkSpace marks;
    Mat gram_h;  // symmetric positive definite
    Mat gram_v;
    std::function<Mat(double)> a_mat;
    std::vector<std::function<Mat(double)>> b_mats;     // one per Brownian component
    std::vector<std::function<Mat(double)>> atil_mats;  // one per mark
    Vec u0;

    void validate() const;
};

struct GalerkinPath {
    AdaptedGrid grid;
    std::vector<Vec> g;       // coefficients at each node (cadlag value)
    std::vector<Vec> g_left;  // left limits
    std::vector<double> h_norm2;  // ||u||_H^2 per node
};

/// Jump-adapted Euler on the linear coefficient SDE. Throws StiffnessError
/// when the iterate blows up (explicit scheme).
GalerkinPath solve_evolution(const EvolutionSystem& system, const NoiseBundle& bundle);

class StiffnessError : public std::runtime_error {
public:
    StiffnessError(const std::string& what, double suggested_dt)
        : std::runtime_error(what), suggested_dt(suggested_dt) {}
    double suggested_dt;
};

struct EnergyReport {
    double max_residual = 0.0;
    double rms_residual = 0.0;
};

/// Evaluates both sides of the energy identity in the finite basis: the
/// H-norm of the path against the six accumulated integral terms
/// (A-quadratic, A~ compensator cross term, B-martingale, B-quadratic
/// variation, jump martingale with its quadratic term, jump compensator
/// quadratic), using the same increments the path was built with.
EnergyReport energy_residual(const EvolutionSystem& system, const GalerkinPath& path,
                             const NoiseBundle& bundle);

struct ProbeReport {
    double min_slack_random = 0.0;
    double min_slack_eigen = 0.0;
    bool certified = false;

    double min_slack() const { return std::min(min_slack_random, min_slack_eigen); }
};

/// Coercivity slack -2<Au,u> + lambda ||u||_H^2 - alpha ||u||_V^2
/// - ||Bu||_H^2 - sum_e v(e) ||A~u||_H^2 evaluated on random H-unit vectors
/// and on the minimizing eigenvector of the symmetric pencil against gram_h.
/// Certifies (lambda, alpha) when the minimum slack is >= -1e-10.
ProbeReport coercivity_probe(const EvolutionSystem& system, double lambda, double alpha,
                             std::size_t n_probe, double at_time = 0.0);

struct PicardReport {
    std::vector<double> contraction;  // per sweep: sup-norm ratio of successive iterates
    GalerkinPath path;                // final iterate
    std::size_t sweeps = 0;
};

/// Fixed-point iteration in the frozen jump input h: solves the linear
/// system with the jump term driven by the previous iterate and re-injects,
/// reporting the contraction factor per sweep. The fixed point coincides
/// with solve_evolution on the same noise.
PicardReport solve_evolution_picard(const EvolutionSystem& system, const NoiseBundle& bundle,
                                    std::size_t sweeps);

std::vector<std::string> galerkin_system_names();

/// Named systems: "zero" (frozen), "scalar-jump" (1-d linear jump SDE with
/// closed form), "heat" (diagonal Laplacian modes), "heat-drift"
/// (first-order noise with 2a - b~^2 > 0), "heat-degenerate" (2a = b~^2).
EvolutionSystem galerkin_system(const std::string& name, int basis_size = 4,
                                const std::map<std::string, double>& overrides = {});

}  // namespace jumpflow
