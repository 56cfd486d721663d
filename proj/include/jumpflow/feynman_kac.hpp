#pragma once

#include <functional>
#include <span>
#include <vector>

#include "jumpflow/bsde.hpp"
#include "jumpflow/inverse.hpp"

namespace jumpflow {

/// The constructed random fields on a time-by-space mesh, one set per path:
///   p(t,x) = Y_t(X_t^{-1}(x)),
///   q(t,x) = Z_t(X_{t-}^{-1}(x)) - dp(t-,x) sigma(t,x),
///   r(t,e,x) = p(t-, phi^{-1}(x)) - p(t-,x) + U_t(e, X_{t-}^{-1}(phi^{-1}(x))).
/// Base grid nodes carry the fields; p(T,x) is set to terminal(x) exactly.
struct RandomFieldTriple {
    TimeGrid grid;
    int l = 1, d = 1, m = 1;
    std::vector<double> xmesh;  // uniform
    int band = 1;               // boundary band excluded from statistics

    struct PathFields {
        std::vector<Vec> p;                       // node -> per-x (l = 1)
        std::vector<Vec> q;                       // node -> per-x (d = 1)
        std::vector<Mat> r;                       // node -> x times marks
        std::vector<std::vector<std::uint8_t>> flagged;  // node -> per-x
    };
    std::vector<PathFields> paths;

    /// Definition-style integrability proxies, per path: sup of |d^beta p|
    /// for |beta| <= 2, the time-integrated sup-square of q and dq, and the
    /// v(de)-weighted time-integrated sup-square of r.
    struct Proxies {
        double p_sup = 0.0;
        double q_l2 = 0.0;
        double r_l2 = 0.0;
        bool finite = true;
    };
    std::vector<Proxies> proxies;

    bool interior(std::size_t j) const {
        return j >= static_cast<std::size_t>(band) && j + static_cast<std::size_t>(band) < xmesh.size();
    }
};

/// Composes the per-initial-point BSDE family with the inverse flow into
/// (p, q, r). `family` and `x0s` are aligned; `flows` (mesh = x0s) and
/// `inverses` (query mesh = xmesh) are per path on shared noise. Spatial
/// derivatives of p use central differences on xmesh.
RandomFieldTriple compose_solution(std::span<const BsdeSolution> family,
                                   std::span<const double> x0s,
                                   std::span<const FlowPath> flows,
                                   std::span<const InverseField> inverses,
                                   const CoefficientModel& model,
                                   std::span<const double> xmesh);

struct ResidualReport {
    double max_step = 0.0;         // per-step residual of the time-discretized system
    double rms_step = 0.0;
    double max_cumulative = 0.0;   // integral-form residual sum_{i >= k} res_i
    double rms_cumulative = 0.0;
    // Cross-path means of the cumulative residual per (node, x): martingale
    // noise averages out, so systematic defects of the fields survive here.
    double max_cumulative_mean = 0.0;
    double rms_cumulative_mean = 0.0;
    std::size_t samples = 0;
};

/// Residual of the time-discretized backward system on interior, unflagged
/// nodes: the increment of p against every right-side term (drift with the
/// full operator stack and the driver's displayed arguments, the v(de)
/// correction, q dW, and r against compensated jump counts).
ResidualReport backward_system_residual(const RandomFieldTriple& triple, const CoefficientModel& model,
                               std::span<const NoiseBundle> bundles);

/// Deterministic backward finite-difference reference for Markovian
/// problems: d_t v + L v + int [v(phi(x)) - v] v(de) + f(t, x, v, dv sigma,
/// v(phi(.)) - v) = 0 with v(T) = terminal. Returns per-node values on
/// xmesh; the boundary band uses one-sided stencils.
std::vector<Vec> pide_reference(const CoefficientModel& model, const TimeGrid& grid,
                                std::span<const double> xmesh);

struct CrosscheckReport {
    double max_discrepancy = 0.0;
    double rms_discrepancy = 0.0;
    std::size_t samples = 0;
};

/// Uniqueness identity: max over paths and base nodes of
/// |candidate(t, X_t(x)) - Y_t(x)| for a deterministic candidate field.
CrosscheckReport uniqueness_crosscheck(const std::function<double(double, double)>& candidate,
                                       const BsdeSolution& bsde);

/// Same identity with the composed per-path field as the candidate:
/// p(t, X_t(x)) interpolated on xmesh, skipping flagged or escaped states.
CrosscheckReport uniqueness_crosscheck(const RandomFieldTriple& triple,
                                       std::span<const BsdeSolution> family,
                                       std::size_t family_index);

}  // namespace jumpflow
