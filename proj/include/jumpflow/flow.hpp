#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "jumpflow/model.hpp"
#include "jumpflow/noise.hpp"

namespace jumpflow {

/// Base grid refined by the bundle's jump times. Brownian increments at
/// inserted nodes come from conditional (bridge) subdivision of the base
/// step's increment, with draws keyed by jump index so nested coarse/fine
/// bundles stay consistent.
struct AdaptedGrid {
    std::vector<double> times;     // nodes, times.front() = 0, times.back() = T
    std::vector<int> jump_index;   // per node: index into bundle.jumps, or -1
    std::vector<int> base_node;    // per node: base grid node index, or -1 if inserted
    Mat dw;                        // (nodes-1) x d increments over (times[k], times[k+1]]

    std::size_t nodes() const { return times.size(); }

    /// Adapted node index of a base grid node.
    std::size_t node_of_base(std::size_t base) const;
};

AdaptedGrid build_adapted_grid(const NoiseBundle& bundle);

/// Sampled forward flow along one path: values and left limits of X_t(x_m)
/// at every adapted node, for every initial mesh point.
struct FlowPath {
    std::uint64_t path_id = 0;
    std::vector<Vec> mesh;      // initial points x_m
    AdaptedGrid grid;
    std::vector<Mat> value;     // node -> (mesh x n), cadlag value X_t
    std::vector<Mat> left;      // node -> (mesh x n), left limit X_{t-}

    /// Scalar accessors for 1-dimensional state.
    double x(std::size_t node, std::size_t m) const { return value[node](static_cast<Eigen::Index>(m), 0); }
    double x_left(std::size_t node, std::size_t m) const { return left[node](static_cast<Eigen::Index>(m), 0); }
};

/// Jump-adapted Euler scheme for the forward SDE: between jumps
///   X <- X + (b - sum_e g v(e)) dt + sigma dW
/// (compensator folded into the drift), and at each jump time the exact
/// update X <- X + g(tau, e, X-). Throws EvaluatorError on blow-up.
FlowPath simulate_flow(const CoefficientModel& model, const NoiseBundle& bundle,
                       std::span<const Vec> mesh);

struct FlowPropertyReport {
    double semigroup_max = 0.0;       // restart identity at a grid node
    double jump_relation_max = 0.0;   // |X_{tau-} - phi^{-1}(X_tau)|
    std::size_t monotonicity_violations = 0;  // 1-d only
};

/// Restarts the simulation at base node `restart_base` on the same noise and
/// reports the discrepancies of the flow identities.
FlowPropertyReport check_flow_properties(const CoefficientModel& model, const NoiseBundle& bundle,
                                         std::span<const Vec> mesh, std::size_t restart_base);

}  // namespace jumpflow
