#include "jumpflow/flow.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "jumpflow/rng.hpp"

namespace jumpflow {

std::size_t AdaptedGrid::node_of_base(std::size_t base) const {
    for (std::size_t k = 0; k < times.size(); ++k)
        if (base_node[k] == static_cast<int>(base)) return k;
    throw std::invalid_argument("AdaptedGrid: base node not present");
}

AdaptedGrid build_adapted_grid(const NoiseBundle& bundle) {
    const int d = bundle.dim_brownian;
    const std::size_t n_steps = bundle.grid.steps;
    AdaptedGrid grid;
    grid.times.push_back(0.0);
    grid.jump_index.push_back(-1);
    grid.base_node.push_back(0);

    std::vector<Vec> incs;
    CounterRng bridge(bundle.master_seed, bundle.path_index, CounterRng::kBridge);

    std::size_t next_jump = 0;
    for (std::size_t i = 0; i < n_steps; ++i) {
        double a = bundle.grid.node(i);
        const double b = bundle.grid.node(i + 1);
        Vec remaining = bundle.increments.row(static_cast<Eigen::Index>(i)).transpose();
        while (next_jump < bundle.jumps.size() && bundle.jumps[next_jump].time <= b) {
            const double tau = bundle.jumps[next_jump].time;
            // Bridge draw over [a, tau] conditioned on the remaining
            // increment across [a, b].
            const double len = b - a;
            const double frac = (len > 0.0) ? (tau - a) / len : 1.0;
            const double var = (len > 0.0) ? (tau - a) * (b - tau) / len : 0.0;
            Vec part(d);
            for (int k = 0; k < d; ++k) {
                const double z =
                    bridge.normal(next_jump * static_cast<std::size_t>(d) + static_cast<std::size_t>(k));
                part[k] = frac * remaining[k] + std::sqrt(var) * z;
            }
            grid.times.push_back(tau);
            grid.jump_index.push_back(static_cast<int>(next_jump));
            grid.base_node.push_back(-1);
            incs.push_back(part);
            remaining -= part;
            a = tau;
            ++next_jump;
        }
        grid.times.push_back(b);
        grid.jump_index.push_back(-1);
        grid.base_node.push_back(static_cast<int>(i + 1));
        incs.push_back(remaining);
    }

    grid.dw.resize(static_cast<Eigen::Index>(incs.size()), d);
    for (std::size_t k = 0; k < incs.size(); ++k)
        grid.dw.row(static_cast<Eigen::Index>(k)) = incs[k].transpose();
    return grid;
}

namespace {

// One Euler step over (t, t+dt] followed by the jump action when the target
// node is a jump time.
void advance_mesh(const CoefficientModel& model, const NoiseBundle& bundle,
                  const AdaptedGrid& grid, std::size_t k, const Mat& from, Mat& next_left,
                  Mat& next_value, std::uint64_t path_id) {
    const double t = grid.times[k];
    const double dt = grid.times[k + 1] - grid.times[k];
    const Vec dw = grid.dw.row(static_cast<Eigen::Index>(k)).transpose();
    const std::size_t n_mesh = static_cast<std::size_t>(from.rows());
    const int jump = grid.jump_index[k + 1];

    for (std::size_t m = 0; m < n_mesh; ++m) {
        Vec x = from.row(static_cast<Eigen::Index>(m)).transpose();
        Vec drift = model.drift(t, x);
        for (std::size_t e = 0; e < model.marks.size(); ++e)
            drift -= model.marks.intensity(e) * model.jump_coeff(t, static_cast<int>(e), x);
        Vec xnew = x + drift * dt + model.diffusion(t, x) * dw;
        if (!xnew.allFinite()) {
            std::ostringstream os;
            os << "simulate_flow: state blew up (path " << path_id << ", t=" << grid.times[k + 1]
               << ", mesh index " << m << ")";
            throw EvaluatorError(os.str(), grid.times[k + 1], -1, x);
        }
        next_left.row(static_cast<Eigen::Index>(m)) = xnew.transpose();
        if (jump >= 0) {
            const auto& ev = bundle.jumps[static_cast<std::size_t>(jump)];
            xnew = xnew + model.jump_coeff(ev.time, ev.mark, xnew);
        }
        next_value.row(static_cast<Eigen::Index>(m)) = xnew.transpose();
    }
}

}  // namespace

FlowPath simulate_flow(const CoefficientModel& model, const NoiseBundle& bundle,
                       std::span<const Vec> mesh) {
    if (mesh.empty()) throw std::invalid_argument("simulate_flow: empty mesh");
    FlowPath path;
    path.path_id = bundle.path_index;
    path.mesh.assign(mesh.begin(), mesh.end());
    path.grid = build_adapted_grid(bundle);

    const std::size_t nodes = path.grid.nodes();
    const int n = model.dim_state;
    Mat init(static_cast<Eigen::Index>(mesh.size()), n);
    for (std::size_t m = 0; m < mesh.size(); ++m)
        init.row(static_cast<Eigen::Index>(m)) = mesh[m].transpose();

    path.value.assign(nodes, init);
    path.left.assign(nodes, init);
    for (std::size_t k = 0; k + 1 < nodes; ++k)
        advance_mesh(model, bundle, path.grid, k, path.value[k], path.left[k + 1],
                     path.value[k + 1], path.path_id);
    return path;
}

FlowPropertyReport check_flow_properties(const CoefficientModel& model, const NoiseBundle& bundle,
                                         std::span<const Vec> mesh, std::size_t restart_base) {
    FlowPropertyReport report;
    const FlowPath path = simulate_flow(model, bundle, mesh);
    const std::size_t restart_node = path.grid.node_of_base(restart_base);
    const std::size_t nodes = path.grid.nodes();

    // Restarted run from the stored state, same noise: the semigroup
    // identity X_r^0(x) = X_r^t(X_t^0(x)).
    Mat state = path.value[restart_node];
    Mat next_left = state, next_value = state;
    for (std::size_t k = restart_node; k + 1 < nodes; ++k) {
        advance_mesh(model, bundle, path.grid, k, state, next_left, next_value, path.path_id);
        state = next_value;
        report.semigroup_max =
            std::max(report.semigroup_max, (state - path.value[k + 1]).cwiseAbs().maxCoeff());
    }

    for (std::size_t k = 0; k < nodes; ++k) {
        const int j = path.grid.jump_index[k];
        if (j < 0) continue;
        const auto& ev = bundle.jumps[static_cast<std::size_t>(j)];
        for (std::size_t m = 0; m < mesh.size(); ++m) {
            const Vec post = path.value[k].row(static_cast<Eigen::Index>(m)).transpose();
            const Vec pre = path.left[k].row(static_cast<Eigen::Index>(m)).transpose();
            const Vec back = eval_phi_inverse(model, ev.time, ev.mark, post);
            report.jump_relation_max =
                std::max(report.jump_relation_max, (pre - back).norm());
        }
    }

    if (model.dim_state == 1 && mesh.size() > 1) {
        for (std::size_t k = 0; k < nodes; ++k)
            for (std::size_t m = 1; m < mesh.size(); ++m)
                if (!(path.x(k, m) > path.x(k, m - 1))) ++report.monotonicity_violations;
    }
    return report;
}

}  // namespace jumpflow
