#include "jumpflow/inverse.hpp"

#include <cmath>
#include <sstream>

#include "jumpflow/interp.hpp"

namespace jumpflow {

namespace {

// Interpolates ys over xs at x, restricted to the index window [lo_idx,
// hi_idx]. Returns false when x falls outside the window.
bool window_interp(std::span<const double> xs, const Vec& ys, int lo_idx, int hi_idx, double x,
                   double& out) {
    if (lo_idx >= hi_idx || x < xs[static_cast<std::size_t>(lo_idx)] ||
        x > xs[static_cast<std::size_t>(hi_idx)])
        return false;
    int hi = static_cast<int>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin());
    hi = std::clamp(hi, lo_idx + 1, hi_idx);
    const int lo = hi - 1;
    const double w = (x - xs[static_cast<std::size_t>(lo)]) /
                     (xs[static_cast<std::size_t>(hi)] - xs[static_cast<std::size_t>(lo)]);
    out = ys[lo] + w * (ys[hi] - ys[lo]);
    return true;
}

double sigma_row_dx(const CoefficientModel& model, double t, double x, int r) {
    if (model.diffusion_dx) return model.diffusion_dx(t, Vec::Constant(1, x))[0](0, r);
    const double h = 1e-6;
    return (model.diffusion(t, Vec::Constant(1, x + h))(0, r) -
            model.diffusion(t, Vec::Constant(1, x - h))(0, r)) /
           (2.0 * h);
}

}  // namespace

InverseField invert_flow_grid(const FlowPath& flow, std::span<const double> queries) {
    if (flow.value.empty() || flow.value.front().cols() != 1)
        throw std::invalid_argument("invert_flow_grid: only 1-d state is supported");
    const std::size_t n_mesh = flow.mesh.size();
    if (n_mesh < 2) throw std::invalid_argument("invert_flow_grid: need at least two mesh points");

    InverseField field;
    field.method = InverseMethod::GridInversion;
    field.query.assign(queries.begin(), queries.end());
    field.grid = flow.grid;
    const std::size_t nodes = flow.grid.nodes();
    field.value.assign(nodes, Vec::Zero(static_cast<Eigen::Index>(queries.size())));
    field.left = field.value;
    field.flagged.assign(nodes, std::vector<std::uint8_t>(queries.size(), 0));

    std::vector<double> xs(n_mesh), fs(n_mesh), ls(n_mesh);
    for (std::size_t m = 0; m < n_mesh; ++m) xs[m] = flow.mesh[m][0];

    for (std::size_t k = 0; k < nodes; ++k) {
        for (std::size_t m = 0; m < n_mesh; ++m) {
            fs[m] = flow.x(k, m);
            ls[m] = flow.x_left(k, m);
        }
        if (!strictly_increasing(fs) || !strictly_increasing(ls)) {
            std::ostringstream os;
            os << "invert_flow_grid: flow sample is non-monotone at node " << k
               << " (t=" << flow.grid.times[k] << ")";
            throw NonInvertibleError(os.str());
        }
        for (std::size_t q = 0; q < queries.size(); ++q) {
            const double y = queries[q];
            if (k == 0) {
                // X_0 is the identity; keep u(0, y) = y exact.
                field.value[k][static_cast<Eigen::Index>(q)] = y;
                field.left[k][static_cast<Eigen::Index>(q)] = y;
                continue;
            }
            field.value[k][static_cast<Eigen::Index>(q)] = monotone_inverse(xs, fs, y);
            field.left[k][static_cast<Eigen::Index>(q)] = monotone_inverse(xs, ls, y);
            if (y < fs.front() || y > fs.back()) field.flagged[k][q] = 1;
        }
    }
    return field;
}

InverseField integrate_inverse_sipde(const CoefficientModel& model, const NoiseBundle& bundle,
                                     double mesh_lo, double mesh_hi, std::size_t mesh_points) {
    if (model.dim_state != 1)
        throw std::invalid_argument("integrate_inverse_sipde: only 1-d state is supported");
    if (mesh_points < 5 || !(mesh_hi > mesh_lo))
        throw std::invalid_argument("integrate_inverse_sipde: malformed spatial mesh");

    const int d = model.dim_brownian;
    const std::size_t M = mesh_points;
    const double h = (mesh_hi - mesh_lo) / static_cast<double>(M - 1);

    InverseField field;
    field.method = InverseMethod::Sipde;
    field.grid = build_adapted_grid(bundle);
    field.query.resize(M);
    for (std::size_t i = 0; i < M; ++i) field.query[i] = mesh_lo + h * static_cast<double>(i);

    const std::size_t nodes = field.grid.nodes();
    Vec u(static_cast<Eigen::Index>(M));
    for (std::size_t i = 0; i < M; ++i) u[static_cast<Eigen::Index>(i)] = field.query[i];

    field.value.assign(nodes, u);
    field.left.assign(nodes, u);
    field.flagged.assign(nodes, std::vector<std::uint8_t>(M, 0));

    // One-point boundary band: one-sided stencils live there and are flagged.
    int valid_lo = 1, valid_hi = static_cast<int>(M) - 2;
    auto mark_band = [&](std::size_t node) {
        auto& flags = field.flagged[node];
        for (int i = 0; i < static_cast<int>(M); ++i)
            if (i < valid_lo || i > valid_hi) flags[static_cast<std::size_t>(i)] = 1;
    };
    mark_band(0);

    // Operator coefficients per mesh point: s2 = sum_r sigma_r^2, the
    // advection coefficient, and the sigma row for the Brownian term. For
    // time-homogeneous models one mesh pass suffices.
    Vec coef_s2(static_cast<Eigen::Index>(M)), coef_adv(static_cast<Eigen::Index>(M));
    Mat coef_sig(static_cast<Eigen::Index>(M), d);
    auto eval_coefficients = [&](double t) {
        for (std::size_t i = 0; i < M; ++i) {
            const double x = field.query[i];
            const Vec xv = Vec::Constant(1, x);
            const Mat sig = model.diffusion(t, xv);
            double s2 = 0.0, adv = 0.0;
            for (int r = 0; r < d; ++r) {
                const double sr = sig(0, r);
                s2 += sr * sr;
                adv += sr * sigma_row_dx(model, t, x, r);
                coef_sig(static_cast<Eigen::Index>(i), r) = sr;
            }
            adv -= model.drift(t, xv)[0];
            for (std::size_t e = 0; e < model.marks.size(); ++e)
                adv += model.marks.intensity(e) * model.jump_coeff(t, static_cast<int>(e), xv)[0];
            coef_s2[static_cast<Eigen::Index>(i)] = s2;
            coef_adv[static_cast<Eigen::Index>(i)] = adv;
        }
    };
    if (model.time_homogeneous) eval_coefficients(0.0);

    Vec ux(static_cast<Eigen::Index>(M)), uxx(static_cast<Eigen::Index>(M));
    for (std::size_t k = 0; k + 1 < nodes; ++k) {
        const double t = field.grid.times[k];
        const double dt = field.grid.times[k + 1] - field.grid.times[k];
        const Vec dw = field.grid.dw.row(static_cast<Eigen::Index>(k)).transpose();
        if (!model.time_homogeneous) eval_coefficients(t);

        // Central differences inside, second-order one-sided in the band.
        for (std::size_t i = 1; i + 1 < M; ++i) {
            ux[static_cast<Eigen::Index>(i)] = (u[static_cast<Eigen::Index>(i + 1)] -
                                                u[static_cast<Eigen::Index>(i - 1)]) / (2.0 * h);
            uxx[static_cast<Eigen::Index>(i)] =
                (u[static_cast<Eigen::Index>(i + 1)] - 2.0 * u[static_cast<Eigen::Index>(i)] +
                 u[static_cast<Eigen::Index>(i - 1)]) / (h * h);
        }
        ux[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
        ux[static_cast<Eigen::Index>(M - 1)] =
            (3.0 * u[static_cast<Eigen::Index>(M - 1)] - 4.0 * u[static_cast<Eigen::Index>(M - 2)] +
             u[static_cast<Eigen::Index>(M - 3)]) / (2.0 * h);
        uxx[0] = (u[0] - 2.0 * u[1] + u[2]) / (h * h);
        uxx[static_cast<Eigen::Index>(M - 1)] =
            (u[static_cast<Eigen::Index>(M - 1)] - 2.0 * u[static_cast<Eigen::Index>(M - 2)] +
             u[static_cast<Eigen::Index>(M - 3)]) / (h * h);

        Vec unew(static_cast<Eigen::Index>(M));
        double max_s2 = 0.0, max_adv = 0.0;
        for (std::size_t i = 0; i < M; ++i) {
            const auto ie = static_cast<Eigen::Index>(i);
            const double s2 = coef_s2[ie];
            const double adv = coef_adv[ie];
            max_s2 = std::max(max_s2, s2);
            max_adv = std::max(max_adv, std::fabs(adv));
            const double dw_dot = coef_sig.row(ie).dot(dw.transpose());
            unew[ie] = u[ie] + dt * (0.5 * s2 * uxx[ie] + adv * ux[ie]) - ux[ie] * dw_dot;
        }
        if (dt * max_s2 > 0.95 * h * h || dt * max_adv > 0.95 * h) {
            const double dt_diff = (max_s2 > 0) ? 0.9 * h * h / max_s2 : dt;
            const double dt_adv = (max_adv > 0) ? 0.9 * h / max_adv : dt;
            std::ostringstream os;
            os << "integrate_inverse_sipde: stability violated at t=" << t << " (dt=" << dt
               << "); use dt <= " << std::min(dt_diff, dt_adv);
            throw StabilityError(os.str(), std::min(dt_diff, dt_adv));
        }

        field.left[k + 1] = unew;
        const int jump = field.grid.jump_index[k + 1];
        if (jump >= 0) {
            // Jump action is the exact composition with phi^{-1}; the
            // compensated-measure drift cancels the explicit v(de) term
            // between jumps on the adapted grid.
            const auto& ev = bundle.jumps[static_cast<std::size_t>(jump)];
            Vec composed(static_cast<Eigen::Index>(M));
            std::vector<std::uint8_t> newly(M, 0);
            for (std::size_t i = 0; i < M; ++i) {
                const double xi =
                    eval_phi_inverse(model, ev.time, ev.mark, Vec::Constant(1, field.query[i]))[0];
                double val;
                if (window_interp(field.query, unew, valid_lo, valid_hi, xi, val)) {
                    composed[static_cast<Eigen::Index>(i)] = val;
                } else {
                    // Clamped extrapolation from the valid window, flagged.
                    const int e_lo = std::max(valid_lo, 0);
                    const int e_hi = std::min(valid_hi, static_cast<int>(M) - 1);
                    const double x0 = field.query[static_cast<std::size_t>(e_lo)];
                    const double x1 = field.query[static_cast<std::size_t>(e_hi)];
                    composed[static_cast<Eigen::Index>(i)] =
                        unew[e_lo] + (xi - x0) * (unew[e_hi] - unew[e_lo]) / (x1 - x0);
                    newly[i] = 1;
                }
            }
            u = composed;
            // phi^{-1} is monotone, so the freshly flagged set stays an
            // interval; shrink the valid window accordingly.
            int lo = valid_lo, hi = valid_hi;
            while (lo <= hi && newly[static_cast<std::size_t>(lo)]) ++lo;
            while (hi >= lo && newly[static_cast<std::size_t>(hi)]) --hi;
            valid_lo = lo;
            valid_hi = hi;
        } else {
            u = unew;
        }
        field.value[k + 1] = u;
        mark_band(k + 1);
    }
    return field;
}

Vec integrate_inverse_backward_sde(const CoefficientModel& model, const NoiseBundle& bundle,
                                   std::span<const double> queries, double end_time) {
    if (model.dim_state != 1)
        throw std::invalid_argument("integrate_inverse_backward_sde: only 1-d state is supported");
    if (model.dim_factor > 0)
        throw std::invalid_argument(
            "integrate_inverse_backward_sde: random-coefficient models are unsupported "
            "(the construction requires deterministic coefficients)");

    const AdaptedGrid grid = build_adapted_grid(bundle);
    std::size_t end_node = 0;
    for (std::size_t k = 0; k < grid.nodes(); ++k)
        if (grid.times[k] <= end_time + 1e-12) end_node = k;

    const int d = model.dim_brownian;
    Vec v(static_cast<Eigen::Index>(queries.size()));
    for (std::size_t q = 0; q < queries.size(); ++q) v[static_cast<Eigen::Index>(q)] = queries[q];

    for (std::size_t k = end_node; k >= 1; --k) {
        const double t_right = grid.times[k];
        const double dt = grid.times[k] - grid.times[k - 1];
        const Vec dw = grid.dw.row(static_cast<Eigen::Index>(k - 1)).transpose();
        const int jump = grid.jump_index[k];

        for (std::size_t q = 0; q < queries.size(); ++q) {
            double x = v[static_cast<Eigen::Index>(q)];
            // Crossing a jump time downward first undoes the jump.
            if (jump >= 0) {
                const auto& ev = bundle.jumps[static_cast<std::size_t>(jump)];
                x = eval_phi_inverse(model, ev.time, ev.mark, Vec::Constant(1, x))[0];
            }
            const Vec xv = Vec::Constant(1, x);
            const Mat sig = model.diffusion(t_right, xv);
            // c(t,x) = (1/2) sum_j (d sigma^{,j}/dx) sigma^{1j}
            double corr = 0.0;
            for (int r = 0; r < d; ++r) corr += sigma_row_dx(model, t_right, x, r) * sig(0, r);
            corr *= 0.5;

            // Net downward drift: b - 2c - sum_e g v(e); the backward Poisson
            // compensator combines with the Remark's explicit v(de) term.
            double drift = model.drift(t_right, xv)[0] - 2.0 * corr;
            for (std::size_t e = 0; e < model.marks.size(); ++e)
                drift -= model.marks.intensity(e) *
                         model.jump_coeff(t_right, static_cast<int>(e), xv)[0];

            x = x - dt * drift - sig.row(0).dot(dw.transpose());
            if (!std::isfinite(x))
                throw EvaluatorError("integrate_inverse_backward_sde: state blew up", t_right, -1,
                                     xv);
            v[static_cast<Eigen::Index>(q)] = x;
        }
    }
    return v;
}

IdentityStats inversion_identity(const FlowPath& flow, const InverseField& inverse,
                                 std::span<const std::size_t> nodes) {
    if (flow.grid.nodes() != inverse.grid.nodes())
        throw std::invalid_argument("inversion_identity: flow and inverse grids differ");

    std::vector<std::size_t> all;
    if (nodes.empty()) {
        all.resize(flow.grid.nodes());
        for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
        nodes = all;
    }

    IdentityStats stats;
    double sum_sq = 0.0;
    for (std::size_t k : nodes) {
        int lo = 0, hi = static_cast<int>(inverse.query.size()) - 1;
        while (lo <= hi && inverse.flagged[k][static_cast<std::size_t>(lo)]) ++lo;
        while (hi >= lo && inverse.flagged[k][static_cast<std::size_t>(hi)]) --hi;
        if (lo >= hi) continue;
        for (std::size_t m = 0; m < flow.mesh.size(); ++m) {
            const double y = flow.x(k, m);
            double u_val;
            if (!window_interp(inverse.query, inverse.value[k], lo, hi, y, u_val)) continue;
            const double err = u_val - flow.mesh[m][0];
            sum_sq += err * err;
            stats.max = std::max(stats.max, std::fabs(err));
            ++stats.samples;
        }
    }
    stats.rms = (stats.samples > 0) ? std::sqrt(sum_sq / static_cast<double>(stats.samples)) : 0.0;
    return stats;
}

}  // namespace jumpflow
