#include "jumpflow/feynman_kac.hpp"

#include <cmath>
#include <sstream>

#include "jumpflow/interp.hpp"

namespace jumpflow {

namespace {

double interp_clamped(std::span<const double> xs, const Vec& ys, double x, bool& escaped) {
    escaped = escaped || x < xs.front() || x > xs.back();
    const std::size_t n = xs.size();
    std::size_t hi = std::upper_bound(xs.begin(), xs.end(), x) - xs.begin();
    hi = std::clamp<std::size_t>(hi, 1, n - 1);
    const std::size_t lo = hi - 1;
    const double w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    return ys[static_cast<Eigen::Index>(lo)] +
           w * (ys[static_cast<Eigen::Index>(hi)] - ys[static_cast<Eigen::Index>(lo)]);
}

void central_derivatives(std::span<const double> xs, const Vec& f, Vec& fx, Vec& fxx) {
    const std::size_t M = xs.size();
    const double h = xs[1] - xs[0];
    fx.resize(static_cast<Eigen::Index>(M));
    fxx.resize(static_cast<Eigen::Index>(M));
    for (std::size_t j = 1; j + 1 < M; ++j) {
        fx[static_cast<Eigen::Index>(j)] =
            (f[static_cast<Eigen::Index>(j + 1)] - f[static_cast<Eigen::Index>(j - 1)]) / (2 * h);
        fxx[static_cast<Eigen::Index>(j)] =
            (f[static_cast<Eigen::Index>(j + 1)] - 2 * f[static_cast<Eigen::Index>(j)] +
             f[static_cast<Eigen::Index>(j - 1)]) / (h * h);
    }
    fx[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * h);
    fx[static_cast<Eigen::Index>(M - 1)] =
        (3 * f[static_cast<Eigen::Index>(M - 1)] - 4 * f[static_cast<Eigen::Index>(M - 2)] +
         f[static_cast<Eigen::Index>(M - 3)]) / (2 * h);
    fxx[0] = (f[0] - 2 * f[1] + f[2]) / (h * h);
    fxx[static_cast<Eigen::Index>(M - 1)] =
        (f[static_cast<Eigen::Index>(M - 1)] - 2 * f[static_cast<Eigen::Index>(M - 2)] +
         f[static_cast<Eigen::Index>(M - 3)]) / (h * h);
}

}  // namespace

RandomFieldTriple compose_solution(std::span<const BsdeSolution> family,
                                   std::span<const double> x0s, std::span<const FlowPath> flows,
                                   std::span<const InverseField> inverses,
                                   const CoefficientModel& model,
                                   std::span<const double> xmesh) {
    if (family.size() != x0s.size() || family.size() < 2)
        throw std::invalid_argument("compose_solution: need a BSDE per initial point (>= 2)");
    if (flows.size() != inverses.size() || flows.empty())
        throw std::invalid_argument("compose_solution: flows and inverses must align per path");
    if (model.dim_value != 1 || model.dim_brownian != 1 || model.dim_state != 1)
        throw std::invalid_argument("compose_solution: implemented for n = d = l = 1");
    for (const auto& inv : inverses)
        if (inv.query.size() != xmesh.size())
            throw std::invalid_argument("compose_solution: inverse query mesh must equal xmesh");

    const std::size_t n_paths = flows.size();
    const std::size_t steps = family[0].grid.steps;
    const int m = static_cast<int>(model.marks.size());

    RandomFieldTriple triple;
    triple.grid = family[0].grid;
    triple.l = 1;
    triple.d = 1;
    triple.m = m;
    triple.xmesh.assign(xmesh.begin(), xmesh.end());
    triple.band = 1;
    triple.paths.resize(n_paths);
    triple.proxies.resize(n_paths);

    const auto X = static_cast<Eigen::Index>(xmesh.size());
    std::vector<double> ys(x0s.size()), zs(x0s.size()), us(x0s.size());

    for (std::size_t pth = 0; pth < n_paths; ++pth) {
        auto& fields = triple.paths[pth];
        fields.p.assign(steps + 1, Vec::Zero(X));
        fields.q.assign(steps + 1, Vec::Zero(X));
        fields.r.assign(steps + 1, Mat::Zero(X, m));
        fields.flagged.assign(steps + 1, std::vector<std::uint8_t>(xmesh.size(), 0));
        const auto& inverse = inverses[pth];

        for (std::size_t i = 0; i <= steps; ++i) {
            const double t = triple.grid.node(i);
            const std::size_t k = inverse.grid.node_of_base(i);
            auto& flags = fields.flagged[i];

            // p(t, x) = Y_t(u(t, x)) with Y interpolated across the initial
            // points; the terminal slice is the terminal condition exactly.
            for (Eigen::Index j = 0; j < X; ++j) {
                const auto ju = static_cast<std::size_t>(j);
                bool escaped = inverse.flagged[k][ju] != 0;
                if (i == steps) {
                    fields.p[i][j] = model.terminal(Vec::Constant(1, xmesh[ju]))[0];
                    flags[ju] |= escaped;
                    continue;
                }
                const double w = inverse.value[k][j];
                for (std::size_t f = 0; f < x0s.size(); ++f)
                    ys[f] = family[f].y[i](static_cast<Eigen::Index>(pth), 0);
                fields.p[i][j] = interp_clamped(
                    x0s, Eigen::Map<const Vec>(ys.data(), static_cast<Eigen::Index>(ys.size())), w,
                    escaped);
                flags[ju] |= escaped;
            }

            Vec px, pxx;
            central_derivatives(triple.xmesh, fields.p[i], px, pxx);

            for (Eigen::Index j = 0; j < X; ++j) {
                const auto ju = static_cast<std::size_t>(j);
                const double x = xmesh[ju];
                bool escaped = false;
                const double w = inverse.value[k][j];
                // q = Z(X^{-1}(x)) - dp sigma; at base nodes the left limit
                // coincides with the value almost surely.
                for (std::size_t f = 0; f < x0s.size(); ++f)
                    zs[f] = family[f].z[i](static_cast<Eigen::Index>(pth), 0);
                const double z_at = interp_clamped(
                    x0s, Eigen::Map<const Vec>(zs.data(), static_cast<Eigen::Index>(zs.size())), w,
                    escaped);
                const double sig = model.diffusion(t, Vec::Constant(1, x))(0, 0);
                fields.q[i][j] = z_at - px[j] * sig;

                for (int e = 0; e < m; ++e) {
                    const double phi_inv = eval_phi_inverse(model, t, e, Vec::Constant(1, x))[0];
                    bool r_escaped = false;
                    const double p_at =
                        interp_clamped(triple.xmesh, fields.p[i], phi_inv, r_escaped);
                    const double w2 =
                        interp_clamped(triple.xmesh, inverse.value[k], phi_inv, r_escaped);
                    for (std::size_t f = 0; f < x0s.size(); ++f)
                        us[f] = family[f].u[i](static_cast<Eigen::Index>(pth), e);
                    const double u_at = interp_clamped(
                        x0s, Eigen::Map<const Vec>(us.data(), static_cast<Eigen::Index>(us.size())),
                        w2, r_escaped);
                    fields.r[i](j, e) = p_at - fields.p[i][j] + u_at;
                    escaped = escaped || r_escaped;
                }
                flags[ju] |= escaped;
            }
        }

        // Definition-style integrability proxies on interior nodes.
        auto& proxy = triple.proxies[pth];
        const double dt = triple.grid.dt();
        for (std::size_t i = 0; i <= steps; ++i) {
            Vec px, pxx, qx, qxx;
            central_derivatives(triple.xmesh, fields.p[i], px, pxx);
            central_derivatives(triple.xmesh, fields.q[i], qx, qxx);
            double q_max2 = 0.0, r_max2 = 0.0;
            for (Eigen::Index j = triple.band; j + triple.band < X; ++j) {
                proxy.p_sup = std::max({proxy.p_sup, std::fabs(fields.p[i][j]), std::fabs(px[j]),
                                        std::fabs(pxx[j])});
                q_max2 = std::max({q_max2, fields.q[i][j] * fields.q[i][j], qx[j] * qx[j]});
                for (int e = 0; e < m; ++e)
                    r_max2 = std::max(r_max2, model.marks.intensity(static_cast<std::size_t>(e)) *
                                                  fields.r[i](j, e) * fields.r[i](j, e));
            }
            if (i < steps) {
                proxy.q_l2 += q_max2 * dt;
                proxy.r_l2 += r_max2 * dt;
            }
            proxy.finite = proxy.finite && std::isfinite(proxy.p_sup) &&
                           std::isfinite(proxy.q_l2) && std::isfinite(proxy.r_l2);
        }
    }
    return triple;
}

ResidualReport backward_system_residual(const RandomFieldTriple& triple, const CoefficientModel& model,
                               std::span<const NoiseBundle> bundles) {
    if (bundles.size() != triple.paths.size())
        throw std::invalid_argument("backward_system_residual: one noise bundle per path required");
    const std::size_t steps = triple.grid.steps;
    const double dt = triple.grid.dt();
    const int m = triple.m;
    const auto X = static_cast<Eigen::Index>(triple.xmesh.size());

    ResidualReport report;
    double step_sq = 0.0, cum_sq = 0.0;
    std::size_t cum_samples = 0;
    // Per (node, x) accumulators of the cumulative residual across paths.
    Mat cum_mean_sum = Mat::Zero(static_cast<Eigen::Index>(steps), X);
    Eigen::MatrixXi cum_mean_count = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(steps), X);

    for (std::size_t pth = 0; pth < triple.paths.size(); ++pth) {
        const auto& fields = triple.paths[pth];
        const Eigen::MatrixXi counts = base_jump_counts(bundles[pth]);
        Mat residuals = Mat::Zero(static_cast<Eigen::Index>(steps), X);
        Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> usable =
            Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(
                static_cast<Eigen::Index>(steps), X);

        for (std::size_t i = 0; i < steps; ++i) {
            const double t = triple.grid.node(i);
            const double dw = bundles[pth].increments(static_cast<Eigen::Index>(i), 0);
            Vec px, pxx, qx, qxx;
            central_derivatives(triple.xmesh, fields.p[i], px, pxx);
            central_derivatives(triple.xmesh, fields.q[i], qx, qxx);

            for (Eigen::Index j = triple.band; j + triple.band < X; ++j) {
                const auto ju = static_cast<std::size_t>(j);
                if (fields.flagged[i][ju] || fields.flagged[i + 1][ju]) continue;
                const double x = triple.xmesh[ju];
                const Vec xv = Vec::Constant(1, x);
                const double sig = model.diffusion(t, xv)(0, 0);

                double drift_b = model.drift(t, xv)[0];
                for (int e = 0; e < m; ++e)
                    drift_b -= model.marks.intensity(static_cast<std::size_t>(e)) *
                               model.jump_coeff(t, e, xv)[0];
                const double lp = 0.5 * sig * sig * pxx[j] + drift_b * px[j];
                const double mq = sig * qx[j];

                // Driver arguments exactly as the system displays them.
                bool escaped = false;
                double f_val = 0.0;
                double comp = 0.0;
                Mat u_arg = Mat::Zero(1, m);
                for (int e = 0; e < m; ++e) {
                    const double ve = model.marks.intensity(static_cast<std::size_t>(e));
                    const double phi = x + model.jump_coeff(t, e, xv)[0];
                    const double p_phi = interp_clamped(triple.xmesh, fields.p[i], phi, escaped);
                    const double r_phi =
                        interp_clamped(triple.xmesh, fields.r[i].col(e).eval(), phi, escaped);
                    u_arg(0, e) = r_phi - fields.p[i][j] + p_phi;
                    comp += ve * (fields.r[i](j, e) - r_phi + fields.p[i][j] - p_phi);
                }
                if (escaped) continue;
                if (model.has_driver()) {
                    const Mat z_arg = Mat::Constant(1, 1, fields.q[i][j] + px[j] * sig);
                    f_val = model.driver(t, xv, Vec::Constant(1, fields.p[i][j]), z_arg, u_arg)[0];
                }

                double martingale = fields.q[i][j] * dw;
                for (int e = 0; e < m; ++e) {
                    const double ve = model.marks.intensity(static_cast<std::size_t>(e));
                    martingale += fields.r[i](j, e) *
                                  (static_cast<double>(counts(static_cast<Eigen::Index>(i), e)) -
                                   ve * dt);
                }

                const double rhs = (-(lp + mq + f_val) + comp) * dt + martingale;
                const double res = fields.p[i + 1][j] - fields.p[i][j] - rhs;
                residuals(static_cast<Eigen::Index>(i), j) = res;
                usable(static_cast<Eigen::Index>(i), j) = 1;

                report.max_step = std::max(report.max_step, std::fabs(res));
                step_sq += res * res;
                ++report.samples;
            }
        }

        // Integral-form (cumulative) residual: suffix sums over usable runs.
        for (Eigen::Index j = triple.band; j + triple.band < X; ++j) {
            double suffix = 0.0;
            bool run_valid = true;
            for (std::size_t rk = steps; rk-- > 0;) {
                if (!usable(static_cast<Eigen::Index>(rk), j)) {
                    run_valid = false;
                    continue;
                }
                if (!run_valid) continue;
                suffix += residuals(static_cast<Eigen::Index>(rk), j);
                report.max_cumulative = std::max(report.max_cumulative, std::fabs(suffix));
                cum_sq += suffix * suffix;
                ++cum_samples;
                cum_mean_sum(static_cast<Eigen::Index>(rk), j) += suffix;
                cum_mean_count(static_cast<Eigen::Index>(rk), j) += 1;
            }
        }
    }
    report.rms_step =
        (report.samples > 0) ? std::sqrt(step_sq / static_cast<double>(report.samples)) : 0.0;
    report.rms_cumulative =
        (cum_samples > 0) ? std::sqrt(cum_sq / static_cast<double>(cum_samples)) : 0.0;

    // Mean-field statistics over cells covered by at least half the paths.
    const int min_count = static_cast<int>((triple.paths.size() + 1) / 2);
    double mean_sq = 0.0;
    std::size_t mean_samples = 0;
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(steps); ++i)
        for (Eigen::Index j = triple.band; j + triple.band < X; ++j) {
            if (cum_mean_count(i, j) < std::max(min_count, 1)) continue;
            const double m = cum_mean_sum(i, j) / static_cast<double>(cum_mean_count(i, j));
            report.max_cumulative_mean = std::max(report.max_cumulative_mean, std::fabs(m));
            mean_sq += m * m;
            ++mean_samples;
        }
    report.rms_cumulative_mean =
        (mean_samples > 0) ? std::sqrt(mean_sq / static_cast<double>(mean_samples)) : 0.0;
    return report;
}

std::vector<Vec> pide_reference(const CoefficientModel& model, const TimeGrid& grid,
                                std::span<const double> xmesh) {
    if (model.dim_state != 1 || model.dim_value != 1)
        throw std::invalid_argument("pide_reference: implemented for n = l = 1");
    if (model.dim_factor > 0)
        throw std::invalid_argument("pide_reference: deterministic coefficients required");
    const auto X = static_cast<Eigen::Index>(xmesh.size());
    if (X < 5) throw std::invalid_argument("pide_reference: mesh too small");
    const double h = xmesh[1] - xmesh[0];
    const double dt = grid.dt();
    const int m = static_cast<int>(model.marks.size());

    std::vector<Vec> v(grid.steps + 1, Vec::Zero(X));
    for (Eigen::Index j = 0; j < X; ++j)
        v[grid.steps][j] = model.terminal(Vec::Constant(1, xmesh[static_cast<std::size_t>(j)]))[0];

    for (std::size_t i = grid.steps; i-- > 0;) {
        const double t = grid.node(i + 1);
        const Vec& vn = v[i + 1];
        Vec vx, vxx;
        central_derivatives(xmesh, vn, vx, vxx);

        double max_s2 = 0.0, max_adv = 0.0;
        for (Eigen::Index j = 0; j < X; ++j) {
            const double x = xmesh[static_cast<std::size_t>(j)];
            const Vec xv = Vec::Constant(1, x);
            const double sig = model.diffusion(t, xv)(0, 0);
            double drift_b = model.drift(t, xv)[0];
            for (int e = 0; e < m; ++e)
                drift_b -= model.marks.intensity(static_cast<std::size_t>(e)) *
                           model.jump_coeff(t, e, xv)[0];
            max_s2 = std::max(max_s2, sig * sig);
            max_adv = std::max(max_adv, std::fabs(drift_b));

            double jump_term = 0.0;
            Mat u_arg = Mat::Zero(1, m);
            bool escaped = false;
            for (int e = 0; e < m; ++e) {
                const double phi = x + model.jump_coeff(t, e, xv)[0];
                const double v_phi = interp_clamped(xmesh, vn, phi, escaped);
                jump_term += model.marks.intensity(static_cast<std::size_t>(e)) * (v_phi - vn[j]);
                u_arg(0, e) = v_phi - vn[j];
            }
            double f_val = 0.0;
            if (model.has_driver())
                f_val = model.driver(t, xv, Vec::Constant(1, vn[j]),
                                     Mat::Constant(1, 1, vx[j] * sig), u_arg)[0];
            v[i][j] = vn[j] + dt * (0.5 * sig * sig * vxx[j] + drift_b * vx[j] + jump_term + f_val);
        }
        if (dt * max_s2 > 0.95 * h * h || dt * max_adv > 0.95 * h) {
            const double dt_diff = (max_s2 > 0) ? 0.9 * h * h / max_s2 : dt;
            const double dt_adv = (max_adv > 0) ? 0.9 * h / max_adv : dt;
            std::ostringstream os;
            os << "pide_reference: stability violated at t=" << t << " (dt=" << dt
               << "); use dt <= " << std::min(dt_diff, dt_adv);
            throw StabilityError(os.str(), std::min(dt_diff, dt_adv));
        }
        if (!v[i].allFinite())
            throw EvaluatorError("pide_reference: non-finite field", t, -1, Vec::Zero(1));
    }
    return v;
}

CrosscheckReport uniqueness_crosscheck(const std::function<double(double, double)>& candidate,
                                       const BsdeSolution& bsde) {
    CrosscheckReport report;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i <= bsde.grid.steps; ++i) {
        const double t = bsde.grid.node(i);
        for (std::size_t p = 0; p < bsde.paths; ++p) {
            const auto pi = static_cast<Eigen::Index>(p);
            const double diff = candidate(t, bsde.x[i](pi, 0)) - bsde.y[i](pi, 0);
            report.max_discrepancy = std::max(report.max_discrepancy, std::fabs(diff));
            sum_sq += diff * diff;
            ++report.samples;
        }
    }
    report.rms_discrepancy =
        (report.samples > 0) ? std::sqrt(sum_sq / static_cast<double>(report.samples)) : 0.0;
    return report;
}

CrosscheckReport uniqueness_crosscheck(const RandomFieldTriple& triple,
                                       std::span<const BsdeSolution> family,
                                       std::size_t family_index) {
    const auto& bsde = family[family_index];
    if (triple.paths.empty() || triple.paths.size() != bsde.paths)
        throw std::invalid_argument("uniqueness_crosscheck: path ensembles misaligned");

    CrosscheckReport report;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i <= triple.grid.steps; ++i) {
        for (std::size_t p = 0; p < triple.paths.size(); ++p) {
            const auto pi = static_cast<Eigen::Index>(p);
            const double xt = bsde.x[i](pi, 0);
            const auto& fields = triple.paths[p];
            bool escaped = false;
            const double p_at = interp_clamped(triple.xmesh, fields.p[i], xt, escaped);
            if (escaped) continue;
            // Skip if the bracketing mesh cell is flagged.
            const std::size_t cell = std::min<std::size_t>(
                triple.xmesh.size() - 2,
                static_cast<std::size_t>(std::upper_bound(triple.xmesh.begin(), triple.xmesh.end(),
                                                          xt) -
                                         triple.xmesh.begin()) -
                    1);
            if (fields.flagged[i][cell] || fields.flagged[i][cell + 1]) continue;
            const double diff = p_at - bsde.y[i](pi, 0);
            report.max_discrepancy = std::max(report.max_discrepancy, std::fabs(diff));
            sum_sq += diff * diff;
            ++report.samples;
        }
    }
    report.rms_discrepancy =
        (report.samples > 0) ? std::sqrt(sum_sq / static_cast<double>(report.samples)) : 0.0;
    return report;
}

}  // namespace jumpflow
