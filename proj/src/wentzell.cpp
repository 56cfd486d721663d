#include "jumpflow/wentzell.hpp"

#include <cmath>
#include <stdexcept>

#include "jumpflow/rng.hpp"

namespace jumpflow {

namespace {

constexpr double kFdStep = 1e-4;

double eval_G(const SemimartingaleFieldSpec& s, double t, const Vec& x) {
    return s.G ? s.G(t, x) : 0.0;
}

Vec eval_H(const SemimartingaleFieldSpec& s, double t, const Vec& x) {
    return s.H ? s.H(t, x) : Vec::Zero(s.driver_model.dim_brownian).eval();
}

double eval_J(const SemimartingaleFieldSpec& s, double t, int e, const Vec& x) {
    return s.J ? s.J(t, e, x) : 0.0;
}

Vec grad_F(const SemimartingaleFieldSpec& s, const PathContext& ctx, const Vec& x) {
    if (s.dF) return s.dF(ctx, x);
    const int n = static_cast<int>(x.size());
    Vec g(n);
    Vec xp = x, xm = x;
    for (int i = 0; i < n; ++i) {
        xp[i] = x[i] + kFdStep;
        xm[i] = x[i] - kFdStep;
        g[i] = (s.F(ctx, xp) - s.F(ctx, xm)) / (2.0 * kFdStep);
        xp[i] = x[i];
        xm[i] = x[i];
    }
    return g;
}

Mat hess_F(const SemimartingaleFieldSpec& s, const PathContext& ctx, const Vec& x) {
    if (s.d2F) return s.d2F(ctx, x);
    const int n = static_cast<int>(x.size());
    Mat h(n, n);
    const double f0 = s.F(ctx, x);
    Vec xi = x;
    for (int i = 0; i < n; ++i) {
        xi[i] = x[i] + kFdStep;
        const double fp = s.F(ctx, xi);
        xi[i] = x[i] - kFdStep;
        const double fm = s.F(ctx, xi);
        xi[i] = x[i];
        h(i, i) = (fp - 2.0 * f0 + fm) / (kFdStep * kFdStep);
        for (int j = i + 1; j < n; ++j) {
            Vec xx = x;
            xx[i] += kFdStep;
            xx[j] += kFdStep;
            const double fpp = s.F(ctx, xx);
            xx[j] -= 2.0 * kFdStep;
            const double fpm = s.F(ctx, xx);
            xx[i] -= 2.0 * kFdStep;
            const double fmm = s.F(ctx, xx);
            xx[j] += 2.0 * kFdStep;
            const double fmp = s.F(ctx, xx);
            h(i, j) = h(j, i) = (fpp - fpm - fmp + fmm) / (4.0 * kFdStep * kFdStep);
        }
    }
    return h;
}

Mat grad_H(const SemimartingaleFieldSpec& s, double t, const Vec& x) {
    if (s.dH) return s.dH(t, x);
    const int n = static_cast<int>(x.size());
    const int d = s.driver_model.dim_brownian;
    Mat g(d, n);
    Vec xp = x, xm = x;
    for (int i = 0; i < n; ++i) {
        xp[i] = x[i] + kFdStep;
        xm[i] = x[i] - kFdStep;
        g.col(i) = (eval_H(s, t, xp) - eval_H(s, t, xm)) / (2.0 * kFdStep);
        xp[i] = x[i];
        xm[i] = x[i];
    }
    return g;
}

}  // namespace

WentzellReport verify_wentzell(const SemimartingaleFieldSpec& spec, const NoiseBundle& bundle) {
    const CoefficientModel& model = spec.driver_model;
    const std::vector<Vec> mesh = {spec.x0};
    const FlowPath path = simulate_flow(model, bundle, mesh);
    const AdaptedGrid& grid = path.grid;
    const int d = model.dim_brownian;

    PathContext ctx;
    ctx.t = 0.0;
    ctx.w = Vec::Zero(d);
    ctx.counts.assign(model.marks.size(), 0);

    WentzellReport report;
    double rhs = spec.F(ctx, spec.x0);
    double sum_sq = 0.0;

    for (std::size_t k = 0; k + 1 < grid.nodes(); ++k) {
        const double t = grid.times[k];
        const double dt = grid.times[k + 1] - grid.times[k];
        const Vec dw = grid.dw.row(static_cast<Eigen::Index>(k)).transpose();
        const Vec x = path.value[k].row(0).transpose();  // X at the left node (post-jump)

        // Predictable (left-endpoint) integrands, matching the Euler scheme's
        // own coefficient processes b(s) = b(t_k, X_k), sigma(s) = sigma(t_k, X_k).
        const Vec b = model.drift(t, x);
        const Mat sig = model.diffusion(t, x);
        const Vec df = grad_F(spec, ctx, x);
        const Mat d2f = hess_F(spec, ctx, x);
        const Mat dh = grad_H(spec, t, x);

        double dt_terms = eval_G(spec, t, x) + df.dot(b);
        dt_terms += 0.5 * (d2f * (sig * sig.transpose())).trace();
        dt_terms += (dh * sig).trace();
        for (std::size_t e = 0; e < model.marks.size(); ++e) {
            const int mark = static_cast<int>(e);
            const double ve = model.marks.intensity(e);
            const Vec g_e = model.jump_coeff(t, mark, x);
            const Vec x_shift = x + g_e;
            const double f_x = spec.F(ctx, x);
            const double f_shift = spec.F(ctx, x_shift);
            dt_terms += ve * (eval_J(spec, t, mark, x_shift) - eval_J(spec, t, mark, x));
            dt_terms += ve * (f_shift - f_x - df.dot(g_e));
            // Compensator leg of the N~ integral.
            dt_terms -= ve * (f_shift - f_x + eval_J(spec, t, mark, x_shift));
        }

        rhs += dt_terms * dt;
        rhs += eval_H(spec, t, x).dot(dw);
        rhs += df.dot(sig * dw);

        PathContext pre = ctx;
        pre.t = grid.times[k + 1];
        pre.w = ctx.w + dw;
        PathContext post = pre;

        const int jump = grid.jump_index[k + 1];
        if (jump >= 0) {
            const auto& ev = bundle.jumps[static_cast<std::size_t>(jump)];
            const Vec x_pre = path.left[k + 1].row(0).transpose();
            const Vec x_post = path.value[k + 1].row(0).transpose();
            const double f_pre = spec.F(pre, x_pre);
            const double bracket =
                spec.F(pre, x_post) - f_pre + eval_J(spec, ev.time, ev.mark, x_post);
            rhs += bracket;

            post.counts[static_cast<std::size_t>(ev.mark)] += 1;
            // Discrete jump identity: the LHS increment across the jump must
            // equal the N~ bracket exactly.
            const double lhs_jump = spec.F(post, x_post) - f_pre;
            report.jump_identity_max =
                std::max(report.jump_identity_max, std::fabs(lhs_jump - bracket));
        }

        ctx = post;
        const double lhs = spec.F(ctx, path.value[k + 1].row(0).transpose());
        const double diff = std::fabs(lhs - rhs);
        report.max_discrepancy = std::max(report.max_discrepancy, diff);
        sum_sq += diff * diff;
        ++report.nodes;
    }
    report.rms_discrepancy =
        (report.nodes > 0) ? std::sqrt(sum_sq / static_cast<double>(report.nodes)) : 0.0;
    return report;
}

bool probe_field_smoothness(const SemimartingaleFieldSpec& spec, double x_lo, double x_hi,
                            std::size_t n_samples, double tol) {
    CounterRng rng(0x736d6f6fu, 0, CounterRng::kProbe);
    std::uint64_t ctr = 0;
    const int marks = static_cast<int>(spec.driver_model.marks.size());

    // Difference quotients must stabilize as the step shrinks; a jump or a
    // blow-up in the probed derivative shows up as disagreement between the
    // two step sizes relative to the local scale.
    auto stable = [&](auto&& eval, double x, double h) {
        const double d1 = (eval(x + h) - eval(x - h)) / (2.0 * h);
        const double d2 = (eval(x + h / 4.0) - eval(x - h / 4.0)) / (h / 2.0);
        if (!std::isfinite(d1) || !std::isfinite(d2)) return false;
        return std::fabs(d1 - d2) <= tol * (1.0 + std::max(std::fabs(d1), std::fabs(d2)));
    };

    for (std::size_t s = 0; s < n_samples; ++s) {
        const double t = rng.uniform(ctr++);
        const double x = x_lo + (x_hi - x_lo) * rng.uniform(ctr++);
        PathContext ctx;
        ctx.t = t;
        ctx.w = Vec::Constant(spec.driver_model.dim_brownian, rng.normal(ctr++));
        ctx.counts.assign(spec.driver_model.marks.size(),
                          static_cast<int>(3.0 * rng.uniform(ctr++)));
        const double h = 1e-3;

        auto f_at = [&](double xx) { return spec.F(ctx, Vec::Constant(1, xx)); };
        if (!stable(f_at, x, h)) return false;
        auto df_at = [&](double xx) {
            return (spec.F(ctx, Vec::Constant(1, xx + h)) -
                    spec.F(ctx, Vec::Constant(1, xx - h))) / (2.0 * h);
        };
        if (!stable(df_at, x, h)) return false;  // F twice differentiable

        if (spec.H) {
            auto h_at = [&](double xx) { return spec.H(t, Vec::Constant(1, xx))[0]; };
            if (!stable(h_at, x, h)) return false;
        }
        if (spec.G && !std::isfinite(spec.G(t, Vec::Constant(1, x)))) return false;
        for (int e = 0; e < marks; ++e)
            if (spec.J && !std::isfinite(spec.J(t, e, Vec::Constant(1, x)))) return false;
    }
    return true;
}

std::vector<std::string> wentzell_spec_names() {
    return {"identity", "product", "square", "jump-field"};
}

SemimartingaleFieldSpec wentzell_spec(const std::string& name) {
    SemimartingaleFieldSpec spec;
    spec.name = name;
    const auto prob = catalog_problem("linear-jump-diffusion");
    spec.driver_model = prob.model;
    spec.x0 = Vec::Constant(1, 1.0);

    if (name == "identity") {
        spec.F0 = [](const Vec& x) { return x[0]; };
        spec.F = [](const PathContext&, const Vec& x) { return x[0]; };
        spec.dF = [](const PathContext&, const Vec&) { return Vec::Ones(1).eval(); };
        spec.d2F = [](const PathContext&, const Vec&) { return Mat::Zero(1, 1).eval(); };
        return spec;
    }
    if (name == "product") {
        spec.F0 = [](const Vec&) { return 0.0; };
        spec.H = [](double, const Vec& x) { return Vec::Constant(1, x[0]).eval(); };
        spec.F = [](const PathContext& ctx, const Vec& x) { return ctx.w[0] * x[0]; };
        spec.dF = [](const PathContext& ctx, const Vec&) {
            return Vec::Constant(1, ctx.w[0]).eval();
        };
        spec.d2F = [](const PathContext&, const Vec&) { return Mat::Zero(1, 1).eval(); };
        spec.dH = [](double, const Vec&) { return Mat::Ones(1, 1).eval(); };
        return spec;
    }
    if (name == "square") {
        spec.F0 = [](const Vec& x) { return x[0] * x[0]; };
        spec.F = [](const PathContext&, const Vec& x) { return x[0] * x[0]; };
        spec.dF = [](const PathContext&, const Vec& x) {
            return Vec::Constant(1, 2.0 * x[0]).eval();
        };
        spec.d2F = [](const PathContext&, const Vec&) {
            return (2.0 * Mat::Identity(1, 1)).eval();
        };
        return spec;
    }
    if (name == "jump-field") {
        // F(t,x) = (N_t - v(E) t) x, i.e. F = int int x N~(de ds): exercises
        // the J legs of the expansion.
        const double total = spec.driver_model.marks.total_intensity();
        spec.F0 = [](const Vec&) { return 0.0; };
        spec.J = [](double, int, const Vec& x) { return x[0]; };
        spec.F = [total](const PathContext& ctx, const Vec& x) {
            return (static_cast<double>(ctx.total_count()) - total * ctx.t) * x[0];
        };
        spec.dF = [total](const PathContext& ctx, const Vec&) {
            return Vec::Constant(1, static_cast<double>(ctx.total_count()) - total * ctx.t).eval();
        };
        spec.d2F = [](const PathContext&, const Vec&) { return Mat::Zero(1, 1).eval(); };
        return spec;
    }
    throw std::invalid_argument("wentzell_spec: unknown spec '" + name +
                                "'; available: identity, product, square, jump-field");
}

}  // namespace jumpflow
