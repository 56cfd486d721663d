#include "jumpflow/model.hpp"

#include <cmath>
#include <sstream>

#include "jumpflow/rng.hpp"

namespace jumpflow {

namespace {

std::string describe_point(double t, int mark, const Vec& x) {
    std::ostringstream os;
    os << " at t=" << t;
    if (mark >= 0) os << " mark=" << mark;
    os << " x=[";
    for (int i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
    os << "]";
    return os.str();
}

void require_finite(const Vec& v, const char* what, double t, int mark, const Vec& x) {
    if (!v.allFinite()) throw EvaluatorError(std::string(what) + " returned non-finite value", t, mark, x);
}

void require_finite(const Mat& m, const char* what, double t, int mark, const Vec& x) {
    if (!m.allFinite()) throw EvaluatorError(std::string(what) + " returned non-finite value", t, mark, x);
}

// Central-difference Jacobian of g(t,e,.) when no analytic derivative exists.
Mat jump_jacobian(const CoefficientModel& model, double t, int mark, const Vec& x, double h) {
    if (model.jump_coeff_dx) return model.jump_coeff_dx(t, mark, x);
    const int n = model.dim_state;
    Mat jac(n, n);
    Vec xp = x, xm = x;
    for (int j = 0; j < n; ++j) {
        xp[j] = x[j] + h;
        xm[j] = x[j] - h;
        jac.col(j) = (model.jump_coeff(t, mark, xp) - model.jump_coeff(t, mark, xm)) / (2.0 * h);
        xp[j] = x[j];
        xm[j] = x[j];
    }
    return jac;
}

}  // namespace

EvaluatorError::EvaluatorError(const std::string& what, double t_, int mark_, const Vec& x_)
    : std::runtime_error(what + describe_point(t_, mark_, x_)), t(t_), mark(mark_), x(x_) {}

Vec eval_phi(const CoefficientModel& model, double t, int mark, const Vec& x) {
    return x + model.jump_coeff(t, mark, x);
}

Vec eval_phi_inverse(const CoefficientModel& model, double t, int mark, const Vec& y) {
    if (model.phi_inverse) return model.phi_inverse(t, mark, y);

    const int n = model.dim_state;
    Vec x = y;
    Vec residual = x + model.jump_coeff(t, mark, x) - y;
    double res_norm = residual.norm();
    for (int iter = 0; iter < 100; ++iter) {
        if (res_norm <= 1e-12) return x;
        Mat jac = Mat::Identity(n, n) + jump_jacobian(model, t, mark, x, 1e-6);
        Eigen::FullPivLU<Mat> lu(jac);
        if (!lu.isInvertible())
            throw DegenerateMapError("eval_phi_inverse: singular Jacobian I + dg" +
                                     describe_point(t, mark, x));
        const Vec step = lu.solve(residual);
        // Damped update: halve the step until the residual decreases.
        double scale = 1.0;
        for (int back = 0; back < 30; ++back) {
            Vec trial = x - scale * step;
            Vec trial_res = trial + model.jump_coeff(t, mark, trial) - y;
            if (trial_res.norm() < res_norm) {
                x = trial;
                residual = trial_res;
                res_norm = residual.norm();
                break;
            }
            scale *= 0.5;
            if (back == 29)
                throw DegenerateMapError("eval_phi_inverse: line search stalled" +
                                         describe_point(t, mark, x));
        }
    }
    throw DegenerateMapError("eval_phi_inverse: no convergence within 100 iterations" +
                             describe_point(t, mark, y));
}

ValidationReport validate_model(const CoefficientModel& model, const SampleBox& box,
                                std::size_t n_samples, const ValidationThresholds& thr,
                                double horizon) {
    if (n_samples < 1) throw std::invalid_argument("validate_model: n_samples must be >= 1");
    const int n = model.dim_state;
    if (box.lo.size() != n || box.hi.size() != n)
        throw std::invalid_argument("validate_model: sample box dimension mismatch");

    CounterRng rng(0x76616c69u, 0, CounterRng::kProbe);
    std::uint64_t ctr = 0;
    auto draw_point = [&](double& t, Vec& x) {
        t = horizon * rng.uniform(ctr++);
        x.resize(n);
        for (int i = 0; i < n; ++i)
            x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * rng.uniform(ctr++);
    };

    double c1 = 0.0, c2 = 0.0, c3 = 0.0;
    double c4 = std::numeric_limits<double>::infinity();
    const double h = thr.fd_step;

    for (std::size_t s = 0; s < n_samples; ++s) {
        double t;
        Vec x;
        draw_point(t, x);
        const double growth = 1.0 + x.norm();

        const Vec b = model.drift(t, x);
        require_finite(b, "drift", t, -1, x);
        const Mat sig = model.diffusion(t, x);
        require_finite(sig, "diffusion", t, -1, x);
        c1 = std::max(c1, b.norm() / growth);
        c1 = std::max(c1, sig.norm() / growth);

        // (C2): directional central differences coordinate by coordinate.
        Vec xp = x, xm = x;
        for (int j = 0; j < n; ++j) {
            xp[j] = x[j] + h;
            xm[j] = x[j] - h;
            c2 = std::max(c2, (model.drift(t, xp) - model.drift(t, xm)).norm() / (2 * h));
            c2 = std::max(c2, (model.diffusion(t, xp) - model.diffusion(t, xm)).norm() / (2 * h));
            xp[j] = x[j];
            xm[j] = x[j];
        }

        for (std::size_t e = 0; e < model.marks.size(); ++e) {
            const int mark = static_cast<int>(e);
            const Vec g = model.jump_coeff(t, mark, x);
            require_finite(g, "jump_coeff", t, mark, x);
            c1 = std::max(c1, g.norm() / growth);

            const Mat dg = jump_jacobian(model, t, mark, x, h);
            require_finite(dg, "jump_coeff jacobian", t, mark, x);
            c2 = std::max(c2, dg.norm());
            c4 = std::min(c4, std::fabs((Mat::Identity(n, n) + dg).determinant()));

            try {
                const Vec y = x + g;
                const Vec back = eval_phi_inverse(model, t, mark, y);
                c3 = std::max(c3, (back + model.jump_coeff(t, mark, back) - y).norm());
                c3 = std::max(c3, (eval_phi(model, t, mark, back) - y).norm());
            } catch (const DegenerateMapError&) {
                c3 = std::numeric_limits<double>::infinity();
            }
        }
    }

    ValidationReport report;
    report.checks.push_back({"C1 linear growth", c1, thr.linear_growth_max,
                             std::isfinite(c1) && c1 <= thr.linear_growth_max});
    report.checks.push_back({"C2 derivative bound", c2, thr.derivative_max,
                             std::isfinite(c2) && c2 <= thr.derivative_max});
    report.checks.push_back({"C3 inverse consistency", c3, thr.inverse_tol, c3 <= thr.inverse_tol});
    report.checks.push_back({"C4 jacobian determinant", c4, thr.jacobian_min_det,
                             c4 >= thr.jacobian_min_det});

    if (model.declares_c6 && model.has_driver()) {
        report.c6_checked = true;
        report.c6_pass = check_driver_linearity(model, box, std::max<std::size_t>(n_samples, 8),
                                                1e-10, horizon);
    }
    return report;
}

bool check_driver_linearity(const CoefficientModel& model, const SampleBox& box,
                            std::size_t n_samples, double tol, double horizon) {
    if (!model.has_driver()) return true;
    const int n = model.dim_state;
    const int l = model.dim_value;
    const int d = model.dim_brownian;
    const int m = static_cast<int>(model.marks.size());

    CounterRng rng(0x6c696e65u, 0, CounterRng::kProbe);
    std::uint64_t ctr = 0;
    auto u01 = [&] { return 2.0 * rng.uniform(ctr++) - 1.0; };

    for (std::size_t s = 0; s < n_samples; ++s) {
        const double t = horizon * rng.uniform(ctr++);
        Vec x(n), y(l);
        for (int i = 0; i < n; ++i) x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * rng.uniform(ctr++);
        for (int i = 0; i < l; ++i) y[i] = u01();
        Mat z1(l, d), z2(l, d), u1(l, m), u2(l, m);
        for (int i = 0; i < l; ++i) {
            for (int j = 0; j < d; ++j) {
                z1(i, j) = u01();
                z2(i, j) = u01();
            }
            for (int j = 0; j < m; ++j) {
                u1(i, j) = u01();
                u2(i, j) = u01();
            }
        }
        const double alpha = u01(), beta = u01();
        const Vec f0 = model.driver(t, x, y, Mat::Zero(l, d), Mat::Zero(l, m));
        const Vec fa = model.driver(t, x, y, z1, u1) - f0;
        const Vec fb = model.driver(t, x, y, z2, u2) - f0;
        const Vec fc = model.driver(t, x, y, alpha * z1 + beta * z2, alpha * u1 + beta * u2) - f0;
        if ((fc - alpha * fa - beta * fb).norm() > tol) return false;
    }
    return true;
}

namespace {

double get_param(const std::map<std::string, double>& params, const std::string& key,
                 double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

CoefficientModel scalar_model(MarkSpace marks) {
    CoefficientModel m;
    m.dim_state = 1;
    m.dim_brownian = 1;
    m.dim_value = 1;
    m.time_homogeneous = true;
    m.marks = std::move(marks);
    return m;
}

Vec scalar(double v) {
    Vec out(1);
    out[0] = v;
    return out;
}

}  // namespace

std::vector<std::string> catalog_names() {
    return {"zero", "additive-brownian", "pure-jump-shift", "linear-jump-diffusion",
            "linear-driver"};
}

TestProblem catalog_problem(const std::string& name,
                            const std::map<std::string, double>& overrides) {
    TestProblem prob;
    prob.name = name;
    prob.horizon = get_param(overrides, "T", 1.0);
    const double T = prob.horizon;

    auto zero_driver = [](double, const Vec&, const Vec& y, const Mat&, const Mat&) {
        return Vec::Zero(y.size()).eval();
    };

    if (name == "zero") {
        auto m = scalar_model(MarkSpace::uniform(1, 1.0));
        m.drift = [](double, const Vec& x) { return Vec::Zero(x.size()).eval(); };
        m.diffusion = [](double, const Vec& x) { return Mat::Zero(x.size(), 1).eval(); };
        m.jump_coeff = [](double, int, const Vec& x) { return Vec::Zero(x.size()).eval(); };
        m.phi_inverse = [](double, int, const Vec& y) { return y; };
        m.driver = zero_driver;
        m.terminal = [](const Vec& x) { return x; };
        m.terminal_dx = [](const Vec& x) { return Mat::Identity(1, x.size()).eval(); };
        m.jump_coeff_dx = [](double, int, const Vec& x) {
            return Mat::Zero(x.size(), x.size()).eval();
        };
        m.driver_dz = Mat::Zero(1, 1);
        m.driver_du = Vec::Zero(1);
        m.declares_c6 = true;
        prob.model = std::move(m);
        prob.flow_oracle = [](double, double x0, double, const std::vector<int>&) { return x0; };
        prob.inverse_oracle = [](double, double y, double, const std::vector<int>&) { return y; };
        prob.bsde_y_oracle = [](double, double xt) { return xt; };
        prob.bsde_z_oracle = [](double, double) { return 0.0; };
        prob.bsde_u_oracle = [](double, double, int) { return 0.0; };
        prob.p_field_oracle = [](double, double x) { return x; };
        return prob;
    }

    if (name == "additive-brownian") {
        const double s = get_param(overrides, "s", 0.4);
        prob.params["s"] = s;
        auto m = scalar_model(MarkSpace::uniform(1, 1.0));
        m.drift = [](double, const Vec& x) { return Vec::Zero(x.size()).eval(); };
        m.diffusion = [s](double, const Vec&) { return scalar(s).transpose().eval(); };
        m.jump_coeff = [](double, int, const Vec& x) { return Vec::Zero(x.size()).eval(); };
        m.phi_inverse = [](double, int, const Vec& y) { return y; };
        m.driver = zero_driver;
        m.terminal = [](const Vec& x) { return x; };
        m.terminal_dx = [](const Vec& x) { return Mat::Identity(1, x.size()).eval(); };
        m.jump_coeff_dx = [](double, int, const Vec& x) {
            return Mat::Zero(x.size(), x.size()).eval();
        };
        m.diffusion_dx = [](double, const Vec&) { return std::vector<Mat>{Mat::Zero(1, 1)}; };
        m.driver_dz = Mat::Zero(1, 1);
        m.driver_du = Vec::Zero(1);
        m.declares_c6 = true;
        prob.model = std::move(m);
        prob.flow_oracle = [s](double, double x0, double wt, const std::vector<int>&) {
            return x0 + s * wt;
        };
        prob.inverse_oracle = [s](double, double y, double wt, const std::vector<int>&) {
            return y - s * wt;
        };
        return prob;
    }

    if (name == "pure-jump-shift") {
        const double c = get_param(overrides, "c", 0.4);
        const double vE = get_param(overrides, "intensity", 2.0);
        prob.params["c"] = c;
        prob.params["intensity"] = vE;
        auto m = scalar_model(MarkSpace::uniform(1, vE));
        m.drift = [](double, const Vec& x) { return Vec::Zero(x.size()).eval(); };
        m.diffusion = [](double, const Vec& x) { return Mat::Zero(x.size(), 1).eval(); };
        m.jump_coeff = [c](double, int, const Vec&) { return scalar(c).eval(); };
        m.phi_inverse = [c](double, int, const Vec& y) { return (y.array() - c).matrix().eval(); };
        m.jump_coeff_dx = [](double, int, const Vec& x) {
            return Mat::Zero(x.size(), x.size()).eval();
        };
        m.diffusion_dx = [](double, const Vec&) { return std::vector<Mat>{Mat::Zero(1, 1)}; };
        m.driver = zero_driver;
        m.terminal = [](const Vec& x) { return x; };
        m.terminal_dx = [](const Vec& x) { return Mat::Identity(1, x.size()).eval(); };
        m.driver_dz = Mat::Zero(1, 1);
        m.driver_du = Vec::Zero(1);
        m.declares_c6 = true;
        prob.model = std::move(m);
        prob.flow_oracle = [c, vE](double t, double x0, double, const std::vector<int>& counts) {
            int nt = 0;
            for (int k : counts) nt += k;
            return x0 + c * nt - c * vE * t;
        };
        prob.inverse_oracle = [c, vE](double t, double y, double, const std::vector<int>& counts) {
            int nt = 0;
            for (int k : counts) nt += k;
            return y - c * (nt - vE * t);
        };
        return prob;
    }

    if (name == "linear-jump-diffusion") {
        const double a = get_param(overrides, "a", 0.1);
        const double s = get_param(overrides, "s", 0.2);
        const double c = get_param(overrides, "c", 0.1);
        const double vE = get_param(overrides, "intensity", 2.0);
        prob.params = {{"a", a}, {"s", s}, {"c", c}, {"intensity", vE}};
        // Two marks with identical action: per-mark machinery is exercised
        // while the closed form depends only on the total count.
        auto m = scalar_model(MarkSpace::uniform(2, vE / 2.0));
        m.drift = [a](double, const Vec& x) { return (a * x).eval(); };
        m.diffusion = [s](double, const Vec& x) { return (s * x).eval(); };
        m.jump_coeff = [c](double, int, const Vec& x) { return (c * x).eval(); };
        m.phi_inverse = [c](double, int, const Vec& y) { return (y / (1.0 + c)).eval(); };
        m.drift_dx = [a](double, const Vec&) { return (a * Mat::Identity(1, 1)).eval(); };
        m.diffusion_dx = [s](double, const Vec&) {
            return std::vector<Mat>{s * Mat::Identity(1, 1)};
        };
        m.jump_coeff_dx = [c](double, int, const Vec&) { return (c * Mat::Identity(1, 1)).eval(); };
        m.driver = zero_driver;
        m.terminal = [](const Vec& x) { return x; };
        m.terminal_dx = [](const Vec& x) { return Mat::Identity(1, x.size()).eval(); };
        m.driver_dz = Mat::Zero(1, 1);
        m.driver_du = Vec::Zero(2);
        m.declares_c6 = true;
        prob.model = std::move(m);
        const double mu = a - s * s / 2.0 - c * vE;
        prob.flow_oracle = [mu, s, c](double t, double x0, double wt,
                                      const std::vector<int>& counts) {
            int nt = 0;
            for (int k : counts) nt += k;
            return x0 * std::exp(mu * t + s * wt) * std::pow(1.0 + c, nt);
        };
        prob.inverse_oracle = [mu, s, c](double t, double y, double wt,
                                         const std::vector<int>& counts) {
            int nt = 0;
            for (int k : counts) nt += k;
            return y / (std::exp(mu * t + s * wt) * std::pow(1.0 + c, nt));
        };
        prob.bsde_y_oracle = [a, T](double t, double xt) { return xt * std::exp(a * (T - t)); };
        prob.bsde_z_oracle = [a, s, T](double t, double xt) {
            return s * xt * std::exp(a * (T - t));
        };
        prob.bsde_u_oracle = [a, c, T](double t, double xleft, int) {
            return c * xleft * std::exp(a * (T - t));
        };
        prob.p_field_oracle = [a, T](double t, double x) { return x * std::exp(a * (T - t)); };
        return prob;
    }

    if (name == "linear-driver") {
        const double r = get_param(overrides, "r", 0.5);
        const double s = get_param(overrides, "s", 0.4);
        prob.params = {{"r", r}, {"s", s}};
        auto m = scalar_model(MarkSpace::uniform(1, 1.0));
        m.drift = [](double, const Vec& x) { return Vec::Zero(x.size()).eval(); };
        m.diffusion = [s](double, const Vec&) { return scalar(s).transpose().eval(); };
        m.jump_coeff = [](double, int, const Vec& x) { return Vec::Zero(x.size()).eval(); };
        m.phi_inverse = [](double, int, const Vec& y) { return y; };
        m.jump_coeff_dx = [](double, int, const Vec& x) {
            return Mat::Zero(x.size(), x.size()).eval();
        };
        m.diffusion_dx = [](double, const Vec&) { return std::vector<Mat>{Mat::Zero(1, 1)}; };
        m.driver = [r](double, const Vec&, const Vec& y, const Mat&, const Mat&) {
            return (-r * y).eval();
        };
        m.terminal = [](const Vec&) { return Vec::Ones(1).eval(); };
        m.terminal_dx = [](const Vec& x) { return Mat::Zero(1, x.size()).eval(); };
        m.driver_dx = [](double, const Vec& x, const Vec&) { return Mat::Zero(1, x.size()).eval(); };
        m.driver_dy = [r](double, const Vec&, const Vec&) {
            return (-r * Mat::Identity(1, 1)).eval();
        };
        m.driver_dz = Mat::Zero(1, 1);
        m.driver_du = Vec::Zero(1);
        m.declares_c6 = true;
        prob.model = std::move(m);
        prob.bsde_y_oracle = [r, T](double t, double) { return std::exp(-r * (T - t)); };
        prob.bsde_z_oracle = [](double, double) { return 0.0; };
        prob.bsde_u_oracle = [](double, double, int) { return 0.0; };
        prob.p_field_oracle = [r, T](double t, double) { return std::exp(-r * (T - t)); };
        return prob;
    }

    std::ostringstream os;
    os << "unknown catalog problem '" << name << "'; available:";
    for (const auto& n : catalog_names()) os << " " << n;
    throw std::invalid_argument(os.str());
}

}  // namespace jumpflow
