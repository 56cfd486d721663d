#include "jumpflow/bsde.hpp"

#include <cmath>
#include <sstream>

#include "jumpflow/parallel.hpp"

namespace jumpflow {

Mat base_states(const FlowPath& flow, std::size_t mesh_index) {
    const int n = static_cast<int>(flow.value.front().cols());
    std::vector<std::size_t> base_nodes;
    for (std::size_t k = 0; k < flow.grid.nodes(); ++k)
        if (flow.grid.base_node[k] >= 0) base_nodes.push_back(k);
    Mat out(static_cast<Eigen::Index>(base_nodes.size()), n);
    for (std::size_t i = 0; i < base_nodes.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) =
            flow.value[base_nodes[i]].row(static_cast<Eigen::Index>(mesh_index));
    return out;
}

Eigen::MatrixXi base_jump_counts(const NoiseBundle& bundle) {
    const std::size_t steps = bundle.grid.steps;
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(steps),
                                                   static_cast<Eigen::Index>(bundle.marks.size()));
    for (const auto& ev : bundle.jumps) {
        // A jump at tau belongs to the step (t_i, t_{i+1}] containing it.
        std::size_t i = static_cast<std::size_t>(std::max(
            0.0, std::ceil(ev.time / bundle.grid.horizon * static_cast<double>(steps)) - 1.0));
        i = std::min(i, steps - 1);
        while (i > 0 && ev.time <= bundle.grid.node(i)) --i;
        while (i + 1 < steps && ev.time > bundle.grid.node(i + 1)) ++i;
        counts(static_cast<Eigen::Index>(i), ev.mark) += 1;
    }
    return counts;
}

namespace {

// Multi-indices of total degree <= degree over n variables, graded order.
std::vector<std::vector<int>> monomial_indices(int n, int degree) {
    std::vector<std::vector<int>> out;
    std::vector<int> current(static_cast<std::size_t>(n), 0);
    for (int total = 0; total <= degree; ++total) {
        std::function<void(int, int)> fill = [&](int pos, int remaining) {
            if (pos == n - 1) {
                current[static_cast<std::size_t>(pos)] = remaining;
                out.push_back(current);
                return;
            }
            for (int k = remaining; k >= 0; --k) {
                current[static_cast<std::size_t>(pos)] = k;
                fill(pos + 1, remaining - k);
            }
        };
        fill(0, total);
    }
    return out;
}

// Standardized monomial design matrix for one node. Components whose sample
// spread vanishes contribute only through the constant.
Mat design_matrix(const Mat& states, int degree) {
    const Eigen::Index paths = states.rows();
    const Eigen::Index n = states.cols();
    Vec mu(n), sd(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        mu[j] = states.col(j).mean();
        sd[j] = std::sqrt((states.col(j).array() - mu[j]).square().sum() /
                          static_cast<double>(std::max<Eigen::Index>(paths - 1, 1)));
    }
    std::vector<int> active;
    for (Eigen::Index j = 0; j < n; ++j)
        if (sd[j] > 1e-13 * (1.0 + std::fabs(mu[j]))) active.push_back(static_cast<int>(j));

    if (active.empty()) return Mat::Ones(paths, 1);

    const auto idx = monomial_indices(static_cast<int>(active.size()), degree);
    Mat phi(paths, static_cast<Eigen::Index>(idx.size()));
    for (std::size_t c = 0; c < idx.size(); ++c) {
        Vec col = Vec::Ones(paths);
        for (std::size_t a = 0; a < active.size(); ++a) {
            const int pw = idx[c][a];
            if (pw == 0) continue;
            const Eigen::Index j = active[a];
            const Vec ksi = ((states.col(j).array() - mu[j]) / sd[j]).matrix();
            for (int rep = 0; rep < pw; ++rep) col = col.cwiseProduct(ksi);
        }
        phi.col(static_cast<Eigen::Index>(c)) = col;
    }
    return phi;
}

struct Regression {
    // Two-fold cross-fit: each path is evaluated with coefficients estimated
    // on the complementary fold (even/odd path index), so fitted values stay
    // independent of the path's own increments. One step of iterative
    // refinement per fold keeps exactly representable targets (constants,
    // low-degree polynomials) at roundoff level.
    Mat phi;
    Mat phi_fold[2];                  // rows of phi restricted to each fold
    Eigen::LDLT<Mat> solver_fold[2];
    double cond = 1.0;
    double ridge_used = 0.0;

    Vec fit_values(const Vec& target) const {
        const Eigen::Index paths = phi.rows();
        Vec out(paths);
        for (int fold = 0; fold < 2; ++fold) {
            // Coefficients from the complementary fold.
            const int other = 1 - fold;
            const Mat& phi_o = phi_fold[other];
            Vec target_o(phi_o.rows());
            for (Eigen::Index p = other, k = 0; p < paths; p += 2, ++k) target_o[k] = target[p];
            Vec coeffs = solver_fold[other].solve(phi_o.transpose() * target_o);
            coeffs += solver_fold[other].solve(phi_o.transpose() * (target_o - phi_o * coeffs));
            for (Eigen::Index p = fold; p < paths; p += 2)
                out[p] = phi.row(p).dot(coeffs);
        }
        return out;
    }
};

Regression regression_from_design(Mat phi, double ridge, double cond_warn) {
    Regression reg;
    reg.phi = std::move(phi);
    const Eigen::Index p = reg.phi.cols();
    const Eigen::Index paths = reg.phi.rows();
    for (int fold = 0; fold < 2; ++fold) {
        const Eigen::Index rows = (paths - fold + 1) / 2;
        reg.phi_fold[fold].resize(rows, p);
        for (Eigen::Index r = fold, k = 0; r < paths; r += 2, ++k)
            reg.phi_fold[fold].row(k) = reg.phi.row(r);
        const Mat gram = reg.phi_fold[fold].transpose() * reg.phi_fold[fold];
        Eigen::SelfAdjointEigenSolver<Mat> eig(gram);
        const double emax = eig.eigenvalues().maxCoeff();
        const double emin = std::max(eig.eigenvalues().minCoeff(), 0.0);
        const double cond = (emin > 0.0) ? emax / emin : std::numeric_limits<double>::infinity();
        reg.cond = std::max(reg.cond, cond);
        double ridge_used = ridge;
        if (cond > cond_warn) ridge_used = std::max(ridge, emax / cond_warn);
        reg.ridge_used = std::max(reg.ridge_used, ridge_used);
        reg.solver_fold[fold].compute(gram + ridge_used * Mat::Identity(p, p));
    }
    return reg;
}

struct Ensemble {
    std::size_t paths = 0;
    std::size_t steps = 0;
    TimeGrid grid;
    std::vector<Mat> x;                   // node -> paths x n
    std::vector<Mat> dw;                  // step -> paths x d
    std::vector<Eigen::MatrixXi> counts;  // step -> paths x m
};

Ensemble collect_ensemble(const CoefficientModel& model, std::span<const FlowPath> flows,
                          std::span<const NoiseBundle> bundles, std::size_t mesh_index) {
    if (flows.empty() || flows.size() != bundles.size())
        throw std::invalid_argument("solve_bsde: need matching flow and noise ensembles");
    Ensemble ens;
    ens.paths = flows.size();
    ens.grid = bundles[0].grid;
    ens.steps = ens.grid.steps;
    const int n = model.dim_state;
    const int d = model.dim_brownian;
    const int m = static_cast<int>(model.marks.size());

    ens.x.assign(ens.steps + 1, Mat(static_cast<Eigen::Index>(ens.paths), n));
    ens.dw.assign(ens.steps, Mat(static_cast<Eigen::Index>(ens.paths), d));
    ens.counts.assign(ens.steps, Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(ens.paths), m));

    for (std::size_t p = 0; p < ens.paths; ++p) {
        if (bundles[p].grid.steps != ens.steps)
            throw std::invalid_argument("solve_bsde: paths must share the base grid");
        if (flows[p].mesh.size() <= mesh_index)
            throw std::invalid_argument("solve_bsde: mesh_index outside the flow's mesh");
        const Mat xs = base_states(flows[p], mesh_index);
        const Eigen::MatrixXi cs = base_jump_counts(bundles[p]);
        for (std::size_t i = 0; i <= ens.steps; ++i)
            ens.x[i].row(static_cast<Eigen::Index>(p)) = xs.row(static_cast<Eigen::Index>(i));
        for (std::size_t i = 0; i < ens.steps; ++i) {
            ens.dw[i].row(static_cast<Eigen::Index>(p)) =
                bundles[p].increments.row(static_cast<Eigen::Index>(i));
            ens.counts[i].row(static_cast<Eigen::Index>(p)) = cs.row(static_cast<Eigen::Index>(i));
        }
    }
    return ens;
}

Vec eval_driver(const CoefficientModel& model, double t, const Vec& x, const Vec& y, const Mat& z,
                const Mat& u) {
    if (!model.has_driver()) return Vec::Zero(y.size());
    return model.driver(t, x, y, z, u);
}

Mat row_to_lmat(const Mat& store, Eigen::Index p, int l, int cols) {
    Mat out(l, cols);
    for (int i = 0; i < l; ++i)
        for (int j = 0; j < cols; ++j) out(i, j) = store(p, i * cols + j);
    return out;
}

}  // namespace

BsdeSolution solve_bsde(const CoefficientModel& model, std::span<const FlowPath> flows,
                        std::span<const NoiseBundle> bundles, const RegressionConfig& config,
                        std::size_t mesh_index) {
    if (config.degree < 0 || config.ridge < 0.0 || config.theta < 0.0 || config.theta > 1.0)
        throw std::invalid_argument("solve_bsde: malformed regression config");
    if (model.dim_factor > 0 && !config.custom_features)
        throw std::invalid_argument(
            "solve_bsde: random-coefficient models need a user-supplied feature map");
    const Ensemble ens = collect_ensemble(model, flows, bundles, mesh_index);
    const int l = model.dim_value;
    const int d = model.dim_brownian;
    const int m = static_cast<int>(model.marks.size());
    const auto paths = static_cast<Eigen::Index>(ens.paths);
    const double dt = ens.grid.dt();

    BsdeSolution sol;
    sol.grid = ens.grid;
    sol.l = l;
    sol.d = d;
    sol.m = m;
    sol.n = model.dim_state;
    sol.paths = ens.paths;
    sol.x = ens.x;
    sol.y.assign(ens.steps + 1, Mat::Zero(paths, l));
    sol.z.assign(ens.steps + 1, Mat::Zero(paths, l * d));
    sol.u.assign(ens.steps + 1, Mat::Zero(paths, l * m));
    sol.condition_numbers.assign(ens.steps + 1, 1.0);
    sol.basis_degree = config.degree;
    sol.ridge_used = config.ridge;

    // Terminal condition, exact per path.
    for (Eigen::Index p = 0; p < paths; ++p) {
        const Vec xi = model.terminal(ens.x[ens.steps].row(p).transpose());
        if (xi.size() != l)
            throw std::invalid_argument("solve_bsde: dim_value does not match terminal output");
        sol.y[ens.steps].row(p) = xi.transpose();
    }
    {
        const Vec probe =
            eval_driver(model, ens.grid.horizon, ens.x[ens.steps].row(0).transpose(),
                        sol.y[ens.steps].row(0).transpose(), Mat::Zero(l, d), Mat::Zero(l, m));
        if (probe.size() != l)
            throw std::invalid_argument("solve_bsde: dim_value does not match driver output");
    }

    for (std::size_t i = ens.steps; i-- > 0;) {
        const double t = ens.grid.node(i);
        const double t_next = ens.grid.node(i + 1);
        const Mat& x_i = ens.x[i];

        Regression reg;
        if (config.custom_features) {
            const Eigen::Index nf = config.custom_features(t, x_i.row(0).transpose()).size();
            Mat phi(paths, nf);
            for (Eigen::Index p = 0; p < paths; ++p)
                phi.row(p) = config.custom_features(t, x_i.row(p).transpose()).transpose();
            reg = regression_from_design(std::move(phi), config.ridge, config.cond_warn);
        } else {
            reg = regression_from_design(design_matrix(x_i, config.degree), config.ridge,
                                         config.cond_warn);
        }
        sol.condition_numbers[i] = reg.cond;
        sol.ridge_used = std::max(sol.ridge_used, reg.ridge_used);

        // Z and U regressions against the martingale increments. Targets are
        // centered by the fitted conditional mean of Y: the same conditional
        // expectation with strictly less variance, and exactly zero when Y is
        // measurable at t_i.
        for (int li = 0; li < l; ++li) {
            const Vec centered = sol.y[i + 1].col(li) - reg.fit_values(sol.y[i + 1].col(li));
            for (int r = 0; r < d; ++r) {
                const Vec target = centered.cwiseProduct(ens.dw[i].col(r)) / dt;
                sol.z[i].col(li * d + r) = reg.fit_values(target);
            }
            for (int e = 0; e < m; ++e) {
                const double ve = model.marks.intensity(static_cast<std::size_t>(e));
                const Vec compensated =
                    (ens.counts[i].col(e).cast<double>().array() - ve * dt).matrix();
                const Vec target = centered.cwiseProduct(compensated) / (ve * dt);
                sol.u[i].col(li * m + e) = reg.fit_values(target);
            }
        }

        // Driver at the right endpoint; at the terminal node the
        // just-regressed Z_i, U_i stand in for the undefined Z_T, U_T.
        const Mat& z_next = (i + 1 == ens.steps) ? sol.z[i] : sol.z[i + 1];
        const Mat& u_next = (i + 1 == ens.steps) ? sol.u[i] : sol.u[i + 1];
        Mat target_y(paths, l);
        if (model.has_driver() && config.theta < 1.0) {
            for (Eigen::Index p = 0; p < paths; ++p) {
                const Vec f_next = eval_driver(
                    model, t_next, ens.x[i + 1].row(p).transpose(),
                    sol.y[i + 1].row(p).transpose(), row_to_lmat(z_next, p, l, d),
                    row_to_lmat(u_next, p, l, m));
                target_y.row(p) =
                    sol.y[i + 1].row(p) + ((1.0 - config.theta) * dt) * f_next.transpose();
            }
        } else {
            target_y = sol.y[i + 1];
        }

        Mat e_y(paths, l);
        for (int li = 0; li < l; ++li) e_y.col(li) = reg.fit_values(target_y.col(li));

        if (model.has_driver() && config.theta > 0.0) {
            Mat y_cur = e_y;
            for (int sweep = 0; sweep < config.picard_sweeps; ++sweep) {
                for (Eigen::Index p = 0; p < paths; ++p) {
                    const Vec f_i = eval_driver(model, t, x_i.row(p).transpose(),
                                                y_cur.row(p).transpose(),
                                                row_to_lmat(sol.z[i], p, l, d),
                                                row_to_lmat(sol.u[i], p, l, m));
                    y_cur.row(p) = e_y.row(p) + (config.theta * dt) * f_i.transpose();
                }
            }
            sol.y[i] = y_cur;
        } else {
            sol.y[i] = e_y;
        }
        if (!sol.y[i].allFinite())
            throw EvaluatorError("solve_bsde: non-finite Y during backward sweep", t, -1,
                                 x_i.row(0).transpose());
    }

    // Pad the terminal node so Z, U stay finite everywhere.
    sol.z[ens.steps] = sol.z[ens.steps - 1];
    sol.u[ens.steps] = sol.u[ens.steps - 1];
    return sol;
}

FlowGradient flow_gradient_fd(const CoefficientModel& model,
                              std::span<const NoiseBundle> bundles, double x0, double h,
                              int workers) {
    const std::size_t paths = bundles.size();
    const std::size_t steps = bundles[0].grid.steps;
    std::vector<Vec> plus(paths), minus(paths);
    parallel_for(paths, workers, [&](std::size_t p) {
        const std::vector<Vec> mesh_p = {Vec::Constant(1, x0 + h)};
        const std::vector<Vec> mesh_m = {Vec::Constant(1, x0 - h)};
        plus[p] = base_states(simulate_flow(model, bundles[p], mesh_p), 0).col(0);
        minus[p] = base_states(simulate_flow(model, bundles[p], mesh_m), 0).col(0);
    });
    FlowGradient grad(steps + 1, Vec(static_cast<Eigen::Index>(paths)));
    for (std::size_t i = 0; i <= steps; ++i)
        for (std::size_t p = 0; p < paths; ++p)
            grad[i][static_cast<Eigen::Index>(p)] =
                (plus[p][static_cast<Eigen::Index>(i)] - minus[p][static_cast<Eigen::Index>(i)]) /
                (2.0 * h);
    return grad;
}

BsdeSolution solve_variational_bsde(const CoefficientModel& model,
                                    std::span<const FlowPath> flows,
                                    const FlowGradient& flow_gradient, const BsdeSolution& base,
                                    std::span<const NoiseBundle> bundles,
                                    const RegressionConfig& config) {
    if (model.dim_state != 1 || model.dim_value != 1)
        throw std::invalid_argument("solve_variational_bsde: implemented for n = l = 1");
    const Ensemble ens = collect_ensemble(model, flows, bundles, 0);
    const int d = model.dim_brownian;
    const int m = static_cast<int>(model.marks.size());
    const auto paths = static_cast<Eigen::Index>(ens.paths);
    const double dt = ens.grid.dt();
    if (flow_gradient.size() != ens.steps + 1 || base.paths != ens.paths)
        throw std::invalid_argument("solve_variational_bsde: input ensembles misaligned");

    const Mat fz = (model.driver_dz.size() > 0) ? model.driver_dz : Mat::Zero(1, d);
    const Vec fu = (model.driver_du.size() > 0) ? model.driver_du : Vec::Zero(m);
    const double fd_step = 1e-6;
    auto f_x = [&](double t, double xv, double yv) {
        if (model.driver_dx)
            return model.driver_dx(t, Vec::Constant(1, xv), Vec::Constant(1, yv))(0, 0);
        if (!model.has_driver()) return 0.0;
        const Vec y1 = Vec::Constant(1, yv);
        const Mat z0 = Mat::Zero(1, d), u0 = Mat::Zero(1, m);
        return (model.driver(t, Vec::Constant(1, xv + fd_step), y1, z0, u0)[0] -
                model.driver(t, Vec::Constant(1, xv - fd_step), y1, z0, u0)[0]) /
               (2.0 * fd_step);
    };
    auto f_y = [&](double t, double xv, double yv) {
        if (model.driver_dy)
            return model.driver_dy(t, Vec::Constant(1, xv), Vec::Constant(1, yv))(0, 0);
        if (!model.has_driver()) return 0.0;
        const Vec x1 = Vec::Constant(1, xv);
        const Mat z0 = Mat::Zero(1, d), u0 = Mat::Zero(1, m);
        return (model.driver(t, x1, Vec::Constant(1, yv + fd_step), z0, u0)[0] -
                model.driver(t, x1, Vec::Constant(1, yv - fd_step), z0, u0)[0]) /
               (2.0 * fd_step);
    };
    auto d_terminal = [&](double xv) {
        if (model.terminal_dx) return model.terminal_dx(Vec::Constant(1, xv))(0, 0);
        return (model.terminal(Vec::Constant(1, xv + fd_step))[0] -
                model.terminal(Vec::Constant(1, xv - fd_step))[0]) /
               (2.0 * fd_step);
    };

    BsdeSolution sol;
    sol.grid = ens.grid;
    sol.l = 1;
    sol.d = d;
    sol.m = m;
    sol.n = 1;
    sol.paths = ens.paths;
    sol.x = ens.x;
    sol.y.assign(ens.steps + 1, Mat::Zero(paths, 1));
    sol.z.assign(ens.steps + 1, Mat::Zero(paths, d));
    sol.u.assign(ens.steps + 1, Mat::Zero(paths, m));
    sol.condition_numbers.assign(ens.steps + 1, 1.0);
    sol.basis_degree = config.degree;
    sol.ridge_used = config.ridge;

    for (Eigen::Index p = 0; p < paths; ++p)
        sol.y[ens.steps](p, 0) = d_terminal(ens.x[ens.steps](p, 0)) * flow_gradient[ens.steps][p];

    // Features: monomials of X augmented multiplicatively by dX (the pair
    // (X, dX) is the Markov state of the variational system).
    auto make_aug_regression = [&](std::size_t i) {
        const Mat phi_base = design_matrix(ens.x[i], config.degree);
        const Eigen::Index pb = phi_base.cols();
        const Vec& dx = flow_gradient[i];
        const double spread = std::sqrt((dx.array() - dx.mean()).square().sum() /
                                        std::max<double>(1.0, static_cast<double>(paths) - 1.0));
        const bool augment = spread > 1e-12 * (1.0 + std::fabs(dx.mean()));
        Mat phi(paths, augment ? 2 * pb : pb);
        phi.leftCols(pb) = phi_base;
        if (augment)
            for (Eigen::Index c = 0; c < pb; ++c)
                phi.col(pb + c) = phi_base.col(c).cwiseProduct(dx);
        return regression_from_design(std::move(phi), config.ridge, config.cond_warn);
    };

    auto grad_driver = [&](double t, std::size_t node, Eigen::Index p, double dy_v,
                           const Mat& dz_store, const Mat& du_store) {
        const double xv = ens.x[node](p, 0);
        const double yv = base.y[node](p, 0);
        double out = f_x(t, xv, yv) * flow_gradient[node][p] + f_y(t, xv, yv) * dy_v;
        for (int r = 0; r < d; ++r) out += fz(0, r) * dz_store(p, r);
        for (int e = 0; e < m; ++e) out += fu[e] * du_store(p, e);
        return out;
    };

    for (std::size_t i = ens.steps; i-- > 0;) {
        const double t = ens.grid.node(i);
        const double t_next = ens.grid.node(i + 1);
        Regression reg = make_aug_regression(i);
        sol.condition_numbers[i] = reg.cond;
        sol.ridge_used = std::max(sol.ridge_used, reg.ridge_used);

        const Vec centered = sol.y[i + 1].col(0) - reg.fit_values(sol.y[i + 1].col(0));
        for (int r = 0; r < d; ++r)
            sol.z[i].col(r) = reg.fit_values(centered.cwiseProduct(ens.dw[i].col(r)) / dt);
        for (int e = 0; e < m; ++e) {
            const double ve = model.marks.intensity(static_cast<std::size_t>(e));
            const Vec compensated = (ens.counts[i].col(e).cast<double>().array() - ve * dt).matrix();
            sol.u[i].col(e) = reg.fit_values(centered.cwiseProduct(compensated) / (ve * dt));
        }

        const Mat& z_next = (i + 1 == ens.steps) ? sol.z[i] : sol.z[i + 1];
        const Mat& u_next = (i + 1 == ens.steps) ? sol.u[i] : sol.u[i + 1];
        Vec target(paths);
        for (Eigen::Index p = 0; p < paths; ++p) {
            const double f_next =
                (model.has_driver() && config.theta < 1.0)
                    ? grad_driver(t_next, i + 1, p, sol.y[i + 1](p, 0), z_next, u_next)
                    : 0.0;
            target[p] = sol.y[i + 1](p, 0) + (1.0 - config.theta) * dt * f_next;
        }
        const Vec e_y = reg.fit_values(target);

        Vec y_cur = e_y;
        if (model.has_driver() && config.theta > 0.0) {
            for (int sweep = 0; sweep < config.picard_sweeps; ++sweep)
                for (Eigen::Index p = 0; p < paths; ++p)
                    y_cur[p] = e_y[p] + config.theta * dt *
                                            grad_driver(t, i, p, y_cur[p], sol.z[i], sol.u[i]);
        }
        sol.y[i].col(0) = y_cur;
        if (!sol.y[i].allFinite())
            throw EvaluatorError("solve_variational_bsde: non-finite dY", t, -1,
                                 ens.x[i].row(0).transpose());
    }
    sol.z[ens.steps] = sol.z[ens.steps - 1];
    sol.u[ens.steps] = sol.u[ens.steps - 1];
    return sol;
}

EstimateReport apriori_report(const BsdeSolution& sol, const CoefficientModel& model,
                              double p_exponent) {
    const double p = p_exponent;
    if (p < 2.0) throw std::invalid_argument("apriori_report: exponent must be >= 2");
    const auto paths = static_cast<Eigen::Index>(sol.paths);
    const double dt = sol.grid.dt();
    const int l = sol.l, d = sol.d, m = sol.m;

    double acc_y = 0.0, acc_z = 0.0, acc_u = 0.0, acc_f = 0.0, acc_xi = 0.0;
    for (Eigen::Index pth = 0; pth < paths; ++pth) {
        double sup_y2 = 0.0, int_z2 = 0.0, int_u2 = 0.0, int_f2 = 0.0;
        for (std::size_t i = 0; i < sol.y.size(); ++i) {
            sup_y2 = std::max(sup_y2, sol.y[i].row(pth).squaredNorm());
            if (i + 1 == sol.y.size()) break;
            int_z2 += sol.z[i].row(pth).squaredNorm() * dt;
            double u2 = 0.0;
            for (int li = 0; li < l; ++li)
                for (int e = 0; e < m; ++e)
                    u2 += model.marks.intensity(static_cast<std::size_t>(e)) *
                          sol.u[i](pth, li * m + e) * sol.u[i](pth, li * m + e);
            int_u2 += u2 * dt;
            if (model.has_driver()) {
                const Vec f0 = model.driver(sol.grid.node(i), sol.x[i].row(pth).transpose(),
                                            Vec::Zero(l), Mat::Zero(l, d), Mat::Zero(l, m));
                int_f2 += f0.squaredNorm() * dt;
            }
        }
        acc_y += std::pow(sup_y2, p / 2.0);
        acc_z += std::pow(int_z2, p / 2.0);
        acc_u += std::pow(int_u2, p / 2.0);
        acc_f += std::pow(int_f2, p / 2.0);
        acc_xi += std::pow(sol.y.back().row(pth).squaredNorm(), p / 2.0);
    }
    const double inv_paths = 1.0 / static_cast<double>(paths);

    EstimateReport report;
    report.lhs_y = std::pow(acc_y * inv_paths, 1.0 / p);
    report.lhs_z = std::pow(acc_z * inv_paths, 1.0 / p);
    report.lhs_u = std::pow(acc_u * inv_paths, 1.0 / p);
    report.rhs_driver = std::pow(acc_f * inv_paths, 1.0 / p);
    report.rhs_terminal = std::pow(acc_xi * inv_paths, 1.0 / p);
    if (report.rhs() < 1e-14) {
        report.zero_over_zero = report.lhs() < 1e-14;
        report.ratio = 0.0;
    } else {
        report.ratio = report.lhs() / report.rhs();
    }
    return report;
}

}  // namespace jumpflow
