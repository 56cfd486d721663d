#include "jumpflow/galerkin.hpp"

#include <cmath>
#include <sstream>

#include "jumpflow/rng.hpp"

namespace jumpflow {

void EvolutionSystem::validate() const {
    const int n = basis_size;
    if (gram_h.rows() != n || gram_h.cols() != n || gram_v.rows() != n || gram_v.cols() != n)
        throw std::invalid_argument("EvolutionSystem: Gram matrices must be basis_size square");
    if (!gram_h.isApprox(gram_h.transpose(), 1e-12) || !gram_v.isApprox(gram_v.transpose(), 1e-12))
        throw std::invalid_argument("EvolutionSystem: Gram matrices must be symmetric");
    Eigen::LLT<Mat> llt_h(gram_h), llt_v(gram_v);
    if (llt_h.info() != Eigen::Success || llt_v.info() != Eigen::Success)
        throw std::invalid_argument("EvolutionSystem: Gram matrices must be positive definite");
    if (!a_mat) throw std::invalid_argument("EvolutionSystem: missing A matrix");
    if (static_cast<int>(b_mats.size()) != dim_brownian)
        throw std::invalid_argument("EvolutionSystem: need one B matrix per Brownian component");
    if (atil_mats.size() != marks.size())
        throw std::invalid_argument("EvolutionSystem: need one A~ matrix per mark");
    if (u0.size() != n) throw std::invalid_argument("EvolutionSystem: u0 dimension mismatch");
}

namespace {

void check_finite(const Vec& g, double t, double dt, double scale0) {
    if (g.allFinite() && g.norm() <= 1e12 * std::max(1.0, scale0)) return;
    std::ostringstream os;
    os << "solve_evolution: iterate blew up at t=" << t
       << " (explicit scheme); retry with dt <= " << dt / 4.0;
    throw StiffnessError(os.str(), dt / 4.0);
}

}  // namespace

GalerkinPath solve_evolution(const EvolutionSystem& system, const NoiseBundle& bundle) {
    system.validate();
    GalerkinPath path;
    path.grid = build_adapted_grid(bundle);
    const std::size_t nodes = path.grid.nodes();
    const double scale0 = system.u0.norm();

    path.g.assign(nodes, system.u0);
    path.g_left.assign(nodes, system.u0);
    path.h_norm2.assign(nodes, 0.0);
    path.h_norm2[0] = system.u0.dot(system.gram_h * system.u0);

    Vec g = system.u0;
    for (std::size_t k = 0; k + 1 < nodes; ++k) {
        const double t = path.grid.times[k];
        const double dt = path.grid.times[k + 1] - path.grid.times[k];
        const Vec dw = path.grid.dw.row(static_cast<Eigen::Index>(k)).transpose();

        Vec gnew = g + dt * (system.a_mat(t) * g);
        for (int r = 0; r < system.dim_brownian; ++r)
            gnew += (system.b_mats[static_cast<std::size_t>(r)](t) * g) * dw[r];
        check_finite(gnew, path.grid.times[k + 1], dt, scale0);

        path.g_left[k + 1] = gnew;
        const int jump = path.grid.jump_index[k + 1];
        if (jump >= 0) {
            const auto& ev = bundle.jumps[static_cast<std::size_t>(jump)];
            gnew += system.atil_mats[static_cast<std::size_t>(ev.mark)](ev.time) * gnew;
        }
        g = gnew;
        path.g[k + 1] = g;
        path.h_norm2[k + 1] = g.dot(system.gram_h * g);
    }
    return path;
}

EnergyReport energy_residual(const EvolutionSystem& system, const GalerkinPath& path,
                             const NoiseBundle& bundle) {
    system.validate();
    const auto& grid = path.grid;
    const Mat& gh = system.gram_h;

    EnergyReport report;
    double rhs = path.h_norm2[0];
    double sum_sq = 0.0;
    std::size_t count = 0;

    for (std::size_t k = 0; k + 1 < grid.nodes(); ++k) {
        const double t = grid.times[k];
        const double dt = grid.times[k + 1] - grid.times[k];
        const Vec dw = grid.dw.row(static_cast<Eigen::Index>(k)).transpose();
        const Vec& g = path.g[k];
        const Vec gh_g = gh * g;

        // A-quadratic and the explicit compensator cross term.
        rhs += 2.0 * (system.a_mat(t) * g).dot(gh_g) * dt;
        for (std::size_t e = 0; e < system.marks.size(); ++e) {
            const Vec atg = system.atil_mats[e](t) * g;
            rhs += 2.0 * system.marks.intensity(e) * atg.dot(gh_g) * dt;
            // Jump compensator quadratic plus the N~ compensator leg.
            const double quad = atg.dot(gh * atg);
            rhs += system.marks.intensity(e) * quad * dt;
            rhs -= system.marks.intensity(e) * (quad + 2.0 * g.dot(gh * atg)) * dt;
        }
        // B-martingale and B-quadratic-variation.
        for (int r = 0; r < system.dim_brownian; ++r) {
            const Vec bg = system.b_mats[static_cast<std::size_t>(r)](t) * g;
            rhs += 2.0 * bg.dot(gh_g) * dw[r];
            rhs += bg.dot(gh * bg) * dt;
        }
        // Jump martingale with its quadratic term (dN part of N~).
        const int jump = grid.jump_index[k + 1];
        if (jump >= 0) {
            const auto& ev = bundle.jumps[static_cast<std::size_t>(jump)];
            const Vec& gl = path.g_left[k + 1];
            const Vec atg = system.atil_mats[static_cast<std::size_t>(ev.mark)](ev.time) * gl;
            rhs += atg.dot(gh * atg) + 2.0 * gl.dot(gh * atg);
        }

        const double diff = std::fabs(path.h_norm2[k + 1] - rhs);
        report.max_residual = std::max(report.max_residual, diff);
        sum_sq += diff * diff;
        ++count;
    }
    report.rms_residual = (count > 0) ? std::sqrt(sum_sq / static_cast<double>(count)) : 0.0;
    return report;
}

ProbeReport coercivity_probe(const EvolutionSystem& system, double lambda, double alpha,
                             std::size_t n_probe, double at_time) {
    system.validate();
    const int n = system.basis_size;
    const Mat& gh = system.gram_h;
    const Mat a = system.a_mat(at_time);

    Mat slack_form = -(gh * a + a.transpose() * gh) + lambda * gh - alpha * system.gram_v;
    for (int r = 0; r < system.dim_brownian; ++r) {
        const Mat b = system.b_mats[static_cast<std::size_t>(r)](at_time);
        slack_form -= b.transpose() * gh * b;
    }
    for (std::size_t e = 0; e < system.marks.size(); ++e) {
        const Mat at = system.atil_mats[e](at_time);
        slack_form -= system.marks.intensity(e) * (at.transpose() * gh * at);
    }
    // Symmetrize: only the quadratic form matters.
    slack_form = 0.5 * (slack_form + slack_form.transpose()).eval();

    ProbeReport report;
    report.min_slack_random = std::numeric_limits<double>::infinity();
    CounterRng rng(0x70726f62u, 0, CounterRng::kProbe);
    std::uint64_t ctr = 0;
    for (std::size_t s = 0; s < n_probe; ++s) {
        Vec v(n);
        for (int i = 0; i < n; ++i) v[i] = rng.normal(ctr++);
        const double hnorm = std::sqrt(v.dot(gh * v));
        if (hnorm < 1e-14) continue;
        v /= hnorm;
        report.min_slack_random = std::min(report.min_slack_random, v.dot(slack_form * v));
    }

    Eigen::GeneralizedSelfAdjointEigenSolver<Mat> pencil(slack_form, gh);
    if (pencil.info() != Eigen::Success)
        throw std::runtime_error("coercivity_probe: pencil eigensolve failed");
    report.min_slack_eigen = pencil.eigenvalues().minCoeff();
    report.certified = report.min_slack() >= -1e-10;
    return report;
}

PicardReport solve_evolution_picard(const EvolutionSystem& system, const NoiseBundle& bundle,
                                    std::size_t sweeps) {
    system.validate();
    PicardReport report;
    report.sweeps = sweeps;
    const AdaptedGrid grid = build_adapted_grid(bundle);
    const std::size_t nodes = grid.nodes();
    const double scale0 = system.u0.norm();

    // Frozen jump input h, iterated to the self-consistent solution. The
    // first sweep runs with h = 0.
    std::vector<Vec> h_val(nodes, Vec::Zero(system.basis_size));
    std::vector<Vec> h_left(nodes, Vec::Zero(system.basis_size));
    std::vector<Vec> prev_g;
    double prev_delta = 0.0;

    for (std::size_t sweep = 0; sweep < sweeps; ++sweep) {
        GalerkinPath path;
        path.grid = grid;
        path.g.assign(nodes, system.u0);
        path.g_left.assign(nodes, system.u0);
        path.h_norm2.assign(nodes, system.u0.dot(system.gram_h * system.u0));

        Vec g = system.u0;
        for (std::size_t k = 0; k + 1 < nodes; ++k) {
            const double t = grid.times[k];
            const double dt = grid.times[k + 1] - grid.times[k];
            const Vec dw = grid.dw.row(static_cast<Eigen::Index>(k)).transpose();

            // Frozen form: drift A u + sum_e v(e) A~ (u - h); the explicit
            // v(de) term applies to u while the N~ compensator carries h.
            Vec gnew = g + dt * (system.a_mat(t) * g);
            for (std::size_t e = 0; e < system.marks.size(); ++e) {
                const Mat at = system.atil_mats[e](t);
                gnew += dt * system.marks.intensity(e) * (at * (g - h_val[k]));
            }
            for (int r = 0; r < system.dim_brownian; ++r)
                gnew += (system.b_mats[static_cast<std::size_t>(r)](t) * g) * dw[r];
            check_finite(gnew, grid.times[k + 1], dt, scale0);

            path.g_left[k + 1] = gnew;
            const int jump = grid.jump_index[k + 1];
            if (jump >= 0) {
                const auto& ev = bundle.jumps[static_cast<std::size_t>(jump)];
                gnew += system.atil_mats[static_cast<std::size_t>(ev.mark)](ev.time) *
                        h_left[k + 1];
            }
            g = gnew;
            path.g[k + 1] = g;
            path.h_norm2[k + 1] = g.dot(system.gram_h * g);
        }

        if (!prev_g.empty()) {
            double delta = 0.0;
            for (std::size_t k = 0; k < nodes; ++k) {
                const Vec diff = path.g[k] - prev_g[k];
                delta = std::max(delta, std::sqrt(diff.dot(system.gram_h * diff)));
            }
            if (sweep >= 2 && prev_delta > 0.0) report.contraction.push_back(delta / prev_delta);
            prev_delta = delta;
        }
        prev_g = path.g;
        h_val = path.g;
        h_left = path.g_left;
        report.path = std::move(path);
    }
    return report;
}

std::vector<std::string> galerkin_system_names() {
    return {"zero", "scalar-jump", "heat", "heat-drift", "heat-degenerate"};
}

namespace {

double get_param(const std::map<std::string, double>& params, const std::string& key,
                 double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

std::function<Mat(double)> const_mat(Mat m) {
    return [m = std::move(m)](double) { return m; };
}

// Real Fourier basis on the unit torus: nu_0 = 1, then sqrt(2)cos(2 pi k x),
// sqrt(2)sin(2 pi k x) pairs; orthonormal in H = L^2(0,1).
struct FourierLayout {
    int size;
    std::vector<double> freq;  // angular frequency per basis function (0 for the constant)
};

FourierLayout fourier_layout(int basis_size) {
    FourierLayout layout;
    layout.size = basis_size;
    layout.freq.assign(static_cast<std::size_t>(basis_size), 0.0);
    for (int i = 1; i < basis_size; ++i)
        layout.freq[static_cast<std::size_t>(i)] = 2.0 * M_PI * static_cast<double>((i + 1) / 2);
    return layout;
}

}  // namespace

EvolutionSystem galerkin_system(const std::string& name, int basis_size,
                                const std::map<std::string, double>& overrides) {
    EvolutionSystem sys;
    sys.dim_brownian = 1;

    if (name == "zero") {
        sys.basis_size = basis_size;
        sys.marks = MarkSpace::uniform(1, 1.0);
        sys.gram_h = Mat::Identity(basis_size, basis_size);
        sys.gram_v = Mat::Identity(basis_size, basis_size);
        sys.a_mat = const_mat(Mat::Zero(basis_size, basis_size));
        sys.b_mats = {const_mat(Mat::Zero(basis_size, basis_size))};
        sys.atil_mats = {const_mat(Mat::Zero(basis_size, basis_size))};
        sys.u0 = Vec::Ones(basis_size);
        return sys;
    }

    if (name == "scalar-jump") {
        // dg = a g dt + beta g dW + gamma g dN~ written against the
        // compensated measure; in evolution form the drift matrix is
        // a - gamma v(E).
        const double a = get_param(overrides, "a", 1.0);
        const double beta = get_param(overrides, "beta", 0.05);
        const double gamma = get_param(overrides, "gamma", 0.5);
        const double vE = get_param(overrides, "intensity", 1.0);
        sys.basis_size = 1;
        sys.marks = MarkSpace::uniform(1, vE);
        sys.gram_h = Mat::Identity(1, 1);
        sys.gram_v = Mat::Identity(1, 1);
        sys.a_mat = const_mat(Mat::Constant(1, 1, a - gamma * vE));
        sys.b_mats = {const_mat(Mat::Constant(1, 1, beta))};
        sys.atil_mats = {const_mat(Mat::Constant(1, 1, gamma))};
        sys.u0 = Vec::Ones(1);
        return sys;
    }

    if (name == "heat") {
        // Diagonal Laplacian modes k = 1..n: A = diag(-(2 pi k)^2).
        sys.basis_size = basis_size;
        sys.marks = MarkSpace::uniform(1, 1.0);
        sys.gram_h = Mat::Identity(basis_size, basis_size);
        Mat a = Mat::Zero(basis_size, basis_size);
        Mat gv = Mat::Identity(basis_size, basis_size);
        for (int i = 0; i < basis_size; ++i) {
            const double w = 2.0 * M_PI * static_cast<double>(i + 1);
            a(i, i) = -w * w;
            gv(i, i) = 1.0 + w * w;
        }
        sys.gram_v = gv;
        sys.a_mat = const_mat(std::move(a));
        sys.b_mats = {const_mat(Mat::Zero(basis_size, basis_size))};
        sys.atil_mats = {const_mat(Mat::Zero(basis_size, basis_size))};
        sys.u0 = Vec::Ones(basis_size);
        return sys;
    }

    if (name == "heat-drift" || name == "heat-degenerate") {
        // A = a d_xx, B = b~ d_x on the real Fourier basis. The
        // non-degenerate variant has 2a - b~^2 = 2 delta > 0; the degenerate
        // one sits exactly at 2a = b~^2.
        const double a = get_param(overrides, "a", 0.5);
        const double btil = (name == "heat-drift") ? get_param(overrides, "btil", 0.8)
                                                   : std::sqrt(2.0 * a);
        const auto layout = fourier_layout(basis_size);
        sys.basis_size = basis_size;
        sys.marks = MarkSpace::uniform(1, 1.0);
        sys.gram_h = Mat::Identity(basis_size, basis_size);
        Mat amat = Mat::Zero(basis_size, basis_size);
        Mat bmat = Mat::Zero(basis_size, basis_size);
        Mat gv = Mat::Identity(basis_size, basis_size);
        for (int i = 0; i < basis_size; ++i) {
            const double w = layout.freq[static_cast<std::size_t>(i)];
            amat(i, i) = -a * w * w;
            gv(i, i) = 1.0 + w * w;
        }
        // d_x swaps cos/sin pairs: indices (1,2), (3,4), ...
        for (int i = 1; i + 1 < basis_size; i += 2) {
            const double w = layout.freq[static_cast<std::size_t>(i)];
            bmat(i + 1, i) = -btil * w;  // B nu_cos = -b~ w nu_sin
            bmat(i, i + 1) = btil * w;   // B nu_sin =  b~ w nu_cos
        }
        sys.gram_v = gv;
        sys.a_mat = const_mat(std::move(amat));
        sys.b_mats = {const_mat(std::move(bmat))};
        sys.atil_mats = {const_mat(Mat::Zero(basis_size, basis_size))};
        sys.u0 = Vec::Ones(basis_size);
        return sys;
    }

    std::ostringstream os;
    os << "unknown galerkin system '" << name << "'; available:";
    for (const auto& n : galerkin_system_names()) os << " " << n;
    throw std::invalid_argument(os.str());
}

}  // namespace jumpflow
