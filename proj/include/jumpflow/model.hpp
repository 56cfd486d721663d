#pragma once

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "jumpflow/marks.hpp"

namespace jumpflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Full problem definition for the forward dynamics
///   dX = b(t,X) dt + sigma(t,X) dW + \int_E g(t,e,X-) dN~(de dt)
/// together with the backward driver f and terminal condition.
///
/// All evaluators must be pure: same inputs give same outputs, safe to call
/// concurrently. Jump marks are addressed by index into `marks`.
struct CoefficientModel {
    int dim_state = 1;     // n
    int dim_brownian = 1;  // d
    int dim_value = 1;     // l
    // Dimension of an external factor state for random coefficients. The
    // catalog is fully deterministic (dim_factor = 0); solvers that require
    // deterministic coefficients refuse models with dim_factor > 0.
    int dim_factor = 0;
    // Coefficients do not depend on t: grid integrators may evaluate them
    // once per spatial mesh instead of once per step.
    bool time_homogeneous = false;
    MarkSpace marks;

    std::function<Vec(double, const Vec&)> drift;              // b(t,x) in R^n
    std::function<Mat(double, const Vec&)> diffusion;          // sigma(t,x) in R^{n x d}
    std::function<Vec(double, int, const Vec&)> jump_coeff;    // g(t,e,x) in R^n
    std::function<Vec(double, int, const Vec&)> phi_inverse;   // analytic inverse of x + g (optional)

    // Driver f(t, x, y, z, u). u has one column per mark; z is l x d.
    std::function<Vec(double, const Vec&, const Vec&, const Mat&, const Mat&)> driver;
    std::function<Vec(const Vec&)> terminal;  // R^l

    // Optional analytic spatial derivatives. Missing entries fall back to
    // central finite differences where a consumer needs them.
    std::function<Mat(double, const Vec&)> drift_dx;                   // n x n
    std::function<std::vector<Mat>(double, const Vec&)> diffusion_dx;  // d (sigma/d x_i), each n x d
    std::function<Mat(double, int, const Vec&)> jump_coeff_dx;         // n x n
    std::function<Mat(const Vec&)> terminal_dx;                        // l x n

    // Driver partials, used by the variational (gradient) BSDE. Under (C6)
    // f is linear in (z, u) with constant derivatives.
    std::function<Mat(double, const Vec&, const Vec&)> driver_dx;  // l x n, args (t, x, y)
    std::function<Mat(double, const Vec&, const Vec&)> driver_dy;  // l x l
    Mat driver_dz;  // l x d (constant under (C6)); empty when driver ignores z
    Vec driver_du;  // per-mark coefficients k(e); u-term is sum_e k(e) u(e) (l = 1)

    bool declares_c6 = false;  // driver declared linear in (z, u)

    bool has_driver() const { return static_cast<bool>(driver); }
};

/// Catalog entry: a coefficient model plus whatever closed forms it admits.
/// Oracles are scalar (the catalog is 1-dimensional by construction); each
/// receives the cumulative Brownian value W_t and per-mark jump counts.
struct TestProblem {
    std::string name;
    CoefficientModel model;
    double horizon = 1.0;
    std::map<std::string, double> params;

    std::function<double(double, double, double, const std::vector<int>&)> flow_oracle;
    std::function<double(double, double, double, const std::vector<int>&)> inverse_oracle;
    std::function<double(double, double)> bsde_y_oracle;           // Y_t = y(t, X_t)
    std::function<double(double, double)> bsde_z_oracle;           // Z_t = z(t, X_t)
    std::function<double(double, double, int)> bsde_u_oracle;      // U_t(e) = u(t, X_{t-}, e)
    std::function<double(double, double)> p_field_oracle;          // deterministic p(t, x)
};

struct ValidationThresholds {
    double linear_growth_max = 1e6;   // (C1)
    double derivative_max = 1e6;      // (C2)
    double inverse_tol = 1e-8;        // (C3)
    double jacobian_min_det = 1e-8;   // (C4)
    double fd_step = 1e-5;
};

struct ConditionCheck {
    std::string name;
    double statistic = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

struct ValidationReport {
    std::vector<ConditionCheck> checks;
    bool c6_checked = false;
    bool c6_pass = false;
    bool all_pass() const {
        for (const auto& c : checks)
            if (!c.pass) return false;
        return !c6_checked || c6_pass;
    }
};

struct SampleBox {
    Vec lo;
    Vec hi;
};

/// Raised when an evaluator returns a non-finite value; carries the offending
/// sample point.
class EvaluatorError : public std::runtime_error {
public:
    EvaluatorError(const std::string& what, double t, int mark, const Vec& x);
    double t;
    int mark;
    Vec x;
};

class DegenerateMapError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Samples the standing conditions (C1)-(C4) on the box and flags each
/// against the thresholds. Derivative bounds use central differences; these
/// are estimates, not proofs.
ValidationReport validate_model(const CoefficientModel& model, const SampleBox& box,
                                std::size_t n_samples,
                                const ValidationThresholds& thresholds = {},
                                double horizon = 1.0);

/// Checks the (C6) superposition property of the driver in (z, u) on random
/// samples. Exact for genuinely linear drivers.
bool check_driver_linearity(const CoefficientModel& model, const SampleBox& box,
                            std::size_t n_samples, double tol = 1e-10, double horizon = 1.0);

/// Solves x + g(t,e,x) = y. Uses the analytic inverse when the model supplies
/// one, otherwise a damped Newton iteration to residual 1e-12 (at most 100
/// iterations, then DegenerateMapError).
Vec eval_phi_inverse(const CoefficientModel& model, double t, int mark, const Vec& y);

/// Forward jump map phi_{t,e}(x) = x + g(t,e,x).
Vec eval_phi(const CoefficientModel& model, double t, int mark, const Vec& x);

std::vector<std::string> catalog_names();

/// Returns the named catalog problem with closed-form oracles attached.
/// Unknown names raise std::invalid_argument listing the available problems.
/// Recognized override keys (where applicable): a, s, c, r, intensity, T.
TestProblem catalog_problem(const std::string& name,
                            const std::map<std::string, double>& overrides = {});

}  // namespace jumpflow
