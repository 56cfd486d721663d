#include <doctest.h>

#include <cmath>

#include "jumpflow/model.hpp"
#include "jumpflow/rng.hpp"

using namespace jumpflow;

namespace {

SampleBox box1d(double lo, double hi) {
    SampleBox box;
    box.lo = Vec::Constant(1, lo);
    box.hi = Vec::Constant(1, hi);
    return box;
}

CoefficientModel scalar_jump_model(std::function<double(double, double)> g,
                                   MarkSpace marks = MarkSpace::uniform(1, 1.0)) {
    CoefficientModel m;
    m.dim_state = 1;
    m.dim_brownian = 1;
    m.dim_value = 1;
    m.marks = std::move(marks);
    m.drift = [](double, const Vec& x) { return Vec::Zero(x.size()).eval(); };
    m.diffusion = [](double, const Vec& x) { return Mat::Zero(x.size(), 1).eval(); };
    m.jump_coeff = [g](double t, int, const Vec& x) {
        Vec out(1);
        out[0] = g(t, x[0]);
        return out;
    };
    m.terminal = [](const Vec& x) { return x; };
    return m;
}

}  // namespace

TEST_CASE("mark space invariants") {
    CHECK_THROWS_AS(MarkSpace({"a", "a"}, {1.0, 1.0}), std::invalid_argument);
    CHECK_THROWS_AS(MarkSpace({"a", "b"}, {1.0, 0.0}), std::invalid_argument);
    CHECK_THROWS_AS(MarkSpace({"a"}, {-2.0}), std::invalid_argument);
    const auto marks = MarkSpace({"up", "down"}, {0.5, 1.5});
    CHECK(marks.total_intensity() == doctest::Approx(2.0));
}

TEST_CASE("validate_model: identity jump map passes (C3), (C4) with det 1") {
    auto model = scalar_jump_model([](double, double) { return 0.0; });
    model.phi_inverse = [](double, int, const Vec& y) { return y; };
    const auto report = validate_model(model, box1d(-2.0, 2.0), 64);
    REQUIRE(report.checks.size() == 4);
    CHECK(report.checks[2].pass);  // C3
    CHECK(report.checks[3].pass);  // C4
    CHECK(report.checks[3].statistic == doctest::Approx(1.0));
}

TEST_CASE("validate_model: g = -x collapses the Jacobian, (C4) flagged") {
    auto model = scalar_jump_model([](double, double x) { return -x; });
    const auto report = validate_model(model, box1d(-2.0, 2.0), 32);
    CHECK_FALSE(report.checks[3].pass);
    CHECK(report.checks[3].statistic == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("validate_model: g = 0.5 sin(x) matches the dense-grid determinant oracle") {
    auto model = scalar_jump_model([](double, double x) { return 0.5 * std::sin(x); });
    const auto report = validate_model(model, box1d(-4.0, 4.0), 512);

    // Independent oracle: minimize |1 + 0.5 cos(x)| on a dense grid.
    double oracle = 1e300;
    for (int i = 0; i <= 100000; ++i) {
        const double x = -4.0 + 8.0 * i / 100000.0;
        oracle = std::min(oracle, std::fabs(1.0 + 0.5 * std::cos(x)));
    }
    CHECK(oracle == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(report.checks[3].statistic >= 0.5 - 1e-6);
    CHECK(report.checks[3].pass);
}

TEST_CASE("validate_model reports non-finite evaluators with the sample point") {
    auto model = scalar_jump_model([](double, double) { return 0.0; });
    model.drift = [](double, const Vec& x) {
        Vec out(1);
        out[0] = (x[0] > 0.0) ? std::numeric_limits<double>::quiet_NaN() : 0.0;
        return out;
    };
    CHECK_THROWS_AS(validate_model(model, box1d(0.5, 1.0), 16), EvaluatorError);
}

TEST_CASE("catalog: unknown name lists the available problems") {
    try {
        catalog_problem("not-a-problem");
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& err) {
        const std::string what = err.what();
        CHECK(what.find("linear-jump-diffusion") != std::string::npos);
        CHECK(what.find("zero") != std::string::npos);
    }
}

TEST_CASE("catalog: zero problem is frozen dynamics") {
    const auto prob = catalog_problem("zero");
    CHECK(prob.flow_oracle(0.7, 1.3, 0.4, {2}) == 1.3);
    const Vec x = Vec::Constant(1, 1.3);
    CHECK(prob.model.drift(0.2, x).norm() == 0.0);
    CHECK(prob.model.terminal(x)[0] == 1.3);
}

TEST_CASE("catalog: additive-brownian inverse oracle is the shifted identity") {
    const auto prob = catalog_problem("additive-brownian");
    const double s = prob.params.at("s");
    CHECK(prob.inverse_oracle(0.5, 2.0, 0.7, {}) == doctest::Approx(2.0 - s * 0.7));
}

TEST_CASE("catalog: linear-jump-diffusion passes (C1)-(C4) for |c| < 1") {
    const auto prob = catalog_problem("linear-jump-diffusion");
    const auto report = validate_model(prob.model, box1d(0.25, 4.0), 256);
    for (const auto& check : report.checks) {
        INFO(check.name, " statistic=", check.statistic);
        CHECK(check.pass);
    }
    CHECK(report.c6_checked);
    CHECK(report.c6_pass);
}

TEST_CASE("catalog oracles: inverse composed with flow is the identity") {
    CounterRng rng(7, 0, CounterRng::kProbe);
    std::uint64_t ctr = 0;
    for (const auto& name : catalog_names()) {
        const auto prob = catalog_problem(name);
        if (!prob.flow_oracle || !prob.inverse_oracle) continue;
        for (int i = 0; i < 200; ++i) {
            const double t = prob.horizon * rng.uniform(ctr++);
            const double x = 0.5 + 2.0 * rng.uniform(ctr++);
            const double w = 2.0 * rng.uniform(ctr++) - 1.0;
            const std::vector<int> counts(prob.model.marks.size(),
                                          static_cast<int>(3 * rng.uniform(ctr++)));
            const double fwd = prob.flow_oracle(t, x, w, counts);
            CHECK(prob.inverse_oracle(t, fwd, w, counts) == doctest::Approx(x).epsilon(1e-8));
        }
    }
}

TEST_CASE("eval_phi_inverse: identity, shift, and linear maps") {
    const Vec y = Vec::Constant(1, 2.5);

    auto id = scalar_jump_model([](double, double) { return 0.0; });
    CHECK(eval_phi_inverse(id, 0.1, 0, y)[0] == doctest::Approx(2.5));

    auto shift = scalar_jump_model([](double, double) { return 0.7; });
    CHECK(eval_phi_inverse(shift, 0.1, 0, y)[0] == doctest::Approx(1.8));

    // g = c x solved analytically: x = y / (1 + c). The model deliberately
    // omits phi_inverse so the Newton path is exercised.
    const double c = 0.3;
    auto linear = scalar_jump_model([c](double, double x) { return c * x; });
    CHECK(eval_phi_inverse(linear, 0.1, 0, y)[0] == doctest::Approx(2.5 / 1.3).epsilon(1e-12));
}

TEST_CASE("eval_phi_inverse rejects a degenerate map") {
    auto degenerate = scalar_jump_model([](double, double x) { return -x; });
    // x + g(x) = 0 for every x: no preimage of y = 1.
    CHECK_THROWS_AS(eval_phi_inverse(degenerate, 0.0, 0, Vec::Constant(1, 1.0)),
                    DegenerateMapError);
}

TEST_CASE("property: phi(eval_phi_inverse(y)) = y over catalog problems") {
    CounterRng rng(11, 0, CounterRng::kProbe);
    std::uint64_t ctr = 0;
    for (const auto& name : catalog_names()) {
        const auto prob = catalog_problem(name);
        double worst = 0.0;
        for (int i = 0; i < 1000; ++i) {
            const double t = prob.horizon * rng.uniform(ctr++);
            const int mark = static_cast<int>(rng.uniform(ctr++) * prob.model.marks.size());
            const Vec y = Vec::Constant(1, 0.5 + 2.5 * rng.uniform(ctr++));
            const Vec x = eval_phi_inverse(prob.model, t, mark, y);
            worst = std::max(worst, (eval_phi(prob.model, t, mark, x) - y).norm());
        }
        INFO("problem ", name);
        CHECK(worst <= 1e-10);
    }
}

TEST_CASE("driver linearity: exact for declared-linear drivers, rejects a nonlinear one") {
    for (const auto& name : catalog_names()) {
        const auto prob = catalog_problem(name);
        if (!prob.model.declares_c6) continue;
        INFO("problem ", name);
        CHECK(check_driver_linearity(prob.model, box1d(0.5, 2.0), 64));
    }

    auto nonlinear = catalog_problem("linear-driver").model;
    nonlinear.driver = [](double, const Vec&, const Vec& y, const Mat& z, const Mat&) {
        Vec out(1);
        out[0] = -0.5 * y[0] + z(0, 0) * z(0, 0);
        return out;
    };
    CHECK_FALSE(check_driver_linearity(nonlinear, box1d(0.5, 2.0), 64));
}
