#include <doctest.h>

#include <cmath>

#include "jumpflow/inverse.hpp"
#include "jumpflow/stats.hpp"

using namespace jumpflow;

namespace {

std::vector<Vec> uniform_mesh(double lo, double hi, std::size_t n) {
    std::vector<Vec> mesh;
    for (std::size_t i = 0; i < n; ++i)
        mesh.push_back(Vec::Constant(
            1, lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1)));
    return mesh;
}

std::vector<double> uniform_queries(double lo, double hi, std::size_t n) {
    std::vector<double> qs(n);
    for (std::size_t i = 0; i < n; ++i)
        qs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return qs;
}

}  // namespace

TEST_CASE("grid inversion: identity flow inverts to the identity") {
    const auto prob = catalog_problem("zero");
    const auto bundle = generate_noise(TimeGrid(1.0, 32), prob.model.marks, 5, 0);
    const auto flow = simulate_flow(prob.model, bundle, uniform_mesh(-1.0, 1.0, 17));
    const auto inv = invert_flow_grid(flow, uniform_queries(-0.9, 0.9, 9));
    for (std::size_t k = 0; k < inv.grid.nodes(); ++k)
        for (std::size_t q = 0; q < inv.query.size(); ++q)
            CHECK(inv.u(k, q) == doctest::Approx(inv.query[q]).epsilon(1e-14));
}

TEST_CASE("grid inversion: additive-brownian recovers y - s W_t exactly") {
    const auto prob = catalog_problem("additive-brownian");
    const double s = prob.params.at("s");
    const auto bundle = generate_noise(TimeGrid(1.0, 64), prob.model.marks, 15, 2);
    const auto flow = simulate_flow(prob.model, bundle, uniform_mesh(-2.0, 2.0, 33));
    const auto inv = invert_flow_grid(flow, uniform_queries(-0.5, 0.5, 11));

    double w = 0.0;
    for (std::size_t k = 1; k < inv.grid.nodes(); ++k) {
        w += inv.grid.dw(static_cast<Eigen::Index>(k - 1), 0);
        for (std::size_t q = 0; q < inv.query.size(); ++q) {
            if (!inv.ok(k, q)) continue;
            CHECK(inv.u(k, q) == doctest::Approx(inv.query[q] - s * w).epsilon(1e-11));
        }
    }
}

TEST_CASE("grid inversion: linear-jump-diffusion matches y / M_t") {
    const auto prob = catalog_problem("linear-jump-diffusion");
    const auto bundle = generate_noise(TimeGrid(1.0, 64), prob.model.marks, 23, 7);
    const auto flow = simulate_flow(prob.model, bundle, uniform_mesh(0.25, 4.0, 129));
    const auto inv = invert_flow_grid(flow, uniform_queries(0.8, 1.25, 7));

    // The sampled flow is exactly linear in x (Euler preserves linearity for
    // linear coefficients), so affine interpolation of the inverse is exact:
    // u(t, y) = y / M_t with M_t = X_t(x_m) / x_m.
    for (std::size_t k = 0; k < inv.grid.nodes(); ++k) {
        const double mult = flow.x(k, 64) / flow.mesh[64][0];
        for (std::size_t q = 0; q < inv.query.size(); ++q) {
            if (!inv.ok(k, q)) continue;
            CHECK(inv.u(k, q) == doctest::Approx(inv.query[q] / mult).epsilon(1e-10));
        }
    }
}

TEST_CASE("grid inversion rejects non-monotone samples") {
    CoefficientModel folding;
    folding.marks = MarkSpace::uniform(1, 1.0);
    folding.drift = [](double, const Vec& x) { return (-40.0 * x).eval(); };
    folding.diffusion = [](double, const Vec& x) { return Mat::Zero(x.size(), 1).eval(); };
    folding.jump_coeff = [](double, int, const Vec& x) { return Vec::Zero(x.size()).eval(); };
    folding.terminal = [](const Vec& x) { return x; };
    const auto bundle = generate_noise(TimeGrid(1.0, 8), folding.marks, 2, 0);
    // dt * 40 > 2 flips the Euler map's orientation.
    const auto flow = simulate_flow(folding, bundle, uniform_mesh(-1.0, 1.0, 9));
    CHECK_THROWS_AS(invert_flow_grid(flow, uniform_queries(-0.5, 0.5, 5)), NonInvertibleError);
}

TEST_CASE("sipde: zero problem keeps u(t,x) = x") {
    const auto prob = catalog_problem("zero");
    const auto bundle = generate_noise(TimeGrid(1.0, 64), prob.model.marks, 9, 1);
    const auto inv = integrate_inverse_sipde(prob.model, bundle, -1.0, 1.0, 65);
    for (std::size_t k = 0; k < inv.grid.nodes(); ++k)
        for (std::size_t q = 0; q < inv.query.size(); ++q)
            CHECK(inv.u(k, q) == doctest::Approx(inv.query[q]).epsilon(1e-13));
}

TEST_CASE("sipde: additive-brownian solves du = 1/2 s^2 u_xx dt - s u_x dW") {
    const auto prob = catalog_problem("additive-brownian");
    const double s = prob.params.at("s");
    const auto bundle = generate_noise(TimeGrid(1.0, 1024), prob.model.marks, 33, 4);
    const auto inv = integrate_inverse_sipde(prob.model, bundle, -1.0, 1.0, 65);

    // Closed form u(t,x) = x - s W_t; affine in x, so the stencils are exact
    // and the error is pure roundoff, well under the 1e-3 gate.
    double w = 0.0;
    double worst = 0.0;
    for (std::size_t k = 1; k < inv.grid.nodes(); ++k) {
        w += inv.grid.dw(static_cast<Eigen::Index>(k - 1), 0);
        for (std::size_t q = 0; q < inv.query.size(); ++q) {
            if (!inv.ok(k, q)) continue;
            worst = std::max(worst, std::fabs(inv.u(k, q) - (inv.query[q] - s * w)));
        }
    }
    CHECK(worst <= 1e-3);
    CHECK(worst <= 1e-10);
}

TEST_CASE("sipde: pure-jump-shift follows the method of characteristics") {
    const auto prob = catalog_problem("pure-jump-shift");
    const double c = prob.params.at("c");
    const double vE = prob.model.marks.total_intensity();
    const auto bundle = generate_noise(TimeGrid(1.0, 512), prob.model.marks, 44, 6);
    REQUIRE(!bundle.jumps.empty());
    const auto inv = integrate_inverse_sipde(prob.model, bundle, -2.0, 2.0, 129);

    // u(t,x) = x - c (N_t - v(E) t), exact up to mesh interpolation.
    double worst = 0.0;
    for (std::size_t k = 0; k < inv.grid.nodes(); ++k) {
        const double t = inv.grid.times[k];
        const double nt = static_cast<double>(bundle.counts_up_to(t)[0]);
        for (std::size_t q = 0; q < inv.query.size(); ++q) {
            if (!inv.ok(k, q)) continue;
            worst = std::max(worst, std::fabs(inv.u(k, q) - (inv.query[q] - c * (nt - vE * t))));
        }
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("sipde refuses unstable steps and suggests a dt") {
    const auto prob = catalog_problem("additive-brownian", {{"s", 2.0}});
    const auto bundle = generate_noise(TimeGrid(1.0, 32), prob.model.marks, 3, 0);
    try {
        integrate_inverse_sipde(prob.model, bundle, -1.0, 1.0, 129);
        FAIL("expected StabilityError");
    } catch (const StabilityError& err) {
        CHECK(err.suggested_dt > 0.0);
        CHECK(err.suggested_dt < 1.0 / 32.0);
    }
}

TEST_CASE("backward sde: zero problem returns the queries unchanged") {
    const auto prob = catalog_problem("zero");
    const auto bundle = generate_noise(TimeGrid(1.0, 32), prob.model.marks, 5, 3);
    const auto qs = uniform_queries(-1.0, 1.0, 7);
    const Vec out = integrate_inverse_backward_sde(prob.model, bundle, qs, 1.0);
    for (std::size_t q = 0; q < qs.size(); ++q) CHECK(out[static_cast<Eigen::Index>(q)] == qs[q]);
}

TEST_CASE("backward sde: additive-brownian gives y - s W_t with zero correction") {
    const auto prob = catalog_problem("additive-brownian");
    const double s = prob.params.at("s");
    const auto bundle = generate_noise(TimeGrid(1.0, 128), prob.model.marks, 21, 9);
    const auto qs = uniform_queries(-0.5, 0.5, 5);
    const Vec out = integrate_inverse_backward_sde(prob.model, bundle, qs, 1.0);
    const double w_T = bundle.increments.col(0).sum();
    for (std::size_t q = 0; q < qs.size(); ++q)
        CHECK(out[static_cast<Eigen::Index>(q)] == doctest::Approx(qs[q] - s * w_T).epsilon(1e-12));
}

TEST_CASE("backward sde: deterministic ODE b(x) = x comes back as y e^{-1} + O(dt)") {
    CoefficientModel m;
    m.marks = MarkSpace::uniform(1, 1.0);
    m.drift = [](double, const Vec& x) { return x; };
    m.diffusion = [](double, const Vec& x) { return Mat::Zero(x.size(), 1).eval(); };
    m.jump_coeff = [](double, int, const Vec& x) { return Vec::Zero(x.size()).eval(); };
    m.terminal = [](const Vec& x) { return x; };

    std::vector<double> dts, errs;
    for (std::size_t n : {128, 256, 512}) {
        const auto bundle = generate_noise(TimeGrid(1.0, n), m.marks, 1, 0);
        const std::vector<double> qs = {2.0};
        const Vec out = integrate_inverse_backward_sde(m, bundle, qs, 1.0);
        dts.push_back(1.0 / static_cast<double>(n));
        errs.push_back(std::fabs(out[0] - 2.0 * std::exp(-1.0)));
    }
    CHECK(errs.back() <= 3.0 * 2.0 * std::exp(-1.0) * dts.back());
    const auto fit = fit_order(dts, errs);
    CHECK(fit.slope > 0.8);
    CHECK(fit.slope < 1.2);
}

TEST_CASE("backward sde: pure-jump-shift is exact (jump compensator folds correctly)") {
    const auto prob = catalog_problem("pure-jump-shift");
    const double c = prob.params.at("c");
    const double vE = prob.model.marks.total_intensity();
    const auto bundle = generate_noise(TimeGrid(1.0, 64), prob.model.marks, 61, 2);
    REQUIRE(!bundle.jumps.empty());
    const auto qs = uniform_queries(-1.0, 1.0, 5);
    const double t_end = 1.0;
    const Vec out = integrate_inverse_backward_sde(prob.model, bundle, qs, t_end);
    const double nt = static_cast<double>(bundle.counts_up_to(t_end)[0]);
    for (std::size_t q = 0; q < qs.size(); ++q)
        CHECK(out[static_cast<Eigen::Index>(q)] ==
              doctest::Approx(qs[q] - c * (nt - vE * t_end)).epsilon(1e-11));
}

TEST_CASE("backward sde refuses random-coefficient models") {
    auto prob = catalog_problem("additive-brownian");
    prob.model.dim_factor = 2;
    const auto bundle = generate_noise(TimeGrid(1.0, 16), prob.model.marks, 1, 0);
    const std::vector<double> qs = {0.0};
    CHECK_THROWS_AS(integrate_inverse_backward_sde(prob.model, bundle, qs, 1.0),
                    std::invalid_argument);
}

TEST_CASE("inversion identity: u(t, X_t(x)) = x for grid and sipde constructions") {
    for (const char* name : {"additive-brownian", "pure-jump-shift"}) {
        const auto prob = catalog_problem(name);
        const auto bundle = generate_noise(TimeGrid(1.0, 1024), prob.model.marks, 77, 0);
        const auto flow = simulate_flow(prob.model, bundle, uniform_mesh(-0.4, 0.4, 17));
        const auto sipde = integrate_inverse_sipde(prob.model, bundle, -2.0, 2.0, 129);
        const auto stats = inversion_identity(flow, sipde);
        INFO("problem ", name, " rms ", stats.rms);
        CHECK(stats.samples > 1000);
        CHECK(stats.rms <= 1e-10);

        const auto grid_inv = invert_flow_grid(flow, sipde.query);
        const auto stats2 = inversion_identity(flow, grid_inv);
        CHECK(stats2.rms <= 1e-10);
    }
}

TEST_CASE("inversion identity converges at order >= 0.45 on the multiplicative problem") {
    const auto prob = catalog_problem("linear-jump-diffusion");
    const std::size_t finest = 2048;
    const std::size_t n_paths = 48;

    std::vector<double> dts, errs;
    for (std::size_t n : {256, 512, 1024, 2048}) {
        double sum_sq = 0.0;
        std::size_t count = 0;
        for (std::uint64_t p = 0; p < n_paths; ++p) {
            const auto fine = generate_noise(TimeGrid(1.0, finest), prob.model.marks, 555, p);
            const auto bundle = coarsen_noise(fine, finest / n);
            const auto flow = simulate_flow(prob.model, bundle, uniform_mesh(0.7, 1.4, 15));
            const auto inv = integrate_inverse_sipde(prob.model, bundle, 0.4, 2.2, 49);
            const auto stats = inversion_identity(flow, inv);
            sum_sq += stats.rms * stats.rms * static_cast<double>(stats.samples);
            count += stats.samples;
        }
        dts.push_back(1.0 / static_cast<double>(n));
        errs.push_back(std::sqrt(sum_sq / static_cast<double>(count)));
    }
    const auto fit = fit_order(dts, errs);
    INFO("rms ", errs[0], " ", errs[1], " ", errs[2], " ", errs[3], " slope ", fit.slope);
    CHECK(fit.attains(0.45));
}

TEST_CASE("cross-construction agreement on the exactly-solvable problems") {
    for (const char* name : {"additive-brownian", "pure-jump-shift"}) {
        const auto prob = catalog_problem(name);
        const auto bundle = generate_noise(TimeGrid(1.0, 1024), prob.model.marks, 99, 1);
        const auto flow = simulate_flow(prob.model, bundle, uniform_mesh(-2.0, 2.0, 65));
        const auto sipde = integrate_inverse_sipde(prob.model, bundle, -2.0, 2.0, 129);
        const auto grid_inv = invert_flow_grid(flow, sipde.query);

        double worst_sg = 0.0;
        for (std::size_t k = 0; k < sipde.grid.nodes(); ++k)
            for (std::size_t q = 0; q < sipde.query.size(); ++q)
                if (sipde.ok(k, q) && grid_inv.ok(k, q))
                    worst_sg = std::max(worst_sg, std::fabs(sipde.u(k, q) - grid_inv.u(k, q)));
        INFO("problem ", name);
        CHECK(worst_sg <= 1e-9);

        const auto back = integrate_inverse_backward_sde(prob.model, bundle, sipde.query, 1.0);
        const std::size_t last = sipde.grid.nodes() - 1;
        double worst_bs = 0.0;
        for (std::size_t q = 0; q < sipde.query.size(); ++q)
            if (sipde.ok(last, q))
                worst_bs = std::max(
                    worst_bs, std::fabs(back[static_cast<Eigen::Index>(q)] - sipde.u(last, q)));
        CHECK(worst_bs <= 1e-9);
    }
}

TEST_CASE("u(0, .) is exactly the identity for all constructions") {
    const auto prob = catalog_problem("linear-jump-diffusion");
    const auto bundle = generate_noise(TimeGrid(1.0, 256), prob.model.marks, 13, 0);
    const auto flow = simulate_flow(prob.model, bundle, uniform_mesh(0.5, 2.0, 9));
    const auto qs = uniform_queries(0.8, 1.2, 5);

    const auto grid_inv = invert_flow_grid(flow, qs);
    const auto sipde = integrate_inverse_sipde(prob.model, bundle, 0.25, 4.0, 65);
    const Vec back = integrate_inverse_backward_sde(prob.model, bundle, qs, 0.0);
    for (std::size_t q = 0; q < qs.size(); ++q) {
        CHECK(grid_inv.u(0, q) == qs[q]);
        CHECK(back[static_cast<Eigen::Index>(q)] == qs[q]);
    }
    for (std::size_t q = 0; q < sipde.query.size(); ++q)
        CHECK(sipde.u(0, q) == sipde.query[q]);
}
