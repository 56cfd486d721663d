#pragma once

#include <functional>
#include <string>
#include <vector>

#include "jumpflow/flow.hpp"

namespace jumpflow {

/// State visible to a random field along one path: time, Brownian value, and
/// per-mark jump counts. Left-limit evaluation passes the pre-jump counts.
struct PathContext {
    double t = 0.0;
    Vec w;
    std::vector<int> counts;

    int total_count() const {
        int n = 0;
        for (int c : counts) n += c;
        return n;
    }
};

/// A random field F(t,x) = F0(x) + int G ds + int H dW + int J dN~ together
/// with the jump-diffusion X it is composed with. F is evaluated directly
/// through the path context; the integral representation (F0, G, H, J) feeds
/// the expansion being verified. Null G/H/J mean zero. Missing derivatives
/// fall back to central differences with step 1e-4.
struct SemimartingaleFieldSpec {
    std::string name;
    CoefficientModel driver_model;
    Vec x0;

    std::function<double(const Vec&)> F0;
    std::function<double(double, const Vec&)> G;
    std::function<Vec(double, const Vec&)> H;
    std::function<double(double, int, const Vec&)> J;

    std::function<double(const PathContext&, const Vec&)> F;
    std::function<Vec(const PathContext&, const Vec&)> dF;
    std::function<Mat(const PathContext&, const Vec&)> d2F;
    std::function<Mat(double, const Vec&)> dH;  // entry (k, i) = dH^k / dx^i
};

struct WentzellReport {
    double max_discrepancy = 0.0;   // max over grid nodes of |LHS - RHS|
    double rms_discrepancy = 0.0;   // rms over grid nodes
    double jump_identity_max = 0.0; // discrete jump-increment identity
    std::size_t nodes = 0;
};

/// Verifies the jump chain-rule identity on one path: the left side
/// F(t, X_t) against the full right-side expansion (all dt terms, the dW
/// terms, and the compensated-jump bracket), every term discretized with
/// left-endpoint (predictable) evaluation on the jump-adapted grid.
WentzellReport verify_wentzell(const SemimartingaleFieldSpec& spec, const NoiseBundle& bundle);

/// Finite-difference smoothness probe for the field data: F twice and H once
/// differentiable, G and J continuous, checked by comparing difference
/// quotients across two step sizes at sampled points. Returns false when a
/// probe blows up or fails to stabilize.
bool probe_field_smoothness(const SemimartingaleFieldSpec& spec, double x_lo, double x_hi,
                            std::size_t n_samples = 64, double tol = 1e-3);

std::vector<std::string> wentzell_spec_names();

/// Built-in field specs: "identity" (F = x), "product" (F = W^1_t x),
/// "square" (static F = x^2), "jump-field" (F = compensated-count times x).
/// All ride on the "linear-jump-diffusion" catalog dynamics.
SemimartingaleFieldSpec wentzell_spec(const std::string& name);

}  // namespace jumpflow
