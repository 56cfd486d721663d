#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace jumpflow {

inline double mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

inline double sample_variance(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size() - 1);
}

inline double rms(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    double s = 0.0;
    for (double x : xs) s += x * x;
    return std::sqrt(s / static_cast<double>(xs.size()));
}

inline double max_abs(std::span<const double> xs) {
    double m = 0.0;
    for (double x : xs) m = std::max(m, std::fabs(x));
    return m;
}

/// Batch mean and standard error of the mean.
struct BatchStats {
    double mean = 0.0;
    double se = 0.0;
    std::size_t count = 0;
};

inline BatchStats batch_stats(std::span<const double> batch_means) {
    BatchStats out;
    out.count = batch_means.size();
    out.mean = mean(batch_means);
    if (out.count >= 2)
        out.se = std::sqrt(sample_variance(batch_means) / static_cast<double>(out.count));
    return out;
}

/// Result of a log-log convergence fit. When every error is below the
/// exactness floor the identity holds to roundoff and a slope is meaningless;
/// `exact` is set and the fit is skipped.
struct OrderFit {
    double slope = 0.0;
    bool exact = false;

    bool attains(double required) const { return exact || slope >= required; }
};

/// Least-squares slope of log(err) against log(dt).
inline OrderFit fit_order(std::span<const double> dts, std::span<const double> errs,
                          double exact_floor = 1e-12) {
    if (dts.size() != errs.size() || dts.size() < 2)
        throw std::invalid_argument("fit_order: need matching samples, at least two levels");
    OrderFit out;
    bool all_tiny = true;
    for (double e : errs) all_tiny = all_tiny && (e < exact_floor);
    if (all_tiny) {
        out.exact = true;
        return out;
    }
    const std::size_t n = dts.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::log(dts[i]);
        const double y = std::log(std::max(errs[i], exact_floor));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double dn = static_cast<double>(n);
    out.slope = (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
    return out;
}

}  // namespace jumpflow
