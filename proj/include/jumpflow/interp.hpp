#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>

namespace jumpflow {

/// Piecewise-linear interpolation on a strictly increasing abscissa grid.
/// Queries outside the range are extrapolated linearly from the end segment;
/// callers that must exclude those points check `inside` first.
struct LinearInterpolant {
    std::span<const double> xs;
    std::span<const double> ys;

    bool inside(double x) const { return x >= xs.front() && x <= xs.back(); }

    double operator()(double x) const {
        const std::size_t n = xs.size();
        if (n != ys.size() || n < 2)
            throw std::invalid_argument("LinearInterpolant: need at least two matching samples");
        std::size_t hi = std::upper_bound(xs.begin(), xs.end(), x) - xs.begin();
        hi = std::clamp<std::size_t>(hi, 1, n - 1);
        const std::size_t lo = hi - 1;
        const double w = (x - xs[lo]) / (xs[hi] - xs[lo]);
        return ys[lo] + w * (ys[hi] - ys[lo]);
    }
};

/// True when xs is strictly increasing.
inline bool strictly_increasing(std::span<const double> xs) {
    for (std::size_t i = 1; i < xs.size(); ++i)
        if (!(xs[i] > xs[i - 1])) return false;
    return true;
}

/// Inverse of a monotone-increasing sampled map x -> f(x): given y, returns
/// the piecewise-linear preimage. Caller checks monotonicity beforehand.
inline double monotone_inverse(std::span<const double> xs, std::span<const double> fs, double y) {
    const std::size_t n = xs.size();
    std::size_t hi = std::upper_bound(fs.begin(), fs.end(), y) - fs.begin();
    hi = std::clamp<std::size_t>(hi, 1, n - 1);
    const std::size_t lo = hi - 1;
    const double w = (y - fs[lo]) / (fs[hi] - fs[lo]);
    return xs[lo] + w * (xs[hi] - xs[lo]);
}

}  // namespace jumpflow
