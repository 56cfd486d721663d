#pragma once

#include <cstddef>
#include <stdexcept>

namespace jumpflow {

/// Uniform base time grid on [0, T]. Jump times are inserted later by the
/// flow integrators; this type only carries the base discretization.
struct TimeGrid {
    double horizon = 1.0;
    std::size_t steps = 1;

    TimeGrid() = default;
    TimeGrid(double T, std::size_t N) : horizon(T), steps(N) {
        if (!(T > 0.0)) throw std::invalid_argument("TimeGrid: horizon must be positive");
        if (N == 0) throw std::invalid_argument("TimeGrid: need at least one step");
    }

    double dt() const { return horizon / static_cast<double>(steps); }

    // node(steps) returns the horizon exactly.
    double node(std::size_t i) const {
        return (i >= steps) ? horizon
                            : horizon * (static_cast<double>(i) / static_cast<double>(steps));
    }
};

}  // namespace jumpflow
