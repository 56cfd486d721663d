#pragma once

#include <cstdint>
#include <vector>

#include "jumpflow/grid.hpp"
#include "jumpflow/marks.hpp"
#include "jumpflow/model.hpp"

namespace jumpflow {

struct JumpEvent {
    double time = 0.0;  // strictly inside (0, T]
    int mark = 0;       // index into the mark space
};

/// One path's driving noise: Brownian increments on the base grid plus the
/// marked jump stream. Content is a pure function of (master_seed,
/// path_index), so bundles regenerate identically anywhere.
struct NoiseBundle {
    std::uint64_t master_seed = 0;
    std::uint64_t path_index = 0;
    TimeGrid grid;
    int dim_brownian = 1;
    MarkSpace marks;
    Mat increments;                // steps x d, each column-entry ~ N(0, dt)
    std::vector<JumpEvent> jumps;  // sorted by time

    /// Cumulative Brownian value at base node i (sum of increments).
    Vec brownian_at(std::size_t node) const {
        Vec w = Vec::Zero(dim_brownian);
        for (std::size_t k = 0; k < node && k < grid.steps; ++k) w += increments.row(k).transpose();
        return w;
    }

    /// Per-mark jump counts over (0, t].
    std::vector<int> counts_up_to(double t) const {
        std::vector<int> counts(marks.size(), 0);
        for (const auto& j : jumps)
            if (j.time <= t) ++counts[static_cast<std::size_t>(j.mark)];
        return counts;
    }
};

/// Draws the bundle for (master_seed, path_index). Brownian increments are
/// i.i.d. N(0, dt); jump times come from exponential inter-arrivals with rate
/// v(E) and marks are categorical with weight v(e)/v(E). Counter-based
/// streams make the result independent of generation order.
NoiseBundle generate_noise(const TimeGrid& grid, const MarkSpace& marks,
                           std::uint64_t master_seed, std::uint64_t path_index,
                           int dim_brownian = 1);

/// Exact coarsening: each coarse increment is the sum of `factor` fine
/// increments; jump events are preserved untouched. The factor must divide
/// the base step count.
NoiseBundle coarsen_noise(const NoiseBundle& bundle, std::size_t factor);

}  // namespace jumpflow
