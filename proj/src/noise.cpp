#include "jumpflow/noise.hpp"

#include <cmath>
#include <stdexcept>

#include "jumpflow/rng.hpp"

namespace jumpflow {

NoiseBundle generate_noise(const TimeGrid& grid, const MarkSpace& marks,
                           std::uint64_t master_seed, std::uint64_t path_index,
                           int dim_brownian) {
    if (dim_brownian < 1) throw std::invalid_argument("generate_noise: dim_brownian must be >= 1");
    if (marks.size() == 0) throw std::invalid_argument("generate_noise: empty mark space");

    NoiseBundle out;
    out.master_seed = master_seed;
    out.path_index = path_index;
    out.grid = grid;
    out.dim_brownian = dim_brownian;
    out.marks = marks;

    const double sqrt_dt = std::sqrt(grid.dt());
    CounterRng brownian(master_seed, path_index, CounterRng::kBrownian);
    out.increments.resize(static_cast<Eigen::Index>(grid.steps), dim_brownian);
    for (std::size_t i = 0; i < grid.steps; ++i)
        for (int k = 0; k < dim_brownian; ++k)
            out.increments(static_cast<Eigen::Index>(i), k) =
                sqrt_dt * brownian.normal(i * static_cast<std::size_t>(dim_brownian) +
                                          static_cast<std::size_t>(k));

    const double total_rate = marks.total_intensity();
    CounterRng jump_time(master_seed, path_index, CounterRng::kJumpTime);
    CounterRng jump_mark(master_seed, path_index, CounterRng::kJumpMark);
    double t = 0.0;
    for (std::uint64_t j = 0;; ++j) {
        t += jump_time.exponential(j, total_rate);
        if (t > grid.horizon) break;
        const double u = jump_mark.uniform(j) * total_rate;
        double acc = 0.0;
        int mark = static_cast<int>(marks.size()) - 1;
        for (std::size_t e = 0; e < marks.size(); ++e) {
            acc += marks.intensity(e);
            if (u < acc) {
                mark = static_cast<int>(e);
                break;
            }
        }
        out.jumps.push_back({t, mark});
    }
    return out;
}

NoiseBundle coarsen_noise(const NoiseBundle& bundle, std::size_t factor) {
    if (factor == 0 || bundle.grid.steps % factor != 0)
        throw std::invalid_argument("coarsen_noise: factor must divide the base step count");
    if (factor == 1) return bundle;

    NoiseBundle out = bundle;
    out.grid = TimeGrid(bundle.grid.horizon, bundle.grid.steps / factor);
    out.increments.resize(static_cast<Eigen::Index>(out.grid.steps), bundle.dim_brownian);
    for (std::size_t i = 0; i < out.grid.steps; ++i) {
        Vec sum = Vec::Zero(bundle.dim_brownian);
        for (std::size_t k = 0; k < factor; ++k)
            sum += bundle.increments.row(static_cast<Eigen::Index>(i * factor + k)).transpose();
        out.increments.row(static_cast<Eigen::Index>(i)) = sum.transpose();
    }
    return out;
}

}  // namespace jumpflow
