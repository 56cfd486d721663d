#pragma once

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace jumpflow {

/// Finite mark space: ordered mark identifiers with strictly positive
/// intensities v(e). The total mass v(E) is always finite here, so integrals
/// against v(de) are exact finite sums.
class MarkSpace {
public:
    MarkSpace() = default;

    MarkSpace(std::vector<std::string> ids, std::vector<double> intensities)
        : ids_(std::move(ids)), intensity_(std::move(intensities)) {
        if (ids_.size() != intensity_.size())
            throw std::invalid_argument("MarkSpace: ids and intensities must have equal length");
        std::unordered_set<std::string> seen;
        for (const auto& id : ids_) {
            if (!seen.insert(id).second)
                throw std::invalid_argument("MarkSpace: duplicate mark identifier '" + id + "'");
        }
        for (double v : intensity_) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw std::invalid_argument("MarkSpace: intensities must be positive and finite");
        }
        total_ = std::accumulate(intensity_.begin(), intensity_.end(), 0.0);
        if (!std::isfinite(total_))
            throw std::invalid_argument("MarkSpace: total intensity must be finite");
    }

    /// Convenience: marks named "e0", "e1", ...
    static MarkSpace uniform(std::size_t count, double rate_each) {
        std::vector<std::string> ids;
        std::vector<double> rates(count, rate_each);
        ids.reserve(count);
        for (std::size_t i = 0; i < count; ++i) ids.push_back("e" + std::to_string(i));
        return MarkSpace(std::move(ids), std::move(rates));
    }

    std::size_t size() const { return ids_.size(); }
    const std::string& id(std::size_t i) const { return ids_[i]; }
    double intensity(std::size_t i) const { return intensity_[i]; }
    double total_intensity() const { return total_; }
    const std::vector<double>& intensities() const { return intensity_; }

private:
    std::vector<std::string> ids_;
    std::vector<double> intensity_;
    double total_ = 0.0;
};

}  // namespace jumpflow
