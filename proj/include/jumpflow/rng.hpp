#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace jumpflow {

/// Counter-based random generator (Philox4x32-10).
///
/// Every draw is a pure function of (master_seed, path_index, stream, index),
/// so path-parallel generation is reproducible and independent of scheduling
/// or worker count. There is no mutable state to advance.
class CounterRng {
public:
    // Stream identifiers keep draws for different purposes decorrelated.
    enum Stream : std::uint32_t {
        kBrownian = 1,
        kJumpTime = 2,
        kJumpMark = 3,
        kBridge = 4,
        kProbe = 5,
    };

    CounterRng(std::uint64_t master_seed, std::uint64_t path_index, std::uint32_t stream)
        : key_{static_cast<std::uint32_t>(master_seed),
               static_cast<std::uint32_t>(master_seed >> 32)},
          path_lo_(static_cast<std::uint32_t>(path_index)),
          path_hi_stream_(static_cast<std::uint32_t>(path_index >> 32) * 0x9E3779B9u + stream) {}

    /// 64 uniform random bits for the given counter index.
    std::uint64_t bits(std::uint64_t index) const {
        std::array<std::uint32_t, 4> ctr = {static_cast<std::uint32_t>(index),
                                            static_cast<std::uint32_t>(index >> 32),
                                            path_lo_, path_hi_stream_};
        std::array<std::uint32_t, 2> key = key_;
        for (int round = 0; round < 10; ++round) {
            ctr = philox_round(ctr, key);
            key[0] += 0x9E3779B9u;
            key[1] += 0xBB67AE85u;
        }
        return (static_cast<std::uint64_t>(ctr[0]) << 32) | ctr[1];
    }

    /// Uniform double in the open interval (0, 1).
    double uniform(std::uint64_t index) const {
        return (static_cast<double>(bits(index) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via the inverse CDF.
    double normal(std::uint64_t index) const { return inverse_normal_cdf(uniform(index)); }

    /// Exponential with the given rate.
    double exponential(std::uint64_t index, double rate) const {
        return -std::log(uniform(index)) / rate;
    }

    /// Quantile function of the standard normal (Wichura's AS 241, double precision).
    static double inverse_normal_cdf(double p) {
        const double q = p - 0.5;
        if (std::fabs(q) <= 0.425) {
            const double r = 0.180625 - q * q;
            return q *
                   (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                         6.7265770927008700853e+4) * r + 4.5921953931549871457e+4) * r +
                       1.3731693765509461125e+4) * r + 1.9715909503065514427e+3) * r +
                     1.3314166789178437745e+2) * r + 3.3871328727963666080e+0) /
                   (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                         3.9307895800092710610e+4) * r + 2.1213794301586595867e+4) * r +
                       5.3941960214247511077e+3) * r + 6.8718700749205790830e+2) * r +
                     4.2313330701600911252e+1) * r + 1.0);
        }
        double r = (q < 0.0) ? p : 1.0 - p;
        r = std::sqrt(-std::log(r));
        double value;
        if (r <= 5.0) {
            r -= 1.6;
            value = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                          2.41780725177450611770e-1) * r + 1.27045825245236838258e+0) * r +
                        3.64784832476320460504e+0) * r + 5.76949722146069140550e+0) * r +
                      4.63033784615654529590e+0) * r + 1.42343711074968357734e+0) /
                    (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                          1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r +
                        6.89767334985100004550e-1) * r + 1.67638483018380384940e+0) * r +
                      2.05319162663775882187e+0) * r + 1.0);
        } else {
            r -= 5.0;
            value = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                          1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r +
                        2.96560571828504891230e-1) * r + 1.78482653991729133580e+0) * r +
                      5.46378491116411436990e+0) * r + 6.65790464350110377720e+0) /
                    (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                          1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r +
                        1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r +
                      5.99832206555887937690e-1) * r + 1.0);
        }
        return (q < 0.0) ? -value : value;
    }

private:
    static std::array<std::uint32_t, 4> philox_round(std::array<std::uint32_t, 4> ctr,
                                                     const std::array<std::uint32_t, 2>& key) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(0xD2511F53u) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(0xCD9E8D57u) * ctr[2];
        return {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
                static_cast<std::uint32_t>(p1),
                static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
                static_cast<std::uint32_t>(p0)};
    }

    std::array<std::uint32_t, 2> key_;
    std::uint32_t path_lo_;
    std::uint32_t path_hi_stream_;
};

}  // namespace jumpflow
