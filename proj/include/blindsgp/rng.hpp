#pragma once

// Reproducible random streams for the simulator. The engine is the standard
// mt19937_64 (fully specified by the C++ standard) seeded through seed_seq
// from (run seed, stream index); the variate algorithms are spelled out here
// because std::*_distribution output is implementation-defined.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace blindsgp {

class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t stream)
    {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
        engine_.seed(seq);
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal, Box-Muller (both variates used).
    double normal()
    {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do u1 = uniform();
        while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Poisson variate: inversion by sequential search below mean 10,
    /// Hormann's transformed rejection (PTRS) above.
    double poisson(double mean)
    {
        if (!(mean > 0.0)) return 0.0;
        if (mean < 10.0) {
            const double u = uniform();
            double p = std::exp(-mean), cdf = p;
            double k = 0.0;
            while (u > cdf) {
                k += 1.0;
                p *= mean / k;
                cdf += p;
                if (p < 1e-300 && k > mean) break;
            }
            return k;
        }
        const double slam = std::sqrt(mean);
        const double loglam = std::log(mean);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            const double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::abs(u);
            const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
            if (us >= 0.07 && v <= vr) return k;
            if (k < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
                -mean + k * loglam - std::lgamma(k + 1.0))
                return k;
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace blindsgp
