#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace fbsde {

// Counter-based random stream keyed by (seed, path, step, channel).
//
// Every draw is a pure function of the key and a local counter, so the numbers a
// path sees do not depend on which thread simulates it or in which order.
// The generator is SplitMix64 started from a hashed key.
class CounterRng {
public:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

    CounterRng(std::uint64_t seed, std::uint64_t path, std::uint64_t step, std::uint64_t channel)
        : state_(key(seed, path, step, channel)) {}

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    static constexpr std::uint64_t key(std::uint64_t seed, std::uint64_t path, std::uint64_t step,
                                       std::uint64_t channel) {
        std::uint64_t k = mix(seed + kGolden);
        k = mix(k ^ (path * 0xD1B54A32D192ED03ULL + 1));
        k = mix(k ^ (step * 0xABC98388FB8FAC03ULL + 2));
        k = mix(k ^ (channel * 0x8CB92BA72F3D8DD7ULL + 3));
        return k;
    }

    std::uint64_t next_u64() {
        state_ += kGolden;
        return mix(state_);
    }

    // Uniform on the open interval (0, 1).
    double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    // Standard normal draws via Box-Muller; the second variate of a pair is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    // Poisson(mean). Inversion for small means, PTRS (Hormann 1993) above 10.
    std::int64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        if (mean < 10.0) {
            const double u = uniform();
            double p = std::exp(-mean);
            double cdf = p;
            std::int64_t k = 0;
            while (u > cdf && k < 1000) {
                ++k;
                p *= mean / static_cast<double>(k);
                cdf += p;
            }
            return k;
        }
        const double slam = std::sqrt(mean);
        const double loglam = std::log(mean);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double vr = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            const double u = uniform() - 0.5;
            const double v = uniform();
            const double us = 0.5 - std::fabs(u);
            const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
            if (us >= 0.07 && v <= vr) return static_cast<std::int64_t>(k);
            if (k < 0.0 || (us < 0.013 && v > us)) continue;
            if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
                -mean + k * loglam - std::lgamma(k + 1.0)) {
                return static_cast<std::int64_t>(k);
            }
        }
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace fbsde
