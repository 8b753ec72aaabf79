#pragma once

// Deterministic random source. Draws are derived from std::mt19937_64 by
// hand (uniform via ldexp, normal via Box-Muller) because the standard
// distributions are not bit-portable across library implementations.

#include <cmath>
#include <cstdint>
#include <random>

namespace iterseg {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// uniform in [0, 1)
    double uniform() { return std::ldexp(static_cast<double>(engine_() >> 11), -53); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// uniform integer in [0, n)
    std::uint64_t integer(std::uint64_t n) { return n ? engine_() % n : 0; }

    /// standard normal via Box-Muller (second draw cached)
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    std::uint64_t raw() { return engine_(); }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0;
};

}  // namespace iterseg
