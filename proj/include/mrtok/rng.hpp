#pragma once

#include <cstdint>
#include <random>

namespace mrtok {

/// Deterministic random source. std::mt19937 has a fully specified output
/// sequence, and the integer-to-float mapping below avoids std::*_distribution
/// (whose algorithms are implementation-defined), so the same seed produces
/// the same values on every platform.
class DetRng {
public:
    explicit DetRng(std::uint32_t seed) : gen_(seed) {}

    std::uint32_t next_u32() { return gen_(); }

    /// Uniform in [0, 1) with 24 bits of mantissa.
    double uniform01() { return static_cast<double>(gen_() >> 8) * (1.0 / 16777216.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n).
    std::uint32_t below(std::uint32_t n) { return gen_() % n; }

private:
    std::mt19937 gen_;
};

}  // namespace mrtok
