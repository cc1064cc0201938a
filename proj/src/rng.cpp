#include "slopecpd/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace slopecpd {

RandomStream::RandomStream(std::uint64_t master_seed, std::uint64_t trial, std::uint64_t tag) {
    std::seed_seq seq{
        static_cast<std::uint32_t>(master_seed & 0xffffffffu), static_cast<std::uint32_t>(master_seed >> 32),
        static_cast<std::uint32_t>(trial & 0xffffffffu),       static_cast<std::uint32_t>(trial >> 32),
        static_cast<std::uint32_t>(tag & 0xffffffffu),         static_cast<std::uint32_t>(tag >> 32),
    };
    engine_.seed(seq);
}

double RandomStream::uniform() {
    // (m + 0.5) / 2^53 never hits 0 or 1.
    const std::uint64_t m = engine_() >> 11;
    return (static_cast<double>(m) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u = 0.0;
    double v = 0.0;
    double s = 0.0;
    do {
        u = 2.0 * uniform() - 1.0;
        v = 2.0 * uniform() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double factor = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * factor;
    has_spare_ = true;
    return u * factor;
}

std::uint64_t RandomStream::below(std::uint64_t bound) {
    if (bound == 0) {
        throw std::invalid_argument("RandomStream::below: bound must be positive");
    }
    // Rejection keeps the draw exactly uniform.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % bound);
    std::uint64_t x = 0;
    do {
        x = engine_();
    } while (x >= limit);
    return x % bound;
}

}  // namespace slopecpd
