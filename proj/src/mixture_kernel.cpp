#include "slopecpd/mixture_kernel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>

#include "slopecpd/local_stats.hpp"

namespace slopecpd::kernel {

namespace {

[[gnu::always_inline]] inline double exp_inline(double x) {
    constexpr double kLog2e = 1.4426950408889634074;
    constexpr double kLn2Hi = 6.93147180369123816490e-01;
    constexpr double kLn2Lo = 1.90821492927058770002e-10;
    constexpr double kShifter = 0x1.8p52;
    x = std::min(std::max(x, -700.0), kMixtureOverflowGuard);
    // x = k ln2 + r with |r| <= ln2 / 2; the low bits of `shifted` hold k.
    const double shifted = x * kLog2e + kShifter;
    const double k = shifted - kShifter;
    const double r = (x - k * kLn2Hi) - k * kLn2Lo;
    // Taylor polynomial of degree 12; truncation error below 2e-16 on |r| <= ln2 / 2.
    double p = 1.0 / 479001600.0;
    p = p * r + 1.0 / 39916800.0;
    p = p * r + 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    const std::uint64_t k_bits = std::bit_cast<std::uint64_t>(shifted);
    const double scale = std::bit_cast<double>((k_bits + 1023u) << 52);
    return p * scale;
}

// Terms with a larger exponent go through log_mixture so the clamp inside
// exp_inline never changes a result.
constexpr double kFastPathLimit = 400.0;
constexpr double kProductLow = 1e-280;
constexpr double kProductHigh = 1e280;

double product_log(std::span<const double> factors) {
    double acc[8] = {1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    const std::size_t n = factors.size();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t j = 0; j < 8; ++j) {
            acc[j] *= factors[i + j];
        }
    }
    double tail = 1.0;
    for (; i < n; ++i) {
        tail *= factors[i];
    }
    const double prod = ((acc[0] * acc[1]) * (acc[2] * acc[3])) * ((acc[4] * acc[5]) * (acc[6] * acc[7])) * tail;
    if (prod > kProductLow && prod < kProductHigh) {
        return std::log(prod);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

double exp_clamped(double x) { return exp_inline(x); }

void scaled_squares(std::span<const double> w, double scale, std::span<double> s) {
    const std::size_t n = w.size();
    const double* __restrict wp = w.data();
    double* __restrict sp = s.data();
    for (std::size_t i = 0; i < n; ++i) {
        sp[i] = scale * wp[i] * wp[i];
    }
}

double sum_log_mixture(std::span<const double> s, double p0, std::span<double> scratch) {
    const std::size_t n = s.size();
    const double* __restrict sp = s.data();
    if (p0 == 1.0) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += sp[i];
        }
        return acc;
    }
    double* __restrict f = scratch.data();
    const double q = 1.0 - p0;
    int large = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = q + p0 * exp_inline(sp[i]);
        large |= static_cast<int>(sp[i] > kFastPathLimit);
    }
    const double fast = large ? std::numeric_limits<double>::quiet_NaN() : product_log(scratch.first(n));
    if (!std::isnan(fast)) {
        return fast;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += log_mixture(sp[i], p0);
    }
    return acc;
}

double sum_log_mixture_squares(std::span<const double> w, double scale, double p0, std::span<double> scratch) {
    const std::size_t n = w.size();
    const double* __restrict wp = w.data();
    if (p0 == 1.0) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += wp[i] * wp[i];
        }
        return scale * acc;
    }
    double* __restrict f = scratch.data();
    const double q = 1.0 - p0;
    int large = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = scale * wp[i] * wp[i];
        f[i] = q + p0 * exp_inline(s);
        large |= static_cast<int>(s > kFastPathLimit);
    }
    const double fast = large ? std::numeric_limits<double>::quiet_NaN() : product_log(scratch.first(n));
    if (!std::isnan(fast)) {
        return fast;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += log_mixture(scale * wp[i] * wp[i], p0);
    }
    return acc;
}

double sum_log_mixture(std::span<const double> s, std::span<const double> p, std::span<double> scratch) {
    const std::size_t n = s.size();
    const double* __restrict sp = s.data();
    const double* __restrict pp = p.data();
    double* __restrict f = scratch.data();
    int large = 0;
    for (std::size_t i = 0; i < n; ++i) {
        f[i] = (1.0 - pp[i]) + pp[i] * exp_inline(sp[i]);
        large |= static_cast<int>(sp[i] > kFastPathLimit);
    }
    const double fast = large ? std::numeric_limits<double>::quiet_NaN() : product_log(scratch.first(n));
    if (!std::isnan(fast)) {
        return fast;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += log_mixture(sp[i], pp[i]);
    }
    return acc;
}

}  // namespace slopecpd::kernel
