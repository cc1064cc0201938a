#pragma once

#include <span>

namespace slopecpd::kernel {

/// exp(x) for x in [-700, 500] with a couple of ulp of error; inputs are
/// clamped to that range. Branch-free so loops calling it vectorize.
double exp_clamped(double x);

/// sum_n log(1 - p0 + p0 exp(s_n)).
///
/// Evaluated as the log of a product of the mixture factors, falling back to
/// per-term evaluation when the product leaves the normal double range.
/// `scratch` must hold at least s.size() doubles.
double sum_log_mixture(std::span<const double> s, double p0, std::span<double> scratch);

/// Same with a per-sensor mixing probability p_n.
double sum_log_mixture(std::span<const double> s, std::span<const double> p, std::span<double> scratch);

/// sum_n log(1 - p0 + p0 exp(scale * w_n^2)) without materializing the exponents.
double sum_log_mixture_squares(std::span<const double> w, double scale, double p0, std::span<double> scratch);

/// s_n = scale * w_n^2.
void scaled_squares(std::span<const double> w, double scale, std::span<double> s);

}  // namespace slopecpd::kernel
