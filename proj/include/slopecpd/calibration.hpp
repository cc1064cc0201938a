#pragma once

#include <cstddef>

namespace slopecpd {

/// Standard normal density and distribution function.
double normal_pdf(double x);
double normal_cdf(double x);

/// psi(theta) = log E exp(theta g(Z)) and its first two derivatives in theta,
/// Z standard normal. The derivatives are the mean and variance of g(Z)
/// under the exponentially tilted law, evaluated by quadrature.
struct PsiValues {
    double psi{0.0};
    double psi_dot{0.0};
    double psi_ddot{0.0};
};

/// Throws std::domain_error unless theta in (0, 1) and p0 in (0, 1].
PsiValues psi_and_derivatives(double theta, double p0);

/// E g(Z) for Z standard normal; the limit of psi_dot as theta -> 0.
double expected_g(double p0);

/// Root of psi_dot(theta) = b / N on [1e-6, 1 - 1e-6]. Throws
/// std::domain_error when b / N is outside the range of psi_dot there.
double solve_theta(double b, std::size_t n_sensors, double p0);

/// gamma(theta) = theta^2 / 2 E{ g'(Z)^2 exp[theta g(Z) - psi(theta)] }.
double gamma_coef(double theta, double p0);

/// Closed-form approximation of the overshoot correction nu(x), x > 0.
double nu_approx(double x);

struct CalibrationInput {
    std::size_t n_sensors{0};
    double p0{0.3};
    std::size_t window{200};
    /// Either the threshold b (for arl_approx) or the target ARL (for solve_threshold).
    double target{0.0};
};

struct CalibrationResult {
    double threshold{0.0};
    double theta{0.0};
    double psi{0.0};
    double psi_dot{0.0};
    double psi_ddot{0.0};
    double gamma_coef{0.0};
    double h_factor{0.0};
    /// Integral of y nu^2(y sqrt(gamma)) between the window-dependent limits.
    double integral{0.0};
    double arl{0.0};
};

/// Large-deviation approximation of the mean run length of the
/// window-limited mixture GLR rule under no change, for threshold
/// `input.target`.
CalibrationResult arl_approx(const CalibrationInput& input);

/// Threshold whose approximate ARL equals `input.target` (>= 100) to a
/// relative error below 1e-4.
CalibrationResult solve_threshold(const CalibrationInput& input);

struct EddInput {
    double threshold{0.0};
    std::size_t n_sensors{0};
    double p0{0.3};
    /// Sum over affected sensors of c_n^2 / sigma_n^2.
    double delta_sq{0.0};
    std::size_t affected_count{0};
    std::size_t window{0};
};

/// Minimal window length (6 b / Delta^2)^{1/3} the delay bound assumes.
double edd_min_window(double threshold, double delta_sq);

/// Upper bound on the detection delay of the mixture GLR rule for a change
/// at time 0:
///   ([b - |A| log p0 - (N - |A|) E g(U)] / (Delta^2 / 6))^{1/3}.
/// Throws std::domain_error when the window is not longer than
/// edd_min_window or the numerator is not positive.
double edd_bound(const EddInput& input);

/// First-order delay approximation with N log p0 in place of |A| log p0.
double first_order_edd(const EddInput& input);

/// Threshold b = N/2 - 4 log[1 - (1 - 1/gamma)^{1/w}] above which the
/// window-limited mixture GLR rule has ARL at least gamma. Throws
/// std::domain_error for gamma <= 1.
double conservative_threshold(double gamma, std::size_t n_sensors, std::size_t window);

}  // namespace slopecpd
