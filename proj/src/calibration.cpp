#include "slopecpd/calibration.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include "slopecpd/local_stats.hpp"

namespace slopecpd {

namespace {

constexpr double kThetaLo = 1e-6;
constexpr double kThetaHi = 1.0 - 1e-6;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;

void check_theta(double theta) {
    if (!(theta > 0.0 && theta < 1.0)) {
        throw std::domain_error("theta must lie in (0, 1), got " + std::to_string(theta));
    }
}

void check_p0(double p0) {
    if (!(p0 > 0.0 && p0 <= 1.0)) {
        throw std::domain_error("p0 must lie in (0, 1], got " + std::to_string(p0));
    }
}

// Integral of an even integrand over the real line. The tilted normal weight
// decays like exp(-(1 - theta) x^2 / 2), so the truncation point grows as
// theta approaches 1; the segments keep the adaptive rule on a smooth piece.
template <class F>
double integrate_even(F f, double theta) {
    using boost::math::quadrature::gauss_kronrod;
    const double limit = std::max(12.0, std::sqrt(160.0 / (1.0 - theta)));
    const std::array<double, 5> cuts = {0.0, 3.0, 8.0, 12.0, limit};
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        if (cuts[i + 1] <= cuts[i]) {
            continue;
        }
        total += gauss_kronrod<double, 31>::integrate(f, cuts[i], cuts[i + 1], 20, 1e-13);
    }
    return 2.0 * total;
}

double log_tilted_weight(double x, double theta, double p0) {
    return theta * soft_threshold_g(x, p0) - 0.5 * x * x - kLogSqrt2Pi;
}

struct Moments {
    double m0;
    PsiValues psi;
};

Moments tilted_moments(double theta, double p0) {
    const double m0 = integrate_even([&](double x) { return std::exp(log_tilted_weight(x, theta, p0)); }, theta);
    const double m1 =
        integrate_even([&](double x) { return soft_threshold_g(x, p0) * std::exp(log_tilted_weight(x, theta, p0)); },
                       theta) /
        m0;
    // Central second moment integrated directly; avoids cancellation in E g^2 - (E g)^2.
    const double m2 = integrate_even(
                          [&](double x) {
                              const double d = soft_threshold_g(x, p0) - m1;
                              return d * d * std::exp(log_tilted_weight(x, theta, p0));
                          },
                          theta) /
                      m0;
    return {m0, {std::log(m0), m1, m2}};
}

double log_arl_at_theta(double theta, std::size_t n, double p0, std::size_t w, CalibrationResult* out) {
    const Moments mom = tilted_moments(theta, p0);
    const double gam = gamma_coef(theta, p0);
    const double nd = static_cast<double>(n);
    const double log_h = std::log(theta) + 0.5 * std::log(2.0 * std::numbers::pi * mom.psi.psi_ddot) -
                         2.0 * std::log(gam) - 0.5 * std::log(nd) +
                         nd * (theta * mom.psi.psi_dot - mom.psi.psi);
    const double lo = std::sqrt(2.0 * nd / std::sqrt(4.0 * static_cast<double>(w) / 3.0));
    const double hi = std::sqrt(2.0 * nd / std::sqrt(4.0 / 3.0));
    const double sg = std::sqrt(gam);
    double integral = 0.0;
    if (hi > lo) {
        integral = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
            [&](double y) {
                const double v = nu_approx(y * sg);
                return y * v * v;
            },
            lo, hi, 20, 1e-12);
    }
    const double log_arl = integral > 0.0 ? log_h - std::log(integral) : std::numeric_limits<double>::infinity();
    if (out != nullptr) {
        out->threshold = nd * mom.psi.psi_dot;
        out->theta = theta;
        out->psi = mom.psi.psi;
        out->psi_dot = mom.psi.psi_dot;
        out->psi_ddot = mom.psi.psi_ddot;
        out->gamma_coef = gam;
        out->h_factor = std::exp(log_h);
        out->integral = integral;
        out->arl = std::exp(log_arl);
    }
    return log_arl;
}

void check_calibration(const CalibrationInput& in) {
    if (in.n_sensors < 1) {
        throw std::domain_error("n_sensors must be at least 1");
    }
    check_p0(in.p0);
    if (in.window < 1) {
        throw std::domain_error("window must be at least 1");
    }
    if (!(in.target > 0.0) || !std::isfinite(in.target)) {
        throw std::domain_error("calibration target must be positive and finite");
    }
}

}  // namespace

double normal_pdf(double x) { return std::exp(-0.5 * x * x - kLogSqrt2Pi); }

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

PsiValues psi_and_derivatives(double theta, double p0) {
    check_theta(theta);
    check_p0(p0);
    return tilted_moments(theta, p0).psi;
}

double expected_g(double p0) {
    check_p0(p0);
    return integrate_even([&](double x) { return soft_threshold_g(x, p0) * normal_pdf(x); }, 0.0);
}

double solve_theta(double b, std::size_t n_sensors, double p0) {
    check_p0(p0);
    if (n_sensors < 1) {
        throw std::domain_error("n_sensors must be at least 1");
    }
    const double target = b / static_cast<double>(n_sensors);
    auto psi_dot = [&](double th) { return tilted_moments(th, p0).psi.psi_dot; };
    double lo = kThetaLo;
    double hi = kThetaHi;
    const double f_lo = psi_dot(lo) - target;
    const double f_hi = psi_dot(hi) - target;
    if (f_lo > 0.0) {
        throw std::domain_error("b/N = " + std::to_string(target) + " is below the range of psi_dot (E g(Z) = " +
                                std::to_string(f_lo + target) + ")");
    }
    if (f_hi < 0.0) {
        throw std::domain_error("b/N = " + std::to_string(target) + " is unattainably large");
    }
    if (f_lo == 0.0) {
        return lo;
    }
    double mid = 0.5 * (lo + hi);
    for (int iter = 0; iter < 200; ++iter) {
        mid = 0.5 * (lo + hi);
        const double f = psi_dot(mid) - target;
        if (std::abs(f) < 1e-10 || hi - lo < 1e-16) {
            break;
        }
        (f < 0.0 ? lo : hi) = mid;
    }
    return mid;
}

double gamma_coef(double theta, double p0) {
    check_theta(theta);
    check_p0(p0);
    const double psi = tilted_moments(theta, p0).psi.psi;
    const double m = integrate_even(
        [&](double x) {
            const double gd = soft_threshold_g_dot(x, p0);
            return gd * gd * std::exp(log_tilted_weight(x, theta, p0) - psi);
        },
        theta);
    return 0.5 * theta * theta * m;
}

double nu_approx(double x) {
    if (!(x > 0.0)) {
        throw std::domain_error("nu_approx requires x > 0");
    }
    const double h = 0.5 * x;
    // Phi(h) - 1/2 via erf keeps full precision as x -> 0.
    const double centered = 0.5 * std::erf(h / std::numbers::sqrt2);
    return (centered / h) / (h * normal_cdf(h) + normal_pdf(h));
}

CalibrationResult arl_approx(const CalibrationInput& input) {
    check_calibration(input);
    const double theta = solve_theta(input.target, input.n_sensors, input.p0);
    CalibrationResult out;
    log_arl_at_theta(theta, input.n_sensors, input.p0, input.window, &out);
    out.threshold = input.target;
    return out;
}

CalibrationResult solve_threshold(const CalibrationInput& input) {
    check_calibration(input);
    if (input.target < 100.0) {
        throw std::domain_error("target ARL must be at least 100");
    }
    const std::size_t n = input.n_sensors;
    const double log_target = std::log(input.target);
    auto log_arl = [&](double th) { return log_arl_at_theta(th, n, input.p0, input.window, nullptr); };

    // The approximation blows up as theta -> 0 (H grows like theta^-3), so it
    // is only monotone above its minimum. Locate the minimum on a log grid and
    // bisect on the increasing branch.
    double th_min = kThetaLo;
    double f_min = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 60; ++i) {
        const double th = std::exp(std::log(1e-4) + (std::log(0.99) - std::log(1e-4)) * i / 60.0);
        const double f = log_arl(th);
        if (f < f_min) {
            f_min = f;
            th_min = th;
        }
    }
    double lo = th_min;
    double hi = kThetaHi;
    if (f_min > log_target) {
        throw std::domain_error("target ARL is below the smallest value the approximation attains");
    }
    if (log_arl(hi) < log_target) {
        throw std::domain_error("target ARL is unattainable for theta < 1");
    }
    double mid = 0.5 * (lo + hi);
    for (int iter = 0; iter < 200; ++iter) {
        mid = 0.5 * (lo + hi);
        const double f = log_arl(mid) - log_target;
        if (std::abs(std::expm1(f)) < 1e-5 || hi - lo < 1e-15) {
            break;
        }
        (f < 0.0 ? lo : hi) = mid;
    }
    CalibrationResult out;
    log_arl_at_theta(mid, n, input.p0, input.window, &out);
    return out;
}

double edd_min_window(double threshold, double delta_sq) {
    if (!(delta_sq > 0.0)) {
        throw std::domain_error("delta_sq must be positive");
    }
    return std::cbrt(6.0 * threshold / delta_sq);
}

namespace {

double edd_common(const EddInput& in, double log_p0_count) {
    check_p0(in.p0);
    if (in.n_sensors < 1 || in.affected_count < 1 || in.affected_count > in.n_sensors) {
        throw std::domain_error("affected_count must lie in [1, n_sensors]");
    }
    const double w_min = edd_min_window(in.threshold, in.delta_sq);
    if (!(static_cast<double>(in.window) > w_min)) {
        throw std::domain_error("window " + std::to_string(in.window) + " does not exceed (6b/Delta^2)^(1/3) = " +
                                std::to_string(w_min));
    }
    const double unaffected = static_cast<double>(in.n_sensors - in.affected_count);
    const double num = in.threshold - log_p0_count * std::log(in.p0) - unaffected * expected_g(in.p0);
    if (!(num > 0.0)) {
        throw std::domain_error("delay bound numerator is not positive; threshold too small");
    }
    return std::cbrt(num / (in.delta_sq / 6.0));
}

}  // namespace

double edd_bound(const EddInput& input) { return edd_common(input, static_cast<double>(input.affected_count)); }

double first_order_edd(const EddInput& input) { return edd_common(input, static_cast<double>(input.n_sensors)); }

double conservative_threshold(double gamma, std::size_t n_sensors, std::size_t window) {
    if (!(gamma > 1.0)) {
        throw std::domain_error("conservative_threshold requires gamma > 1");
    }
    if (window < 1) {
        throw std::domain_error("window must be at least 1");
    }
    // 1 - (1 - 1/gamma)^(1/w) = -expm1(log1p(-1/gamma) / w)
    const double tail = -std::expm1(std::log1p(-1.0 / gamma) / static_cast<double>(window));
    return 0.5 * static_cast<double>(n_sensors) - 4.0 * std::log(tail);
}

}  // namespace slopecpd
