#include "slopecpd/local_stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace slopecpd {

double a_tau(std::int64_t tau) {
    if (tau < 1) {
        throw std::invalid_argument("a_tau: tau must be at least 1, got " + std::to_string(tau));
    }
    const auto t = static_cast<double>(tau);
    return t * (t + 1.0) * (2.0 * t + 1.0) / 6.0;
}

double log_mixture(double s, double p0) {
    if (p0 == 1.0) {
        return s;
    }
    if (s > kMixtureOverflowGuard) {
        return s + std::log(p0 + (1.0 - p0) * std::exp(-s));
    }
    return std::log1p(p0 * std::expm1(s));
}

namespace {
void check_p0(double p0) {
    if (!(p0 > 0.0 && p0 <= 1.0)) {
        throw std::domain_error("p0 must lie in (0, 1], got " + std::to_string(p0));
    }
}
}  // namespace

double soft_threshold_g(double x, double p0) {
    check_p0(p0);
    return log_mixture(0.5 * x * x, p0);
}

double soft_threshold_g_dot(double x, double p0) {
    check_p0(p0);
    // p0 x e^s / (1 - p0 + p0 e^s) = p0 x / ((1 - p0) e^-s + p0)
    const double s = 0.5 * x * x;
    return p0 * x / ((1.0 - p0) * std::exp(-s) + p0);
}

WindowState::WindowState(std::size_t n_sensors, std::size_t window, bool track_plain_sums)
    : n_sensors_(n_sensors), window_(window), track_plain_(track_plain_sums) {
    if (n_sensors == 0) {
        throw std::invalid_argument("WindowState: at least one sensor is required");
    }
    if (window == 0) {
        throw std::invalid_argument("WindowState: window must be at least 1");
    }
    weighted_.assign(window * n_sensors, 0.0);
    if (track_plain_) {
        plain_.assign(window * n_sensors, 0.0);
    }
    a_table_.resize(window + 1, 0.0);
    half_inv_a_.resize(window + 1, 0.0);
    for (std::size_t tau = 1; tau <= window; ++tau) {
        a_table_[tau] = a_tau(static_cast<std::int64_t>(tau));
        half_inv_a_[tau] = 0.5 / a_table_[tau];
    }
}

void WindowState::advance(std::span<const double> z) {
    if (z.size() != n_sensors_) {
        throw std::invalid_argument("WindowState::advance: expected " + std::to_string(n_sensors_) + " residuals, got " +
                                    std::to_string(z.size()));
    }
    const std::int64_t next = t_ + 1;
    const std::size_t fresh = slot_of(t_);
    std::fill_n(weighted_.begin() + static_cast<std::ptrdiff_t>(fresh * n_sensors_), n_sensors_, 0.0);
    if (track_plain_) {
        std::fill_n(plain_.begin() + static_cast<std::ptrdiff_t>(fresh * n_sensors_), n_sensors_, 0.0);
    }
    const std::int64_t oldest = std::max<std::int64_t>(0, next - static_cast<std::int64_t>(window_));
    const double* zp = z.data();
    for (std::int64_t k = oldest; k < next; ++k) {
        const auto mult = static_cast<double>(next - k);
        double* __restrict w = weighted_.data() + slot_of(k) * n_sensors_;
        for (std::size_t n = 0; n < n_sensors_; ++n) {
            w[n] += mult * zp[n];
        }
        if (track_plain_) {
            double* __restrict v = plain_.data() + slot_of(k) * n_sensors_;
            for (std::size_t n = 0; n < n_sensors_; ++n) {
                v[n] += zp[n];
            }
        }
    }
    t_ = next;
}

std::int64_t WindowState::oldest_candidate() const {
    return std::max<std::int64_t>(0, t_ - static_cast<std::int64_t>(window_));
}

std::size_t WindowState::candidate_count() const {
    return static_cast<std::size_t>(t_ - oldest_candidate());
}

bool WindowState::retains(std::int64_t k) const { return k >= oldest_candidate() && k < t_; }

void WindowState::require_retained(std::int64_t k) const {
    if (!retains(k)) {
        throw std::out_of_range("candidate change-point k=" + std::to_string(k) + " is not retained at t=" +
                                std::to_string(t_) + " (window " + std::to_string(window_) + ")");
    }
}

std::span<const double> WindowState::weighted_sums(std::int64_t k) const {
    require_retained(k);
    return {weighted_.data() + slot_of(k) * n_sensors_, n_sensors_};
}

std::span<const double> WindowState::plain_sums(std::int64_t k) const {
    if (!track_plain_) {
        throw std::logic_error("WindowState: plain sums are not tracked");
    }
    require_retained(k);
    return {plain_.data() + slot_of(k) * n_sensors_, n_sensors_};
}

std::vector<double> u_stat(const WindowState& state, std::int64_t k) {
    const auto w = state.weighted_sums(k);
    const double scale = 1.0 / std::sqrt(state.a(static_cast<std::size_t>(state.time() - k)));
    std::vector<double> u(w.size());
    for (std::size_t n = 0; n < w.size(); ++n) {
        u[n] = w[n] * scale;
    }
    return u;
}

std::vector<double> mean_shift_u_stat(const WindowState& state, std::int64_t k) {
    const auto v = state.plain_sums(k);
    const double scale = 1.0 / std::sqrt(static_cast<double>(state.time() - k));
    std::vector<double> u(v.size());
    for (std::size_t n = 0; n < v.size(); ++n) {
        u[n] = v[n] * scale;
    }
    return u;
}

std::vector<double> slope_mle(const WindowState& state, std::int64_t k, const SensorModel& model) {
    const auto w = state.weighted_sums(k);
    if (model.size() != w.size()) {
        throw std::invalid_argument("slope_mle: sensor model size does not match the window state");
    }
    const double a = state.a(static_cast<std::size_t>(state.time() - k));
    std::vector<double> c(w.size());
    for (std::size_t n = 0; n < w.size(); ++n) {
        c[n] = model.sigma[n] * w[n] / a;
    }
    return c;
}

double local_loglik(std::span<const double> window, double c, double mu, double sigma) {
    if (window.empty()) {
        throw std::invalid_argument("local_loglik: need t > k (empty window)");
    }
    if (!std::isfinite(c)) {
        throw std::invalid_argument("local_loglik: slope must be finite");
    }
    double acc = 0.0;
    for (std::size_t j = 0; j < window.size(); ++j) {
        const auto lag = static_cast<double>(j + 1);
        acc += 2.0 * c * (window[j] - mu) * lag - c * c * lag * lag;
    }
    return acc / (2.0 * sigma * sigma);
}

std::vector<double> local_loglik(const WindowState& state, std::int64_t k, std::span<const double> rates,
                                 const SensorModel& model) {
    const auto w = state.weighted_sums(k);
    if (rates.size() != w.size() || model.size() != w.size()) {
        throw std::invalid_argument("local_loglik: rates/model size does not match the window state");
    }
    const double a = state.a(static_cast<std::size_t>(state.time() - k));
    std::vector<double> ell(w.size());
    for (std::size_t n = 0; n < w.size(); ++n) {
        const double d = rates[n] / model.sigma[n];
        ell[n] = d * w[n] - 0.5 * d * d * a;
    }
    return ell;
}

}  // namespace slopecpd
