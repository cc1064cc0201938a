#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "slopecpd/model.hpp"

namespace slopecpd {

/// Sum of squares 1^2 + ... + tau^2. Throws std::invalid_argument for tau < 1.
double a_tau(std::int64_t tau);

/// Exponent above which log(1 - p0 + p0 e^s) is evaluated as
/// s + log(p0 + (1 - p0) e^-s).
inline constexpr double kMixtureOverflowGuard = 500.0;

/// log(1 - p0 + p0 * exp(s)) for any real s, p0 in (0, 1].
double log_mixture(double s, double p0);

/// g(x) = log(1 - p0 + p0 exp(x^2 / 2)), the soft-threshold applied to each
/// sensor's GLR statistic. Throws std::domain_error unless p0 in (0, 1].
double soft_threshold_g(double x, double p0);

/// Derivative of g: p0 x e^{x^2/2} / (1 - p0 + p0 e^{x^2/2}).
double soft_threshold_g_dot(double x, double p0);

/// Recursive weighted sums for every candidate change-point in the window.
///
/// At time t the retained candidates are k = max(0, t - w), ..., t - 1 and
/// for each sensor
///     W_{n,k,t} = sum_{i=k+1}^{t} (i - k) z_{n,i},
/// updated by W_{n,k,t+1} = W_{n,k,t} + (t + 1 - k) z_{n,t+1}. Optionally the
/// plain sums V_{n,k,t} = sum_{i=k+1}^{t} z_{n,i} used by the mean-shift
/// baseline are kept alongside. Candidate k lives in ring slot k mod w, so
/// memory is O(N w).
class WindowState {
public:
    WindowState(std::size_t n_sensors, std::size_t window, bool track_plain_sums = false);

    /// Consumes standardized residuals z_{., t+1}.
    void advance(std::span<const double> z);

    std::int64_t time() const { return t_; }
    std::size_t window() const { return window_; }
    std::size_t n_sensors() const { return n_sensors_; }
    bool tracks_plain_sums() const { return track_plain_; }

    std::int64_t oldest_candidate() const;
    std::size_t candidate_count() const;
    bool retains(std::int64_t k) const;

    /// W_{., k, t} for a retained k. Throws std::out_of_range otherwise.
    std::span<const double> weighted_sums(std::int64_t k) const;
    /// V_{., k, t}; requires track_plain_sums.
    std::span<const double> plain_sums(std::int64_t k) const;

    /// A_tau for tau in [1, w] from the precomputed table.
    double a(std::size_t tau) const { return a_table_[tau]; }
    /// 0.5 / A_tau, the factor turning W^2 into U^2 / 2.
    double half_inv_a(std::size_t tau) const { return half_inv_a_[tau]; }
    std::span<const double> a_table() const { return a_table_; }

private:
    std::size_t slot_of(std::int64_t k) const { return static_cast<std::size_t>(k % static_cast<std::int64_t>(window_)); }
    void require_retained(std::int64_t k) const;

    std::size_t n_sensors_;
    std::size_t window_;
    bool track_plain_;
    std::int64_t t_{0};
    std::vector<double> weighted_;  // window_ x n_sensors_
    std::vector<double> plain_;
    std::vector<double> a_table_;   // index tau, entry 0 unused
    std::vector<double> half_inv_a_;
};

/// U_{n,k,t} = W_{n,k,t} / sqrt(A_tau) for every sensor.
std::vector<double> u_stat(const WindowState& state, std::int64_t k);

/// Mean-shift statistic (t - k)^{-1/2} sum_{i=k+1}^{t} z_{n,i}.
std::vector<double> mean_shift_u_stat(const WindowState& state, std::int64_t k);

/// Maximum-likelihood slope in signal units: c_n = sigma_n W_{n,k,t} / A_tau.
std::vector<double> slope_mle(const WindowState& state, std::int64_t k, const SensorModel& model);

/// Log-likelihood ratio of slope c against no change for a single sensor,
///     (1 / 2 sigma^2) sum_{i=k+1}^{t} [2 c (y_i - mu)(i - k) - c^2 (i - k)^2],
/// where `window` holds y_{k+1}, ..., y_t. Throws std::invalid_argument if empty.
double local_loglik(std::span<const double> window, double c, double mu, double sigma);

/// Same quantity from the recursive sums, for all sensors at once; `rates`
/// are in signal units.
std::vector<double> local_loglik(const WindowState& state, std::int64_t k, std::span<const double> rates,
                                 const SensorModel& model);

}  // namespace slopecpd
