#include "slopecpd/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "slopecpd/mixture_kernel.hpp"

namespace slopecpd {

std::string_view to_string(DetectorKind kind) {
    switch (kind) {
        case DetectorKind::mixture_glr: return "mixture_glr";
        case DetectorKind::mixture_cusum: return "mixture_cusum";
        case DetectorKind::adaptive_mixture: return "adaptive_mixture";
        case DetectorKind::multichart_cusum: return "multichart_cusum";
        case DetectorKind::meanshift_mixture: return "meanshift_mixture";
    }
    return "unknown";
}

DetectorKind parse_detector_kind(std::string_view name) {
    if (name == "glr" || name == "mixture_glr") return DetectorKind::mixture_glr;
    if (name == "cusum" || name == "mixture_cusum") return DetectorKind::mixture_cusum;
    if (name == "adaptive" || name == "adaptive_mixture") return DetectorKind::adaptive_mixture;
    if (name == "multichart" || name == "multichart_cusum") return DetectorKind::multichart_cusum;
    if (name == "meanshift" || name == "meanshift_mixture") return DetectorKind::meanshift_mixture;
    throw std::invalid_argument("unknown detector '" + std::string(name) + "'");
}

void DetectorConfig::validate(DetectorKind kind, std::size_t n_sensors) const {
    if (kind != DetectorKind::multichart_cusum && !(p0 > 0.0 && p0 <= 1.0)) {
        throw std::invalid_argument("detector: p0 must lie in (0, 1]");
    }
    if (window < 1) {
        throw std::invalid_argument("detector: window must be at least 1");
    }
    if (!std::isfinite(threshold)) {
        throw std::invalid_argument("detector: threshold must be finite");
    }
    if (kind == DetectorKind::mixture_cusum || kind == DetectorKind::multichart_cusum) {
        if (nominal_rates.size() != n_sensors) {
            throw std::invalid_argument("detector: " + std::string(to_string(kind)) + " needs " +
                                        std::to_string(n_sensors) + " nominal rates, got " +
                                        std::to_string(nominal_rates.size()));
        }
        for (double d : nominal_rates) {
            if (!std::isfinite(d)) {
                throw std::invalid_argument("detector: nominal rates must be finite");
            }
        }
    }
    if (kind == DetectorKind::adaptive_mixture) {
        if (!adaptive) {
            throw std::invalid_argument("detector: adaptive_mixture needs alpha, beta and a");
        }
        if (!(adaptive->alpha > 0.0) || !(adaptive->beta > 0.0)) {
            throw std::invalid_argument("detector: Beta prior parameters must be positive");
        }
        if (!std::isfinite(adaptive->a)) {
            throw std::invalid_argument("detector: adaptive cutoff a must be finite");
        }
    }
}

std::size_t argmax_earliest(std::span<const double> values) {
    if (values.empty()) {
        throw std::invalid_argument("argmax_earliest: empty input");
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) {
            best = i;
        }
    }
    return best;
}

Detector::Detector(DetectorKind kind, DetectorConfig config, SensorModel model)
    : kind_(kind),
      config_(std::move(config)),
      model_(std::move(model)),
      state_(std::max<std::size_t>(model_.size(), 1), std::max<std::size_t>(config_.window, 1),
             kind == DetectorKind::meanshift_mixture) {
    model_.validate();
    config_.validate(kind_, model_.size());
    candidate_stats_.reserve(config_.window);
    residuals_.resize(model_.size());
    scratch_.resize(model_.size());
    exponents_.resize(model_.size());
}

void Detector::set_threshold(double b) {
    if (!std::isfinite(b)) {
        throw std::invalid_argument("detector: threshold must be finite");
    }
    config_.threshold = b;
    status_.alarmed = status_.t > 0 && status_.statistic >= b;
}

DetectorStatus Detector::step(const ObservationFrame& frame) {
    if (frame.t != state_.time() + 1) {
        throw std::invalid_argument("detector: expected frame t=" + std::to_string(state_.time() + 1) + ", got t=" +
                                    std::to_string(frame.t));
    }
    standardize_into(frame.values, model_, residuals_);
    return step_standardized(residuals_);
}

DetectorStatus Detector::step_standardized(std::span<const double> z) {
    state_.advance(z);
    candidate_stats_.resize(state_.candidate_count());
    score_candidates(candidate_stats_);
    const std::size_t best = argmax_earliest(candidate_stats_);
    best_k_ = state_.oldest_candidate() + static_cast<std::int64_t>(best);
    status_.t = state_.time();
    status_.statistic = candidate_stats_[best];
    status_.alarmed = status_.statistic >= config_.threshold;
    return status_;
}

std::vector<double> Detector::sensor_statistic(std::int64_t k) const { return u_stat(state_, k); }

DetectionResult Detector::estimate_changepoint() const {
    if (!status_.alarmed) {
        throw std::logic_error("estimate_changepoint: the detector has not raised an alarm");
    }
    DetectionResult result;
    result.stop_time = status_.t;
    result.k_hat = best_k_;
    result.statistic = status_.statistic;
    result.c_hat = slope_mle(state_, best_k_, model_);
    result.per_sensor_u = sensor_statistic(best_k_);
    return result;
}

// ---------------------------------------------------------------------------

MixtureGlrDetector::MixtureGlrDetector(const DetectorConfig& config, const SensorModel& model)
    : Detector(DetectorKind::mixture_glr, config, model) {}

void MixtureGlrDetector::score_candidates(std::span<double> out) {
    const std::int64_t t = state_.time();
    const std::int64_t oldest = state_.oldest_candidate();
    for (std::size_t j = 0; j < out.size(); ++j) {
        const std::int64_t k = oldest + static_cast<std::int64_t>(j);
        const auto tau = static_cast<std::size_t>(t - k);
        out[j] = kernel::sum_log_mixture_squares(state_.weighted_sums(k), state_.half_inv_a(tau), config_.p0, scratch_);
    }
}

// ---------------------------------------------------------------------------

MixtureCusumDetector::MixtureCusumDetector(const DetectorConfig& config, const SensorModel& model)
    : Detector(DetectorKind::mixture_cusum, config, model) {
    delta_std_.resize(model_.size());
    for (std::size_t n = 0; n < model_.size(); ++n) {
        delta_std_[n] = config_.nominal_rates[n] / model_.sigma[n];
    }
}

void MixtureCusumDetector::score_candidates(std::span<double> out) {
    const std::int64_t t = state_.time();
    const std::int64_t oldest = state_.oldest_candidate();
    const std::size_t n_sensors = model_.size();
    for (std::size_t j = 0; j < out.size(); ++j) {
        const std::int64_t k = oldest + static_cast<std::int64_t>(j);
        const double half_a = 0.5 * state_.a(static_cast<std::size_t>(t - k));
        const auto w = state_.weighted_sums(k);
        for (std::size_t n = 0; n < n_sensors; ++n) {
            exponents_[n] = delta_std_[n] * w[n] - half_a * delta_std_[n] * delta_std_[n];
        }
        out[j] = kernel::sum_log_mixture(exponents_, config_.p0, scratch_);
    }
}

// ---------------------------------------------------------------------------

AdaptiveMixtureDetector::AdaptiveMixtureDetector(const DetectorConfig& config, const SensorModel& model)
    : Detector(DetectorKind::adaptive_mixture, config, model) {
    adaptive_.s.assign(model_.size(), 0);
    adaptive_.rho.assign(model_.size(), posterior_mean(0, *config_.adaptive));
    u_max_.resize(model_.size());
}

double AdaptiveMixtureDetector::posterior_mean(int indicator, const AdaptiveParams& params) {
    return (static_cast<double>(indicator) + params.alpha) / (params.alpha + params.beta + 1.0);
}

void AdaptiveMixtureDetector::score_candidates(std::span<double> out) {
    const std::int64_t t = state_.time();
    const std::int64_t oldest = state_.oldest_candidate();
    const std::size_t n_sensors = model_.size();
    const AdaptiveParams& params = *config_.adaptive;

    std::fill(u_max_.begin(), u_max_.end(), -std::numeric_limits<double>::infinity());
    for (std::int64_t k = oldest; k < t; ++k) {
        const double scale = 1.0 / std::sqrt(state_.a(static_cast<std::size_t>(t - k)));
        const auto w = state_.weighted_sums(k);
        for (std::size_t n = 0; n < n_sensors; ++n) {
            u_max_[n] = std::max(u_max_[n], w[n] * scale);
        }
    }
    const double rho_off = posterior_mean(0, params);
    const double rho_on = posterior_mean(1, params);
    for (std::size_t n = 0; n < n_sensors; ++n) {
        adaptive_.s[n] = u_max_[n] > params.a ? 1 : 0;
        adaptive_.rho[n] = adaptive_.s[n] ? rho_on : rho_off;
    }

    for (std::size_t j = 0; j < out.size(); ++j) {
        const std::int64_t k = oldest + static_cast<std::int64_t>(j);
        kernel::scaled_squares(state_.weighted_sums(k), state_.half_inv_a(static_cast<std::size_t>(t - k)), exponents_);
        out[j] = kernel::sum_log_mixture(exponents_, adaptive_.rho, scratch_);
    }
}

// ---------------------------------------------------------------------------

MultiChartCusumDetector::MultiChartCusumDetector(const DetectorConfig& config, const SensorModel& model)
    : Detector(DetectorKind::multichart_cusum, config, model) {
    delta_std_.resize(model_.size());
    for (std::size_t n = 0; n < model_.size(); ++n) {
        delta_std_[n] = config_.nominal_rates[n] / model_.sigma[n];
    }
}

void MultiChartCusumDetector::score_candidates(std::span<double> out) {
    const std::int64_t t = state_.time();
    const std::int64_t oldest = state_.oldest_candidate();
    const std::size_t n_sensors = model_.size();
    for (std::size_t j = 0; j < out.size(); ++j) {
        const std::int64_t k = oldest + static_cast<std::int64_t>(j);
        const double half_a = 0.5 * state_.a(static_cast<std::size_t>(t - k));
        const auto w = state_.weighted_sums(k);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t n = 0; n < n_sensors; ++n) {
            best = std::max(best, delta_std_[n] * w[n] - half_a * delta_std_[n] * delta_std_[n]);
        }
        out[j] = best;
    }
}

std::vector<double> MultiChartCusumDetector::sensor_cusums() const {
    std::vector<double> best(model_.size(), -std::numeric_limits<double>::infinity());
    if (state_.time() == 0) {
        return best;
    }
    for (std::int64_t k = state_.oldest_candidate(); k < state_.time(); ++k) {
        const double half_a = 0.5 * state_.a(static_cast<std::size_t>(state_.time() - k));
        const auto w = state_.weighted_sums(k);
        for (std::size_t n = 0; n < model_.size(); ++n) {
            best[n] = std::max(best[n], delta_std_[n] * w[n] - half_a * delta_std_[n] * delta_std_[n]);
        }
    }
    return best;
}

// ---------------------------------------------------------------------------

MeanShiftMixtureDetector::MeanShiftMixtureDetector(const DetectorConfig& config, const SensorModel& model)
    : Detector(DetectorKind::meanshift_mixture, config, model) {}

void MeanShiftMixtureDetector::score_candidates(std::span<double> out) {
    const std::int64_t t = state_.time();
    const std::int64_t oldest = state_.oldest_candidate();
    for (std::size_t j = 0; j < out.size(); ++j) {
        const std::int64_t k = oldest + static_cast<std::int64_t>(j);
        const double scale = 0.5 / static_cast<double>(t - k);
        out[j] = kernel::sum_log_mixture_squares(state_.plain_sums(k), scale, config_.p0, scratch_);
    }
}

std::vector<double> MeanShiftMixtureDetector::sensor_statistic(std::int64_t k) const {
    return mean_shift_u_stat(state_, k);
}

// ---------------------------------------------------------------------------

std::unique_ptr<Detector> make_detector(DetectorKind kind, const DetectorConfig& config, const SensorModel& model) {
    switch (kind) {
        case DetectorKind::mixture_glr: return std::make_unique<MixtureGlrDetector>(config, model);
        case DetectorKind::mixture_cusum: return std::make_unique<MixtureCusumDetector>(config, model);
        case DetectorKind::adaptive_mixture: return std::make_unique<AdaptiveMixtureDetector>(config, model);
        case DetectorKind::multichart_cusum: return std::make_unique<MultiChartCusumDetector>(config, model);
        case DetectorKind::meanshift_mixture: return std::make_unique<MeanShiftMixtureDetector>(config, model);
    }
    throw std::invalid_argument("make_detector: unknown kind");
}

}  // namespace slopecpd
