#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "slopecpd/local_stats.hpp"
#include "slopecpd/model.hpp"

namespace slopecpd {

enum class DetectorKind {
    mixture_glr,        // soft-thresholded slope GLR, the main procedure
    mixture_cusum,      // slope known up to a nominal rate per sensor
    adaptive_mixture,   // mixture GLR with a per-sensor posterior-mean p0
    multichart_cusum,   // one slope CUSUM per sensor, alarm on the largest
    meanshift_mixture,  // mixture GLR built on the mean-shift statistic
};

std::string_view to_string(DetectorKind kind);
/// Accepts "glr", "cusum", "adaptive", "multichart", "meanshift" and the full enum names.
DetectorKind parse_detector_kind(std::string_view name);

/// Beta(alpha, beta) prior on the affected probability and the cutoff `a`
/// on U above which a sensor counts as affected.
struct AdaptiveParams {
    double alpha{1.0};
    double beta{1.0};
    double a{2.0};
};

struct DetectorConfig {
    double p0{0.3};
    std::size_t window{200};
    double threshold{0.0};
    /// delta_n in signal units; required by the CUSUM-type detectors.
    std::vector<double> nominal_rates;
    std::optional<AdaptiveParams> adaptive;

    /// Throws std::invalid_argument when the configuration cannot drive `kind`
    /// over `n_sensors` sensors.
    void validate(DetectorKind kind, std::size_t n_sensors) const;
};

struct DetectorStatus {
    std::int64_t t{0};
    double statistic{0.0};
    bool alarmed{false};
};

struct DetectionResult {
    std::int64_t stop_time{0};
    std::int64_t k_hat{0};
    double statistic{0.0};
    /// Slope estimates (signal units) at (k_hat, stop_time).
    std::vector<double> c_hat;
    /// Per-sensor statistic at (k_hat, stop_time); the mean-shift detector
    /// reports its own U, every other kind the slope U.
    std::vector<double> per_sensor_u;
};

struct AdaptiveState {
    std::vector<int> s;
    std::vector<double> rho;
};

/// Window-limited stopping rule over k in [t - w, t - 1].
///
/// Every kind shares the same WindowState; they differ only in how a
/// candidate k is scored. The reported statistic is the maximum over retained
/// candidates, and the alarm flag is `statistic >= threshold` at every step,
/// including steps after a first alarm.
class Detector {
public:
    Detector(const Detector&) = delete;
    Detector& operator=(const Detector&) = delete;
    virtual ~Detector() = default;

    /// Standardizes `frame` with the detector's sensor model. Frame times
    /// must be consecutive starting at 1.
    DetectorStatus step(const ObservationFrame& frame);
    /// Advances with already standardized residuals.
    DetectorStatus step_standardized(std::span<const double> z);

    const DetectorStatus& status() const { return status_; }
    /// Maximizing candidate of the latest step (earliest k on ties).
    std::int64_t best_candidate() const { return best_k_; }
    /// Candidate scores of the latest step, for k = oldest_candidate(), ..., t - 1.
    std::span<const double> candidate_statistics() const { return candidate_stats_; }

    /// Change-point estimate at the current (alarmed) time. Throws
    /// std::logic_error when the detector has not alarmed.
    DetectionResult estimate_changepoint() const;

    const WindowState& window_state() const { return state_; }
    const DetectorConfig& config() const { return config_; }
    const SensorModel& model() const { return model_; }
    DetectorKind kind() const { return kind_; }
    std::size_t n_sensors() const { return model_.size(); }

    void set_threshold(double b);

protected:
    Detector(DetectorKind kind, DetectorConfig config, SensorModel model);

    /// Scores of every retained candidate, oldest first, written into `out`.
    virtual void score_candidates(std::span<double> out) = 0;
    virtual std::vector<double> sensor_statistic(std::int64_t k) const;

    DetectorKind kind_;
    DetectorConfig config_;
    SensorModel model_;
    WindowState state_;
    DetectorStatus status_{};
    std::int64_t best_k_{0};
    std::vector<double> candidate_stats_;
    std::vector<double> residuals_;
    std::vector<double> scratch_;
    std::vector<double> exponents_;
};

/// Mixture GLR: max_k sum_n g(U_{n,k,t}).
class MixtureGlrDetector final : public Detector {
public:
    MixtureGlrDetector(const DetectorConfig& config, const SensorModel& model);

private:
    void score_candidates(std::span<double> out) override;
};

/// Mixture CUSUM: max_k sum_n log(1 - p0 + p0 exp[l_n(k, t, delta_n)]).
class MixtureCusumDetector final : public Detector {
public:
    MixtureCusumDetector(const DetectorConfig& config, const SensorModel& model);

private:
    void score_candidates(std::span<double> out) override;
    std::vector<double> delta_std_;  // delta_n / sigma_n
};

/// Mixture GLR with p0 replaced per sensor by the posterior mean
/// rho_n = (s_{n,t} + alpha) / (alpha + beta + 1), where
/// s_{n,t} = 1{max_k U_{n,k,t} > a}.
class AdaptiveMixtureDetector final : public Detector {
public:
    AdaptiveMixtureDetector(const DetectorConfig& config, const SensorModel& model);

    const AdaptiveState& adaptive_state() const { return adaptive_; }
    /// Posterior mean for a given indicator value.
    static double posterior_mean(int indicator, const AdaptiveParams& params);

private:
    void score_candidates(std::span<double> out) override;
    AdaptiveState adaptive_;
    std::vector<double> u_max_;
};

/// Multi-chart slope CUSUM: each sensor keeps max_k l_n(k, t, delta_n) and
/// the detector alarms when any of them reaches the (common) threshold.
/// Candidate k is scored by max_n l_n(k, t, delta_n).
class MultiChartCusumDetector final : public Detector {
public:
    MultiChartCusumDetector(const DetectorConfig& config, const SensorModel& model);

    /// max_k l_n(k, t, delta_n) for every sensor at the latest step.
    std::vector<double> sensor_cusums() const;

private:
    void score_candidates(std::span<double> out) override;
    std::vector<double> delta_std_;
};

/// Mixture procedure with the mean-shift statistic
/// U^MS_{n,k,t} = (t - k)^{-1/2} sum_{i=k+1}^{t} z_{n,i}.
class MeanShiftMixtureDetector final : public Detector {
public:
    MeanShiftMixtureDetector(const DetectorConfig& config, const SensorModel& model);

private:
    void score_candidates(std::span<double> out) override;
    std::vector<double> sensor_statistic(std::int64_t k) const override;
};

std::unique_ptr<Detector> make_detector(DetectorKind kind, const DetectorConfig& config, const SensorModel& model);

/// Index of the first maximum of `values` (earliest on ties). Throws on empty input.
std::size_t argmax_earliest(std::span<const double> values);

}  // namespace slopecpd
