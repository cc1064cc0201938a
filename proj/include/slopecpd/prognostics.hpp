#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "slopecpd/detectors.hpp"
#include "slopecpd/model.hpp"

namespace slopecpd {

struct SystemFeatures {
    std::int64_t k_hat{0};
    std::vector<double> c_hat;
    /// Observed time-to-failure after k_hat (training systems only).
    std::optional<double> ttf;
};

/// Runs the detector over one system's stream and reads k_hat and the slope
/// estimates at the first alarm. Returns nullopt when the stream ends
/// without an alarm (the system is unresolved).
std::optional<SystemFeatures> extract_features(std::span<const ObservationFrame> stream, DetectorKind kind,
                                               const DetectorConfig& config, const SensorModel& model);

/// Log location-normal time-to-failure model:
/// P{Y <= y} = Phi((log y - pi) / eta), pi = beta_0 + sum_n beta_n c_hat_n.
struct PrognosticModel {
    Eigen::VectorXd beta;
    double eta{0.5};
    /// Standard errors of beta from the fit residuals.
    Eigen::VectorXd standard_errors;
    double residual_sd{0.0};
    std::size_t training_count{0};

    double location(const SystemFeatures& f) const;
};

/// Maximum-likelihood beta for fixed eta, which is least squares of
/// log(ttf) on [1, c_hat]. Throws std::invalid_argument with fewer than
/// N + 2 systems, a missing or non-positive ttf, eta <= 0, or a
/// rank-deficient design.
PrognosticModel fit_ttf_model(std::span<const SystemFeatures> training, double eta);

/// Log-likelihood of beta, eta on training systems.
double ttf_log_likelihood(const Eigen::VectorXd& beta, double eta, std::span<const SystemFeatures> training);

/// k_hat + exp(pi + eta^2 / 2), the change-point plus the mean TTF.
double predict_life(const SystemFeatures& features, const PrognosticModel& model);

/// |predicted - actual| / actual. Throws std::invalid_argument for actual <= 0.
double relative_error(double predicted, double actual);

/// Synthetic run-to-failure cohort. Each system changes at kappa, uniform on
/// [kappa_min, kappa_max]; each sensor is affected with probability
/// affected_prob with slope uniform on [rate_lo, rate_hi]; the TTF is
/// lognormal with location beta_0 + sum beta_n c_n and scale eta, and the
/// stream stops at the failure time kappa + ceil(TTF).
struct CohortSpec {
    std::size_t n_sensors{21};
    std::size_t n_train{100};
    std::size_t n_test{100};
    Eigen::VectorXd beta;
    double eta{0.1};
    std::int64_t kappa_min{100};
    std::int64_t kappa_max{200};
    double affected_prob{0.5};
    double rate_lo{0.02};
    double rate_hi{0.12};
    std::uint64_t seed{0};

    /// 21 sensors, beta_n = -1 - (n mod 3), beta_0 set so a typical TTF is about 100.
    static CohortSpec standard(std::uint64_t seed);
};

struct SyntheticSystem {
    std::vector<ObservationFrame> frames;
    std::int64_t kappa{0};
    std::vector<double> rates;
    std::int64_t life{0};
};

struct Cohort {
    std::vector<SyntheticSystem> train;
    std::vector<SyntheticSystem> test;
};

Cohort generate_cohort(const CohortSpec& spec);

struct PrognosisReport {
    PrognosticModel model;
    std::size_t train_unresolved{0};
    std::size_t test_unresolved{0};
    /// One entry per resolved test system, in cohort order.
    std::vector<std::size_t> test_index;
    std::vector<double> predicted;
    std::vector<double> actual;
    std::vector<double> errors;
    double median_error{0.0};
    double mean_error{0.0};
};

/// Trains on `train` (life = last frame time) and predicts `test` lives.
/// `test_lives` gives the actual whole life of each test system.
PrognosisReport run_prognosis(std::span<const std::vector<ObservationFrame>> train,
                              std::span<const std::vector<ObservationFrame>> test,
                              std::span<const double> test_lives, DetectorKind kind, const DetectorConfig& config,
                              const SensorModel& model, double eta);

}  // namespace slopecpd
