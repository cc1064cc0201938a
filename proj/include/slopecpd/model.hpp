#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "slopecpd/rng.hpp"

namespace slopecpd {

/// Known pre-change mean and standard deviation of every sensor.
struct SensorModel {
    std::vector<double> mu;
    std::vector<double> sigma;

    /// mu = 0, sigma = 1 for `n_sensors` sensors.
    static SensorModel standard(std::size_t n_sensors);

    std::size_t size() const { return mu.size(); }
    /// Throws std::invalid_argument unless lengths agree, N >= 1 and every sigma > 0.
    void validate() const;
};

/// One time step of raw readings. `t` is 1-based.
struct ObservationFrame {
    std::int64_t t{0};
    std::vector<double> values;
};

/// Ground-truth generative description of a synthetic stream.
///
/// Sensors in `affected` are 0-based here (files use 1-based indices). With
/// `kappa` unset no change ever happens; otherwise affected sensor n has mean
/// mu_n + rates[j] * (i - kappa) for i > kappa, where j is n's position in
/// `affected`.
struct ScenarioSpec {
    std::size_t n_sensors{0};
    std::optional<std::int64_t> kappa;
    std::vector<std::size_t> affected;
    std::vector<double> rates;
    /// Full pre-change covariance (signal units). Replaces diag(sigma^2) when set.
    std::optional<Eigen::MatrixXd> cov;
    std::int64_t horizon{0};

    void validate() const;
    /// Fraction p = |affected| / N.
    double affected_fraction() const;
};

/// z_n = (y_n - mu_n) / sigma_n.
std::vector<double> standardize(const ObservationFrame& frame, const SensorModel& model);
void standardize_into(std::span<const double> values, const SensorModel& model, std::span<double> out);

/// Streaming generator for a scenario. Sensor n draws its noise from its own
/// RandomStream keyed by (seed, trial, sensor_tag(n)), so the output does not
/// depend on how trials are scheduled.
class ScenarioStream {
public:
    ScenarioStream(const ScenarioSpec& spec, const SensorModel& model, std::uint64_t seed, std::uint64_t trial = 0);

    /// Next frame, t = 1, 2, ...; does not stop at the horizon.
    ObservationFrame next();
    /// Writes the next frame's readings into `out` and returns its time index.
    std::int64_t next_into(std::span<double> out);
    std::int64_t time() const { return t_; }

private:
    std::vector<double> mu_;
    std::vector<double> scale_;  // sigma when no covariance is given
    std::optional<Eigen::MatrixXd> chol_;
    std::vector<double> drift_;  // per-sensor slope (0 for unaffected)
    std::optional<std::int64_t> kappa_;
    std::vector<RandomStream> noise_;
    Eigen::VectorXd xi_;
    std::int64_t t_{0};
};

/// Frames 1..spec.horizon.
std::vector<ObservationFrame> generate_scenario(const ScenarioSpec& spec, const SensorModel& model, std::uint64_t seed);

/// Scenario config file (JSON). Keys: n_sensors, kappa (integer or null),
/// affected (1-based list), rates (list, or one number for all), cov_path (CSV, relative to the file),
/// horizon, seed; optional mu and sigma lists for the sensor model.
struct ScenarioFile {
    ScenarioSpec spec;
    SensorModel model;
    std::uint64_t seed{0};
};
ScenarioFile load_scenario_file(const std::filesystem::path& path);

}  // namespace slopecpd
