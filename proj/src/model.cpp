#include "slopecpd/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "slopecpd/io.hpp"

namespace slopecpd {

SensorModel SensorModel::standard(std::size_t n_sensors) {
    return SensorModel{std::vector<double>(n_sensors, 0.0), std::vector<double>(n_sensors, 1.0)};
}

void SensorModel::validate() const {
    if (mu.empty()) {
        throw std::invalid_argument("sensor model: at least one sensor is required");
    }
    if (mu.size() != sigma.size()) {
        throw std::invalid_argument("sensor model: mu has " + std::to_string(mu.size()) + " entries but sigma has " +
                                    std::to_string(sigma.size()));
    }
    for (std::size_t n = 0; n < sigma.size(); ++n) {
        if (!(sigma[n] > 0.0) || !std::isfinite(sigma[n])) {
            throw std::invalid_argument("sensor model: sigma[" + std::to_string(n) + "] must be positive and finite");
        }
        if (!std::isfinite(mu[n])) {
            throw std::invalid_argument("sensor model: mu[" + std::to_string(n) + "] must be finite");
        }
    }
}

void ScenarioSpec::validate() const {
    if (n_sensors == 0) {
        throw std::invalid_argument("scenario: n_sensors must be at least 1");
    }
    if (affected.size() != rates.size()) {
        throw std::invalid_argument("scenario: affected and rates must have the same length");
    }
    std::vector<std::size_t> sorted = affected;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw std::invalid_argument("scenario: affected sensors must be distinct");
    }
    for (std::size_t n : affected) {
        if (n >= n_sensors) {
            throw std::invalid_argument("scenario: affected sensor index " + std::to_string(n + 1) + " outside 1.." +
                                        std::to_string(n_sensors));
        }
    }
    for (double c : rates) {
        if (!std::isfinite(c)) {
            throw std::invalid_argument("scenario: rates must be finite");
        }
    }
    if (kappa) {
        if (*kappa < 0) {
            throw std::invalid_argument("scenario: kappa must be non-negative");
        }
        if (affected.empty()) {
            throw std::invalid_argument("scenario: a change-point needs at least one affected sensor");
        }
    }
    if (horizon < 0) {
        throw std::invalid_argument("scenario: horizon must be non-negative");
    }
    if (cov) {
        const auto n = static_cast<Eigen::Index>(n_sensors);
        if (cov->rows() != n || cov->cols() != n) {
            throw std::invalid_argument("scenario: covariance must be " + std::to_string(n_sensors) + "x" +
                                        std::to_string(n_sensors));
        }
        if (!cov->isApprox(cov->transpose(), 1e-12)) {
            throw std::invalid_argument("scenario: covariance must be symmetric");
        }
    }
}

double ScenarioSpec::affected_fraction() const {
    return static_cast<double>(affected.size()) / static_cast<double>(n_sensors);
}

void standardize_into(std::span<const double> values, const SensorModel& model, std::span<double> out) {
    if (values.size() != model.size() || out.size() != model.size()) {
        throw std::invalid_argument("standardize: frame has " + std::to_string(values.size()) +
                                    " values but the sensor model has " + std::to_string(model.size()) + " sensors");
    }
    for (std::size_t n = 0; n < values.size(); ++n) {
        if (!(model.sigma[n] > 0.0)) {
            throw std::invalid_argument("standardize: sigma[" + std::to_string(n) + "] must be positive");
        }
        out[n] = (values[n] - model.mu[n]) / model.sigma[n];
    }
}

std::vector<double> standardize(const ObservationFrame& frame, const SensorModel& model) {
    std::vector<double> z(frame.values.size());
    standardize_into(frame.values, model, z);
    return z;
}

ScenarioStream::ScenarioStream(const ScenarioSpec& spec, const SensorModel& model, std::uint64_t seed,
                               std::uint64_t trial)
    : mu_(model.mu), scale_(model.sigma), drift_(spec.n_sensors, 0.0), kappa_(spec.kappa) {
    spec.validate();
    model.validate();
    if (model.size() != spec.n_sensors) {
        throw std::invalid_argument("scenario: sensor model has " + std::to_string(model.size()) +
                                    " sensors but the scenario has " + std::to_string(spec.n_sensors));
    }
    for (std::size_t j = 0; j < spec.affected.size(); ++j) {
        drift_[spec.affected[j]] = spec.rates[j];
    }
    if (spec.cov) {
        Eigen::LLT<Eigen::MatrixXd> llt(*spec.cov);
        if (llt.info() != Eigen::Success) {
            throw std::invalid_argument("scenario: covariance is not positive definite");
        }
        chol_ = llt.matrixL();
        xi_.resize(static_cast<Eigen::Index>(spec.n_sensors));
    }
    noise_.reserve(spec.n_sensors);
    for (std::size_t n = 0; n < spec.n_sensors; ++n) {
        noise_.emplace_back(seed, trial, sensor_tag(n));
    }
}

std::int64_t ScenarioStream::next_into(std::span<double> out) {
    const std::size_t n_sensors = mu_.size();
    if (out.size() != n_sensors) {
        throw std::invalid_argument("scenario: output span has the wrong length");
    }
    ++t_;
    const double elapsed = kappa_ && t_ > *kappa_ ? static_cast<double>(t_ - *kappa_) : 0.0;
    if (chol_) {
        for (std::size_t n = 0; n < n_sensors; ++n) {
            xi_[static_cast<Eigen::Index>(n)] = noise_[n].normal();
        }
        const Eigen::VectorXd e = chol_->triangularView<Eigen::Lower>() * xi_;
        for (std::size_t n = 0; n < n_sensors; ++n) {
            out[n] = mu_[n] + drift_[n] * elapsed + e[static_cast<Eigen::Index>(n)];
        }
    } else {
        for (std::size_t n = 0; n < n_sensors; ++n) {
            out[n] = mu_[n] + drift_[n] * elapsed + scale_[n] * noise_[n].normal();
        }
    }
    return t_;
}

ObservationFrame ScenarioStream::next() {
    ObservationFrame frame;
    frame.values.resize(mu_.size());
    frame.t = next_into(frame.values);
    return frame;
}

std::vector<ObservationFrame> generate_scenario(const ScenarioSpec& spec, const SensorModel& model, std::uint64_t seed) {
    ScenarioStream stream(spec, model, seed);
    std::vector<ObservationFrame> frames;
    frames.reserve(static_cast<std::size_t>(spec.horizon));
    for (std::int64_t i = 0; i < spec.horizon; ++i) {
        frames.push_back(stream.next());
    }
    return frames;
}

ScenarioFile load_scenario_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open scenario file " + path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("scenario file " + path.string() + ": " + e.what());
    }

    ScenarioFile file;
    try {
        auto& spec = file.spec;
        spec.n_sensors = doc.at("n_sensors").get<std::size_t>();
        if (doc.contains("kappa") && !doc["kappa"].is_null()) {
            spec.kappa = doc["kappa"].get<std::int64_t>();
        }
        for (auto idx : doc.value("affected", std::vector<std::int64_t>{})) {
            if (idx < 1) {
                throw std::invalid_argument("scenario: affected indices are 1-based");
            }
            spec.affected.push_back(static_cast<std::size_t>(idx - 1));
        }
        if (doc.contains("rates") && doc["rates"].is_number()) {
            spec.rates = {doc["rates"].get<double>()};
        } else {
            spec.rates = doc.value("rates", std::vector<double>{});
        }
        if (spec.rates.size() == 1 && spec.affected.size() > 1) {
            spec.rates.assign(spec.affected.size(), spec.rates.front());
        }
        spec.horizon = doc.at("horizon").get<std::int64_t>();
        file.seed = doc.value("seed", std::uint64_t{0});
        if (doc.contains("cov_path") && !doc["cov_path"].is_null()) {
            std::filesystem::path cov_path = doc["cov_path"].get<std::string>();
            if (cov_path.is_relative()) {
                cov_path = path.parent_path() / cov_path;
            }
            spec.cov = read_matrix_csv(cov_path);
        }
        file.model = SensorModel::standard(spec.n_sensors);
        if (doc.contains("mu")) {
            file.model.mu = doc["mu"].get<std::vector<double>>();
        }
        if (doc.contains("sigma")) {
            file.model.sigma = doc["sigma"].get<std::vector<double>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("scenario file " + path.string() + ": " + e.what());
    }
    file.spec.validate();
    file.model.validate();
    if (file.model.size() != file.spec.n_sensors) {
        throw std::invalid_argument("scenario file: mu/sigma length does not match n_sensors");
    }
    return file;
}

}  // namespace slopecpd
