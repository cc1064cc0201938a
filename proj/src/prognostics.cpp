#include "slopecpd/prognostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "slopecpd/montecarlo.hpp"
#include "slopecpd/rng.hpp"

namespace slopecpd {

std::optional<SystemFeatures> extract_features(std::span<const ObservationFrame> stream, DetectorKind kind,
                                               const DetectorConfig& config, const SensorModel& model) {
    auto det = make_detector(kind, config, model);
    for (const auto& frame : stream) {
        if (det->step(frame).alarmed) {
            const DetectionResult r = det->estimate_changepoint();
            return SystemFeatures{r.k_hat, r.c_hat, std::nullopt};
        }
    }
    return std::nullopt;
}

double PrognosticModel::location(const SystemFeatures& f) const {
    if (static_cast<Eigen::Index>(f.c_hat.size()) + 1 != beta.size()) {
        throw std::invalid_argument("feature count does not match the model");
    }
    double pi = beta(0);
    for (std::size_t n = 0; n < f.c_hat.size(); ++n) {
        pi += beta(static_cast<Eigen::Index>(n) + 1) * f.c_hat[n];
    }
    return pi;
}

namespace {

Eigen::MatrixXd design(std::span<const SystemFeatures> rows) {
    const std::size_t n = rows.front().c_hat.size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(n + 1));
    for (std::size_t j = 0; j < rows.size(); ++j) {
        if (rows[j].c_hat.size() != n) {
            throw std::invalid_argument("systems have different feature counts");
        }
        const auto r = static_cast<Eigen::Index>(j);
        x(r, 0) = 1.0;
        for (std::size_t s = 0; s < n; ++s) {
            x(r, static_cast<Eigen::Index>(s) + 1) = rows[j].c_hat[s];
        }
    }
    return x;
}

double log_ttf(const SystemFeatures& f) {
    if (!f.ttf || !(*f.ttf > 0.0)) {
        throw std::invalid_argument("training system lacks a positive ttf");
    }
    return std::log(*f.ttf);
}

}  // namespace

PrognosticModel fit_ttf_model(std::span<const SystemFeatures> training, double eta) {
    if (!(eta > 0.0)) {
        throw std::invalid_argument("eta must be positive");
    }
    if (training.empty()) {
        throw std::invalid_argument("no training systems");
    }
    const std::size_t n = training.front().c_hat.size();
    if (training.size() < n + 2) {
        throw std::invalid_argument("need at least " + std::to_string(n + 2) + " resolved training systems, got " +
                                    std::to_string(training.size()));
    }
    const Eigen::MatrixXd x = design(training);
    Eigen::VectorXd y(x.rows());
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
        y(j) = log_ttf(training[static_cast<std::size_t>(j)]);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(1e-10);
    if (qr.rank() < x.cols()) {
        throw std::invalid_argument("feature matrix is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                                    std::to_string(x.cols()) + ")");
    }
    PrognosticModel m;
    m.eta = eta;
    m.beta = qr.solve(y);
    m.training_count = training.size();
    const Eigen::VectorXd resid = y - x * m.beta;
    const double dof = static_cast<double>(x.rows() - x.cols());
    m.residual_sd = dof > 0 ? std::sqrt(resid.squaredNorm() / dof) : 0.0;
    const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
    m.standard_errors = m.residual_sd * xtx_inv.diagonal().cwiseSqrt();
    return m;
}

double ttf_log_likelihood(const Eigen::VectorXd& beta, double eta, std::span<const SystemFeatures> training) {
    PrognosticModel m;
    m.beta = beta;
    m.eta = eta;
    double ll = 0.0;
    for (const auto& f : training) {
        const double ly = log_ttf(f);
        const double r = (ly - m.location(f)) / eta;
        ll += -ly - std::log(eta) - 0.5 * std::log(2.0 * std::numbers::pi) - 0.5 * r * r;
    }
    return ll;
}

double predict_life(const SystemFeatures& features, const PrognosticModel& model) {
    return static_cast<double>(features.k_hat) + std::exp(model.location(features) + 0.5 * model.eta * model.eta);
}

double relative_error(double predicted, double actual) {
    if (!(actual > 0.0)) {
        throw std::invalid_argument("actual life must be positive");
    }
    return std::abs(predicted - actual) / actual;
}

CohortSpec CohortSpec::standard(std::uint64_t seed) {
    CohortSpec spec;
    spec.seed = seed;
    spec.beta.resize(static_cast<Eigen::Index>(spec.n_sensors) + 1);
    const double mean_rate = 0.5 * (spec.rate_lo + spec.rate_hi);
    double shift = 0.0;
    for (std::size_t n = 0; n < spec.n_sensors; ++n) {
        const double b = -1.0 - static_cast<double>(n % 3);
        spec.beta(static_cast<Eigen::Index>(n) + 1) = b;
        shift += b * spec.affected_prob * mean_rate;
    }
    // Typical TTF around 100 steps.
    spec.beta(0) = std::log(100.0) - shift;
    return spec;
}

Cohort generate_cohort(const CohortSpec& spec) {
    if (spec.beta.size() != static_cast<Eigen::Index>(spec.n_sensors) + 1) {
        throw std::invalid_argument("cohort beta must have n_sensors + 1 entries");
    }
    if (!(spec.eta > 0.0) || spec.kappa_min < 0 || spec.kappa_max < spec.kappa_min) {
        throw std::invalid_argument("invalid cohort parameters");
    }
    const SensorModel model = SensorModel::standard(spec.n_sensors);
    auto make = [&](std::uint64_t index) {
        RandomStream rs(spec.seed, index, kScenarioTag);
        SyntheticSystem sys;
        sys.kappa = spec.kappa_min +
                    static_cast<std::int64_t>(rs.below(static_cast<std::uint64_t>(spec.kappa_max - spec.kappa_min + 1)));
        sys.rates.assign(spec.n_sensors, 0.0);
        ScenarioSpec sc;
        sc.n_sensors = spec.n_sensors;
        sc.kappa = sys.kappa;
        double pi = spec.beta(0);
        for (std::size_t n = 0; n < spec.n_sensors; ++n) {
            const bool hit = rs.uniform() < spec.affected_prob;
            const double c = spec.rate_lo + (spec.rate_hi - spec.rate_lo) * rs.uniform();
            if (hit) {
                sys.rates[n] = c;
                sc.affected.push_back(n);
                sc.rates.push_back(c);
                pi += spec.beta(static_cast<Eigen::Index>(n) + 1) * c;
            }
        }
        const double ttf = std::exp(pi + spec.eta * rs.normal());
        sys.life = sys.kappa + static_cast<std::int64_t>(std::ceil(ttf));
        sc.horizon = sys.life;
        ScenarioStream stream(sc, model, spec.seed, index);
        for (std::int64_t t = 1; t <= sys.life; ++t) {
            sys.frames.push_back(stream.next());
        }
        return sys;
    };
    Cohort cohort;
    for (std::size_t j = 0; j < spec.n_train; ++j) {
        cohort.train.push_back(make(j));
    }
    for (std::size_t j = 0; j < spec.n_test; ++j) {
        cohort.test.push_back(make(spec.n_train + j));
    }
    return cohort;
}

PrognosisReport run_prognosis(std::span<const std::vector<ObservationFrame>> train,
                              std::span<const std::vector<ObservationFrame>> test,
                              std::span<const double> test_lives, DetectorKind kind, const DetectorConfig& config,
                              const SensorModel& model, double eta) {
    if (test_lives.size() != test.size()) {
        throw std::invalid_argument("need one actual life per test system");
    }
    for (const auto& frames : train) {
        if (frames.empty()) {
            throw std::invalid_argument("empty training stream");
        }
    }
    auto extract_all = [&](std::span<const std::vector<ObservationFrame>> systems) {
        std::vector<std::optional<SystemFeatures>> out(systems.size());
        parallel_for(systems.size(), 0,
                     [&](std::size_t j) { out[j] = extract_features(systems[j], kind, config, model); });
        return out;
    };
    PrognosisReport rep;
    std::vector<SystemFeatures> rows;
    const auto train_features = extract_all(train);
    for (std::size_t j = 0; j < train.size(); ++j) {
        if (!train_features[j]) {
            ++rep.train_unresolved;
            continue;
        }
        SystemFeatures f = *train_features[j];
        f.ttf = static_cast<double>(train[j].back().t - f.k_hat);
        rows.push_back(std::move(f));
    }
    rep.model = fit_ttf_model(rows, eta);
    const auto test_features = extract_all(test);
    for (std::size_t j = 0; j < test.size(); ++j) {
        const auto& f = test_features[j];
        if (!f) {
            ++rep.test_unresolved;
            continue;
        }
        const double pred = predict_life(*f, rep.model);
        rep.test_index.push_back(j);
        rep.predicted.push_back(pred);
        rep.actual.push_back(test_lives[j]);
        rep.errors.push_back(relative_error(pred, test_lives[j]));
    }
    if (!rep.errors.empty()) {
        std::vector<double> sorted = rep.errors;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t m = sorted.size();
        rep.median_error = m % 2 == 1 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
        double sum = 0.0;
        for (double e : sorted) {
            sum += e;
        }
        rep.mean_error = sum / static_cast<double>(m);
    }
    return rep;
}

}  // namespace slopecpd
