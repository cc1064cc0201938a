#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>

#include "slopecpd/calibration.hpp"
#include "slopecpd/detectors.hpp"
#include "slopecpd/montecarlo.hpp"
#include "slopecpd/preprocess.hpp"
#include "slopecpd/prognostics.hpp"

namespace py = pybind11;
using namespace slopecpd;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (T, N) array with time index 1..T -> frames.
std::vector<ObservationFrame> frames_from(const Array& a) {
    if (a.ndim() != 2) {
        throw std::invalid_argument("expected a 2-D array of shape (steps, sensors)");
    }
    const auto r = a.unchecked<2>();
    std::vector<ObservationFrame> frames(static_cast<std::size_t>(r.shape(0)));
    for (py::ssize_t i = 0; i < r.shape(0); ++i) {
        auto& f = frames[static_cast<std::size_t>(i)];
        f.t = i + 1;
        f.values.resize(static_cast<std::size_t>(r.shape(1)));
        for (py::ssize_t n = 0; n < r.shape(1); ++n) {
            f.values[static_cast<std::size_t>(n)] = r(i, n);
        }
    }
    return frames;
}

Array array_from(const std::vector<ObservationFrame>& frames) {
    const std::size_t n = frames.empty() ? 0 : frames.front().values.size();
    Array out({frames.size(), n});
    auto w = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < frames.size(); ++i) {
        for (std::size_t s = 0; s < n; ++s) {
            w(static_cast<py::ssize_t>(i), static_cast<py::ssize_t>(s)) = frames[i].values[s];
        }
    }
    return out;
}

// Thin owner so Python sees one Detector class for every kind.
class PyDetector {
public:
    PyDetector(const std::string& kind, const DetectorConfig& config, const SensorModel& model)
        : det_(make_detector(parse_detector_kind(kind), config, model)) {}

    DetectorStatus step(const std::vector<double>& values) {
        return det_->step({det_->status().t + 1, values});
    }

    // Runs over the rows of `data`; returns the first alarm or None.
    std::optional<DetectionResult> run(const Array& data) {
        for (const auto& f : frames_from(data)) {
            ObservationFrame shifted{det_->status().t + 1, f.values};
            if (det_->step(shifted).alarmed) {
                return det_->estimate_changepoint();
            }
        }
        return std::nullopt;
    }

    DetectionResult estimate() const { return det_->estimate_changepoint(); }
    const DetectorStatus& status() const { return det_->status(); }
    std::int64_t best_candidate() const { return det_->best_candidate(); }
    std::vector<double> candidate_statistics() const {
        const auto s = det_->candidate_statistics();
        return {s.begin(), s.end()};
    }

private:
    std::unique_ptr<Detector> det_;
};

}  // namespace

PYBIND11_MODULE(_slopecpd, m) {
    m.doc() = "Streaming multi-sensor slope change-point detection";

    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const std::domain_error& e) {
            PyErr_SetString(PyExc_ValueError, e.what());
        }
    });

    py::class_<SensorModel>(m, "SensorModel")
        .def(py::init<>())
        .def(py::init([](std::vector<double> mu, std::vector<double> sigma) {
                 SensorModel s{std::move(mu), std::move(sigma)};
                 s.validate();
                 return s;
             }),
             py::arg("mu"), py::arg("sigma"))
        .def_static("standard", &SensorModel::standard, py::arg("n_sensors"))
        .def_readwrite("mu", &SensorModel::mu)
        .def_readwrite("sigma", &SensorModel::sigma)
        .def("__len__", &SensorModel::size);

    py::class_<AdaptiveParams>(m, "AdaptiveParams")
        .def(py::init([](double alpha, double beta, double a) { return AdaptiveParams{alpha, beta, a}; }),
             py::arg("alpha") = 1.0, py::arg("beta") = 1.0, py::arg("a") = 2.0)
        .def_readwrite("alpha", &AdaptiveParams::alpha)
        .def_readwrite("beta", &AdaptiveParams::beta)
        .def_readwrite("a", &AdaptiveParams::a);

    py::class_<DetectorConfig>(m, "DetectorConfig")
        .def(py::init([](double p0, std::size_t window, double threshold, std::vector<double> nominal_rates,
                         std::optional<AdaptiveParams> adaptive) {
                 DetectorConfig c;
                 c.p0 = p0;
                 c.window = window;
                 c.threshold = threshold;
                 c.nominal_rates = std::move(nominal_rates);
                 c.adaptive = adaptive;
                 return c;
             }),
             py::arg("p0") = 0.3, py::arg("window") = 200, py::arg("threshold") = 0.0,
             py::arg("nominal_rates") = std::vector<double>{}, py::arg("adaptive") = std::nullopt)
        .def_readwrite("p0", &DetectorConfig::p0)
        .def_readwrite("window", &DetectorConfig::window)
        .def_readwrite("threshold", &DetectorConfig::threshold)
        .def_readwrite("nominal_rates", &DetectorConfig::nominal_rates)
        .def_readwrite("adaptive", &DetectorConfig::adaptive);

    py::class_<DetectorStatus>(m, "DetectorStatus")
        .def_readonly("t", &DetectorStatus::t)
        .def_readonly("statistic", &DetectorStatus::statistic)
        .def_readonly("alarmed", &DetectorStatus::alarmed);

    py::class_<DetectionResult>(m, "DetectionResult")
        .def_readonly("stop_time", &DetectionResult::stop_time)
        .def_readonly("k_hat", &DetectionResult::k_hat)
        .def_readonly("statistic", &DetectionResult::statistic)
        .def_readonly("c_hat", &DetectionResult::c_hat)
        .def_readonly("per_sensor_u", &DetectionResult::per_sensor_u);

    py::class_<PyDetector>(m, "Detector")
        .def(py::init<const std::string&, const DetectorConfig&, const SensorModel&>(), py::arg("kind"),
             py::arg("config"), py::arg("model"))
        .def("step", &PyDetector::step, py::arg("values"))
        .def("run", &PyDetector::run, py::arg("data"))
        .def("estimate_changepoint", &PyDetector::estimate)
        .def_property_readonly("status", &PyDetector::status)
        .def_property_readonly("best_candidate", &PyDetector::best_candidate)
        .def_property_readonly("candidate_statistics", &PyDetector::candidate_statistics);

    py::class_<CalibrationResult>(m, "CalibrationResult")
        .def_readonly("threshold", &CalibrationResult::threshold)
        .def_readonly("theta", &CalibrationResult::theta)
        .def_readonly("psi", &CalibrationResult::psi)
        .def_readonly("psi_dot", &CalibrationResult::psi_dot)
        .def_readonly("psi_ddot", &CalibrationResult::psi_ddot)
        .def_readonly("gamma_coef", &CalibrationResult::gamma_coef)
        .def_readonly("arl", &CalibrationResult::arl);

    m.def(
        "solve_threshold",
        [](std::size_t n_sensors, double arl, double p0, std::size_t window) {
            return solve_threshold({n_sensors, p0, window, arl});
        },
        py::arg("n_sensors"), py::arg("arl"), py::arg("p0") = 0.3, py::arg("window") = 200);
    m.def(
        "arl_approx",
        [](std::size_t n_sensors, double threshold, double p0, std::size_t window) {
            return arl_approx({n_sensors, p0, window, threshold});
        },
        py::arg("n_sensors"), py::arg("threshold"), py::arg("p0") = 0.3, py::arg("window") = 200);
    m.def("conservative_threshold", &conservative_threshold, py::arg("gamma"), py::arg("n_sensors"),
          py::arg("window"));
    m.def(
        "edd_bound",
        [](double threshold, std::size_t n_sensors, double p0, double delta_sq, std::size_t affected,
           std::size_t window) { return edd_bound({threshold, n_sensors, p0, delta_sq, affected, window}); },
        py::arg("threshold"), py::arg("n_sensors"), py::arg("p0"), py::arg("delta_sq"), py::arg("affected"),
        py::arg("window") = 200);
    m.def(
        "first_order_edd",
        [](double threshold, std::size_t n_sensors, double p0, double delta_sq, std::size_t affected,
           std::size_t window) { return first_order_edd({threshold, n_sensors, p0, delta_sq, affected, window}); },
        py::arg("threshold"), py::arg("n_sensors"), py::arg("p0"), py::arg("delta_sq"), py::arg("affected"),
        py::arg("window") = 200);
    m.def("soft_threshold_g", py::vectorize(&soft_threshold_g), py::arg("x"), py::arg("p0"));

    m.def(
        "generate",
        [](std::size_t n_sensors, std::int64_t horizon, std::optional<std::int64_t> kappa,
           std::vector<std::size_t> affected, std::vector<double> rates, std::uint64_t seed) {
            ScenarioSpec spec;
            spec.n_sensors = n_sensors;
            spec.horizon = horizon;
            spec.kappa = kappa;
            spec.affected = std::move(affected);
            spec.rates = std::move(rates);
            if (spec.rates.size() == 1 && spec.affected.size() > 1) {
                spec.rates.assign(spec.affected.size(), spec.rates.front());
            }
            return array_from(generate_scenario(spec, SensorModel::standard(n_sensors), seed));
        },
        py::arg("n_sensors"), py::arg("horizon"), py::arg("kappa") = std::nullopt,
        py::arg("affected") = std::vector<std::size_t>{}, py::arg("rates") = std::vector<double>{},
        py::arg("seed") = 0,
        "Standard-normal sensors; affected (0-based) drift at `rates` after kappa. Returns (horizon, N).");

    py::class_<SummaryStats>(m, "SummaryStats")
        .def_readonly("mean", &SummaryStats::mean)
        .def_readonly("standard_error", &SummaryStats::standard_error)
        .def_readonly("trial_count", &SummaryStats::trial_count)
        .def_readonly("censored_count", &SummaryStats::censored_count);

    auto setup_of = [](const std::string& kind, const DetectorConfig& config) {
        return DetectorSetup{parse_detector_kind(kind), config};
    };
    auto options_of = [](std::size_t trials, std::int64_t cap, std::uint64_t seed, unsigned threads) {
        SimulationOptions o;
        o.trials = trials;
        o.cap = cap;
        o.master_seed = seed;
        o.threads = threads;
        return o;
    };
    m.def(
        "simulate_arl",
        [=](const std::string& kind, const DetectorConfig& config, std::size_t n_sensors, std::size_t trials,
            std::int64_t cap, std::uint64_t seed, unsigned threads) {
            py::gil_scoped_release release;
            return simulate_arl(setup_of(kind, config), SensorModel::standard(n_sensors),
                                options_of(trials, cap, seed, threads))
                .stats;
        },
        py::arg("kind"), py::arg("config"), py::arg("n_sensors"), py::arg("trials") = 500, py::arg("cap") = 100000,
        py::arg("seed") = 0, py::arg("threads") = 0);
    m.def(
        "simulate_edd",
        [=](const std::string& kind, const DetectorConfig& config, std::size_t n_sensors, std::size_t affected,
            double rate, std::size_t trials, std::int64_t cap, std::uint64_t seed, unsigned threads) {
            py::gil_scoped_release release;
            return simulate_edd(setup_of(kind, config), SensorModel::standard(n_sensors), {affected, rate, 0},
                                options_of(trials, cap, seed, threads))
                .stats;
        },
        py::arg("kind"), py::arg("config"), py::arg("n_sensors"), py::arg("affected"), py::arg("rate"),
        py::arg("trials") = 500, py::arg("cap") = 100000, py::arg("seed") = 0, py::arg("threads") = 0);

    m.def(
        "whiten",
        [](const Array& data, const Eigen::MatrixXd& cov, std::optional<Eigen::VectorXd> mu) {
            const Eigen::VectorXd m0 = mu.value_or(Eigen::VectorXd::Zero(cov.rows()));
            const WhitenTransform tr = build_whitener(cov, m0);
            std::vector<ObservationFrame> out;
            for (const auto& f : frames_from(data)) out.push_back(whiten(tr, f));
            return array_from(out);
        },
        py::arg("data"), py::arg("cov"), py::arg("mu") = std::nullopt);
    m.def(
        "detrend",
        [](const Array& data, std::size_t fit_horizon) {
            const auto frames = frames_from(data);
            const LinearTrend tr = detrend_linear(frames, fit_horizon);
            std::vector<ObservationFrame> out;
            for (const auto& f : frames) out.push_back(tr.residual(f));
            return py::make_tuple(array_from(out), tr.slope, tr.intercept, tr.residual_sd);
        },
        py::arg("data"), py::arg("fit_horizon"),
        "Returns (residuals, slope, intercept, residual_sd) of a per-sensor line fit on the first rows.");

    m.def("relative_error", &relative_error, py::arg("predicted"), py::arg("actual"));
    m.def(
        "fit_ttf_model",
        [](const Eigen::MatrixXd& c_hat, const Eigen::VectorXd& ttf, double eta) {
            if (c_hat.rows() != ttf.size()) {
                throw std::invalid_argument("c_hat and ttf must have the same number of rows");
            }
            std::vector<SystemFeatures> rows;
            for (Eigen::Index j = 0; j < c_hat.rows(); ++j) {
                SystemFeatures f;
                for (Eigen::Index n = 0; n < c_hat.cols(); ++n) f.c_hat.push_back(c_hat(j, n));
                f.ttf = ttf(j);
                rows.push_back(std::move(f));
            }
            const PrognosticModel pm = fit_ttf_model(rows, eta);
            return py::make_tuple(pm.beta, pm.standard_errors, pm.residual_sd);
        },
        py::arg("c_hat"), py::arg("ttf"), py::arg("eta") = 0.5,
        "Least-squares (= maximum-likelihood) fit; returns (beta, standard_errors, residual_sd).");
    m.def(
        "predict_life",
        [](std::int64_t k_hat, std::vector<double> c_hat, const Eigen::VectorXd& beta, double eta) {
            PrognosticModel pm;
            pm.beta = beta;
            pm.eta = eta;
            return predict_life({k_hat, std::move(c_hat), std::nullopt}, pm);
        },
        py::arg("k_hat"), py::arg("c_hat"), py::arg("beta"), py::arg("eta") = 0.5);
}
