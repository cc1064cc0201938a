// slopecpd: command-line driver for detection, calibration, simulation and
// the preprocessing / prognostics pipelines.

#include <CLI11/CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "slopecpd/calibration.hpp"
#include "slopecpd/detectors.hpp"
#include "slopecpd/io.hpp"
#include "slopecpd/model.hpp"
#include "slopecpd/montecarlo.hpp"
#include "slopecpd/preprocess.hpp"
#include "slopecpd/prognostics.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace slopecpd;

namespace {

constexpr int kExitAlarm = 0;
constexpr int kExitNoAlarm = 1;
constexpr int kExitInputError = 2;

// Raised for user-facing validation failures; reported as one JSON line.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void report_error(const std::string& kind, const std::string& message, std::optional<std::size_t> row = {}) {
    json err = {{"error", kind}, {"message", message}};
    if (row) {
        err["row"] = *row;
    }
    std::cerr << err.dump() << '\n';
}

struct DetectorOptions {
    std::string kind{"glr"};
    double p0{0.3};
    std::size_t window{200};
    std::optional<double> threshold;
    std::optional<double> arl;
    std::vector<double> nominal_rates;
    double alpha{1.0};
    double beta{1.0};
    double a{2.0};
};

void add_detector_options(CLI::App* app, DetectorOptions& o, bool with_arl) {
    app->add_option("--detector", o.kind, "glr, cusum, adaptive, multichart or meanshift")->capture_default_str();
    app->add_option("--p0", o.p0, "assumed fraction of affected sensors")->capture_default_str();
    app->add_option("--window", o.window, "window length w")->capture_default_str();
    auto* thr = app->add_option("--threshold", o.threshold, "alarm threshold b");
    if (with_arl) {
        app->add_option("--arl", o.arl, "pick b from the analytic ARL approximation (glr only)")->excludes(thr);
    }
    app->add_option("--nominal-rate", o.nominal_rates, "delta_n for the CUSUM kinds; one value is broadcast")
        ->delimiter(',');
    app->add_option("--alpha", o.alpha, "adaptive: Beta prior alpha")->capture_default_str();
    app->add_option("--beta", o.beta, "adaptive: Beta prior beta")->capture_default_str();
    app->add_option("--cutoff", o.a, "adaptive: affected cutoff a on U")->capture_default_str();
}

DetectorKind kind_of(const DetectorOptions& o) {
    try {
        return parse_detector_kind(o.kind);
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
}

DetectorConfig build_config(const DetectorOptions& o, std::size_t n_sensors, bool need_threshold = true) {
    const DetectorKind kind = kind_of(o);
    DetectorConfig c;
    c.p0 = o.p0;
    c.window = o.window;
    if (o.threshold) {
        c.threshold = *o.threshold;
    } else if (o.arl) {
        if (kind != DetectorKind::mixture_glr) {
            throw InputError("--arl calibration is only available for the glr detector");
        }
        c.threshold = solve_threshold({n_sensors, o.p0, o.window, *o.arl}).threshold;
    } else if (need_threshold) {
        throw InputError("a threshold is required (--threshold or --arl)");
    }
    if (o.nominal_rates.size() == 1) {
        c.nominal_rates.assign(n_sensors, o.nominal_rates.front());
    } else {
        c.nominal_rates = o.nominal_rates;
    }
    if (kind == DetectorKind::adaptive_mixture) {
        c.adaptive = AdaptiveParams{o.alpha, o.beta, o.a};
    }
    try {
        c.validate(kind, n_sensors);
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
    return c;
}

json config_json(const DetectorOptions& o, const DetectorConfig& c) {
    json j = {{"detector", std::string(to_string(kind_of(o)))},
              {"p0", c.p0},
              {"window", c.window},
              {"threshold", c.threshold}};
    if (!c.nominal_rates.empty()) {
        j["nominal_rates"] = c.nominal_rates;
    }
    if (c.adaptive) {
        j["alpha"] = c.adaptive->alpha;
        j["beta"] = c.adaptive->beta;
        j["cutoff"] = c.adaptive->a;
    }
    return j;
}

// 64-bit FNV-1a of the canonical JSON dump; stable across platforms.
std::string config_hash(const json& j) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : j.dump()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    std::ostringstream s;
    s << std::hex;
    s.width(16);
    s.fill('0');
    s << h;
    return s.str();
}

SensorModel load_model(const std::optional<std::string>& path, std::size_t n_sensors) {
    if (!path) {
        return SensorModel::standard(n_sensors);
    }
    SensorModel m = read_model_csv(*path);
    if (m.size() != n_sensors) {
        throw InputError("model file has " + std::to_string(m.size()) + " sensors, stream has " +
                         std::to_string(n_sensors));
    }
    return m;
}

std::ostream& open_output(const std::optional<std::string>& path, std::ofstream& file) {
    if (!path || *path == "-") {
        return std::cout;
    }
    file.open(*path);
    if (!file) {
        throw InputError("cannot write " + *path);
    }
    return file;
}

std::vector<ObservationFrame> load_stream(const std::string& path) {
    auto frames = read_stream_csv(fs::path(path));
    if (frames.empty()) {
        throw CsvError(1, "stream has no data rows");
    }
    return frames;
}

// ---------------------------------------------------------------------------

struct DetectArgs {
    std::string stream;
    std::optional<std::string> model;
    bool trace{false};
    DetectorOptions det;
};

int run_detect(const DetectArgs& args) {
    const auto frames = load_stream(args.stream);
    const std::size_t n = frames.front().values.size();
    const SensorModel model = load_model(args.model, n);
    const DetectorConfig cfg = build_config(args.det, n);
    auto det = make_detector(kind_of(args.det), cfg, model);
    for (const auto& frame : frames) {
        if (frame.t != det->window_state().time() + 1) {
            throw InputError("stream times must be consecutive from 1; got t=" + std::to_string(frame.t) +
                             " after t=" + std::to_string(det->window_state().time()));
        }
        const DetectorStatus st = det->step(frame);
        if (args.trace) {
            std::cout << json{{"t", st.t}, {"statistic", st.statistic}}.dump() << '\n';
        }
        if (st.alarmed) {
            const DetectionResult r = det->estimate_changepoint();
            std::cout << json{{"alarm", true},
                              {"stop_time", r.stop_time},
                              {"k_hat", r.k_hat},
                              {"statistic", r.statistic},
                              {"c_hat", r.c_hat},
                              {"u", r.per_sensor_u},
                              {"config", config_json(args.det, cfg)}}
                             .dump()
                      << '\n';
            return kExitAlarm;
        }
    }
    std::cout << json{{"alarm", false},
                      {"last_t", frames.back().t},
                      {"statistic", det->status().statistic},
                      {"config", config_json(args.det, cfg)}}
                     .dump()
              << '\n';
    return kExitNoAlarm;
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
    std::size_t n_sensors{0};
    double p0{0.3};
    std::size_t window{200};
    std::optional<double> arl;
    std::optional<double> threshold;
    std::optional<double> delta_sq;
    std::optional<std::size_t> affected;
};

int run_calibrate(const CalibrateArgs& a) {
    if (!a.arl && !a.threshold) {
        throw InputError("one of --arl or --threshold is required");
    }
    CalibrationResult r;
    json out;
    try {
        if (a.arl) {
            r = solve_threshold({a.n_sensors, a.p0, a.window, *a.arl});
            out["target_arl"] = *a.arl;
            out["conservative_threshold"] = conservative_threshold(*a.arl, a.n_sensors, a.window);
        } else {
            r = arl_approx({a.n_sensors, a.p0, a.window, *a.threshold});
        }
    } catch (const std::domain_error& e) {
        throw InputError(e.what());
    }
    out["n_sensors"] = a.n_sensors;
    out["p0"] = a.p0;
    out["window"] = a.window;
    out["threshold"] = r.threshold;
    out["theta"] = r.theta;
    out["psi"] = r.psi;
    out["psi_dot"] = r.psi_dot;
    out["psi_ddot"] = r.psi_ddot;
    out["gamma_coef"] = r.gamma_coef;
    out["h_factor"] = r.h_factor;
    out["integral"] = r.integral;
    out["arl"] = r.arl;
    if (a.delta_sq) {
        const EddInput in{r.threshold, a.n_sensors, a.p0, *a.delta_sq, a.affected.value_or(a.n_sensors), a.window};
        try {
            out["edd_bound"] = edd_bound(in);
            out["first_order_edd"] = first_order_edd(in);
        } catch (const std::domain_error& e) {
            throw InputError(e.what());
        }
    }
    std::cout << out.dump() << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string metric{"arl"};
    std::size_t n_sensors{100};
    std::optional<std::string> model;
    DetectorOptions det;
    std::size_t trials{500};
    std::optional<std::int64_t> cap;
    std::uint64_t seed{0};
    unsigned threads{0};
    std::size_t affected{0};
    std::vector<double> change_rates;
    std::int64_t kappa{100};
    std::vector<std::string> detectors;
    std::vector<double> thresholds;
    std::optional<double> adaptive_threshold;
    double target_arl{5000.0};
    double tolerance{0.05};
    std::optional<std::string> output;
    std::optional<std::string> trial_log;
    std::optional<std::string> scenario;
    std::optional<std::string> emit_stream;
};

struct ResultRow {
    std::string hash;
    std::string metric;
    double mean;
    std::optional<double> stderr_value;
    std::size_t trials;
    std::size_t censored;
};

void write_rows(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << "config_hash,metric,mean,stderr,trials,censored\n";
    for (const auto& r : rows) {
        out << r.hash << ',' << r.metric << ',' << format_double(r.mean) << ','
            << (r.stderr_value ? format_double(*r.stderr_value) : std::string{}) << ',' << r.trials << ','
            << r.censored << '\n';
    }
}

void log_trials(std::ofstream* log, const std::string& hash, const std::string& metric,
                const std::vector<TrialReport>& trials) {
    if (log == nullptr) {
        return;
    }
    for (const auto& t : trials) {
        *log << json{{"config_hash", hash},
                     {"metric", metric},
                     {"seed", t.seed},
                     {"trial", t.trial},
                     {"stop_time", t.stop_time},
                     {"k_hat", t.k_hat},
                     {"alarmed_before_cap", t.alarmed_before_cap}}
                    .dump()
             << '\n';
    }
}

std::string rate_label(const std::string& metric, double c) { return metric + "[c=" + format_double(c) + "]"; }

int run_simulate(const SimulateArgs& a) {
    if (a.metric == "stream") {
        if (!a.scenario || !a.emit_stream) {
            throw InputError("metric 'stream' needs --scenario and --emit-stream");
        }
        const ScenarioFile sf = load_scenario_file(*a.scenario);
        const auto frames = generate_scenario(sf.spec, sf.model, sf.seed);
        write_stream_csv(fs::path(*a.emit_stream), frames);
        return 0;
    }
    const SensorModel model = load_model(a.model, a.n_sensors);
    SimulationOptions opt;
    opt.trials = a.trials;
    opt.master_seed = a.seed;
    opt.threads = a.threads;

    std::ofstream log_file;
    std::ofstream* log = nullptr;
    if (a.trial_log) {
        log_file.open(*a.trial_log);
        if (!log_file) {
            throw InputError("cannot write " + *a.trial_log);
        }
        log = &log_file;
    }
    std::vector<ResultRow> rows;
    json base = {{"metric", a.metric}, {"n_sensors", a.n_sensors}, {"trials", a.trials}, {"seed", a.seed}};

    auto need_rates = [&] {
        if (a.change_rates.empty()) {
            throw InputError("--change-rate is required for metric " + a.metric);
        }
        if (a.affected == 0 || a.affected > a.n_sensors) {
            throw InputError("--affected must lie in [1, n_sensors]");
        }
    };

    if (a.metric == "arl" || a.metric == "edd") {
        const DetectorConfig cfg = build_config(a.det, a.n_sensors);
        const DetectorSetup setup{kind_of(a.det), cfg};
        base["detector"] = config_json(a.det, cfg);
        if (a.metric == "arl") {
            opt.cap = a.cap.value_or(100000);
            base["cap"] = opt.cap;
            const std::string h = config_hash(base);
            const SimulationRun run = simulate_arl(setup, model, opt);
            rows.push_back({h, "arl", run.stats.mean, run.stats.standard_error, run.stats.trial_count,
                            run.stats.censored_count});
            log_trials(log, h, "arl", run.trials);
        } else {
            need_rates();
            opt.cap = a.cap.value_or(100000);
            base["cap"] = opt.cap;
            base["affected"] = a.affected;
            for (double c : a.change_rates) {
                json cj = base;
                cj["change_rate"] = c;
                const std::string h = config_hash(cj);
                const SimulationRun run = simulate_edd(setup, model, {a.affected, c, 0}, opt);
                rows.push_back({h, rate_label("edd", c), run.stats.mean, run.stats.standard_error,
                                run.stats.trial_count, run.stats.censored_count});
                log_trials(log, h, rate_label("edd", c), run.trials);
            }
        }
    } else if (a.metric == "cpe") {
        need_rates();
        if (a.detectors.empty() || a.detectors.size() != a.thresholds.size()) {
            throw InputError("metric cpe needs --detectors and --thresholds of equal length");
        }
        opt.cap = a.cap.value_or(a.kappa + 100000);
        base["cap"] = opt.cap;
        base["kappa"] = a.kappa;
        base["affected"] = a.affected;
        for (double c : a.change_rates) {
            std::vector<DetectorSetup> setups;
            json dj = json::array();
            for (std::size_t d = 0; d < a.detectors.size(); ++d) {
                DetectorOptions o = a.det;
                o.kind = a.detectors[d];
                o.threshold = a.thresholds[d];
                o.arl.reset();
                if (o.nominal_rates.empty()) {
                    o.nominal_rates = {c};
                }
                const DetectorConfig cfg = build_config(o, a.n_sensors);
                setups.push_back({kind_of(o), cfg});
                dj.push_back(config_json(o, cfg));
            }
            json cj = base;
            cj["change_rate"] = c;
            cj["detectors"] = dj;
            const std::string h = config_hash(cj);
            const auto res = simulate_cpe_mse(setups, model, {a.affected, c, a.kappa}, opt);
            for (std::size_t d = 0; d < res.size(); ++d) {
                const std::string m = rate_label("mse_" + std::string(to_string(setups[d].kind)), c);
                rows.push_back({h, m, res[d].mse, res[d].standard_error, res[d].detected,
                                res[d].censored + res[d].false_alarms});
                log_trials(log, h, m, res[d].trials);
            }
        }
    } else if (a.metric == "adaptive") {
        need_rates();
        if (!a.adaptive_threshold) {
            throw InputError("metric adaptive needs --adaptive-threshold");
        }
        DetectorOptions fixed_o = a.det;
        fixed_o.kind = "glr";
        DetectorOptions adapt_o = a.det;
        adapt_o.kind = "adaptive";
        adapt_o.threshold = *a.adaptive_threshold;
        adapt_o.arl.reset();
        const DetectorConfig fc = build_config(fixed_o, a.n_sensors);
        const DetectorConfig ac = build_config(adapt_o, a.n_sensors);
        opt.cap = a.cap.value_or(100000);
        base["cap"] = opt.cap;
        base["affected"] = a.affected;
        base["fixed"] = config_json(fixed_o, fc);
        base["adaptive"] = config_json(adapt_o, ac);
        const auto table = compare_adaptive({kind_of(fixed_o), fc}, {kind_of(adapt_o), ac}, model, a.change_rates,
                                            a.affected, opt);
        for (const auto& row : table) {
            json cj = base;
            cj["change_rate"] = row.rate;
            const std::string h = config_hash(cj);
            rows.push_back({h, rate_label("edd_fixed", row.rate), row.fixed.mean, row.fixed.standard_error,
                            row.fixed.trial_count, row.fixed.censored_count});
            rows.push_back({h, rate_label("edd_adaptive", row.rate), row.adaptive.mean, row.adaptive.standard_error,
                            row.adaptive.trial_count, row.adaptive.censored_count});
        }
    } else if (a.metric == "match") {
        const DetectorConfig cfg = build_config(a.det, a.n_sensors, false);
        MatchOptions mo;
        mo.simulation = opt;
        mo.simulation.cap = a.cap.value_or(static_cast<std::int64_t>(20.0 * a.target_arl));
        mo.target_arl = a.target_arl;
        mo.tolerance = a.tolerance;
        if (a.det.threshold) {
            mo.seed_threshold = *a.det.threshold;
        } else if (kind_of(a.det) == DetectorKind::mixture_glr) {
            mo.seed_threshold = solve_threshold({a.n_sensors, a.det.p0, a.det.window, a.target_arl}).threshold;
        }
        base["detector"] = config_json(a.det, cfg);
        base["target_arl"] = a.target_arl;
        base["tolerance"] = a.tolerance;
        base["cap"] = mo.simulation.cap;
        const std::string h = config_hash(base);
        const DetectorSetup setup{kind_of(a.det), cfg};
        const auto res = match_thresholds(std::span(&setup, 1), model, mo);
        rows.push_back({h, "matched_threshold", res[0].threshold, std::nullopt, res[0].arl.trial_count, 0});
        rows.push_back({h, "arl", res[0].arl.mean, res[0].arl.standard_error, res[0].arl.trial_count,
                        res[0].arl.censored_count});
    } else {
        throw InputError("unknown metric '" + a.metric + "' (arl, edd, cpe, adaptive, match, stream)");
    }
    std::ofstream file;
    write_rows(open_output(a.output, file), rows);
    return 0;
}

// ---------------------------------------------------------------------------

struct WhitenArgs {
    std::string stream;
    std::string cov;
    std::optional<std::string> model;
    std::optional<std::string> output;
    bool inverse{false};
};

int run_whiten(const WhitenArgs& a) {
    const auto frames = load_stream(a.stream);
    const std::size_t n = frames.front().values.size();
    const Eigen::MatrixXd cov = read_matrix_csv(a.cov);
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    if (a.model) {
        const SensorModel m = load_model(a.model, n);
        mu = Eigen::Map<const Eigen::VectorXd>(m.mu.data(), static_cast<Eigen::Index>(n));
    }
    WhitenTransform tr;
    try {
        tr = build_whitener(cov, mu);
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    std::vector<ObservationFrame> out;
    out.reserve(frames.size());
    for (const auto& f : frames) {
        out.push_back(a.inverse ? unwhiten(tr, f) : whiten(tr, f));
    }
    std::ofstream file;
    write_stream_csv(open_output(a.output, file), out);
    if (!a.inverse) {
        std::cerr << "note: whitened streams mix every sensor; run the detector with --p0 1\n";
    }
    return 0;
}

struct DetrendArgs {
    std::string stream;
    std::size_t fit_horizon{0};
    std::optional<std::string> output;
    std::optional<std::string> model_out;
};

int run_detrend(const DetrendArgs& a) {
    const auto frames = load_stream(a.stream);
    LinearTrend tr;
    try {
        tr = detrend_linear(frames, a.fit_horizon);
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    std::vector<ObservationFrame> out;
    out.reserve(frames.size());
    for (const auto& f : frames) {
        out.push_back(tr.residual(f));
    }
    std::ofstream file;
    write_stream_csv(open_output(a.output, file), out);
    if (a.model_out) {
        const SensorModel m = tr.residual_model();
        if (std::any_of(m.sigma.begin(), m.sigma.end(), [](double s) { return !(s > 0.0); })) {
            throw InputError("a fitted residual standard deviation is zero; the model file would be invalid");
        }
        write_model_csv(*a.model_out, m);
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct PrognoseArgs {
    std::optional<std::string> train_dir;
    std::optional<std::string> test_dir;
    std::optional<std::string> model;
    DetectorOptions det;
    double eta{0.5};
    std::optional<std::string> output;
    std::optional<std::string> write_cohort;
    std::uint64_t seed{0};
};

std::vector<fs::path> stream_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw InputError("not a directory: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".csv" && e.path().filename() != "lives.csv") {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw InputError("no stream CSV files in " + dir.string());
    }
    return files;
}

std::map<std::string, double> read_lives(const fs::path& dir) {
    std::map<std::string, double> lives;
    const fs::path p = dir / "lives.csv";
    if (!fs::exists(p)) {
        return lives;
    }
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    if (line != "system,life") {
        throw CsvError(1, "lives.csv header must be 'system,life'");
    }
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) {
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw CsvError(row, "expected 'system,life'");
        }
        try {
            lives[line.substr(0, comma)] = std::stod(line.substr(comma + 1));
        } catch (const std::exception&) {
            throw CsvError(row, "life is not a number");
        }
    }
    return lives;
}

int write_cohort_dirs(const PrognoseArgs& a) {
    const Cohort cohort = generate_cohort(CohortSpec::standard(a.seed));
    const fs::path root(*a.write_cohort);
    fs::create_directories(root / "train");
    fs::create_directories(root / "test");
    auto name = [](std::size_t j) {
        std::ostringstream s;
        s << "system_";
        s.width(3);
        s.fill('0');
        s << j + 1;
        return s.str();
    };
    for (std::size_t j = 0; j < cohort.train.size(); ++j) {
        write_stream_csv(root / "train" / (name(j) + ".csv"), cohort.train[j].frames);
    }
    std::ofstream lives(root / "test" / "lives.csv");
    lives << "system,life\n";
    for (std::size_t j = 0; j < cohort.test.size(); ++j) {
        // Only the frames up to the alarm are used for prediction; the true
        // life goes to lives.csv.
        write_stream_csv(root / "test" / (name(j) + ".csv"), cohort.test[j].frames);
        lives << name(j) << ',' << cohort.test[j].life << '\n';
    }
    return 0;
}

int run_prognose(const PrognoseArgs& a) {
    if (a.write_cohort) {
        return write_cohort_dirs(a);
    }
    if (!a.train_dir || !a.test_dir) {
        throw InputError("--train-dir and --test-dir are required");
    }
    const auto train_files = stream_files(*a.train_dir);
    const auto test_files = stream_files(*a.test_dir);
    std::vector<std::vector<ObservationFrame>> train;
    std::vector<std::vector<ObservationFrame>> test;
    for (const auto& f : train_files) {
        train.push_back(load_stream(f.string()));
    }
    const auto lives = read_lives(*a.test_dir);
    std::vector<double> actual;
    for (const auto& f : test_files) {
        test.push_back(load_stream(f.string()));
        const auto it = lives.find(f.stem().string());
        actual.push_back(it != lives.end() ? it->second : static_cast<double>(test.back().back().t));
    }
    const std::size_t n = train.front().front().values.size();
    const SensorModel model = load_model(a.model, n);
    const DetectorConfig cfg = build_config(a.det, n);
    PrognosisReport rep;
    try {
        rep = run_prognosis(train, test, actual, kind_of(a.det), cfg, model, a.eta);
    } catch (const std::invalid_argument& e) {
        throw InputError(e.what());
    }
    std::ofstream file;
    std::ostream& out = open_output(a.output, file);
    out << "system,k_hat,predicted_life,actual_life,relative_error\n";
    std::size_t r = 0;
    for (std::size_t j = 0; j < test_files.size(); ++j) {
        out << test_files[j].stem().string() << ',';
        if (r < rep.test_index.size() && rep.test_index[r] == j) {
            const auto f = extract_features(test[j], kind_of(a.det), cfg, model);
            out << f->k_hat << ',' << format_double(rep.predicted[r]) << ',' << format_double(rep.actual[r]) << ','
                << format_double(rep.errors[r]) << '\n';
            ++r;
        } else {
            out << ",," << format_double(actual[j]) << ",\n";
        }
    }
    std::cerr << json{{"train_resolved", train.size() - rep.train_unresolved},
                      {"train_unresolved", rep.train_unresolved},
                      {"test_resolved", rep.errors.size()},
                      {"test_unresolved", rep.test_unresolved},
                      {"median_relative_error", rep.median_error},
                      {"mean_relative_error", rep.mean_error}}
                     .dump()
              << '\n';
    return 0;
}

// Replaces "--config FILE" by "--key=value" tokens placed right after the
// subcommand name, so options given on the command line take precedence.
std::vector<std::string> expand_config(int argc, char** argv) {
    std::vector<std::string> in(argv, argv + argc);
    std::vector<std::string> from_file;
    std::vector<std::string> rest;
    for (std::size_t i = 0; i < in.size(); ++i) {
        std::string path;
        if (in[i] == "--config") {
            if (i + 1 >= in.size()) {
                throw InputError("--config needs a file");
            }
            path = in[++i];
        } else if (in[i].rfind("--config=", 0) == 0) {
            path = in[i].substr(9);
        } else {
            rest.push_back(in[i]);
            continue;
        }
        std::ifstream f(path);
        if (!f) {
            throw InputError("cannot read config file " + path);
        }
        std::string line;
        std::size_t row = 0;
        while (std::getline(f, line)) {
            ++row;
            const auto hash = line.find('#');
            if (hash != std::string::npos) {
                line.erase(hash);
            }
            const auto first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos) {
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw InputError(path + ":" + std::to_string(row) + ": expected 'key = value'");
            }
            auto trim = [](std::string v) {
                const auto b = v.find_first_not_of(" \t\r\"");
                const auto e = v.find_last_not_of(" \t\r\"");
                return b == std::string::npos ? std::string{} : v.substr(b, e - b + 1);
            };
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) {
                throw InputError(path + ":" + std::to_string(row) + ": empty key");
            }
            from_file.push_back("--" + key + "=" + value);
        }
    }
    if (from_file.empty() || rest.size() < 2) {
        return rest;
    }
    std::vector<std::string> out{rest[0], rest[1]};
    out.insert(out.end(), from_file.begin(), from_file.end());
    out.insert(out.end(), rest.begin() + 2, rest.end());
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Slope change-point detection for multi-sensor streams"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "slopecpd 0.3.0");

    auto add_config = [](CLI::App* sub) {
        // Consumed by expand_config before parsing; declared for --help.
        sub->add_option("--config", "flat 'key = value' file using the long option names");
    };

    DetectArgs detect;
    auto* d = app.add_subcommand("detect", "run a detector over a stream CSV");
    add_config(d);
    d->add_option("--stream", detect.stream, "stream CSV (t,s1,...,sN)")->required();
    d->add_option("--model", detect.model, "sensor model CSV (sensor,mu,sigma); standard if omitted");
    d->add_flag("--trace", detect.trace, "emit one JSON line per step");
    add_detector_options(d, detect.det, true);

    CalibrateArgs cal;
    auto* c = app.add_subcommand("calibrate", "analytic ARL / threshold calibration");
    add_config(c);
    c->add_option("--n-sensors", cal.n_sensors)->required();
    c->add_option("--p0", cal.p0)->capture_default_str();
    c->add_option("--window", cal.window)->capture_default_str();
    auto* arl = c->add_option("--arl", cal.arl, "target ARL; solves for b");
    c->add_option("--threshold", cal.threshold, "threshold b; evaluates the ARL")->excludes(arl);
    c->add_option("--delta-sq", cal.delta_sq, "sum of c_n^2/sigma_n^2 over affected sensors, adds EDD bounds");
    c->add_option("--affected", cal.affected, "number of affected sensors for the EDD bounds");

    SimulateArgs sim;
    if (const char* env = std::getenv(kSeedEnvVar)) {
        sim.seed = std::strtoull(env, nullptr, 10);
    }
    auto* s = app.add_subcommand("simulate", "Monte Carlo ARL, EDD, estimation error and threshold matching");
    add_config(s);
    s->add_option("--metric", sim.metric, "arl, edd, cpe, adaptive, match or stream")->capture_default_str();
    s->add_option("--n-sensors", sim.n_sensors)->capture_default_str();
    s->add_option("--model", sim.model, "sensor model CSV");
    add_detector_options(s, sim.det, true);
    s->add_option("--trials", sim.trials)->capture_default_str();
    s->add_option("--cap", sim.cap, "run-length cap");
    s->add_option("--seed", sim.seed, std::string("master seed (default from ") + kSeedEnvVar + ")");
    s->add_option("--threads", sim.threads, "worker threads, 0 = all cores")->capture_default_str();
    s->add_option("--affected", sim.affected, "number of affected sensors");
    s->add_option("--change-rate", sim.change_rates, "slope(s) of the change; several give a grid")->delimiter(',');
    s->add_option("--kappa", sim.kappa, "change time for metric cpe")->capture_default_str();
    s->add_option("--detectors", sim.detectors, "detector kinds for metric cpe")->delimiter(',');
    s->add_option("--thresholds", sim.thresholds, "thresholds matching --detectors")->delimiter(',');
    s->add_option("--adaptive-threshold", sim.adaptive_threshold, "threshold of the adaptive detector");
    s->add_option("--target-arl", sim.target_arl)->capture_default_str();
    s->add_option("--tolerance", sim.tolerance, "relative ARL tolerance for metric match")->capture_default_str();
    s->add_option("--output", sim.output, "results CSV (stdout if omitted)");
    s->add_option("--trial-log", sim.trial_log, "per-trial JSON lines");
    s->add_option("--scenario", sim.scenario, "scenario JSON for metric stream");
    s->add_option("--emit-stream", sim.emit_stream, "stream CSV written by metric stream");

    WhitenArgs wh;
    auto* w = app.add_subcommand("whiten", "decorrelate a stream with a known covariance");
    add_config(w);
    w->add_option("--stream", wh.stream)->required();
    w->add_option("--cov", wh.cov, "N x N covariance CSV")->required();
    w->add_option("--model", wh.model, "sensor model CSV supplying mu");
    w->add_option("--output", wh.output);
    w->add_flag("--inverse", wh.inverse, "map a whitened stream back");

    DetrendArgs dt;
    auto* t = app.add_subcommand("detrend", "subtract a per-sensor linear fit");
    add_config(t);
    t->add_option("--stream", dt.stream)->required();
    t->add_option("--fit-horizon", dt.fit_horizon, "number of leading frames to fit")->required();
    t->add_option("--output", dt.output);
    t->add_option("--model-out", dt.model_out, "residual sensor model CSV");

    PrognoseArgs pg;
    auto* p = app.add_subcommand("prognose", "remaining-life prediction from change-point features");
    add_config(p);
    p->add_option("--train-dir", pg.train_dir, "run-to-failure training streams");
    p->add_option("--test-dir", pg.test_dir, "test streams, optional lives.csv (system,life)");
    p->add_option("--model", pg.model, "sensor model CSV");
    p->add_option("--eta", pg.eta, "log-normal scale")->capture_default_str();
    p->add_option("--output", pg.output);
    p->add_option("--write-cohort", pg.write_cohort, "write a synthetic 21-sensor cohort here and exit");
    p->add_option("--seed", pg.seed, "seed for --write-cohort");
    add_detector_options(p, pg.det, true);

    for (CLI::App* sub : app.get_subcommands({})) {
        for (CLI::Option* opt : sub->get_options()) {
            // Command-line values override config-file values.
            if (opt->get_items_expected_max() <= 1) {
                opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
            }
        }
    }

    std::vector<std::string> args;
    try {
        args = expand_config(argc, argv);
    } catch (const InputError& e) {
        report_error("config", e.what());
        return kExitInputError;
    }
    std::vector<const char*> argv2;
    for (const auto& a : args) {
        argv2.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv2.size()), argv2.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("usage", e.what());
        return kExitInputError;
    }

    try {
        if (*d) {
            return run_detect(detect);
        }
        if (*c) {
            return run_calibrate(cal);
        }
        if (*s) {
            return run_simulate(sim);
        }
        if (*w) {
            return run_whiten(wh);
        }
        if (*t) {
            return run_detrend(dt);
        }
        if (*p) {
            return run_prognose(pg);
        }
    } catch (const CsvError& e) {
        report_error("csv", e.what(), e.row());
        return kExitInputError;
    } catch (const InputError& e) {
        report_error("input", e.what());
        return kExitInputError;
    } catch (const std::invalid_argument& e) {
        report_error("input", e.what());
        return kExitInputError;
    } catch (const std::exception& e) {
        report_error("runtime", e.what());
        return kExitInputError;
    }
    return kExitInputError;
}
