#include "slopecpd/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <string>
#include <thread>

#include "slopecpd/rng.hpp"

namespace slopecpd {

SummaryStats summarize(std::span<const double> values, std::size_t censored) {
    SummaryStats s;
    s.trial_count = values.size();
    s.censored_count = censored;
    if (values.empty()) {
        s.mean = std::numeric_limits<double>::quiet_NaN();
        return s;
    }
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) {
            ss += (v - s.mean) * (v - s.mean);
        }
        s.standard_error = std::sqrt(ss / (n - 1.0) / n);
    }
    return s;
}

SummaryStats summarize(std::span<const TrialReport> reports) {
    std::vector<double> stops;
    stops.reserve(reports.size());
    std::size_t censored = 0;
    for (const auto& r : reports) {
        stops.push_back(static_cast<double>(r.stop_time));
        censored += r.alarmed_before_cap ? 0 : 1;
    }
    return summarize(stops, censored);
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (count == 0) {
        return;
    }
    unsigned workers = threads != 0 ? threads : std::max(1u, std::thread::hardware_concurrency());
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, count));
    if (workers == 1) {
        for (std::size_t i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) {
                return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
                next.store(count);
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (unsigned i = 1; i < workers; ++i) {
        pool.emplace_back(work);
    }
    work();
    for (auto& th : pool) {
        th.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

namespace {

void check_options(const SimulationOptions& o) {
    if (o.trials == 0) {
        throw std::invalid_argument("trials must be positive");
    }
    if (o.cap < 1) {
        throw std::invalid_argument("cap must be at least 1");
    }
}

ScenarioSpec null_spec(std::size_t n) {
    ScenarioSpec spec;
    spec.n_sensors = n;
    return spec;
}

ScenarioSpec change_spec(std::size_t n, const ChangeScenario& sc, std::uint64_t seed, std::uint64_t trial) {
    if (sc.affected_count > n) {
        throw std::invalid_argument("affected_count exceeds the number of sensors");
    }
    ScenarioSpec spec;
    spec.n_sensors = n;
    spec.kappa = sc.kappa;
    spec.affected = draw_affected(seed, trial, n, sc.affected_count);
    spec.rates.assign(spec.affected.size(), sc.rate);
    return spec;
}

// Feeds one stream to a detector until it alarms or reaches the cap.
TrialReport run_trial(const DetectorSetup& setup, const SensorModel& model, const ScenarioSpec& spec,
                      std::uint64_t seed, std::uint64_t trial, std::int64_t cap) {
    auto det = make_detector(setup.kind, setup.config, model);
    ScenarioStream stream(spec, model, seed, trial);
    std::vector<double> y(model.size());
    std::vector<double> z(model.size());
    TrialReport rep{seed, trial, cap, 0, false};
    for (std::int64_t t = 1; t <= cap; ++t) {
        stream.next_into(y);
        standardize_into(y, model, z);
        if (det->step_standardized(z).alarmed) {
            rep.stop_time = t;
            rep.k_hat = det->best_candidate();
            rep.alarmed_before_cap = true;
            break;
        }
    }
    return rep;
}

SimulationRun run_many(const DetectorSetup& setup, const SensorModel& model, const SimulationOptions& options,
                       const std::function<ScenarioSpec(std::uint64_t)>& spec_for) {
    check_options(options);
    model.validate();
    setup.config.validate(setup.kind, model.size());
    SimulationRun run;
    run.trials.resize(options.trials);
    parallel_for(options.trials, options.threads, [&](std::size_t i) {
        run.trials[i] = run_trial(setup, model, spec_for(i), options.master_seed, i, options.cap);
    });
    run.stats = summarize(run.trials);
    return run;
}

}  // namespace

std::vector<std::size_t> draw_affected(std::uint64_t master_seed, std::uint64_t trial, std::size_t n_sensors,
                                       std::size_t count) {
    if (count > n_sensors) {
        throw std::invalid_argument("cannot draw more affected sensors than there are sensors");
    }
    RandomStream rs(master_seed, trial, kScenarioTag);
    std::vector<std::size_t> idx(n_sensors);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates: the first `count` entries are a uniform subset.
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rs.below(n_sensors - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

SimulationRun simulate_arl(const DetectorSetup& setup, const SensorModel& model, const SimulationOptions& options) {
    const ScenarioSpec spec = null_spec(model.size());
    return run_many(setup, model, options, [&](std::uint64_t) { return spec; });
}

SimulationRun simulate_edd(const DetectorSetup& setup, const SensorModel& model, const ChangeScenario& scenario,
                           const SimulationOptions& options) {
    if (scenario.kappa != 0) {
        throw std::invalid_argument("simulate_edd requires a change at time 0");
    }
    return run_many(setup, model, options, [&](std::uint64_t trial) {
        return change_spec(model.size(), scenario, options.master_seed, trial);
    });
}

std::vector<CpeResult> simulate_cpe_mse(std::span<const DetectorSetup> setups, const SensorModel& model,
                                        const ChangeScenario& scenario, const SimulationOptions& options) {
    check_options(options);
    model.validate();
    if (scenario.kappa < 1) {
        throw std::invalid_argument("change-point estimation needs kappa >= 1");
    }
    for (const auto& s : setups) {
        s.config.validate(s.kind, model.size());
    }
    const std::size_t m = setups.size();
    // reports[i * m + d]: trial i, detector d
    std::vector<TrialReport> reports(options.trials * m);
    parallel_for(options.trials, options.threads, [&](std::size_t i) {
        const ScenarioSpec spec = change_spec(model.size(), scenario, options.master_seed, i);
        ScenarioStream stream(spec, model, options.master_seed, i);
        std::vector<std::unique_ptr<Detector>> dets;
        for (const auto& s : setups) {
            dets.push_back(make_detector(s.kind, s.config, model));
        }
        for (std::size_t d = 0; d < m; ++d) {
            reports[i * m + d] = TrialReport{options.master_seed, i, options.cap, 0, false};
        }
        std::vector<double> y(model.size());
        std::vector<double> z(model.size());
        std::size_t running = m;
        for (std::int64_t t = 1; t <= options.cap && running > 0; ++t) {
            stream.next_into(y);
            standardize_into(y, model, z);
            for (std::size_t d = 0; d < m; ++d) {
                TrialReport& rep = reports[i * m + d];
                if (rep.alarmed_before_cap) {
                    continue;
                }
                if (dets[d]->step_standardized(z).alarmed) {
                    rep.stop_time = t;
                    rep.k_hat = dets[d]->best_candidate();
                    rep.alarmed_before_cap = true;
                    --running;
                }
            }
        }
    });
    std::vector<CpeResult> out(m);
    for (std::size_t d = 0; d < m; ++d) {
        std::vector<double> sq;
        for (std::size_t i = 0; i < options.trials; ++i) {
            const TrialReport& rep = reports[i * m + d];
            out[d].trials.push_back(rep);
            if (!rep.alarmed_before_cap) {
                ++out[d].censored;
            } else if (rep.stop_time <= scenario.kappa) {
                ++out[d].false_alarms;
            } else {
                const double e = static_cast<double>(rep.k_hat - scenario.kappa);
                sq.push_back(e * e);
            }
        }
        const SummaryStats s = summarize(sq);
        out[d].mse = s.mean;
        out[d].standard_error = s.standard_error;
        out[d].detected = sq.size();
    }
    return out;
}

std::vector<AdaptiveComparisonRow> compare_adaptive(const DetectorSetup& fixed, const DetectorSetup& adaptive,
                                                    const SensorModel& model, std::span<const double> rates,
                                                    std::size_t affected_count, const SimulationOptions& options) {
    std::vector<AdaptiveComparisonRow> rows;
    for (double c : rates) {
        const ChangeScenario sc{affected_count, c, 0};
        AdaptiveComparisonRow row;
        row.rate = c;
        row.fixed = simulate_edd(fixed, model, sc, options).stats;
        row.adaptive = simulate_edd(adaptive, model, sc, options).stats;
        rows.push_back(row);
    }
    return rows;
}

namespace {

// One null trial whose statistic path is extended on demand. Alarm times for
// any threshold follow from the record values of the running maximum.
class RecordTrial {
public:
    RecordTrial(const DetectorSetup& setup, const SensorModel& model, std::uint64_t seed, std::uint64_t trial)
        : det_(make_detector(setup.kind, setup.config, model)),
          stream_(null_spec(model.size()), model, seed, trial),
          model_(&model),
          y_(model.size()),
          z_(model.size()) {}

    // First time the statistic reaches b if that happens by `horizon`.
    std::optional<std::int64_t> stop_within(double b, std::int64_t horizon) {
        auto it = std::lower_bound(records_.begin(), records_.end(), b,
                                   [](const Record& r, double v) { return r.value < v; });
        if (it != records_.end()) {
            return it->t <= horizon ? std::optional(it->t) : std::nullopt;
        }
        while (t_ < horizon) {
            stream_.next_into(y_);
            standardize_into(y_, *model_, z_);
            const double s = det_->step_standardized(z_).statistic;
            ++t_;
            if (records_.empty() || s > records_.back().value) {
                records_.push_back({t_, s});
                if (s >= b) {
                    return t_;
                }
            }
        }
        return std::nullopt;
    }

private:
    struct Record {
        std::int64_t t;
        double value;
    };
    std::unique_ptr<Detector> det_;
    ScenarioStream stream_;
    const SensorModel* model_;
    std::vector<double> y_;
    std::vector<double> z_;
    std::vector<Record> records_;
    std::int64_t t_{0};
};

// Mean stop time at threshold b. Trials are extended in rounds of doubling
// horizon; once the stops known so far already push the mean above
// `give_up_above`, the lower bound is returned with `exact` cleared, which
// saves running every trial of a far-too-high threshold to the cap.
struct ArlEstimate {
    SummaryStats stats;
    bool exact{true};
};

ArlEstimate evaluate_arl(std::vector<std::unique_ptr<RecordTrial>>& trials, double b, const SimulationOptions& o,
                         double give_up_above) {
    const std::size_t m = trials.size();
    std::vector<std::optional<std::int64_t>> stops(m);
    std::int64_t horizon = std::min<std::int64_t>(o.cap, std::max<std::int64_t>(
                                                             1, static_cast<std::int64_t>(give_up_above)));
    for (;;) {
        parallel_for(m, o.threads, [&](std::size_t i) {
            if (!stops[i]) {
                stops[i] = trials[i]->stop_within(b, horizon);
            }
        });
        std::vector<double> values(m);
        std::size_t open = 0;
        for (std::size_t i = 0; i < m; ++i) {
            values[i] = stops[i] ? static_cast<double>(*stops[i]) : static_cast<double>(horizon);
            open += stops[i] ? 0 : 1;
        }
        const SummaryStats s = summarize(values, horizon == o.cap ? open : 0);
        if (open == 0 || horizon == o.cap) {
            return {s, true};
        }
        if (s.mean > give_up_above) {
            return {s, false};
        }
        horizon = std::min(o.cap, 2 * horizon);
    }
}

}  // namespace

std::vector<MatchResult> match_thresholds(std::span<const DetectorSetup> setups, const SensorModel& model,
                                          const MatchOptions& options) {
    check_options(options.simulation);
    model.validate();
    if (!(options.target_arl >= 100.0)) {
        throw std::invalid_argument("target ARL must be at least 100");
    }
    if (!(options.tolerance > 0.0) || !(options.initial_step > 0.0)) {
        throw std::invalid_argument("tolerance and initial_step must be positive");
    }
    const double target = options.target_arl;
    const double lo_ok = target * (1.0 - options.tolerance);
    const double hi_ok = target * (1.0 + options.tolerance);
    std::vector<MatchResult> results;
    for (const auto& setup : setups) {
        setup.config.validate(setup.kind, model.size());
        std::vector<std::unique_ptr<RecordTrial>> trials(options.simulation.trials);
        parallel_for(trials.size(), options.simulation.threads, [&](std::size_t i) {
            trials[i] = std::make_unique<RecordTrial>(setup, model, options.simulation.master_seed, i);
        });
        MatchResult res;
        auto eval = [&](double b) {
            ++res.iterations;
            if (res.iterations > options.max_iterations) {
                throw std::runtime_error("match_thresholds: no threshold within tolerance after " +
                                         std::to_string(options.max_iterations) + " evaluations");
            }
            const ArlEstimate e = evaluate_arl(trials, b, options.simulation, hi_ok);
            return e.stats;
        };
        double b = options.seed_threshold.value_or(10.0);
        SummaryStats s = eval(b);
        if (s.mean >= lo_ok && s.mean <= hi_ok) {
            results.push_back({b, s, res.iterations});
            continue;
        }
        // Expand from the seed until the target is bracketed.
        double lo = b;
        double hi = b;
        double step = options.initial_step;
        bool done = false;
        if (s.mean < lo_ok) {
            for (;;) {
                lo = hi;
                hi = lo + step;
                step *= 2.0;
                s = eval(hi);
                if (s.mean >= lo_ok) {
                    break;
                }
            }
            b = hi;
        } else {
            for (;;) {
                hi = lo;
                lo = hi - step;
                step *= 2.0;
                s = eval(lo);
                if (s.mean <= hi_ok) {
                    break;
                }
            }
            b = lo;
        }
        done = s.mean >= lo_ok && s.mean <= hi_ok;
        while (!done) {
            if (hi - lo <= 1e-9 * std::max(1.0, std::abs(hi))) {
                // One trial's record sits right at the boundary and the mean jumps over the window.
                throw std::runtime_error("match_thresholds: simulated ARL jumps across the tolerance window near b = " +
                                         std::to_string(hi) + "; use more trials or a wider tolerance");
            }
            b = 0.5 * (lo + hi);
            s = eval(b);
            if (s.mean < lo_ok) {
                lo = b;
            } else if (s.mean > hi_ok) {
                hi = b;
            } else {
                done = true;
            }
        }
        results.push_back({b, s, res.iterations});
    }
    return results;
}

}  // namespace slopecpd
