#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "slopecpd/detectors.hpp"
#include "slopecpd/model.hpp"

namespace slopecpd {

struct TrialReport {
    std::uint64_t seed{0};
    std::uint64_t trial{0};
    std::int64_t stop_time{0};
    std::int64_t k_hat{0};
    bool alarmed_before_cap{false};
};

struct SummaryStats {
    double mean{0.0};
    double standard_error{0.0};
    std::size_t trial_count{0};
    std::size_t censored_count{0};
};

/// Mean and standard error of `values`; `censored` is passed through.
SummaryStats summarize(std::span<const double> values, std::size_t censored = 0);
/// Summary of the stop times in `reports`.
SummaryStats summarize(std::span<const TrialReport> reports);

struct DetectorSetup {
    DetectorKind kind{DetectorKind::mixture_glr};
    DetectorConfig config;
};

struct SimulationOptions {
    std::size_t trials{500};
    /// Run-length cap; trials that reach it without alarming are censored.
    std::int64_t cap{100000};
    std::uint64_t master_seed{0};
    /// 0 means one worker per hardware thread.
    unsigned threads{0};
};

struct SimulationRun {
    SummaryStats stats;
    std::vector<TrialReport> trials;
};

/// Runs fn(i) for i in [0, count) on a pool of worker threads. Each index is
/// processed exactly once; callers write results by index so the outcome
/// does not depend on scheduling.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

/// Run length under no change, averaged over independent null streams.
SimulationRun simulate_arl(const DetectorSetup& setup, const SensorModel& model, const SimulationOptions& options);

/// Change affecting `affected_count` sensors drawn uniformly without
/// replacement in every trial, all with slope `rate` (signal units), from
/// time `kappa` on.
struct ChangeScenario {
    std::size_t affected_count{0};
    double rate{0.0};
    std::int64_t kappa{0};
};

/// Affected subset for a trial, sorted, drawn from the trial's scenario stream.
std::vector<std::size_t> draw_affected(std::uint64_t master_seed, std::uint64_t trial, std::size_t n_sensors,
                                       std::size_t count);

/// Mean stop time for a change at time 0. Throws std::invalid_argument when
/// scenario.kappa != 0.
SimulationRun simulate_edd(const DetectorSetup& setup, const SensorModel& model, const ChangeScenario& scenario,
                           const SimulationOptions& options);

struct CpeResult {
    /// Mean of (k_hat - kappa)^2 over trials that alarmed after kappa.
    double mse{0.0};
    double standard_error{0.0};
    std::size_t detected{0};
    std::size_t false_alarms{0};
    std::size_t censored{0};
    std::vector<TrialReport> trials;
};

/// Change-point estimation error of several detectors fed identical streams.
/// Alarms at or before kappa count as false alarms and are excluded from the MSE.
std::vector<CpeResult> simulate_cpe_mse(std::span<const DetectorSetup> setups, const SensorModel& model,
                                        const ChangeScenario& scenario, const SimulationOptions& options);

struct AdaptiveComparisonRow {
    double rate{0.0};
    SummaryStats fixed;
    SummaryStats adaptive;
};

/// EDD of a fixed-p0 and an adaptive setup over a grid of rates, both with
/// `affected_count` sensors affected from time 0. Thresholds are taken from
/// the setups as given.
std::vector<AdaptiveComparisonRow> compare_adaptive(const DetectorSetup& fixed, const DetectorSetup& adaptive,
                                                    const SensorModel& model, std::span<const double> rates,
                                                    std::size_t affected_count, const SimulationOptions& options);

struct MatchOptions {
    SimulationOptions simulation;
    double target_arl{5000.0};
    /// Accepted relative deviation of the simulated ARL from the target.
    double tolerance{0.05};
    std::size_t max_iterations{60};
    /// Starting point; 10 when unset.
    std::optional<double> seed_threshold;
    double initial_step{1.0};
};

struct MatchResult {
    double threshold{0.0};
    SummaryStats arl;
    /// Number of simulated-ARL evaluations used.
    std::size_t iterations{0};
};

/// Thresholds giving simulated ARL = target (within tolerance) for every
/// setup. Each trial's stream is fixed, so ARL(b) is a monotone step
/// function of b and each evaluation only extends trials as far as needed.
/// Throws std::runtime_error when the budget runs out.
std::vector<MatchResult> match_thresholds(std::span<const DetectorSetup> setups, const SensorModel& model,
                                          const MatchOptions& options);

}  // namespace slopecpd
