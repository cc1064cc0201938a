// One PASS/FAIL line per acceptance criterion. Tolerances are pinned here.
//
// SLOPECPD_ACCEPTANCE_ONLY=2,5 restricts the run to the listed criteria.
// SLOPECPD_ACCEPTANCE_TRIALS overrides the Monte Carlo trial count for quick
// exploratory runs; such a run reports itself as non-binding and fails.
//
// Exit status is 1 when any criterion fails. With --report FILE the verdicts
// are also written to FILE and the exit status only flags a harness error
// (an exception inside a criterion), so ctest records the run without
// treating a FAIL verdict as a broken build.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "slopecpd/calibration.hpp"
#include "slopecpd/detectors.hpp"
#include "slopecpd/local_stats.hpp"
#include "slopecpd/montecarlo.hpp"
#include "slopecpd/preprocess.hpp"
#include "slopecpd/prognostics.hpp"

using namespace slopecpd;

namespace {

// Tolerances.
constexpr double kTable1ThresholdTol = 0.5;      // C1, absolute
constexpr double kArlTol500 = 0.10;              // C2 with 500 trials
constexpr double kEddBoundTol = 0.15;            // C3, |sim / bound - 1|
constexpr double kEddBoundExcess = 0.10;         // C3, sim <= (1 + x) bound
constexpr double kTable2Tol = 0.15;              // C4, relative
constexpr double kMseApproxTol = 0.10;           // C5, "<= or about": ms <= (1 + x) multichart
constexpr double kMatchTol = 0.02;               // ARL matching, relative
constexpr double kPrognosticSe = 4.0;            // C7, standard errors
constexpr double kPrognosticMedian = 0.15;       // C7, median relative error at the largest b

constexpr std::size_t kTrials = 500;
constexpr std::int64_t kCap = 100000;
constexpr std::uint64_t kSeed = 20160;

struct Outcome {
    bool pass{false};
    std::string detail;
};

std::size_t g_trials = kTrials;
bool g_trials_overridden = false;

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

SimulationOptions sim_options(std::uint64_t seed) {
    SimulationOptions o;
    o.trials = g_trials;
    o.cap = kCap;
    o.master_seed = seed;
    return o;
}

DetectorSetup glr_setup(double p0, double b) {
    DetectorSetup s;
    s.kind = DetectorKind::mixture_glr;
    s.config.p0 = p0;
    s.config.window = 200;
    s.config.threshold = b;
    return s;
}

// Threshold matching is the expensive part, so matched thresholds are shared
// between criteria that use the same detector.
class MatchCache {
public:
    double threshold(const DetectorSetup& setup, std::size_t n_sensors, std::uint64_t seed) {
        const std::string key = key_of(setup, n_sensors, seed);
        if (auto it = cache_.find(key); it != cache_.end()) {
            return it->second.threshold;
        }
        MatchOptions mo;
        mo.simulation = sim_options(seed);
        mo.target_arl = 5000.0;
        mo.tolerance = g_trials >= kTrials ? kMatchTol : 0.10;
        if (setup.kind == DetectorKind::mixture_glr) {
            mo.seed_threshold = solve_threshold({n_sensors, setup.config.p0, setup.config.window, 5000.0}).threshold;
            mo.initial_step = 0.25;
        }
        const auto res = match_thresholds(std::span(&setup, 1), SensorModel::standard(n_sensors), mo);
        std::fprintf(stderr, "  matched %s%s: b=%.4f ARL=%.1f (se %.1f) after %zu evaluations\n",
                     std::string(to_string(setup.kind)).c_str(),
                     setup.config.nominal_rates.empty() ? ""
                                                        : fmt("[delta=%g]", setup.config.nominal_rates.front()).c_str(),
                     res[0].threshold, res[0].arl.mean, res[0].arl.standard_error, res[0].iterations);
        cache_[key] = res[0];
        return res[0].threshold;
    }

private:
    static std::string key_of(const DetectorSetup& s, std::size_t n, std::uint64_t seed) {
        std::ostringstream k;
        k << to_string(s.kind) << '|' << s.config.p0 << '|' << s.config.window << '|' << n << '|' << seed;
        for (double d : s.config.nominal_rates) k << '|' << d;
        if (s.config.adaptive) k << '|' << s.config.adaptive->alpha << ',' << s.config.adaptive->beta << ','
                                 << s.config.adaptive->a;
        return k.str();
    }
    std::map<std::string, MatchResult> cache_;
};

MatchCache g_match;

// ---------------------------------------------------------------------------

struct Table1Row {
    std::size_t n;
    double arl;
    double b;
    double sim_arl;
};
constexpr Table1Row kTable1[] = {
    {100, 5000, 46.34, 5024}, {100, 10000, 47.64, 10037}, {200, 5000, 77.04, 5035}, {200, 10000, 78.66, 10058}};

Outcome criterion1() {
    Outcome o{true, ""};
    for (const auto& row : kTable1) {
        const double b = solve_threshold({row.n, 0.3, 200, row.arl}).threshold;
        const bool ok = std::abs(b - row.b) <= kTable1ThresholdTol;
        o.pass = o.pass && ok;
        o.detail += fmt("N=%zu ARL=%g: b=%.3f (ref %.2f)%s; ", row.n, row.arl, b, row.b, ok ? "" : " OUT");
    }
    return o;
}

Outcome criterion2() {
    const double tol = g_trials >= 500 ? kArlTol500 : 0.15;
    Outcome o{true, fmt("%zu trials, tol %.0f%%: ", g_trials, 100 * tol)};
    std::uint64_t seed = kSeed + 200;
    for (const auto& row : kTable1) {
        const double b = solve_threshold({row.n, 0.3, 200, row.arl}).threshold;
        const auto run = simulate_arl(glr_setup(0.3, b), SensorModel::standard(row.n), sim_options(seed++));
        const double rel = run.stats.mean / row.sim_arl - 1.0;
        const bool ok = std::abs(rel) <= tol;
        o.pass = o.pass && ok;
        o.detail += fmt("N=%zu b=%.3f ARL=%.0f+-%.0f (ref %.0f, %+.1f%%, censored %zu)%s; ", row.n, b, run.stats.mean,
                        run.stats.standard_error, row.sim_arl, 100 * rel, run.stats.censored_count, ok ? "" : " OUT");
    }
    return o;
}

Outcome criterion3() {
    const std::size_t n = 100;
    const std::size_t affected = 30;
    const std::uint64_t seed = kSeed + 300;
    const double b = g_match.threshold(glr_setup(0.3, 0.0), n, kSeed);
    Outcome o{true, fmt("matched b=%.3f: ", b)};
    for (double c : {0.03, 0.05, 0.07, 0.09}) {
        const auto run = simulate_edd(glr_setup(0.3, b), SensorModel::standard(n), {affected, c, 0}, sim_options(seed));
        EddInput in{b, n, 0.3, static_cast<double>(affected) * c * c, affected, 200};
        const double bound = edd_bound(in);
        const double first = first_order_edd(in);
        const double rel = run.stats.mean / bound - 1.0;
        const bool ok = std::abs(rel) <= kEddBoundTol && rel <= kEddBoundExcess;
        o.pass = o.pass && ok;
        o.detail += fmt("c=%.2f EDD=%.2f+-%.2f bound=%.2f (%+.1f%%) first-order=%.2f%s; ", c, run.stats.mean,
                        run.stats.standard_error, bound, 100 * rel, first, ok ? "" : " OUT");
    }
    return o;
}

Outcome criterion4() {
    const std::size_t n = 100;
    const std::size_t affected = 10;
    DetectorSetup fixed = glr_setup(0.3, 0.0);
    DetectorSetup adaptive = glr_setup(0.3, 0.0);
    adaptive.kind = DetectorKind::adaptive_mixture;
    adaptive.config.adaptive = AdaptiveParams{1.0, 1.0, 2.0};
    fixed.config.threshold = g_match.threshold(fixed, n, kSeed);
    adaptive.config.threshold = g_match.threshold(adaptive, n, kSeed);
    const std::vector<double> rates{0.01, 0.05, 0.09};
    const double ref[3][2] = {{54.15, 38.56}, {18.75, 14.42}, {12.74, 10.13}};
    const auto rows =
        compare_adaptive(fixed, adaptive, SensorModel::standard(n), rates, affected, sim_options(kSeed + 400));
    Outcome o{true, fmt("b_fixed=%.3f b_adaptive=%.3f: ", fixed.config.threshold, adaptive.config.threshold)};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double rf = rows[i].fixed.mean / ref[i][0] - 1.0;
        const double ra = rows[i].adaptive.mean / ref[i][1] - 1.0;
        const bool ok = std::abs(rf) <= kTable2Tol && std::abs(ra) <= kTable2Tol &&
                        rows[i].adaptive.mean < rows[i].fixed.mean;
        o.pass = o.pass && ok;
        o.detail += fmt("c=%.2f fixed=%.2f (ref %.2f, %+.1f%%) adaptive=%.2f (ref %.2f, %+.1f%%)%s; ", rates[i],
                        rows[i].fixed.mean, ref[i][0], 100 * rf, rows[i].adaptive.mean, ref[i][1], 100 * ra,
                        ok ? "" : " OUT");
    }
    return o;
}

Outcome criterion5() {
    const std::size_t n = 100;
    const std::size_t affected = 50;
    const std::int64_t kappa = 100;
    DetectorSetup glr = glr_setup(0.3, 0.0);
    DetectorSetup ms = glr_setup(0.3, 0.0);
    ms.kind = DetectorKind::meanshift_mixture;
    glr.config.threshold = g_match.threshold(glr, n, kSeed);
    ms.config.threshold = g_match.threshold(ms, n, kSeed);
    Outcome o{true, fmt("b_glr=%.3f b_ms=%.3f: ", glr.config.threshold, ms.config.threshold)};
    std::vector<double> glr_mse;
    for (double c : {0.01, 0.03, 0.05, 0.07, 0.09}) {
        // the multi-chart CUSUM is tuned to the true slope
        DetectorSetup mc = glr_setup(0.3, 0.0);
        mc.kind = DetectorKind::multichart_cusum;
        mc.config.nominal_rates.assign(n, c);
        mc.config.threshold = g_match.threshold(mc, n, kSeed);
        const std::vector<DetectorSetup> setups{glr, ms, mc};
        const auto res = simulate_cpe_mse(setups, SensorModel::standard(n), {affected, c, kappa},
                                          sim_options(kSeed + 500));
        const bool strict = res[0].mse < res[1].mse;
        const bool approx = res[1].mse <= (1.0 + kMseApproxTol) * res[2].mse;
        o.pass = o.pass && strict && approx;
        glr_mse.push_back(res[0].mse);
        o.detail += fmt("c=%.2f MSE glr=%.1f ms=%.1f mc=%.1f (b_mc=%.2f, false alarms %zu/%zu/%zu)%s; ", c,
                        res[0].mse, res[1].mse, res[2].mse, mc.config.threshold, res[0].false_alarms,
                        res[1].false_alarms, res[2].false_alarms, strict && approx ? "" : " OUT");
    }
    return o;
}

// ---------------------------------------------------------------------------
// Criterion 6: property suite with its own oracles.

struct PropertyLog {
    bool pass{true};
    std::string detail;
    void check(bool ok, const std::string& name) {
        pass = pass && ok;
        detail += name + (ok ? " ok; " : " FAILED; ");
    }
};

std::vector<std::vector<double>> gaussian_history(std::size_t steps, std::size_t n, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    std::vector<std::vector<double>> h(steps, std::vector<double>(n));
    for (auto& row : h) {
        for (auto& v : row) v = nd(gen);
    }
    return h;
}

Outcome criterion6() {
    PropertyLog log;
    const std::size_t n = 5;
    const std::size_t w = 40;
    const auto h = gaussian_history(150, n, 6);

    {
        WindowState ws(n, w);
        double worst = 0.0;
        double worst_ell = 0.0;
        bool mle_ok = true;
        for (std::size_t i = 0; i < h.size(); ++i) {
            ws.advance(h[i]);
            const auto t = static_cast<std::int64_t>(i + 1);
            for (std::int64_t k = ws.oldest_candidate(); k < t; ++k) {
                const auto wk = ws.weighted_sums(k);
                const auto u = u_stat(ws, k);
                const SensorModel m = SensorModel::standard(n);
                const auto c = slope_mle(ws, k, m);
                for (std::size_t s = 0; s < n; ++s) {
                    double direct = 0.0;
                    std::vector<double> win;
                    for (std::int64_t j = k + 1; j <= t; ++j) {
                        direct += static_cast<double>(j - k) * h[static_cast<std::size_t>(j - 1)][s];
                        win.push_back(h[static_cast<std::size_t>(j - 1)][s]);
                    }
                    worst = std::max(worst, std::abs(wk[s] - direct) / std::max(1.0, std::abs(direct)));
                    const double ell = local_loglik(win, c[s], 0.0, 1.0);
                    worst_ell = std::max(worst_ell, std::abs(ell - 0.5 * u[s] * u[s]) / std::max(1.0, ell));
                    if (t % 25 == 0 && s == 0) {
                        for (double d = -0.5; d <= 0.5; d += 0.01) {
                            mle_ok = mle_ok && local_loglik(win, c[s] + d, 0.0, 1.0) <= ell + 1e-12;
                        }
                    }
                }
            }
        }
        log.check(worst <= 1e-12, fmt("recursive W (max rel err %.1e)", worst));
        log.check(worst_ell <= 1e-10, fmt("l(c_hat)=U^2/2 (max err %.1e)", worst_ell));
        log.check(mle_ok, "MLE grid optimality");
    }

    {
        bool ok = true;
        for (double p0 : {0.01, 0.3, 0.9}) {
            for (double x = -30.0; x <= 30.0; x += 0.37) {
                const double g = soft_threshold_g(x, p0);
                ok = ok && g >= 0.0 && g <= x * x / 2.0 + 1e-12 && g == soft_threshold_g(-x, p0);
                ok = ok && g >= x * x / 2.0 + std::log(p0) - 1e-12;
            }
            const double big = soft_threshold_g(40.0, p0);
            ok = ok && std::abs(big - (800.0 + std::log(p0))) < 1e-9;
            ok = ok && std::abs(soft_threshold_g(0.0, p0)) < 1e-15;
        }
        log.check(ok, "g bounds/evenness/asymptote");
    }

    {
        DetectorConfig cfg;
        cfg.p0 = 1.0;
        cfg.window = w;
        cfg.threshold = 1e300;
        MixtureGlrDetector det(cfg, SensorModel::standard(n));
        double worst = 0.0;
        for (std::size_t i = 0; i < h.size(); ++i) {
            const double stat = det.step_standardized(h[i]).statistic;
            const auto t = static_cast<std::int64_t>(i + 1);
            double best = -std::numeric_limits<double>::infinity();
            for (std::int64_t k = std::max<std::int64_t>(0, t - static_cast<std::int64_t>(w)); k < t; ++k) {
                double chi = 0.0;
                double a = 0.0;
                for (std::int64_t j = k + 1; j <= t; ++j) a += static_cast<double>((j - k) * (j - k));
                for (std::size_t s = 0; s < n; ++s) {
                    double wsum = 0.0;
                    for (std::int64_t j = k + 1; j <= t; ++j) {
                        wsum += static_cast<double>(j - k) * h[static_cast<std::size_t>(j - 1)][s];
                    }
                    chi += wsum * wsum / a;
                }
                best = std::max(best, 0.5 * chi);
            }
            worst = std::max(worst, std::abs(stat - best) / std::max(1.0, best));
        }
        log.check(worst <= 1e-10, fmt("p0=1 chi-square reduction (%.1e)", worst));
    }

    {
        const std::size_t nn = 20;
        const SensorModel scaled{std::vector<double>(nn, 3.0), std::vector<double>(nn, 0.25)};
        bool ok = true;
        for (unsigned seed = 1; seed <= 5 && ok; ++seed) {
            const auto z = gaussian_history(3000, nn, 100 + seed);
            for (DetectorKind kind : {DetectorKind::mixture_glr, DetectorKind::meanshift_mixture}) {
                DetectorConfig cfg;
                cfg.p0 = 0.3;
                cfg.window = 50;
                cfg.threshold = 14.0;
                auto a = make_detector(kind, cfg, SensorModel::standard(nn));
                auto b = make_detector(kind, cfg, scaled);
                std::int64_t stop_a = -1, stop_b = -1;
                for (std::size_t i = 0; i < z.size() && (stop_a < 0 || stop_b < 0); ++i) {
                    ObservationFrame fa{static_cast<std::int64_t>(i + 1), z[i]};
                    ObservationFrame fb{fa.t, z[i]};
                    for (auto& v : fb.values) v = 3.0 + 0.25 * v;
                    if (stop_a < 0 && a->step(fa).alarmed) stop_a = fa.t;
                    if (stop_b < 0 && b->step(fb).alarmed) stop_b = fb.t;
                }
                ok = ok && stop_a > 0 && stop_a == stop_b;
            }
        }
        log.check(ok, "standardization invariance of stopping times");
    }

    {
        Eigen::MatrixXd cov(3, 3);
        cov << 2.0, 0.9, 0.1, 0.9, 1.5, -0.4, 0.1, -0.4, 0.7;
        const WhitenTransform tr = build_whitener(cov, Eigen::Vector3d(1.0, 2.0, 3.0));
        double worst = 0.0;
        std::mt19937_64 gen(9);
        std::uniform_real_distribution<double> ud(-50.0, 50.0);
        for (int i = 0; i < 1000; ++i) {
            const ObservationFrame f{i + 1, {ud(gen), ud(gen), ud(gen)}};
            const auto back = unwhiten(tr, whiten(tr, f));
            for (std::size_t s = 0; s < 3; ++s) worst = std::max(worst, std::abs(back.values[s] - f.values[s]));
        }
        log.check(worst <= 1e-10, fmt("whitening round trip (%.1e)", worst));
    }

    {
        double worst = 0.0;
        for (double th : {0.01, 0.2, 0.5, 0.8, 0.97}) {
            const PsiValues v = psi_and_derivatives(th, 1.0);
            const double om = 1.0 - th;
            worst = std::max({worst, std::abs(v.psi + 0.5 * std::log(om)), std::abs(v.psi_dot - 0.5 / om),
                              std::abs(v.psi_ddot - 0.5 / (om * om)),
                              std::abs(gamma_coef(th, 1.0) - 0.5 * th * th / om)});
        }
        log.check(worst <= 1e-6, fmt("p0=1 closed forms (%.1e)", worst));
    }

    {
        const long double gamma = 5000, nn = 100, ww = 200;
        const long double ref = nn / 2 - 4 * std::log(1 - std::pow(1 - 1 / gamma, 1 / ww));
        const double b = conservative_threshold(5000, 100, 200);
        log.check(std::abs(b - static_cast<double>(ref)) < 1e-9 && std::abs(b - 105.26) <= 0.05,
                  fmt("conservative_threshold=%.4f (long double %.4Lf)", b, ref));
    }
    return {log.pass, log.detail};
}

// ---------------------------------------------------------------------------

Outcome criterion7() {
    CohortSpec spec = CohortSpec::standard(kSeed + 700);
    const Cohort cohort = generate_cohort(spec);
    const SensorModel model = SensorModel::standard(spec.n_sensors);
    std::vector<std::vector<ObservationFrame>> train, test;
    std::vector<double> lives;
    for (const auto& s : cohort.train) train.push_back(s.frames);
    for (const auto& s : cohort.test) {
        test.push_back(s.frames);
        lives.push_back(static_cast<double>(s.life));
    }
    Outcome o{true, ""};
    double prev_median = std::numeric_limits<double>::infinity();
    // Slope estimates at the alarm are noisy (relative variance falls like 1/b),
    // which attenuates the fitted beta; the grid reaches far enough for that
    // bias to drop below the sampling error.
    const std::vector<double> grid{100.0, 400.0, 800.0};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        DetectorConfig cfg;
        cfg.p0 = 0.3;
        cfg.window = 200;
        cfg.threshold = grid[i];
        const PrognosisReport rep =
            run_prognosis(train, test, lives, DetectorKind::mixture_glr, cfg, model, spec.eta);
        const bool monotone = rep.median_error <= prev_median;
        prev_median = rep.median_error;
        o.pass = o.pass && monotone;
        o.detail += fmt("b=%.2f median err=%.3f mean err=%.3f unresolved %zu/%zu%s; ", cfg.threshold,
                        rep.median_error, rep.mean_error, rep.train_unresolved, rep.test_unresolved,
                        monotone ? "" : " NOT MONOTONE");
        if (i + 1 == grid.size()) {
            const bool median_ok = rep.median_error <= kPrognosticMedian;
            double worst_z = 0.0;
            for (Eigen::Index j = 0; j < spec.beta.size(); ++j) {
                worst_z = std::max(worst_z,
                                   std::abs(rep.model.beta(j) - spec.beta(j)) / rep.model.standard_errors(j));
            }
            const bool beta_ok = worst_z <= kPrognosticSe;
            o.pass = o.pass && median_ok && beta_ok;
            o.detail += fmt("largest b: median %.3f (limit %.2f)%s, worst |beta - truth|/se = %.2f (limit %.0f)%s",
                            rep.median_error, kPrognosticMedian, median_ok ? "" : " OUT", worst_z, kPrognosticSe,
                            beta_ok ? "" : " OUT");
        }
    }
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const char* report_path = nullptr;
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--report" && i + 1 < argc) {
            report_path = argv[++i];
        } else {
            std::fprintf(stderr, "usage: acceptance [--report FILE]\n");
            return 2;
        }
    }
    std::FILE* report = report_path ? std::fopen(report_path, "w") : nullptr;
    if (report_path && !report) {
        std::fprintf(stderr, "cannot open %s\n", report_path);
        return 2;
    }
    if (const char* t = std::getenv("SLOPECPD_ACCEPTANCE_TRIALS")) {
        g_trials = static_cast<std::size_t>(std::stoul(t));
        g_trials_overridden = true;
    }
    std::set<int> only;
    if (const char* s = std::getenv("SLOPECPD_ACCEPTANCE_ONLY")) {
        std::stringstream ss(s);
        std::string item;
        while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    }
    const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4,
                                                         criterion5, criterion6, criterion7};
    bool all = true;
    bool harness_error = false;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!only.empty() && !only.count(id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
            harness_error = true;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        all = all && o.pass;
        for (std::FILE* f : {stdout, report}) {
            if (!f) continue;
            std::fprintf(f, "criterion %d: %s (%.1fs) %s\n", id, o.pass ? "PASS" : "FAIL", secs, o.detail.c_str());
            std::fflush(f);
        }
    }
    if (g_trials_overridden) {
        for (std::FILE* f : {stdout, report}) {
            if (f) std::fprintf(f, "trial count overridden to %zu: results are exploratory, not binding\n", g_trials);
        }
    }
    if (report) std::fclose(report);
    if (report_path) return harness_error ? 2 : 0;
    return all && !g_trials_overridden ? 0 : 1;
}
