#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "slopecpd/local_stats.hpp"

using namespace slopecpd;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// history[i - 1][n] = z_{n,i}
std::vector<std::vector<double>> random_history(std::size_t steps, std::size_t n, unsigned seed) {
    std::mt19937 gen(seed);
    std::normal_distribution<double> nd;
    std::vector<std::vector<double>> h(steps, std::vector<double>(n));
    for (auto& row : h) {
        for (auto& v : row) {
            v = nd(gen);
        }
    }
    return h;
}

double direct_w(const std::vector<std::vector<double>>& h, std::size_t n, std::int64_t k, std::int64_t t) {
    double acc = 0.0;
    for (std::int64_t i = k + 1; i <= t; ++i) {
        acc += static_cast<double>(i - k) * h[static_cast<std::size_t>(i - 1)][n];
    }
    return acc;
}

}  // namespace

TEST_CASE("a_tau matches the sum of squares") {
    for (std::int64_t tau = 1; tau <= 500; ++tau) {
        double s = 0.0;
        for (std::int64_t i = 1; i <= tau; ++i) {
            s += static_cast<double>(i * i);
        }
        REQUIRE(a_tau(tau) == s);
    }
    REQUIRE_THROWS_AS(a_tau(0), std::invalid_argument);
}

TEST_CASE("recursive weighted sums equal the direct sums") {
    const std::size_t n = 7;
    const std::size_t w = 13;
    const auto h = random_history(60, n, 11);
    WindowState st(n, w);
    for (std::size_t step = 0; step < h.size(); ++step) {
        st.advance(h[step]);
        const std::int64_t t = st.time();
        REQUIRE(st.oldest_candidate() == std::max<std::int64_t>(0, t - static_cast<std::int64_t>(w)));
        REQUIRE(st.candidate_count() == static_cast<std::size_t>(t - st.oldest_candidate()));
        for (std::int64_t k = st.oldest_candidate(); k < t; ++k) {
            const auto ws = st.weighted_sums(k);
            for (std::size_t s = 0; s < n; ++s) {
                const double d = direct_w(h, s, k, t);
                REQUIRE(std::abs(ws[s] - d) <= 1e-12 * std::max(1.0, std::abs(d)));
            }
        }
    }
    REQUIRE_THROWS_AS(st.weighted_sums(st.time()), std::out_of_range);
    REQUIRE_THROWS_AS(st.weighted_sums(st.oldest_candidate() - 1), std::out_of_range);
    REQUIRE_THROWS_AS(st.plain_sums(st.oldest_candidate()), std::logic_error);
}

TEST_CASE("plain sums and the mean-shift statistic") {
    const auto h = random_history(30, 3, 5);
    WindowState st(3, 10, true);
    for (const auto& row : h) {
        st.advance(row);
    }
    const std::int64_t t = st.time();
    for (std::int64_t k = st.oldest_candidate(); k < t; ++k) {
        const auto v = st.plain_sums(k);
        const auto ums = mean_shift_u_stat(st, k);
        for (std::size_t s = 0; s < 3; ++s) {
            double d = 0.0;
            for (std::int64_t i = k + 1; i <= t; ++i) {
                d += h[static_cast<std::size_t>(i - 1)][s];
            }
            REQUIRE_THAT(v[s], WithinAbs(d, 1e-12));
            REQUIRE_THAT(ums[s], WithinAbs(d / std::sqrt(static_cast<double>(t - k)), 1e-12));
        }
    }
}

TEST_CASE("GLR log-likelihood at the MLE equals U^2 / 2") {
    std::mt19937 gen(3);
    std::normal_distribution<double> nd;
    const SensorModel model{{2.0, -1.0, 0.0}, {0.5, 3.0, 1.0}};
    const std::int64_t kappa = 20;
    const std::vector<double> rates{0.1, -0.4, 0.0};
    std::vector<std::vector<double>> raw;
    WindowState st(3, 50);
    for (std::int64_t t = 1; t <= 70; ++t) {
        std::vector<double> y(3), z(3);
        for (std::size_t s = 0; s < 3; ++s) {
            const double drift = t > kappa ? rates[s] * static_cast<double>(t - kappa) : 0.0;
            y[s] = model.mu[s] + drift + model.sigma[s] * nd(gen);
            z[s] = (y[s] - model.mu[s]) / model.sigma[s];
        }
        raw.push_back(y);
        st.advance(z);
    }
    const std::int64_t t = st.time();
    for (std::int64_t k = st.oldest_candidate(); k < t; ++k) {
        const auto u = u_stat(st, k);
        const auto c = slope_mle(st, k, model);
        const auto ell_rec = local_loglik(st, k, c, model);
        for (std::size_t s = 0; s < 3; ++s) {
            std::vector<double> window;
            for (std::int64_t i = k + 1; i <= t; ++i) {
                window.push_back(raw[static_cast<std::size_t>(i - 1)][s]);
            }
            const double ell = local_loglik(window, c[s], model.mu[s], model.sigma[s]);
            const double half_u2 = 0.5 * u[s] * u[s];
            REQUIRE(std::abs(ell - half_u2) <= 1e-10 * std::max(1.0, half_u2));
            REQUIRE(std::abs(ell_rec[s] - half_u2) <= 1e-10 * std::max(1.0, half_u2));

            // least-squares slope through the origin in lag (i - k) on y - mu
            double sxy = 0.0, sxx = 0.0;
            for (std::size_t j = 0; j < window.size(); ++j) {
                const double lag = static_cast<double>(j + 1);
                sxy += lag * (window[j] - model.mu[s]);
                sxx += lag * lag;
            }
            REQUIRE_THAT(c[s], WithinAbs(sxy / sxx, 1e-12 * std::max(1.0, std::abs(sxy / sxx))));

            // grid scan: no slope beats the MLE
            for (int g = -200; g <= 200; ++g) {
                const double cg = c[s] + 0.01 * g * (1.0 + std::abs(c[s]));
                REQUIRE(local_loglik(window, cg, model.mu[s], model.sigma[s]) <= ell + 1e-12 * std::max(1.0, ell));
            }
        }
    }
    REQUIRE_THROWS_AS(local_loglik(std::span<const double>{}, 0.1, 0.0, 1.0), std::invalid_argument);
}

TEST_CASE("soft-threshold g: bounds, evenness, asymptote") {
    for (double p0 : {0.01, 0.1, 0.3, 0.7, 1.0}) {
        for (double x = 0.0; x <= 40.0; x += 0.125) {
            const double g = soft_threshold_g(x, p0);
            REQUIRE(g == soft_threshold_g(-x, p0));
            REQUIRE(g >= 0.0);
            REQUIRE(g <= 0.5 * x * x + 1e-15 * x * x);
            REQUIRE(g >= 0.5 * x * x + std::log(p0) - 1e-12 * std::max(1.0, x * x));
        }
        // g(x) - x^2/2 -> log p0
        REQUIRE_THAT(soft_threshold_g(40.0, p0) - 800.0, WithinAbs(std::log(p0), 1e-12));
    }
    // independent long double evaluation
    const long double ref = std::log(0.7L + 0.3L * std::exp(50.0L));
    REQUIRE_THAT(soft_threshold_g(10.0, 0.3), WithinRel(static_cast<double>(ref), 1e-14));
    REQUIRE_THAT(soft_threshold_g(10.0, 0.3), WithinAbs(48.796027, 1e-6));
    REQUIRE(soft_threshold_g(3.0, 1.0) == 4.5);
    REQUIRE_THROWS_AS(soft_threshold_g(1.0, 0.0), std::domain_error);
    REQUIRE_THROWS_AS(soft_threshold_g(1.0, 1.5), std::domain_error);
}

TEST_CASE("g derivative matches a central difference") {
    for (double p0 : {0.05, 0.3, 1.0}) {
        for (double x = -6.0; x <= 6.0; x += 0.37) {
            const double h = 1e-5;
            const double fd = (soft_threshold_g(x + h, p0) - soft_threshold_g(x - h, p0)) / (2 * h);
            REQUIRE_THAT(soft_threshold_g_dot(x, p0), WithinAbs(fd, 1e-7 * std::max(1.0, std::abs(fd))));
        }
    }
}

TEST_CASE("log_mixture is continuous across the overflow guard") {
    for (double p0 : {0.001, 0.3, 0.9}) {
        const double below = log_mixture(kMixtureOverflowGuard - 1e-9, p0);
        const double above = log_mixture(kMixtureOverflowGuard + 1e-9, p0);
        REQUIRE_THAT(above - below, WithinAbs(2e-9, 1e-12));
        REQUIRE_THAT(log_mixture(1e4, p0), WithinRel(1e4 + std::log(p0), 1e-15));
        REQUIRE(std::isfinite(log_mixture(1e300, p0)));
    }
    REQUIRE(log_mixture(0.0, 0.3) == 0.0);
    REQUIRE_THAT(log_mixture(-50.0, 0.3), WithinAbs(std::log(0.7), 1e-15));
}
