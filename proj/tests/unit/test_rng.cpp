#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <vector>

#include "slopecpd/model.hpp"
#include "slopecpd/rng.hpp"

using namespace slopecpd;

TEST_CASE("streams are keyed by seed, trial and tag") {
    RandomStream a(7, 3, 2);
    RandomStream b(7, 3, 2);
    for (int i = 0; i < 1000; ++i) {
        REQUIRE(a.normal() == b.normal());
    }
    RandomStream c(7, 3, 2);
    RandomStream d(7, 4, 2);
    RandomStream e(7, 3, 1);
    RandomStream f(8, 3, 2);
    const double x = c.normal();
    REQUIRE(x != d.normal());
    REQUIRE(x != e.normal());
    REQUIRE(x != f.normal());
}

TEST_CASE("normal and uniform moments") {
    RandomStream rs(11, 0, 5);
    const int m = 400000;
    double s1 = 0, s2 = 0, s3 = 0, s4 = 0, u1 = 0;
    for (int i = 0; i < m; ++i) {
        const double z = rs.normal();
        s1 += z;
        s2 += z * z;
        s3 += z * z * z;
        s4 += z * z * z * z;
        const double u = rs.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        u1 += u;
    }
    // 5 standard errors: sd of z, z^2, z^3, z^4 are 1, sqrt 2, sqrt 15, sqrt 96
    const double r = std::sqrt(static_cast<double>(m));
    REQUIRE(std::abs(s1 / m) < 5.0 / r);
    REQUIRE(std::abs(s2 / m - 1.0) < 5.0 * std::sqrt(2.0) / r);
    REQUIRE(std::abs(s3 / m) < 5.0 * std::sqrt(15.0) / r);
    REQUIRE(std::abs(s4 / m - 3.0) < 5.0 * std::sqrt(96.0) / r);
    REQUIRE(std::abs(u1 / m - 0.5) < 5.0 * std::sqrt(1.0 / 12.0) / r);
}

TEST_CASE("below stays in range and covers it") {
    RandomStream rs(1, 1, 1);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 2000; ++i) {
        const auto v = rs.below(7);
        REQUIRE(v < 7);
        seen.insert(v);
    }
    REQUIRE(seen.size() == 7);
}

TEST_CASE("scenario streams follow the sensor noise streams") {
    ScenarioSpec spec;
    spec.n_sensors = 3;
    spec.kappa = 5;
    spec.affected = {1};
    spec.rates = {0.5};
    spec.horizon = 10;
    SensorModel model{{1.0, 2.0, 3.0}, {1.0, 2.0, 0.5}};
    const auto frames = generate_scenario(spec, model, 42);
    REQUIRE(frames.size() == 10);
    std::vector<RandomStream> noise;
    for (std::size_t n = 0; n < 3; ++n) {
        noise.emplace_back(42, 0, sensor_tag(n));
    }
    for (const auto& f : frames) {
        for (std::size_t n = 0; n < 3; ++n) {
            double expect = model.mu[n] + model.sigma[n] * noise[n].normal();
            if (n == 1 && f.t > 5) {
                expect += 0.5 * static_cast<double>(f.t - 5);
            }
            REQUIRE(f.values[n] == Catch::Approx(expect).epsilon(1e-14));
        }
    }
    // generating twice gives the same frames
    const auto again = generate_scenario(spec, model, 42);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        REQUIRE(frames[i].values == again[i].values);
    }
}
