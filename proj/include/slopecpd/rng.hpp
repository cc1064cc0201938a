#pragma once

#include <cstdint>
#include <random>

namespace slopecpd {

/// Stream tags used when deriving per-trial generators from a master seed.
/// Sensor n uses tag `sensor_tag(n)`; scenario-level draws (affected subsets,
/// per-system parameters) use `kScenarioTag`.
inline constexpr std::uint64_t kScenarioTag = 0;
inline constexpr std::uint64_t sensor_tag(std::size_t sensor) { return static_cast<std::uint64_t>(sensor) + 1; }

/// Independent Gaussian stream keyed by (master seed, trial, tag).
///
/// The engine is std::mt19937_64 seeded through std::seed_seq, both of which
/// are fully specified by the standard, and normals come from the Marsaglia
/// polar method implemented here. Together this pins the sample sequence for
/// a given key on every conforming toolchain.
class RandomStream {
public:
    RandomStream(std::uint64_t master_seed, std::uint64_t trial, std::uint64_t tag);

    /// Uniform on the open interval (0, 1) with 53 bits of resolution.
    double uniform();
    double normal();
    std::uint64_t bits() { return engine_(); }
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound);

private:
    std::mt19937_64 engine_;
    double spare_{0.0};
    bool has_spare_{false};
};

/// Environment variable consulted by the CLI for a default master seed.
inline constexpr const char* kSeedEnvVar = "SLOPECPD_SEED";

}  // namespace slopecpd
