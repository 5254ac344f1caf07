#pragma once

#include <cstdint>
#include <random>

namespace twotower {

/// Seeded generator that can be split into independent child streams, so that
/// every consumer (a weight tensor, a texture, a noise field) draws from its
/// own sequence regardless of how many values its siblings consume.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

    Rng split(std::uint64_t stream) const { return Rng(mix(seed_ ^ mix(stream + 0x9e3779b97f4a7c15ULL))); }

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) built from the top 53 bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi].
    std::int64_t integer(std::int64_t lo, std::int64_t hi);

    double normal(double mean = 0.0, double sigma = 1.0);

    std::mt19937_64& engine() { return engine_; }

    static std::uint64_t mix(std::uint64_t x);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace twotower
