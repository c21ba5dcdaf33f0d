#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace recam {

/// Deterministic random source. Identical seed (and algorithm) yields an
/// identical stream across runs; state round-trips through serialize/restore
/// exactly, so checkpoints can resume mid-stream.
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed, std::string algorithm = "mt19937_64");

    std::uint64_t next_u64();

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_int(std::uint64_t n);

    /// Box-Muller normal sample; draws two uniforms per call, keeps no spare.
    double normal(double mean = 0.0, double stddev = 1.0);

    /// Independent child stream derived from (seed, stream_id). Does not
    /// advance this source.
    RandomSource fork(std::uint64_t stream_id) const;

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::string serialize_state() const;
    void restore_state(const std::string& state);

    std::uint64_t seed() const { return seed_; }
    const std::string& algorithm() const { return algorithm_; }

private:
    std::uint64_t seed_;
    std::string algorithm_;
    std::mt19937_64 engine_;
};

/// SplitMix64 mixing step, used for deriving sub-seeds.
std::uint64_t splitmix64(std::uint64_t x);

} // namespace recam
