#include "recam/random.hpp"

#include <cmath>
#include <sstream>

#include "recam/errors.hpp"

namespace recam {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RandomSource::RandomSource(std::uint64_t seed, std::string algorithm)
    : seed_(seed), algorithm_(std::move(algorithm)), engine_(seed) {
    if (algorithm_ != "mt19937_64") {
        throw config_error("unknown random algorithm: " + algorithm_);
    }
}

std::uint64_t RandomSource::next_u64() {
    return engine_();
}

double RandomSource::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RandomSource::uniform_int(std::uint64_t n) {
    if (n == 0) {
        throw argument_error("uniform_int: n must be positive");
    }
    // Rejection sampling to avoid modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) {
        x = next_u64();
    }
    return x % n;
}

double RandomSource::normal(double mean, double stddev) {
    // u1 in (0, 1] so the log is finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double z = r * std::cos(2.0 * M_PI * u2);
    return mean + stddev * z;
}

RandomSource RandomSource::fork(std::uint64_t stream_id) const {
    return RandomSource(splitmix64(seed_ ^ splitmix64(stream_id)), algorithm_);
}

std::string RandomSource::serialize_state() const {
    std::ostringstream os;
    os << seed_ << ' ' << engine_;
    return os.str();
}

void RandomSource::restore_state(const std::string& state) {
    std::istringstream is(state);
    is >> seed_ >> engine_;
    if (!is) {
        throw format_error("RandomSource: malformed serialized state");
    }
}

} // namespace recam
