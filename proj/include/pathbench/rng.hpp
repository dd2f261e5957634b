#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace pathbench {

/// Counter-based PRNG over the splitmix64 finalizer. The raw 64-bit stream
/// uses integer arithmetic only, so a given seed yields the same stream on
/// every platform. Cheap to copy; fork() derives decorrelated child streams
/// for per-item parallelism.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n); n must be nonzero.
    std::uint64_t below(std::uint64_t n) {
        return std::uint64_t(((unsigned __int128)next_u64() * n) >> 64);
    }

    /// Standard normal via Box-Muller. Consumes exactly two uniforms per
    /// draw; no cached second sample.
    double normal() {
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Child stream for item `index`, independent of draws made on this
    /// stream so far only through the current state. Callers that need
    /// order-free per-item streams should fork from a fixed base Rng.
    Rng fork(std::uint64_t index) const {
        return Rng(mix(state_ + 0x9E3779B97F4A7C15ULL) ^
                   mix(index * 0xBF58476D1CE4E5B9ULL + 0x94D049BB133111EBULL));
    }

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }

private:
    static std::uint64_t mix(std::uint64_t x) {
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    std::uint64_t state_;
};

} // namespace pathbench
