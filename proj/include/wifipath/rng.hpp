// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace wifipath {

/// Seedable random source used everywhere in the pipeline.
///
/// The engine is the 64-bit Mersenne Twister (mt19937_64). Uniform doubles take
/// the top 53 bits of one draw; normals come from the Box-Muller
/// transform on two uniforms, caching the second variate. None of the
/// implementation-defined std distributions are used, so the stream only
/// depends on the engine and the seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    double normal();

    template <class T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// FNV-1a over the bytes of `text`.
std::uint64_t fnv1a64(std::string_view text);

/// Seed for a named role under a run seed: mix64(run_seed ^ fnv1a64(role)).
std::uint64_t derive_seed(std::uint64_t run_seed, std::string_view role);

}  // namespace wifipath
