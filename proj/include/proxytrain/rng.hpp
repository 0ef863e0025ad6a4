#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace proxytrain {

/// Deterministic random stream. All randomness in a run flows from one config
/// seed through named sub-streams (data, init, dropout, sampler, search) so
/// that components can be reseeded or perturbed independently.
///
/// uniform() and normal() are implemented by hand on top of mt19937_64 so a
/// given (seed, name) pair produces the same sequence on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Sub-stream derived from a root seed and a stream name (optionally an
    /// index, e.g. one stream per trial).
    static Rng stream(std::uint64_t root_seed, std::string_view name, std::uint64_t index = 0);

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n);

    /// Standard normal via Box-Muller (no cached spare; two draws per call).
    double normal();

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// FNV-1a over arbitrary bytes; used for stream derivation and file hashes.
std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view s);

}  // namespace proxytrain
