#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace lp {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic RNG. Distribution mappings are hand-rolled from raw 64-bit
// draws so streams are identical across standard-library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : eng_(seed), seed_mix_(splitmix64(seed)) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n) {
        if (n <= 1) return 0;
        // rejection sampling to avoid modulo bias
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do { x = next_u64(); } while (x >= limit);
        return x % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent child stream; (seed, key) -> child is a pure function of
    // the construction seed, not of how much state was consumed.
    Rng fork(uint64_t key) const {
        return Rng(splitmix64(seed_mix_ ^ splitmix64(key)));
    }

private:
    std::mt19937_64 eng_;
    uint64_t seed_mix_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Stateless counter-based uniform draw: same (seed, counter) -> same value.
// Used for dropout masks so masks do not depend on evaluation order.
inline double counter_uniform(uint64_t seed, uint64_t counter) {
    return static_cast<double>(splitmix64(splitmix64(seed) ^ counter) >> 11) * 0x1.0p-53;
}

}  // namespace lp
