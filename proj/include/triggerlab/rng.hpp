#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace triggerlab {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Component seed derivation: seed(component) = splitmix64(master ^ fnv1a64(name)).
/// Every subsystem (init, poison selection, shuffling, ...) gets its own stream
/// so that adding draws in one place never perturbs another.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view component) {
    return splitmix64(master ^ fnv1a64(component));
}

/// Per-index sub-stream of a component seed (e.g. one stream per test item).
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(seed ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
}

// Deterministic random source. std::mt19937_64 is fully specified by the
// standard and the helpers below avoid std::uniform_*_distribution, whose
// output is implementation-defined, so streams are reproducible across
// compilers and standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next() { return eng_(); }

    /// Unbiased draw from [0, n). n == 0 or 1 returns 0 without consuming state.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = eng_();
        while (v >= limit) v = eng_();
        return v % n;
    }

    /// Uniform over the inclusive range [lo, hi].
    int range(int lo, int hi) {
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    /// Uniform in [0, 1) with 53 random bits.
    double real01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * real01(); }

    bool bernoulli(double p) { return real01() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// k distinct indices from [0, n), in ascending order.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

private:
    std::mt19937_64 eng_;
};

inline std::vector<std::size_t> Rng::sample_indices(std::size_t n, std::size_t k) {
    std::vector<std::size_t> pool(n);
    for (std::size_t i = 0; i < n; ++i) pool[i] = i;
    if (k > n) k = n;
    // partial Fisher-Yates: the first k slots end up uniform without replacement
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + static_cast<std::size_t>(below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    std::sort(pool.begin(), pool.end());
    return pool;
}

}  // namespace triggerlab
