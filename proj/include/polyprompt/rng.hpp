#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "polyprompt/util.hpp"

namespace polyprompt {

// splitmix64 finalizer. Spreads low-entropy seeds (0, 1, 2, ...) over the
// full 64-bit range before they reach the engine.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Derive an independent stream seed from a base seed and a tag, so every
// (item, variant, purpose) gets its own reproducible sequence.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    return mix64(fnv1a64(tag, fnv1a64(base)));
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    return mix64(fnv1a64(salt, fnv1a64(base)));
}

// Deterministic RNG. mt19937_64 output is fully specified by the standard,
// and all draws below avoid std::uniform_int_distribution / std::shuffle,
// whose results vary across standard library implementations.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(mix64(seed)) { engine_.discard(8); }

    std::uint64_t next_u64() { return engine_(); }

    // Unbiased index in [0, n) via rejection sampling.
    std::size_t next_index(std::size_t n) {
        if (n == 0) throw Error("next_index: n must be positive");
        if (n == 1) return 0;
        const std::uint64_t span = n;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        std::uint64_t v = engine_();
        while (v >= limit) v = engine_();
        return static_cast<std::size_t>(v % span);
    }

    double next_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    bool next_bool() { return (engine_() >> 63) != 0; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = next_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), returned in ascending order.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k) {
        if (k > n) throw Error("sample_indices: k > n");
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + next_index(n - i);
            std::swap(all[i], all[j]);
        }
        all.resize(k);
        std::sort(all.begin(), all.end());
        return all;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace polyprompt
