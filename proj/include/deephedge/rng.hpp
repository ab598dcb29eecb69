#pragma once

// Deterministic random streams.
//
// CounterRng is stateless: draw n of stream k is a pure function of
// (key, k, n), so any subset of draws can be produced in any order or on any
// thread without perturbing the others. SeqRng wraps mt19937_64 with
// platform-independent mappings to doubles and permutations (the standard
// distributions are implementation-defined).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace deephedge::rng {

inline constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Per-stage seed from a master seed and a stage label.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
    return mix64(mix64(master) ^ fnv1a(label));
}

// Uniform on the open interval (0, 1) from the top 53 bits.
inline constexpr double to_unit_open(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t key) : key_(mix64(key)) {}

    std::uint64_t bits(std::uint64_t stream, std::uint64_t counter) const {
        return mix64(mix64(key_ ^ mix64(stream)) + counter * 0xD1B54A32D192ED03ULL);
    }

    double uniform(std::uint64_t stream, std::uint64_t counter) const {
        return to_unit_open(bits(stream, counter));
    }

    // Box-Muller on two counter-indexed uniforms.
    double normal(std::uint64_t stream, std::uint64_t counter) const {
        const double u1 = uniform(stream, 2 * counter);
        const double u2 = uniform(stream, 2 * counter + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t key_;
};

class SeqRng {
public:
    explicit SeqRng(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return to_unit_open(engine_()); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n) {
        std::vector<std::size_t> p(n);
        for (std::size_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace deephedge::rng
