#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace prefkit {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Deterministic random source. Every randomized operation in the toolkit
// draws through this wrapper; bounded draws and shuffles are spelled out
// here instead of using std distributions, whose sequences are not pinned
// by the standard. Equal seed, equal stream, on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Unbiased draw in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t span = (~std::uint64_t{0} / n) * n;
        std::uint64_t v = next_u64();
        while (v >= span) v = next_u64();
        return v % n;
    }

    bool coin() { return (next_u64() & 1u) != 0; }

    // Uniform in [0, 1) with 53 random bits.
    double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Fisher-Yates, descending.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            using std::swap;
            swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

// Stable substream derivation for per-prompt / per-epoch seeds, so results
// do not depend on the order prompts are processed in.
inline std::uint64_t mix_seed(std::uint64_t seed, std::string_view key) {
    std::uint64_t h = splitmix64(seed) ^ 14695981039346656037ull;
    for (const char c : key) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return splitmix64(h);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t key) {
    return splitmix64(splitmix64(seed) ^ key);
}

}  // namespace prefkit
