#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace aq {

// Deterministic RNG for benchmark synthesis and tests. std::mt19937_64 has a
// fully specified output sequence; the helpers below avoid the standard
// distributions, whose mapping from engine output is implementation-defined.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform index in [0, n). n must be positive. Modulo bias is negligible
    // for the pool sizes used here against a 64-bit engine.
    std::size_t next_index(std::size_t n) {
        return static_cast<std::size_t>(engine_() % static_cast<std::uint64_t>(n));
    }

    // Uniform integer in [lo, hi], inclusive.
    std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(next_index(static_cast<std::size_t>(hi - lo + 1)));
    }

    // Uniform real in [lo, hi).
    double next_real(double lo, double hi) {
        const double unit = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return lo + unit * (hi - lo);
    }

    bool next_bool(double p_true) { return next_real(0.0, 1.0) < p_true; }

    template <typename T>
    const T& pick(const std::vector<T>& items) {
        return items[next_index(items.size())];
    }

    // Fisher-Yates; unbiased and stable across platforms.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[next_index(i)]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace aq
