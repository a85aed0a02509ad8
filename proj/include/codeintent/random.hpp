#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

namespace codeintent {

// Deterministic random source used everywhere the toolkit needs randomness.
// std::mt19937_64 output is fixed by the standard; the derived draws below
// avoid std::*_distribution, whose sequences differ between standard library
// implementations. Same seed -> same draws, on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // uniform double in [0, 1) with 53-bit resolution
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [0, n), n >= 1
    std::size_t index(std::size_t n) {
        auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

    // Draw from a categorical distribution given its cumulative weights
    // (non-decreasing, last element = total mass).
    std::size_t categorical(const std::vector<double>& cdf) {
        double u = uniform() * cdf.back();
        auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        std::size_t i = static_cast<std::size_t>(it - cdf.begin());
        return i < cdf.size() ? i : cdf.size() - 1;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace codeintent
