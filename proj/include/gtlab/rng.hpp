#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

namespace gtlab {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic RNG. Parallel experiments derive one stream per trial via
// Rng::stream(master_seed, trial_index); results then do not depend on
// scheduling order. All helpers are implemented here (not via
// std::*_distribution) so a given (seed, call sequence) is pinned.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    static Rng stream(std::uint64_t master_seed, std::uint64_t index) {
        std::uint64_t s = master_seed;
        std::uint64_t h = splitmix64(s);  // full avalanche on the master first
        s = h ^ (0x6a09e667f3bcc909ULL + index);
        return Rng(splitmix64(s));
    }

    std::uint64_t next_u64() { return eng_(); }

    // uniform integer in [0, bound), bound >= 1
    std::uint64_t below(std::uint64_t bound) {
        // multiply-shift with rejection; exact uniformity
        while (true) {
            std::uint64_t x = next_u64();
            __uint128_t m = static_cast<__uint128_t>(x) * bound;
            std::uint64_t lo = static_cast<std::uint64_t>(m);
            if (lo < bound) {
                std::uint64_t threshold = (0ULL - bound) % bound;
                if (lo < threshold) continue;
            }
            return static_cast<std::uint64_t>(m >> 64);
        }
    }

    // uniform double in [0, 1)
    double unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return unit() < p; }

    // number of failures before the next success in a Bernoulli(q) stream;
    // used to skip-sample sparse edge sets
    std::uint64_t geometric_skip(double q) {
        double u = 1.0 - unit();  // (0, 1]
        return static_cast<std::uint64_t>(std::floor(std::log(u) / std::log1p(-q)));
    }

    // r distinct values from [0, n), sorted (Floyd's algorithm)
    std::vector<std::uint32_t> distinct(std::uint32_t n, std::uint32_t r) {
        if (r > n) throw std::invalid_argument("Rng::distinct: r > n");
        std::vector<std::uint32_t> out;
        out.reserve(r);
        for (std::uint64_t j = n - r; j < n; ++j) {
            auto t = static_cast<std::uint32_t>(below(j + 1));
            if (std::find(out.begin(), out.end(), t) != out.end())
                out.push_back(static_cast<std::uint32_t>(j));
            else
                out.push_back(t);
        }
        std::sort(out.begin(), out.end());
        return out;
    }

  private:
    std::mt19937_64 eng_;
};

}  // namespace gtlab
