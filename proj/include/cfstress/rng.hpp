#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cfstress {

// splitmix64 finalizer; used for seed derivation and keyed string hashing.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Keyed 64-bit hash of a string; stable across platforms and record order.
inline std::uint64_t keyed_hash64(std::uint64_t seed, std::string_view s) {
    std::uint64_t h = mix64(seed ^ 0x517cc1b727220a95ULL);
    for (unsigned char c : s) {
        h = (h ^ c) * 0x100000001b3ULL;
    }
    return mix64(h);
}

// Derive an independent stream seed from a base seed and stream coordinates.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    return mix64(mix64(base ^ mix64(a)) ^ mix64(b ^ 0xd1b54a32d192ed03ULL));
}

// Deterministic RNG. mt19937_64 has a standard-specified sequence; the
// distributions below are hand-rolled because the std ones are
// implementation-defined and would break the bit-reproducibility contract.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    // unbiased integer in [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = ~0ULL - ~0ULL % n;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_index(i)]);
        }
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace cfstress
