#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>

namespace exconsist {

// Deterministic counter-splittable RNG (xoshiro256++ seeded via splitmix64).
// Every random decision in the framework draws from an Rng constructed from
// an explicit seed path, so the draw sequence of one subsystem can never
// perturb another. No global RNG state exists anywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& si : s_) si = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0,1).
    double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo,hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

    // Uniform integer in [0,n). Fixed-point multiply keeps the draw count
    // at exactly one u64 per call (no rejection loop).
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
        return static_cast<std::uint64_t>(
            (static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return u01() < p; }

    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
    std::uint64_t s_[4];
};

// Named substreams. A stream key is hashed together with the base seed and
// any number of counters (step index, branch index) so that adding or
// removing draws in one stream leaves every other stream untouched.
enum class Stream : std::uint64_t {
    InitStudent = 1,
    InitTeacher = 2,
    BasicTransform = 3,
    ExtremeLabeled = 4,
    ExtremeUnlabeled = 5,
    Dropout = 6,
    DataLabeled = 7,
    DataUnlabeled = 8,
    Synth = 9,
    Split = 10,
};

inline std::uint64_t derive_seed(std::uint64_t base, Stream stream,
                                 std::initializer_list<std::uint64_t> path = {}) {
    std::uint64_t x = base;
    (void)Rng::splitmix64(x);
    x ^= static_cast<std::uint64_t>(stream) * 0x9e3779b97f4a7c15ULL;
    std::uint64_t h = Rng::splitmix64(x);
    for (std::uint64_t p : path) {
        x = h ^ (p + 0x165667b19e3779f9ULL);
        h = Rng::splitmix64(x);
    }
    return h;
}

inline Rng stream_rng(std::uint64_t base, Stream stream,
                      std::initializer_list<std::uint64_t> path = {}) {
    return Rng(derive_seed(base, stream, path));
}

}  // namespace exconsist
