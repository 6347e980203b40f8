#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace stad {

// Counter-keyed SplitMix64 generator. Every consumer derives its own stream
// from (seed, stream tag, indices...), so random draws are a pure function of
// those keys and never depend on scheduling or call interleaving. Uniform and
// normal variates are generated from raw bits (not std::<distribution>s) so
// sequences are identical across standard library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(mix_(seed ^ 0x9e3779b97f4a7c15ull)) {}

    static Rng keyed(uint64_t seed, std::initializer_list<uint64_t> path) {
        uint64_t s = mix_(seed ^ 0x9e3779b97f4a7c15ull);
        for (uint64_t k : path) s = mix_(s ^ mix_(k + 0xbf58476d1ce4e5b9ull));
        Rng r(0);
        r.state_ = s;
        return r;
    }

    uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix_(state_);
    }

    // Uniform in [0,1).
    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    float unitf() { return static_cast<float>(unit()); }

    float uniform(float lo, float hi) { return lo + (hi - lo) * unitf(); }

    // Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        const uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
        const uint64_t v = static_cast<uint64_t>(
            (static_cast<unsigned __int128>(next()) * range) >> 64);
        return lo + static_cast<int>(v);
    }

    bool bernoulli(double p) { return unit() < p; }

    // Standard normal via Box-Muller; uses two draws per call, no caching.
    float normal() {
        const double u1 = static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;  // (0,1]
        const double u2 = unit();
        return static_cast<float>(std::sqrt(-2.0 * std::log(u1)) *
                                  std::cos(2.0 * 3.14159265358979323846 * u2));
    }

private:
    static uint64_t mix_(uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    uint64_t state_;
};

// Stream tags for Rng::keyed paths. One tag per independent randomness
// consumer keeps streams disjoint by construction.
namespace rng_stream {
constexpr uint64_t kTeacherInit = 1;
constexpr uint64_t kTriplet = 2;
constexpr uint64_t kDistill = 3;
constexpr uint64_t kStudentInit = 4;
constexpr uint64_t kStudentOrder = 5;
constexpr uint64_t kValSplit = 6;
constexpr uint64_t kSynth = 7;
}  // namespace rng_stream

}  // namespace stad
