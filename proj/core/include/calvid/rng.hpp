#pragma once

#include <cmath>
#include <cstdint>

#include "calvid/tensor.hpp"

namespace calvid {

/// Counter-based generator: output i is a pure function of (seed, stream, i),
/// so identical seed + identical call sequence reproduces bit-identically and
/// independent streams can be forked without sharing state.
class Rng {
public:
    explicit Rng(uint64_t seed, uint64_t stream = 0) : key_(mix(seed ^ mix(stream + 0x9e3779b97f4a7c15ull))) {}

    /// Child generator with its own stream; parent state is untouched.
    Rng fork(uint64_t stream) const {
        Rng child(0);
        child.key_ = mix(key_ + mix((stream + 1) * 0xbf58476d1ce4e5b9ull));
        return child;
    }

    uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9e3779b97f4a7c15ull); }

    /// Uniform double in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float uniform_float() { return static_cast<float>(uniform()); }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    /// Standard normal via Box-Muller; consumes two uniforms per pair.
    float normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0,1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = static_cast<float>(r * std::sin(a));
        has_spare_ = true;
        return static_cast<float>(r * std::cos(a));
    }

    Tensor normal_tensor(Shape shape) {
        Tensor t(std::move(shape));
        for (int64_t i = 0; i < t.size(); ++i) t[i] = normal();
        return t;
    }

    Tensor uniform_tensor(Shape shape, float lo, float hi) {
        Tensor t(std::move(shape));
        for (int64_t i = 0; i < t.size(); ++i) t[i] = lo + (hi - lo) * uniform_float();
        return t;
    }

private:
    static uint64_t mix(uint64_t z) {
        z ^= z >> 30;
        z *= 0xbf58476d1ce4e5b9ull;
        z ^= z >> 27;
        z *= 0x94d049bb133111ebull;
        z ^= z >> 31;
        return z;
    }

    uint64_t key_ = 0;
    uint64_t counter_ = 0;
    float spare_ = 0.0f;
    bool has_spare_ = false;
};

}  // namespace calvid
