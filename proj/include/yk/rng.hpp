#pragma once

#include <cstdint>

namespace yk {

// splitmix64: small, fast, and fully specified, so weight init and test
// fixtures are bit-reproducible across runs and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform in [lo, hi)
    float uniform(float lo, float hi) {
        return lo + static_cast<float>(next_unit()) * (hi - lo);
    }

    // derive an independent stream, e.g. one per layer
    Rng fork() { return Rng(next_u64()); }

private:
    std::uint64_t state_;
};

}  // namespace yk
