#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace sign {

// Seeded random source shared by every stochastic routine. All randomness is
// drawn through an explicit Rng passed by the caller, so a (seed, call order)
// pair fully determines a run.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    // Uniform integer in [lo, hi].
    std::uint64_t integer(std::uint64_t lo, std::uint64_t hi) {
        return std::uniform_int_distribution<std::uint64_t>(lo, hi)(engine_);
    }
    std::mt19937_64& engine() { return engine_; }

    // Full generator state (engine plus the normal sampler's cached value) as
    // text; restoring it resumes the exact draw sequence.
    std::string state() const;
    void restore(const std::string& blob);

    // Independent stream derived from this generator's next draw.
    Rng split() { return Rng(engine_()); }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace sign
