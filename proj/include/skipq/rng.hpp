#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace skipq {

/// Mixes (base, stream, index) into an independent 64-bit seed. Every random
/// object in the library is keyed this way, so results never depend on the
/// order in which work items run.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

class Rng {
public:
    explicit Rng(std::uint64_t seed);

    double uniform();
    double normal();
    /// Index drawn from an unnormalised nonnegative weight vector.
    int categorical(std::span<const double> weights);
    bool bernoulli(double p);
    std::uint64_t next_u64() { return engine_(); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> unit_{0.0, 1.0};
    std::normal_distribution<double> gauss_{0.0, 1.0};
};

}  // namespace skipq
