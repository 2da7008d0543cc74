#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace fairpen {

// Seeded random stream. Distributions are implemented here rather than taken
// from <random> so that draws are identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    // Independent stream derived from a master seed and a stream tag.
    static Rng derive(std::uint64_t master_seed, std::uint64_t stream);

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1).
    double uniform01();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
    // Uniform integer on [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n);
    double normal();
    bool bernoulli(double p) { return uniform01() < p; }

private:
    std::mt19937_64 engine_;
    bool has_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

// Fixed stream tags used by the trainers.
namespace streams {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t batching = 2;
inline constexpr std::uint64_t sampler = 3;
inline constexpr std::uint64_t split = 4;
inline constexpr std::uint64_t data = 5;
inline constexpr std::uint64_t discriminator_init = 6;
inline constexpr std::uint64_t ratio_init = 7;
inline constexpr std::uint64_t ratio_batching = 8;
inline constexpr std::uint64_t ratio_sampler = 9;
} // namespace streams

} // namespace fairpen
