#pragma once

#include "bmp/model.hpp"
#include "bmp/types.hpp"

#include <cstdint>
#include <vector>

namespace bmp {

/// Particle counts per state after an exact jump-by-jump simulation.
struct ParticleSystem {
    std::vector<long long> counts;
    double time = 0;

    long long total() const;
};

/// Exact continuous-time simulation from a single particle at x0: motion
/// jumps at the Q rates, branching at gamma with offspring drawn from the
/// model's law. Reproducible per seed; aborts past 10^7 particles.
ParticleSystem simulate(const BmpModel& model, int x0, double t_end, std::uint64_t seed);

struct McEstimate {
    Complex mean{0, 0};
    double se = 0;
    int replicas = 0;
    std::uint64_t seed = 0;
};

/// Sample mean of prod_i X_t[f_i] over independent replicas, with standard
/// error from the replica variance. Per-replica RNG streams are derived from
/// (seed, replica index), so results are independent of evaluation order.
McEstimate estimate_moment(const BmpModel& model, const std::vector<Vec>& fs, double t,
                           int x0, int replicas, std::uint64_t seed);

} // namespace bmp
