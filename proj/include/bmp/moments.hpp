#pragma once

#include "bmp/model.hpp"
#include "bmp/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bmp {

/// Exact product moments psi_t^(A)[f] for every nonempty A subset of [k],
/// on a fixed time grid. Subsets are addressed by bitmask over tuple indices.
struct MomentTable {
    int k = 0;
    std::vector<Vec> f; // the tuple
    std::vector<double> times;
    // values[time_index][mask], mask in [1, 2^k - 1]; entry 0 unused.
    std::vector<std::vector<Vec>> values;

    const Vec& at(std::size_t time_index, std::uint32_t mask) const {
        return values.at(time_index).at(mask);
    }
    std::size_t time_index(double t, double tol = 1e-12) const;
};

/// Solves the coupled moment hierarchy
///   d/dt psi^(A) = A_mean psi^(A) + gamma . zeta_A[psi^(.)],
///   psi_0^(A) = prod_{i in A} f_i,
/// jointly over all subsets as one ODE system (Dormand-Prince 5(4)).
/// k <= 6; the grid must be increasing and start at a time >= 0.
MomentTable moment_hierarchy(const BmpModel& model, const std::vector<Vec>& f,
                             const std::vector<double>& grid, double ode_tol = 1e-9);

/// Re-evaluates the Duhamel identity
///   psi_t^(k) = e^{tA}(f_1...f_k) + int_0^t e^{(t-s)A}[gamma zeta_[k][psi_s^(.)]] ds
/// by composite Gauss-Legendre quadrature with `quad_points` nodes per time,
/// and returns the maximum absolute deviation over the table's grid times and
/// states. Independent consistency oracle for the ODE route.
double duhamel_residual(const BmpModel& model, const MomentTable& table,
                        int quad_points = 64, double ode_tol = 1e-9);

/// CSV export: t, subset-bitmask, state, re, im.
std::string moment_table_csv(const MomentTable& table);

} // namespace bmp
