#pragma once

#include "bmp/types.hpp"

#include <functional>
#include <vector>

namespace bmp {

/// Dormand-Prince 5(4) adaptive integrator for complex vector states.
/// Integrates y' = rhs(t, y) from grid.front() to grid.back(), landing on
/// every grid time exactly; returns the state at each grid time.
/// Deterministic and single-threaded.
std::vector<Vec> integrate_rk45(
    const std::function<Vec(double, const Vec&)>& rhs, const Vec& y0,
    const std::vector<double>& grid, double abs_tol = 1e-9, double rel_tol = 1e-9);

} // namespace bmp
