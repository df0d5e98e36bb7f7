#pragma once

#include "bmp/types.hpp"

#include <array>
#include <functional>

namespace bmp {

/// 16-point Gauss-Legendre nodes and weights on [-1, 1].
const std::array<double, 16>& gl16_nodes();
const std::array<double, 16>& gl16_weights();

/// Composite 16-point Gauss-Legendre quadrature of a vector integrand over
/// [a, b] with `panels` equal panels.
Vec integrate_gl(const std::function<Vec(double)>& g, double a, double b, int panels);

} // namespace bmp
