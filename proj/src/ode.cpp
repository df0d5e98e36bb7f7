#include "bmp/ode.hpp"

#include <algorithm>
#include <cmath>

namespace bmp {

namespace {

// Dormand-Prince coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                 b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// Embedded 4th-order weights.
constexpr double e1 = 5179.0 / 57600, e3 = 7571.0 / 16695, e4 = 393.0 / 640,
                 e5 = -92097.0 / 339200, e6 = 187.0 / 2100, e7 = 1.0 / 40;

} // namespace

std::vector<Vec> integrate_rk45(const std::function<Vec(double, const Vec&)>& rhs,
                                const Vec& y0, const std::vector<double>& grid,
                                double abs_tol, double rel_tol) {
    if (grid.empty()) return {};
    std::vector<Vec> out;
    out.reserve(grid.size());
    out.push_back(y0);

    Vec y = y0;
    double t = grid.front();
    Vec k1 = rhs(t, y); // FSAL

    double h = 1e-3;
    const double h_min = 1e-14;

    for (std::size_t gi = 1; gi < grid.size(); ++gi) {
        const double t_end = grid[gi];
        while (t < t_end) {
            double step = std::min(h, t_end - t);
            bool clipped = step < h;

            Vec k2 = rhs(t + c2 * step, y + step * (a21 * k1));
            Vec k3 = rhs(t + c3 * step, y + step * (a31 * k1 + a32 * k2));
            Vec k4 = rhs(t + c4 * step, y + step * (a41 * k1 + a42 * k2 + a43 * k3));
            Vec k5 = rhs(t + c5 * step,
                         y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
            Vec k6 = rhs(t + step,
                         y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
            Vec y5 = y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
            Vec k7 = rhs(t + step, y5);
            Vec y4 = y + step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

            // Scaled error norm.
            double err = 0;
            for (int i = 0; i < y.size(); ++i) {
                double sc = abs_tol + rel_tol * std::max(std::abs(y[i]), std::abs(y5[i]));
                err = std::max(err, std::abs(y5[i] - y4[i]) / sc);
            }

            if (err <= 1.0) {
                t += step;
                y = y5;
                k1 = k7;
            }
            double factor = err > 0 ? 0.9 * std::pow(err, -0.2) : 5.0;
            factor = std::clamp(factor, 0.2, 5.0);
            if (!clipped || err > 1.0) h = step * factor;
            if (h < h_min)
                throw NumericalError("integrate_rk45: step size underflow");
        }
        out.push_back(y);
    }
    return out;
}

} // namespace bmp
