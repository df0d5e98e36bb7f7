#include "bmp/quadrature.hpp"

namespace bmp {

const std::array<double, 16>& gl16_nodes() {
    static const std::array<double, 16> nodes = {
        -0.9894009349916499, -0.9445750230732326, -0.8656312023878318,
        -0.7554044083550030, -0.6178762444026438, -0.4580167776572274,
        -0.2816035507792589, -0.0950125098376374, 0.0950125098376374,
        0.2816035507792589,  0.4580167776572274,  0.6178762444026438,
        0.7554044083550030,  0.8656312023878318,  0.9445750230732326,
        0.9894009349916499};
    return nodes;
}

const std::array<double, 16>& gl16_weights() {
    static const std::array<double, 16> weights = {
        0.0271524594117541, 0.0622535239386479, 0.0951585116824928,
        0.1246289712555339, 0.1495959888165767, 0.1691565193950025,
        0.1826034150449236, 0.1894506104550685, 0.1894506104550685,
        0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
        0.1246289712555339, 0.0951585116824928, 0.0622535239386479,
        0.0271524594117541};
    return weights;
}

Vec integrate_gl(const std::function<Vec(double)>& g, double a, double b, int panels) {
    const auto& xs = gl16_nodes();
    const auto& ws = gl16_weights();
    Vec total;
    const double width = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        const double lo = a + p * width;
        const double mid = lo + width / 2, half = width / 2;
        for (int i = 0; i < 16; ++i) {
            Vec v = g(mid + half * xs[i]);
            if (total.size() == 0) total = Vec::Zero(v.size());
            total += (ws[i] * half) * v;
        }
    }
    return total;
}

} // namespace bmp
