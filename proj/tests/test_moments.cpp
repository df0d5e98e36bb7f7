#include "bmp/moments.hpp"
#include "bmp/model.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

using namespace bmp;

namespace {

Vec ones(int n) { return Vec::Ones(n); }

// Yule with rate 1: N_t is geometric with success parameter q = e^{-t}.
// Raw moments via falling factorials, E (N)_j = j! (1-q)^{j-1} / q^j, and
// Stirling numbers of the second kind.
double yule_raw_moment(double t, int k) {
    static const std::vector<std::vector<double>> stirling{
        {1}, {1, 1}, {1, 3, 1}, {1, 7, 6, 1}};
    double q = std::exp(-t), sum = 0, fact = 1;
    for (int j = 1; j <= k; ++j) {
        fact *= j;
        sum += stirling[k - 1][j - 1] * fact * std::pow(1 - q, j - 1) / std::pow(q, j);
    }
    return sum;
}

} // namespace

TEST_CASE("yule mean and second moment at t = 1") {
    auto yule = build_yule(1.0);
    std::vector<double> grid{0.0, 0.5, 1.0};
    auto table = moment_hierarchy(yule, {ones(1), ones(1)}, grid);
    auto i1 = table.time_index(1.0);
    double mean = table.at(i1, 0b01)[0].real();
    double pair = table.at(i1, 0b11)[0].real();
    CHECK(mean == doctest::Approx(std::exp(1.0)).epsilon(1e-8));
    // E N^2 = 2e^2 - e.
    CHECK(pair == doctest::Approx(2 * std::exp(2.0) - std::exp(1.0)).epsilon(1e-8));
}

TEST_CASE("yule higher moments (geometric oracle)") {
    auto yule = build_yule(1.0);
    std::vector<double> grid{0.0, 1.0};
    for (int k : {3, 4}) {
        std::vector<Vec> f(k, ones(1));
        auto table = moment_hierarchy(yule, f, grid);
        std::uint32_t full = (1u << k) - 1;
        double got = table.at(table.time_index(1.0), full)[0].real();
        CHECK(got == doctest::Approx(yule_raw_moment(1.0, k)).epsilon(1e-7));
    }
}

TEST_CASE("initial condition is the pointwise product") {
    RealMat Q(2, 2);
    Q << -1, 1, 0.5, -0.5;
    auto m = build_multitype(Q, RealVec::Ones(2),
                             {{{1.0, {0, 1}}}, {{1.0, {1, 1}}}});
    Vec f1(2), f2(2);
    f1 << Complex{1, 0}, Complex{2, 0};
    f2 << Complex{0, 1}, Complex{-1, 0};
    auto table = moment_hierarchy(m, {f1, f2}, {0.0, 0.2});
    CHECK(sup_norm(table.at(0, 0b01) - f1) < 1e-12);
    CHECK(sup_norm(table.at(0, 0b10) - f2) < 1e-12);
    CHECK(sup_norm(table.at(0, 0b11) - Vec(f1.array() * f2.array())) < 1e-12);
}

TEST_CASE("no branching: a single particle gives e^{tQ} of the products") {
    RealMat Q(2, 2);
    Q << -2, 2, 1, -1;
    auto m = build_multitype(Q, RealVec::Zero(2), {{{1.0, {0}}}, {{1.0, {1}}}});
    Vec f(2);
    f << Complex{1, 0}, Complex{-0.5, 0.5};
    auto table = moment_hierarchy(m, {f, f}, {0.0, 0.7});
    auto i = table.time_index(0.7);
    Mat et = (Q * 0.7).exp().cast<Complex>();
    CHECK(sup_norm(table.at(i, 0b01) - et * f) < 1e-8);
    // E[f(x_t)^2] = e^{tQ}[f^2].
    CHECK(sup_norm(table.at(i, 0b11) - et * Vec(f.array() * f.array())) < 1e-8);
}

TEST_CASE("multilinearity and symmetry in the tuple") {
    auto m = build_multitype(RealMat::Zero(2, 2), RealVec::Ones(2),
                             {{{1.0, {0, 0, 1}}}, {{0.5, {1, 1}}, {0.5, {}}}});
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unif(-1, 1);
    auto rv = [&] {
        Vec v(2);
        v << Complex{unif(rng), unif(rng)}, Complex{unif(rng), unif(rng)};
        return v;
    };
    Vec f1 = rv(), g1 = rv(), f2 = rv();
    Complex a{0.3, -0.7}, b{1.2, 0.1};
    std::vector<double> grid{0.0, 0.6};

    auto mixed = moment_hierarchy(m, {Vec(a * f1 + b * g1), f2}, grid);
    auto tf = moment_hierarchy(m, {f1, f2}, grid);
    auto tg = moment_hierarchy(m, {g1, f2}, grid);
    auto i = mixed.time_index(0.6);
    CHECK(sup_norm(mixed.at(i, 0b11) -
                   Vec(a * tf.at(i, 0b11) + b * tg.at(i, 0b11))) < 1e-7);

    auto swapped = moment_hierarchy(m, {f2, f1}, grid);
    CHECK(sup_norm(tf.at(i, 0b11) - swapped.at(i, 0b11)) < 1e-10);
}

TEST_CASE("subset marginals are self-consistent") {
    // The {1} sub-table of a k = 3 run matches a standalone k = 1 run.
    auto m = build_multitype(RealMat::Zero(2, 2), RealVec::Ones(2),
                             {{{1.0, {0, 1}}}, {{1.0, {1, 1, 0}}}});
    Vec f(2);
    f << Complex{1, 0}, Complex{0.5, 0};
    auto t3 = moment_hierarchy(m, {f, f, f}, {0.0, 0.5});
    auto t1 = moment_hierarchy(m, {f}, {0.0, 0.5});
    auto i = t3.time_index(0.5);
    CHECK(sup_norm(t3.at(i, 0b001) - t1.at(i, 0b1)) < 1e-9);
}

TEST_CASE("duhamel residual is small for the ODE solution") {
    auto m = build_multitype(RealMat::Zero(2, 2), RealVec::Ones(2),
                             {{{1.0, {0, 0, 1}}}, {{1.0, {1, 1}}}});
    Vec f(2);
    f << Complex{1, 0}, Complex{1, 0};
    auto table = moment_hierarchy(m, {f, f}, {0.0, 0.5, 1.0});
    CHECK(duhamel_residual(m, table) < 1e-6);
}

TEST_CASE("duhamel residual flags a corrupted table") {
    auto yule = build_yule(1.0);
    auto table = moment_hierarchy(yule, {ones(1), ones(1)}, {0.0, 1.0});
    table.values[1][0b11][0] += Complex{0.1, 0};
    CHECK(duhamel_residual(yule, table) > 0.05);
}

TEST_CASE("grid starting after zero still anchors the initial condition") {
    auto yule = build_yule(1.0);
    auto table = moment_hierarchy(yule, {ones(1)}, {0.5, 1.0});
    CHECK(table.at(table.time_index(1.0), 0b1)[0].real() ==
          doctest::Approx(std::exp(1.0)).epsilon(1e-8));
}

TEST_CASE("csv export has a row per (time, mask, state)") {
    auto yule = build_yule(1.0);
    auto table = moment_hierarchy(yule, {ones(1), ones(1)}, {0.0, 1.0});
    auto csv = moment_table_csv(table);
    // header + 2 times * 3 masks * 1 state
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 3);
}
