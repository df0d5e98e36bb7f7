#include "bmp/limits.hpp"
#include "bmp/moments.hpp"
#include "bmp/model.hpp"
#include "bmp/spectral.hpp"

#include <doctest.h>

#include <cmath>

using namespace bmp;

namespace {

Vec ones(int n) { return Vec::Ones(n); }

struct Setup {
    BmpModel model;
    SpectralDecomposition dec;
    RegimeClassification reg;
};

Setup make(const BmpModel& m) {
    Setup s{m, decompose(mean_matrix(m)), {}};
    s.reg = classify_regimes(s.dec);
    return s;
}

Setup rotation_setup() {
    const double r = 2.0 / std::sqrt(3.0);
    RealMat J(3, 3), V = RealMat::Identity(3, 3);
    J << 2 * r, r, 0,
         0, 2 * r, r,
         r, 0, 2 * r;
    return make(build_from_jordan(J, V, RealVec::Ones(3)));
}

// Coupled 2-type model with one large and one strictly small eigenvalue:
// mean matrix [[1,1],[0,0.25]], gap lambda_1 - 2 Re lambda_tau = 0.5.
Setup coupled_small_setup() {
    RealMat M(2, 2);
    M << 2, 1, 0, 1.25;
    return make(build_from_mean(M, RealVec::Ones(2)));
}

// Real-critical boundary: mean matrix [[1,1],[0,0.5]], lambda_2 = lambda_1/2.
Setup real_critical_setup() {
    RealMat M(2, 2);
    M << 2, 1, 0, 1.5;
    return make(build_from_mean(M, RealVec::Ones(2)));
}

} // namespace

TEST_CASE("improper integral: analytic values") {
    auto r1 = improper_integral(
        [](double s) { return Vec(Vec::Ones(1) * 2.0 * std::exp(-s)); }, 1.0, 0);
    CHECK(std::abs(r1.value[0] - 2.0) < 1e-7);

    auto r2 = improper_integral(
        [](double s) { return Vec(Vec::Ones(1) * std::exp(-s) * (1 + s)); }, 1.0, 1);
    CHECK(std::abs(r2.value[0] - 2.0) < 1e-7);

    auto r0 = improper_integral([](double) { return Vec(Vec::Zero(2)); }, 0.5, 0);
    CHECK(sup_norm(r0.value) == 0.0);
}

TEST_CASE("improper integral: growing integrand is rejected") {
    CHECK_THROWS_AS(improper_integral(
                        [](double s) { return Vec(Vec::Ones(1) * std::exp(0.3 * s)); },
                        1.0, 0),
                    NonDecaying);
}

TEST_CASE("improper integral: requires a positive decay rate") {
    CHECK_THROWS_AS(improper_integral([](double) { return Vec(Vec::Zero(1)); }, 0.0, 0),
                    std::invalid_argument);
}

TEST_CASE("yule large-regime limits: L_[k] = k!") {
    auto s = make(build_yule(1.0));
    auto table = limit_large(s.model, s.dec, s.reg, {ones(1), ones(1), ones(1), ones(1)});
    CHECK(std::abs(table.at(0b0001)[0] - 1.0) < 1e-6);
    CHECK(std::abs(table.at(0b0011)[0] - 2.0) < 1e-6);
    CHECK(std::abs(table.at(0b0111)[0] - 6.0) < 1e-6);
    CHECK(std::abs(table.at(0b1111)[0] - 24.0) < 1e-6);
}

TEST_CASE("large singleton clause is the spectral projection") {
    auto s = coupled_small_setup();
    Vec f(2);
    f << Complex{1, 0}, Complex{0.5, 0};
    auto table = limit_large(s.model, s.dec, s.reg, {f});
    CHECK(sup_norm(table.at(0b1) - phi_sum(s.dec, 0, f)) < 1e-10);
}

TEST_CASE("yule large limit matches the long-time ODE") {
    auto s = make(build_yule(1.0));
    auto table = limit_large(s.model, s.dec, s.reg, {ones(1), ones(1)});
    auto mt = moment_hierarchy(s.model, {ones(1), ones(1)}, {0.0, 8.0});
    Complex scaled = std::exp(-2.0 * 8.0) * mt.at(mt.time_index(8.0), 0b11)[0];
    CHECK(std::abs(scaled - table.at(0b11)[0]) < 1e-3);
}

TEST_CASE("large limits: conjugation and scaling") {
    auto s = make(build_yule(1.0));
    Vec f(1), g(1);
    f << Complex{0.8, 0.3};
    g << Complex{-0.2, 1.1};
    auto base = limit_large(s.model, s.dec, s.reg, {f, g});
    auto conj = limit_large(s.model, s.dec, s.reg, {Vec(f.conjugate()), Vec(g.conjugate())});
    CHECK(sup_norm(conj.at(0b11) - base.at(0b11).conjugate()) < 1e-7);
    Complex c1{2, -1}, c2{0.5, 0.5};
    auto scaled = limit_large(s.model, s.dec, s.reg, {Vec(c1 * f), Vec(c2 * g)});
    CHECK(sup_norm(scaled.at(0b11) - Vec(c1 * c2 * base.at(0b11))) < 1e-6);
}

TEST_CASE("large rejects a small function") {
    auto s = coupled_small_setup();
    Vec f_small = s.dec.blocks[1].chains[0][0];
    CHECK_THROWS_AS(limit_large(s.model, s.dec, s.reg, {f_small, f_small}), NotInRegime);
}

TEST_CASE("small limits: odd subsets vanish") {
    auto s = coupled_small_setup();
    Vec f = s.dec.blocks[1].chains[0][0];
    auto table = limit_small(s.model, s.dec, s.reg, {f, f, f, f});
    CHECK(sup_norm(table.at(0b0001)) == 0.0);
    CHECK(sup_norm(table.at(0b0111)) == 0.0);
    CHECK(sup_norm(table.at(0b0011)) > 0.0);
    CHECK(sup_norm(table.at(0b1111)) > 0.0);
}

TEST_CASE("small limits: decoupled model has a vanishing pair limit") {
    RealMat J = RealMat::Zero(2, 2);
    J(0, 0) = 2;
    J(1, 1) = 0.5;
    auto s = make(build_from_jordan(J, RealMat::Identity(2, 2), RealVec::Ones(2)));
    // f supported on the small state only; nothing feeds the dominant dual.
    Vec f(2);
    f << Complex{0, 0}, Complex{1, 0};
    auto table = limit_small(s.model, s.dec, s.reg, {f, f});
    CHECK(sup_norm(table.at(0b11)) < 1e-8);
}

TEST_CASE("small pair limit matches the long-time ODE") {
    auto s = coupled_small_setup();
    Vec f = s.dec.blocks[1].chains[0][0];
    f /= sup_norm(f);
    auto table = limit_small(s.model, s.dec, s.reg, {f, f});
    double t = 18.0;
    auto mt = moment_hierarchy(s.model, {f, f}, {0.0, t});
    Vec scaled = std::exp(-s.dec.lambda1() * t) * mt.at(mt.time_index(t), 0b11);
    CHECK(sup_norm(scaled - table.at(0b11)) / sup_norm(table.at(0b11)) < 0.01);
}

TEST_CASE("operator-normalized small pair limit agrees (simple lambda_1)") {
    auto s = coupled_small_setup();
    Vec f = s.dec.blocks[1].chains[0][0];
    f /= sup_norm(f);
    auto table = limit_small(s.model, s.dec, s.reg, {f, f});
    auto star = limit_small_star(s.model, s.dec, s.reg, {f, f});
    // With p_1 = 1 the two clauses coincide.
    CHECK(sup_norm(star.value - table.at(0b11)) < 1e-6);
}

TEST_CASE("small limits require small eigenvalues") {
    auto s = make(build_yule(1.0));
    CHECK_THROWS_AS(limit_small(s.model, s.dec, s.reg, {ones(1), ones(1)}), NotInRegime);
}

TEST_CASE("critical limits: non-conjugate pair vanishes, conjugate does not") {
    auto s = rotation_setup();
    Vec f = s.dec.blocks[1].chains[0][0];
    Vec fbar = s.dec.blocks[2].chains[0][0];
    auto same = limit_critical(s.model, s.dec, s.reg, {f, f});
    CHECK(sup_norm(same.at(0b11)) == 0.0);
    auto pair = limit_critical(s.model, s.dec, s.reg, {f, fbar});
    CHECK(sup_norm(pair.at(0b11)) > 0.0);
}

TEST_CASE("critical conjugate pair matches the long-time ODE (rotation model)") {
    auto s = rotation_setup();
    Vec f = s.dec.blocks[1].chains[0][0];
    f /= sup_norm(f);
    Vec fbar = f.conjugate();
    auto table = limit_critical(s.model, s.dec, s.reg, {f, fbar});
    double t = 20.0;
    auto mt = moment_hierarchy(s.model, {f, fbar}, {0.0, t});
    Vec scaled = std::exp(-s.dec.lambda1() * t) / (1.0 + t) *
                 mt.at(mt.time_index(t), 0b11);
    CHECK(sup_norm(scaled - table.at(0b11)) / sup_norm(table.at(0b11)) < 0.05);
}

TEST_CASE("real critical eigenvalue at lambda_1/2 matches the long-time ODE") {
    auto s = real_critical_setup();
    REQUIRE(s.reg.tags[1] == Regime::Critical);
    Vec f = s.dec.blocks[1].chains[0][0];
    f /= sup_norm(f);
    // Real eigenvalue: (f, f) is a conjugate pair.
    auto table = limit_critical(s.model, s.dec, s.reg, {f, f});
    CHECK(sup_norm(table.at(0b11)) > 0.0);
    double t = 25.0;
    auto mt = moment_hierarchy(s.model, {f, f}, {0.0, t});
    Vec scaled = std::exp(-s.dec.lambda1() * t) / (1.0 + t) *
                 mt.at(mt.time_index(t), 0b11);
    CHECK(sup_norm(scaled - table.at(0b11)) / sup_norm(table.at(0b11)) < 0.05);
}

TEST_CASE("critical limits: conjugation symmetry and alpha validation") {
    auto s = rotation_setup();
    Vec f = s.dec.blocks[1].chains[0][0];
    Vec fbar = f.conjugate();
    auto base = limit_critical(s.model, s.dec, s.reg, {f, fbar});
    auto conj = limit_critical(s.model, s.dec, s.reg, {fbar, f});
    CHECK(sup_norm(conj.at(0b11) - base.at(0b11).conjugate()) < 1e-8);
    CHECK_THROWS_AS(limit_critical(s.model, s.dec, s.reg, {f, fbar}, 1),
                    std::invalid_argument);
}

TEST_CASE("limit table csv shape") {
    auto s = make(build_yule(1.0));
    auto table = limit_large(s.model, s.dec, s.reg, {ones(1), ones(1)});
    auto csv = limit_table_csv(table);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3);
}
