#include "bmp/model.hpp"
#include "bmp/partitions.hpp"

#include <doctest.h>

#include <cmath>
#include <memory>
#include <random>
#include <set>

using namespace bmp;

namespace {

// Brute-force zeta oracle: expands the triple sum with no shortcuts.
// Partitions are enumerated by canonicalizing every label assignment, and
// injective tuples by filtering the full product space.
Complex zeta_oracle(const BmpModel& model, const std::vector<int>& A,
                    const BlockFunction& g, int x) {
    const int k = static_cast<int>(A.size());
    std::set<std::vector<std::vector<int>>> partitions;
    std::vector<int> labels(k, 0);
    for (;;) {
        // Canonicalize: relabel by first occurrence.
        std::vector<int> relabel(k, -1);
        int next = 0;
        std::vector<std::vector<int>> blocks;
        for (int i = 0; i < k; ++i) {
            if (relabel[labels[i]] < 0) {
                relabel[labels[i]] = next++;
                blocks.emplace_back();
            }
            blocks[relabel[labels[i]]].push_back(A[i]);
        }
        partitions.insert(blocks);
        int i = k - 1;
        while (i >= 0 && labels[i] == k - 1) --i;
        if (i < 0) break;
        ++labels[i];
        for (int j = i + 1; j < k; ++j) labels[j] = 0;
    }

    Complex total{0, 0};
    for (const auto& atom : model.offspring[x]) {
        const int N = static_cast<int>(atom.children.size());
        Complex inner{0, 0};
        for (const auto& blocks : partitions) {
            const int L = static_cast<int>(blocks.size());
            if (L < 2) continue;
            // All tuples in {0..N-1}^L, keep the injective ones.
            std::vector<int> idx(L, 0);
            bool done = (N == 0);
            while (!done) {
                bool injective = true;
                for (int a = 0; a < L && injective; ++a)
                    for (int b = a + 1; b < L; ++b)
                        if (idx[a] == idx[b]) { injective = false; break; }
                if (injective) {
                    Complex prod{1, 0};
                    for (int j = 0; j < L; ++j) prod *= g(blocks[j], atom.children[idx[j]]);
                    inner += prod;
                }
                int i = L - 1;
                while (i >= 0 && idx[i] == N - 1) --i;
                if (i < 0) break;
                ++idx[i];
                for (int j = i + 1; j < L; ++j) idx[j] = 0;
            }
        }
        total += atom.p * inner;
    }
    return total;
}

BmpModel random_model(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> unif(0, 1);
    std::uniform_int_distribution<int> n_children(0, 4);
    std::uniform_int_distribution<int> state(0, n - 1);

    RealMat Q = RealMat::Zero(n, n);
    for (int x = 0; x < n; ++x) {
        for (int y = 0; y < n; ++y)
            if (x != y) Q(x, y) = unif(rng);
        Q(x, x) = -Q.row(x).sum();
    }
    RealVec gamma(n);
    for (int x = 0; x < n; ++x) gamma[x] = unif(rng);

    std::vector<std::vector<OffspringAtom>> laws(n);
    for (int x = 0; x < n; ++x) {
        int atoms = 1 + static_cast<int>(3 * unif(rng));
        std::vector<double> w(atoms);
        double wsum = 0;
        for (auto& wi : w) wsum += (wi = unif(rng) + 0.05);
        for (int a = 0; a < atoms; ++a) {
            OffspringAtom atom;
            atom.p = w[a] / wsum;
            int nc = n_children(rng);
            for (int c = 0; c < nc; ++c) atom.children.push_back(state(rng));
            laws[x].push_back(std::move(atom));
        }
        // Exact normalization.
        double used = 0;
        for (std::size_t a = 0; a + 1 < laws[x].size(); ++a) used += laws[x][a].p;
        laws[x].back().p = 1.0 - used;
    }
    return build_multitype(Q, gamma, laws);
}

BlockFunction random_g(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> unif(-1, 1);
    // Deterministic per (block, state) value derived from a random base table.
    auto base = std::make_shared<std::vector<Complex>>();
    for (int i = 0; i < 64 * n; ++i) base->push_back({unif(rng), unif(rng)});
    return [base, n](const std::vector<int>& block, int state) {
        std::size_t h = 0;
        for (int e : block) h = h * 31 + static_cast<std::size_t>(e) + 1;
        return (*base)[(h % 64) * n + state];
    };
}

} // namespace

TEST_CASE("validate: yule model is valid") {
    CHECK(validate_model(build_yule(1.0)).ok());
}

TEST_CASE("validate: bad row sum is reported") {
    BmpModel m = build_yule(1.0);
    m.n = 2;
    m.motion = RealMat(2, 2);
    m.motion << -1, 0.5, 1, -1;
    m.branch_rate = RealVec::Zero(2);
    m.offspring = {{{1.0, {}}}, {{1.0, {}}}};
    auto rep = validate_model(m);
    CHECK(!rep.ok());
}

TEST_CASE("validate: offspring probabilities must normalize") {
    BmpModel m = build_yule(1.0);
    m.offspring[0] = {{0.6, {0, 0}}, {0.3, {}}};
    CHECK(!validate_model(m).ok());
}

TEST_CASE("mean matrix: yule") {
    auto A = mean_matrix(build_yule(1.0));
    CHECK(A(0, 0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("mean matrix: no branching reduces to Q") {
    RealMat Q(2, 2);
    Q << -1, 1, 2, -2;
    auto m = build_multitype(Q, RealVec::Zero(2), {{{1.0, {0}}}, {{1.0, {1}}}});
    CHECK((mean_matrix(m) - Q).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("mean matrix: jordan block model") {
    // Q = 0, gamma = (1,1), state 0 -> {0,0,1}, state 1 -> {1,1}.
    auto m = build_multitype(RealMat::Zero(2, 2), RealVec::Ones(2),
                             {{{1.0, {0, 0, 1}}}, {{1.0, {1, 1}}}});
    RealMat A = mean_matrix(m);
    RealMat expect(2, 2);
    expect << 1, 1, 0, 1;
    CHECK((A - expect).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("offspring moment sup") {
    CHECK(offspring_moment_sup(build_yule(1.0), 2) == doctest::Approx(4.0));
    auto dead = build_multitype(RealMat::Zero(1, 1), RealVec::Ones(1), {{{1.0, {}}}});
    CHECK(offspring_moment_sup(dead, 3) == doctest::Approx(0.0));
    auto mixed = build_multitype(RealMat::Zero(1, 1), RealVec::Ones(1),
                                 {{{0.75, {0, 0}}, {0.25, {}}}});
    CHECK(offspring_moment_sup(mixed, 2) == doctest::Approx(3.0));
}

TEST_CASE("zeta: |A| = 1 vanishes") {
    auto yule = build_yule(1.0);
    BlockFunction one = [](const std::vector<int>&, int) { return Complex{1, 0}; };
    CHECK(std::abs(zeta_apply(yule, {1}, one, 0)) == 0.0);
}

TEST_CASE("zeta: yule hand enumeration") {
    auto yule = build_yule(1.0);
    BlockFunction one = [](const std::vector<int>&, int) { return Complex{1, 0}; };
    CHECK(zeta_apply(yule, {1, 2}, one, 0).real() == doctest::Approx(2.0));
    CHECK(zeta_apply(yule, {1, 2, 3}, one, 0).real() == doctest::Approx(6.0));
}

TEST_CASE("zeta: rejects empty A") {
    auto yule = build_yule(1.0);
    BlockFunction one = [](const std::vector<int>&, int) { return Complex{1, 0}; };
    CHECK_THROWS_AS(zeta_apply(yule, {}, one, 0), std::invalid_argument);
}

TEST_CASE("zeta: agrees with the brute-force oracle on random models") {
    std::mt19937_64 rng(20240817);
    std::uniform_int_distribution<int> n_dist(1, 3), a_dist(1, 4);
    for (int trial = 0; trial < 60; ++trial) {
        int n = n_dist(rng);
        auto model = random_model(rng, n);
        auto g = random_g(rng, n);
        int asize = a_dist(rng);
        std::vector<int> A;
        for (int i = 0; i < asize; ++i) A.push_back(i + 1);
        for (int x = 0; x < n; ++x) {
            Complex fast = zeta_apply(model, A, g, x);
            Complex slow = zeta_oracle(model, A, g, x);
            CHECK(std::abs(fast - slow) < 1e-12);
        }
    }
}

TEST_CASE("zeta: bounded by the offspring moment for g = 1") {
    std::mt19937_64 rng(7);
    BlockFunction one = [](const std::vector<int>&, int) { return Complex{1, 0}; };
    for (int trial = 0; trial < 20; ++trial) {
        auto model = random_model(rng, 3);
        for (int ksize = 2; ksize <= 4; ++ksize) {
            std::vector<int> A;
            for (int i = 0; i < ksize; ++i) A.push_back(i);
            double bound = offspring_moment_sup(model, ksize);
            for (int x = 0; x < model.n; ++x)
                CHECK(zeta_apply(model, A, one, x).real() <= bound + 1e-12);
        }
    }
}

TEST_CASE("zeta: multilinear in each block function") {
    std::mt19937_64 rng(99);
    auto model = random_model(rng, 2);
    auto g1 = random_g(rng, 2);
    auto g2 = random_g(rng, 2);
    std::vector<int> A{1, 2, 3};
    const std::vector<int> special{1, 2}; // the block whose value we vary
    Complex a{0.7, -0.3}, b{-1.1, 0.4};

    auto combine = [&](Complex ca, Complex cb) {
        return BlockFunction([=](const std::vector<int>& blk, int s) {
            if (blk == special) return ca * g1(blk, s) + cb * g2(blk, s);
            return g1(blk, s);
        });
    };
    for (int x = 0; x < model.n; ++x) {
        // Linearity in one block value, relative to the zeroed-block baseline
        // (partitions not containing the block are unaffected).
        Complex base = zeta_apply(model, A, combine(0, 0), x);
        Complex lhs = zeta_apply(model, A, combine(a, b), x) - base;
        Complex rhs = a * (zeta_apply(model, A, combine(1, 0), x) - base) +
                      b * (zeta_apply(model, A, combine(0, 1), x) - base);
        CHECK(std::abs(lhs - rhs) < 1e-12);
    }
}

TEST_CASE("from_mean: round trip of the mean matrix") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(0, 2);
    for (int trial = 0; trial < 10; ++trial) {
        int n = 1 + trial % 3;
        RealMat M(n, n);
        for (int x = 0; x < n; ++x)
            for (int y = 0; y < n; ++y) M(x, y) = unif(rng);
        RealVec gamma = RealVec::Ones(n) * (0.5 + unif(rng));
        auto model = build_from_mean(M, gamma);
        CHECK(validate_model(model).ok());
        RealMat A = mean_matrix(model);
        RealMat expect =
            gamma.asDiagonal() * (M - RealMat::Identity(n, n));
        CHECK((A - expect).cwiseAbs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("from_mean: rejects negative means") {
    RealMat M(1, 1);
    M << -0.5;
    CHECK_THROWS_AS(build_from_mean(M, RealVec::Ones(1)), std::invalid_argument);
}

TEST_CASE("from_jordan: jordan block target") {
    RealMat J(2, 2), V = RealMat::Identity(2, 2);
    J << 1, 1, 0, 1;
    auto model = build_from_jordan(J, V, RealVec::Ones(2));
    CHECK(validate_model(model).ok());
    CHECK((mean_matrix(model) - J).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("from_jordan: rejects singular V") {
    RealMat J = RealMat::Identity(2, 2), V = RealMat::Zero(2, 2);
    CHECK_THROWS_AS(build_from_jordan(J, V, RealVec::Ones(2)), std::invalid_argument);
}

TEST_CASE("json round trip") {
    auto m = build_multitype(RealMat::Zero(2, 2), RealVec::Ones(2),
                             {{{1.0, {0, 0, 1}}}, {{1.0, {1, 1}}}});
    auto m2 = model_from_json_string(model_to_json_string(m));
    CHECK(m2.n == m.n);
    CHECK((mean_matrix(m2) - mean_matrix(m)).cwiseAbs().maxCoeff() < 1e-14);
}
