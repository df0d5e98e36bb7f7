#pragma once

#include "bmp/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace bmp {

enum class Regime { Large, Critical, Small };

std::string regime_name(Regime r);

/// Jordan data for one retained eigenvalue cluster. Chains are stored
/// bottom-up: chains[c][0] is the eigenvector (rank 1) and chains[c][j]
/// satisfies (A - lambda I) chains[c][j] = chains[c][j-1]. Chains are sorted
/// by decreasing length so the chain-link map k*(i,j,k) = k is injective per
/// rank. dual_chains holds the matching covectors (rows of the inverse basis).
struct EigenvalueBlock {
    Complex lambda;
    int p = 1; // max rank present
    std::vector<std::vector<Vec>> chains;
    std::vector<std::vector<Vec>> dual_chains;

    int chain_count_at_rank(int j) const; // k_{i,j}, j in [1, p]
    int algebraic_multiplicity() const;
};

/// Full generalized spectral data of the mean matrix: every eigenvalue is
/// retained, so the resolution of the identity is exact to round-off.
struct SpectralDecomposition {
    int n = 0;
    RealMat mean; // A
    std::vector<EigenvalueBlock> blocks; // Re decreasing, ties by Im increasing
    Mat basis;       // V: columns are all generalized eigenvectors
    Mat dual_basis;  // V^{-1}: rows are the dual functionals
    Mat nilpotent;   // N = V (J - diag(lambda)) V^{-1}
    int p_max = 1;

    double lambda1() const { return blocks.front().lambda.real(); }
    int m() const { return static_cast<int>(blocks.size()); }
};

/// Computes the decomposition by eigenvalue clustering and rank-revealing
/// Jordan-chain deflation. Throws DominanceViolation if the dominant cluster
/// is not real, IllConditioned if biorthogonality cannot be certified at 1e-8.
SpectralDecomposition decompose(const RealMat& A, double tol_cluster = 1e-7,
                                double tol_rank = 1e-8);

/// Phi_{i,j}[f] = sum_k dual_{i,j}^{(k)}[f] phi_{i,j}^{(k)}  (i, j are 0-based
/// block index and 1-based rank).
Vec phi_project(const SpectralDecomposition& dec, int i, int j, const Vec& f);

/// Phi_i[f] = sum_j Phi_{i,j}[f].
Vec phi_sum(const SpectralDecomposition& dec, int i, const Vec& f);

/// e^{N t} f via the finite nilpotent series; t may be negative.
Vec exp_nilpotent(const SpectralDecomposition& dec, double t, const Vec& f);

/// e^{tA} (dense matrix exponential of the mean matrix).
Mat semigroup(const SpectralDecomposition& dec, double t);

struct RegimeClassification {
    std::vector<Regime> tags;      // per block
    std::optional<int> tau;        // first small index (0-based), if any
    double tol_regime = 1e-9;
};

RegimeClassification classify_regimes(const SpectralDecomposition& dec,
                                      double tol_regime = 1e-9);

/// Per-function spectral profile.
struct FunctionProfile {
    bool zero_projection = false; // f in ker(lambda_m): no retained projection
    int nu = -1;                  // block index of Ei(lambda_nu), -1 if not in any Ei
    Complex lambda{0, 0};         // lambda(f)
    int p = 0;                    // rank of the projected function
    Regime regime = Regime::Small;
    bool in_small_class = false;  // f in ker(lambda_{tau-1}) = Ei(Lambda_S)
};

FunctionProfile classify_function(const SpectralDecomposition& dec,
                                  const RegimeClassification& reg, const Vec& f,
                                  double tol_member = 1e-9);

struct TupleProfile {
    std::vector<FunctionProfile> each;
    Complex lambda_tilde{0, 0};
    int p_tilde = 0;
    bool conjugate_tuple = false;
    std::vector<Vec> f_star; // (N^{p(f_i)-1} f_i)_i
};

TupleProfile tuple_profile(const SpectralDecomposition& dec,
                           const RegimeClassification& reg,
                           const std::vector<Vec>& fs, double tol_member = 1e-9);

/// Decomposition export for CLI inspection.
std::string decomposition_to_json_string(const SpectralDecomposition& dec,
                                         const RegimeClassification& reg);

} // namespace bmp
