#pragma once

#include "bmp/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace bmp {

/// One atom of an offspring law: with probability `p` the branching particle
/// is replaced by the multiset `children` of states.
struct OffspringAtom {
    double p = 0.0;
    std::vector<int> children;
};

/// Finite-state branching Markov process.
///
/// Particles move on E = {0,...,n-1} with conservative generator Q, branch at
/// state-dependent rate gamma, and are replaced by offspring drawn from a
/// finite mixture of deterministic multisets. Immutable after construction.
struct BmpModel {
    int n = 0;
    RealMat motion;     // Q, n x n, rows sum to 0
    RealVec branch_rate; // gamma >= 0
    std::vector<std::vector<OffspringAtom>> offspring; // per state
};

struct ValidationReport {
    std::vector<std::string> issues;
    bool ok() const { return issues.empty(); }
};

ValidationReport validate_model(const BmpModel& model);

/// Mean offspring matrix M[x][y] = E_x[# offspring at y].
RealMat mean_offspring_matrix(const BmpModel& model);

/// Mean-semigroup generator A = Q + diag(gamma) (M - I), so psi_t = e^{tA}.
RealMat mean_matrix(const BmpModel& model);

/// sup_x E_x[N^k], computed exactly over the finite offspring support.
double offspring_moment_sup(const BmpModel& model, int k);

/// Block function fed to zeta: maps (block of A, state) -> value.
using BlockFunction = std::function<Complex(const std::vector<int>& block, int state)>;

/// The coupling operator of the moment hierarchy:
///   zeta_A[g](x) = E_x[ sum_{sigma in P*(A)} sum_{injective i} prod_j g(sigma_j, x_{i_j}) ].
/// Exact enumeration over offspring atoms, proper partitions of A, and
/// injective index tuples; partitions with more blocks than offspring give 0.
Complex zeta_apply(const BmpModel& model, const std::vector<int>& A,
                   const BlockFunction& g, int x);

/// zeta_A[g] evaluated at every state.
Vec zeta_apply_all(const BmpModel& model, const std::vector<int>& A,
                   const BlockFunction& g);

struct PartitionSet; // bmp/partitions.hpp

/// zeta with a pre-enumerated partition set of A (hot loops in the hierarchy).
Complex zeta_apply_prepared(const BmpModel& model, const PartitionSet& partitions,
                            const BlockFunction& g, int x);

// ---- Builders --------------------------------------------------------------

/// Single state, branch rate beta, binary split: the Yule process.
BmpModel build_yule(double beta);

BmpModel build_multitype(RealMat Q, RealVec gamma,
                         std::vector<std::vector<OffspringAtom>> offspring);

/// Synthesizes offspring laws matching the target mean matrix row-exactly.
/// Per state x with row m = target_mean.row(x): let K = max(1, ceil(2 sum_y m_y))
/// (the doubled row total); the law is the all-or-nothing mixture
///   { K copies of y with probability m_y / K }  plus  { empty, remainder }.
/// Each atom contributes m_y to the mean at y exactly, and sum_y m_y/K <= 1/2.
/// Motion defaults to Q = 0 unless given.
BmpModel build_from_mean(const RealMat& target_mean, const RealVec& gamma,
                         const RealMat* Q = nullptr);

/// Target generator A = V J V^{-1}; requires gamma > 0 and A entrywise
/// compatible with nonnegative offspring means (M = I + diag(gamma)^{-1} A).
BmpModel build_from_jordan(const RealMat& J, const RealMat& V, const RealVec& gamma);

// ---- JSON model files ------------------------------------------------------
// {"n": int, "Q": [[...]], "gamma": [...],
//  "offspring": [[{"p": float, "children": [state,...]}, ...] per state]}

BmpModel load_model_json(const std::string& path);
void save_model_json(const BmpModel& model, const std::string& path);
std::string model_to_json_string(const BmpModel& model);
BmpModel model_from_json_string(const std::string& text);

} // namespace bmp
