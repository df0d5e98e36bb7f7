#pragma once

#include "bmp/limits.hpp"
#include "bmp/model.hpp"
#include "bmp/moments.hpp"
#include "bmp/spectral.hpp"
#include "bmp/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace bmp {

/// Unit-sup-norm test functions of one regime class: the generalized
/// eigenbasis members of the class plus seeded random combinations projected
/// into it.
struct FunctionDictionary {
    Regime regime;
    std::vector<Vec> members;
    std::vector<std::string> provenance; // "eigenbasis" / "random-in-class"
    std::string id;
};

FunctionDictionary build_dictionary(const SpectralDecomposition& dec,
                                    const RegimeClassification& reg, Regime regime,
                                    std::uint64_t seed, int n_random = 8);

/// Normalized-defect curve: per grid time, the sup over dictionary tuples and
/// states of |normalized moment - limit|.
struct DeltaCurve {
    Regime regime;
    int ell = 0;
    std::vector<double> times;
    std::vector<double> delta;
    std::string convention_id;
    std::string dict_id;
};

/// Large regime. With lemma_form the twisted-argument defect
///   |e^{-lambda~ t} psi_t^(ell)[(e^{-Nt}f_i)_i] - L_[ell][f]|
/// is used; otherwise the proof-consistent theorem normalization
///   |e^{-lambda~ t}(1+t)^{-(p~-ell)} psi_t^(ell)[f] - prod (p(f_j)-1)!^{-1} L_[ell][f*]|.
DeltaCurve delta_large(const BmpModel& model, const SpectralDecomposition& dec,
                       const RegimeClassification& reg, const FunctionDictionary& dict,
                       int ell, const std::vector<double>& grid, bool lemma_form = true,
                       const QuadSpec& quad = {}, double ode_tol = 1e-9);

/// Small regime (ell even); for ell = 2 `star_form` switches to the
/// operator-normalized defect against L*_[2].
DeltaCurve delta_small(const BmpModel& model, const SpectralDecomposition& dec,
                       const RegimeClassification& reg, const FunctionDictionary& dict,
                       int ell, const std::vector<double>& grid, bool star_form = false,
                       const QuadSpec& quad = {}, double ode_tol = 1e-9);

/// Critical regime (ell = 2 with explicit tuples): conjugate tuples converge
/// to the pair limit, non-conjugate tuples to zero.
DeltaCurve delta_critical(const BmpModel& model, const SpectralDecomposition& dec,
                          const RegimeClassification& reg,
                          const std::vector<std::vector<Vec>>& tuples,
                          const std::vector<double>& grid, int alpha = 0,
                          const QuadSpec& quad = {}, double ode_tol = 1e-9);

/// Resolution-of-identity defect
///   e^{-Re lambda_m' t} sup_f |e^{tA} f - sum_{i<m'} e^{(lambda_i+N)t} Phi_i[f]|
/// over the dictionary. retain = -1 keeps every cluster (defect ~ 0).
std::vector<double> verify_h1(const BmpModel& model, const SpectralDecomposition& dec,
                              const std::vector<double>& grid,
                              const std::vector<Vec>& dict_b1, int retain = -1);

/// Report CSV: regime, ell, t, delta, convention_id, dict_id.
std::string delta_curve_csv(const DeltaCurve& curve);

} // namespace bmp
