#pragma once

#include "bmp/model.hpp"
#include "bmp/spectral.hpp"
#include "bmp/types.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>

namespace bmp {

struct QuadSpec {
    double quad_tol = 1e-8;
    int min_panels = 4;
    int max_panels = 1024;
    double horizon_cap = 400.0;
};

struct ImproperResult {
    Vec value;
    double err_estimate = 0;
    double horizon = 0;
};

/// Truncated improper integral int_0^inf g(s) ds for integrands bounded by
/// C e^{-eps s}(1+s)^q, with C estimated on [0,1] and doubled. The horizon T
/// makes the analytic tail bound < quad_tol/2; panels are refined until the
/// estimated quadrature error is < quad_tol/2. Throws NonDecaying when the
/// empirical value at the horizon exceeds the claimed bound by 10x.
ImproperResult improper_integral(const std::function<Vec(double)>& integrand,
                                 double decay_rate, int poly_degree,
                                 const QuadSpec& quad = {});

/// Limit functionals L_A per subset of the tuple, addressed by bitmask.
struct LimitTable {
    Regime regime;
    int ell = 0;
    std::map<std::uint32_t, Vec> L;
    double horizon = 0;       // largest truncation horizon used
    double err_estimate = 0;  // worst per-subset quadrature error estimate
    std::string convention;   // normalization convention id

    const Vec& at(std::uint32_t mask) const { return L.at(mask); }
};

/// Large regime: recursive evaluation of
///   L_A[f] = int_0^inf e^{-lambda~(f,A)s} psi_s[gamma zeta_A[L_.[(e^{-Ns}f_i)_i]]] ds
/// with the singleton clause L_{i}[f] = Phi_{nu(f_i)}[f_i].
LimitTable limit_large(const BmpModel& model, const SpectralDecomposition& dec,
                       const RegimeClassification& reg, const std::vector<Vec>& fs,
                       const QuadSpec& quad = {});

/// Small regime: pair clause through Phi_{1,1}[N^{p_1-1} .], recursive damped
/// integrals for even |A| >= 4, zero for odd subsets.
LimitTable limit_small(const BmpModel& model, const SpectralDecomposition& dec,
                       const RegimeClassification& reg, const std::vector<Vec>& fs,
                       const QuadSpec& quad = {});

/// The operator-normalized second-moment limit
///   L*_{[2]}[f] = Phi_1[f_1 f_2] + int_0^inf e^{-(lambda_1+N)s} Phi_1[gamma zeta_[2][psi_s^(.)]] ds.
ImproperResult limit_small_star(const BmpModel& model, const SpectralDecomposition& dec,
                                const RegimeClassification& reg,
                                const std::vector<Vec>& fs, const QuadSpec& quad = {});

/// Critical regime: closed-form conjugate-pair clause (alpha-dependent
/// factorial normalization; alpha = 0 is the theorem case), recursive damped
/// integrals for conjugate tuples of even size >= 4, zero otherwise.
LimitTable limit_critical(const BmpModel& model, const SpectralDecomposition& dec,
                          const RegimeClassification& reg, const std::vector<Vec>& fs,
                          int alpha = 0, const QuadSpec& quad = {});

/// CSV export: subset_mask, state, re, im, T, err_estimate.
std::string limit_table_csv(const LimitTable& table);

} // namespace bmp
