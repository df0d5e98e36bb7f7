#include "bmp/limits.hpp"

#include "bmp/partitions.hpp"
#include "bmp/quadrature.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace bmp {

namespace {

constexpr const char* kDampingConvention = "damping:exp(-lambda1*|A|*s/2)";

std::vector<int> mask_elements(std::uint32_t mask) {
    std::vector<int> out;
    for (int i = 0; mask; ++i, mask >>= 1)
        if (mask & 1u) out.push_back(i);
    return out;
}

std::uint32_t block_mask(const std::vector<int>& block) {
    std::uint32_t m = 0;
    for (int i : block) m |= (1u << i);
    return m;
}

double factorial(int k) {
    double f = 1;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

Mat expm(const RealMat& A, double t) { return RealMat((t * A).exp()).cast<Complex>(); }

// psi_s[f] through the spectral resolution, dropping blocks with negligible
// projection. For f inside a decaying eigenclass this preserves the true decay
// rate at large s, where the dense matrix exponential loses it to round-off in
// the dominant direction.
Vec semigroup_apply_in_class(const SpectralDecomposition& dec, double s, const Vec& f) {
    const double scale = sup_norm(f);
    Vec out = Vec::Zero(dec.n);
    for (int i = 0; i < dec.m(); ++i) {
        Vec pf = phi_sum(dec, i, f);
        if (sup_norm(pf) <= 1e-12 * scale) continue;
        out += std::exp(dec.blocks[i].lambda * s) * exp_nilpotent(dec, s, pf);
    }
    return out;
}

} // namespace

ImproperResult improper_integral(const std::function<Vec(double)>& integrand,
                                 double decay_rate, int poly_degree,
                                 const QuadSpec& quad) {
    if (decay_rate <= 0)
        throw std::invalid_argument("improper_integral: decay rate must be positive");
    const double eps = decay_rate;
    const int q = std::max(poly_degree, 0);

    // Empirical envelope constant on [0, 1], doubled.
    double C = 0;
    int dim = 0;
    for (int i = 0; i <= 8; ++i) {
        double s = i / 8.0;
        Vec v = integrand(s);
        dim = static_cast<int>(v.size());
        C = std::max(C, sup_norm(v) * std::exp(eps * s) / std::pow(1.0 + s, q));
    }
    C *= 2.0;
    ImproperResult res;
    if (C == 0) {
        res.value = Vec::Zero(dim);
        res.horizon = 1.0;
        return res;
    }

    // Tail bound: for T >= max(1, 2q/eps - 1),
    //   int_T^inf C e^{-eps s}(1+s)^q ds <= 2C/eps (1+T)^q e^{-eps T}.
    auto tail = [&](double T) {
        return 2.0 * C / eps * std::pow(1.0 + T, q) * std::exp(-eps * T);
    };
    double T = std::max(1.0, 2.0 * q / eps);
    while (tail(T) >= quad.quad_tol / 2 && T < quad.horizon_cap) T *= 1.5;
    T = std::min(T, quad.horizon_cap);

    double at_horizon = sup_norm(integrand(T));
    double bound_at_horizon = C * std::exp(-eps * T) * std::pow(1.0 + T, q);
    if (at_horizon > 10.0 * std::max(bound_at_horizon, 1e-300))
        throw NonDecaying("improper_integral: integrand exceeds its decay envelope at T=" +
                          std::to_string(T));

    int panels = std::max(quad.min_panels, static_cast<int>(std::ceil(T / 4.0)));
    Vec coarse = integrate_gl(integrand, 0.0, T, panels);
    double err = std::numeric_limits<double>::infinity();
    Vec fine = coarse;
    while (panels * 2 <= quad.max_panels) {
        panels *= 2;
        fine = integrate_gl(integrand, 0.0, T, panels);
        err = sup_norm(Vec(fine - coarse));
        coarse = fine;
        if (err < quad.quad_tol / 2) break;
    }
    res.value = fine;
    res.err_estimate = err + tail(T);
    res.horizon = T;
    return res;
}

// ---- Large regime ----------------------------------------------------------

namespace {

struct LargeEvaluator {
    const BmpModel& model;
    const SpectralDecomposition& dec;
    const RegimeClassification& reg;
    const QuadSpec& quad;
    const std::vector<Vec>& fs0;      // the untwisted tuple
    std::vector<char> twist_free;     // N f_i = 0: e^{-Ns}f_i = f_i for all s
    std::map<std::uint32_t, Vec> memo; // L_A[fs0] for twist-free masks
    double worst_err = 0, worst_T = 0;

    LargeEvaluator(const BmpModel& m, const SpectralDecomposition& d,
                   const RegimeClassification& r, const QuadSpec& q,
                   const std::vector<Vec>& fs)
        : model(m), dec(d), reg(r), quad(q), fs0(fs) {
        for (const auto& f : fs)
            twist_free.push_back(sup_norm(Vec(dec.nilpotent * f)) <= 1e-12 * sup_norm(f));
    }

    bool mask_twist_free(std::uint32_t mask) const {
        for (int i = 0; mask; ++i, mask >>= 1)
            if ((mask & 1u) && !twist_free[i]) return false;
        return true;
    }

    // Memoized L_A[fs0]; valid as an inner-block value whenever the block is
    // twist-free (the twisted arguments then equal fs0).
    Vec evaluate_cached(std::uint32_t mask) {
        auto it = memo.find(mask);
        if (it == memo.end()) it = memo.emplace(mask, evaluate(mask, fs0)).first;
        return it->second;
    }

    // L_A for the tuple `fs` restricted to the elements of `mask`.
    Vec evaluate(std::uint32_t mask, const std::vector<Vec>& fs) {
        auto elems = mask_elements(mask);
        if (elems.size() == 1) {
            auto prof = classify_function(dec, reg, fs[elems[0]]);
            if (prof.nu < 0)
                throw NotInRegime("limit_large: singleton has no eigenclass");
            return phi_sum(dec, prof.nu, fs[elems[0]]);
        }

        Complex lam_tilde{0, 0};
        int p_tilde = 0;
        for (int i : elems) {
            auto prof = classify_function(dec, reg, fs[i]);
            if (prof.nu < 0 || prof.regime != Regime::Large)
                throw NotInRegime("limit_large: function not in Ei(Lambda_L)");
            lam_tilde += prof.lambda;
            p_tilde += prof.p;
        }
        const double gap = lam_tilde.real() - dec.lambda1();
        if (gap <= 0)
            throw NumericalError("limit_large: nonpositive spectral gap (classification bug)");

        PartitionSet ps = enumerate_partitions(elems);
        auto integrand = [&](double s) -> Vec {
            std::vector<Vec> twisted = fs;
            for (int i : elems) twisted[i] = exp_nilpotent(dec, -s, fs[i]);
            // Per-node cache: blocks recur across partitions.
            std::map<std::uint32_t, Vec> cache;
            BlockFunction g = [&](const std::vector<int>& block, int state) {
                std::uint32_t bm = block_mask(block);
                if (bm != mask && mask_twist_free(bm)) return evaluate_cached(bm)[state];
                auto it = cache.find(bm);
                if (it == cache.end())
                    it = cache.emplace(bm, evaluate(bm, twisted)).first;
                return it->second[state];
            };
            Vec zeta(model.n);
            for (int x = 0; x < model.n; ++x)
                zeta[x] = model.branch_rate[x] * zeta_apply_prepared(model, ps, g, x);
            return Vec(std::exp(-lam_tilde * s) * (expm(dec.mean, s) * zeta));
        };
        auto res = improper_integral(integrand, gap, p_tilde + dec.p_max, quad);
        worst_err = std::max(worst_err, res.err_estimate);
        worst_T = std::max(worst_T, res.horizon);
        return res.value;
    }
};

} // namespace

LimitTable limit_large(const BmpModel& model, const SpectralDecomposition& dec,
                       const RegimeClassification& reg, const std::vector<Vec>& fs,
                       const QuadSpec& quad) {
    const int ell = static_cast<int>(fs.size());
    if (ell < 1 || ell > 6) throw std::invalid_argument("limit_large: ell must be in [1, 6]");
    for (const auto& f : fs) {
        auto prof = classify_function(dec, reg, f);
        if (prof.nu < 0 || prof.regime != Regime::Large)
            throw NotInRegime("limit_large: tuple not in Ei(Lambda_L)^ell");
    }

    LargeEvaluator ev{model, dec, reg, quad, fs};
    LimitTable table;
    table.regime = Regime::Large;
    table.ell = ell;
    table.convention = kDampingConvention;
    const std::uint32_t top = (1u << ell) - 1u;
    for (std::uint32_t mask = 1; mask <= top; ++mask)
        table.L[mask] = ev.mask_twist_free(mask) ? ev.evaluate_cached(mask)
                                                 : ev.evaluate(mask, fs);
    table.err_estimate = ev.worst_err;
    table.horizon = ev.worst_T;
    return table;
}

// ---- Small regime ----------------------------------------------------------

LimitTable limit_small(const BmpModel& model, const SpectralDecomposition& dec,
                       const RegimeClassification& reg, const std::vector<Vec>& fs,
                       const QuadSpec& quad) {
    const int ell = static_cast<int>(fs.size());
    if (ell < 1 || ell > 6) throw std::invalid_argument("limit_small: ell must be in [1, 6]");
    if (!reg.tau) throw NotInRegime("limit_small: no small eigenvalues (tau undefined)");
    for (const auto& f : fs) {
        auto prof = classify_function(dec, reg, f);
        if (!prof.in_small_class)
            throw NotInRegime("limit_small: tuple not in Ei(Lambda_S)^ell");
    }

    const double l1 = dec.lambda1();
    const int p1 = dec.blocks[0].p;
    const double re_tau = dec.blocks[*reg.tau].lambda.real();
    const double eps_pair = l1 - 2.0 * re_tau;

    LimitTable table;
    table.regime = Regime::Small;
    table.ell = ell;
    table.convention = kDampingConvention;

    Mat npow = Mat::Identity(dec.n, dec.n);
    for (int r = 1; r < p1; ++r) npow = dec.nilpotent * npow; // N^{p1-1}

    const std::uint32_t top = (1u << ell) - 1u;
    for (std::uint32_t order = 1; order <= static_cast<std::uint32_t>(ell); ++order) {
        for (std::uint32_t mask = 1; mask <= top; ++mask) {
            auto elems = mask_elements(mask);
            if (elems.size() != order) continue;
            if (elems.size() % 2 == 1) {
                table.L[mask] = Vec::Zero(dec.n);
                continue;
            }
            if (elems.size() == 2) {
                const Vec& f1 = fs[elems[0]];
                const Vec& f2 = fs[elems[1]];
                Vec prod = f1.cwiseProduct(f2);
                Vec constant = factorial(p1 - 1) * phi_project(dec, 0, 1, Vec(npow * prod));

                PartitionSet ps = enumerate_partitions(elems);
                auto integrand = [&](double s) -> Vec {
                    // Singleton blocks of a pair: psi_s[f_i] = e^{sA} f_i.
                    Vec psi1 = semigroup_apply_in_class(dec, s, f1);
                    Vec psi2 = semigroup_apply_in_class(dec, s, f2);
                    BlockFunction g = [&](const std::vector<int>& block, int state) {
                        return block[0] == elems[0] ? psi1[state] : psi2[state];
                    };
                    Vec zeta(model.n);
                    for (int x = 0; x < model.n; ++x)
                        zeta[x] = model.branch_rate[x] * zeta_apply_prepared(model, ps, g, x);
                    return Vec(factorial(p1 - 1) * std::exp(-l1 * s) *
                               phi_project(dec, 0, 1, Vec(npow * zeta)));
                };
                auto res = improper_integral(integrand, eps_pair, 2 * dec.p_max, quad);
                table.err_estimate = std::max(table.err_estimate, res.err_estimate);
                table.horizon = std::max(table.horizon, res.horizon);
                table.L[mask] = constant + res.value;
                continue;
            }
            // Even |A| >= 4: damped integral of zeta over already-computed L's.
            PartitionSet ps = enumerate_partitions(elems);
            BlockFunction g = [&](const std::vector<int>& block, int state) {
                return table.L.at(block_mask(block))[state];
            };
            Vec zeta(model.n);
            for (int x = 0; x < model.n; ++x)
                zeta[x] = model.branch_rate[x] * zeta_apply_prepared(model, ps, g, x);
            const double damp = l1 * elems.size() / 2.0;
            auto integrand = [&](double s) -> Vec {
                return Vec(std::exp(-damp * s) * (expm(dec.mean, s) * zeta));
            };
            const double gap = damp - l1;
            if (gap <= 0)
                throw NumericalError("limit_small: nonpositive gap for |A| >= 4 (lambda_1 <= 0)");
            auto res = improper_integral(integrand, gap, p1 - 1, quad);
            table.err_estimate = std::max(table.err_estimate, res.err_estimate);
            table.horizon = std::max(table.horizon, res.horizon);
            table.L[mask] = res.value;
        }
    }
    return table;
}

ImproperResult limit_small_star(const BmpModel& model, const SpectralDecomposition& dec,
                                const RegimeClassification& reg,
                                const std::vector<Vec>& fs, const QuadSpec& quad) {
    if (fs.size() != 2) throw std::invalid_argument("limit_small_star: needs a pair");
    if (!reg.tau) throw NotInRegime("limit_small_star: no small eigenvalues");
    for (const auto& f : fs) {
        auto prof = classify_function(dec, reg, f);
        if (!prof.in_small_class)
            throw NotInRegime("limit_small_star: pair not in Ei(Lambda_S)^2");
    }
    const double l1 = dec.lambda1();
    const double eps = l1 - 2.0 * dec.blocks[*reg.tau].lambda.real();

    PartitionSet ps = enumerate_partitions({0, 1});
    auto integrand = [&](double s) -> Vec {
        Vec psi1 = semigroup_apply_in_class(dec, s, fs[0]);
        Vec psi2 = semigroup_apply_in_class(dec, s, fs[1]);
        BlockFunction g = [&](const std::vector<int>& block, int state) {
            return block[0] == 0 ? psi1[state] : psi2[state];
        };
        Vec zeta(model.n);
        for (int x = 0; x < model.n; ++x)
            zeta[x] = model.branch_rate[x] * zeta_apply_prepared(model, ps, g, x);
        Vec proj = phi_sum(dec, 0, zeta);
        return Vec(std::exp(-l1 * s) * exp_nilpotent(dec, -s, proj));
    };
    auto res = improper_integral(integrand, eps, 2 * dec.p_max, quad);
    res.value += phi_sum(dec, 0, Vec(fs[0].cwiseProduct(fs[1])));
    return res;
}

// ---- Critical regime -------------------------------------------------------

LimitTable limit_critical(const BmpModel& model, const SpectralDecomposition& dec,
                          const RegimeClassification& reg, const std::vector<Vec>& fs,
                          int alpha, const QuadSpec& quad) {
    const int ell = static_cast<int>(fs.size());
    if (ell < 1 || ell > 6)
        throw std::invalid_argument("limit_critical: ell must be in [1, 6]");
    const int p1 = dec.blocks[0].p;
    if (alpha < 0 || alpha > p1 - 1)
        throw std::invalid_argument("limit_critical: alpha out of range");

    std::vector<FunctionProfile> profs;
    for (const auto& f : fs) {
        auto prof = classify_function(dec, reg, f);
        if (prof.nu < 0 || prof.regime != Regime::Critical)
            throw NotInRegime("limit_critical: tuple not in Ei(Lambda_C)^ell");
        profs.push_back(prof);
    }

    const double l1 = dec.lambda1();
    Mat npow = Mat::Identity(dec.n, dec.n);
    for (int r = 1; r < p1; ++r) npow = dec.nilpotent * npow; // N^{p1-1}

    LimitTable table;
    table.regime = Regime::Critical;
    table.ell = ell;
    table.convention = kDampingConvention;

    auto conjugate_subset = [&](const std::vector<int>& elems) {
        if (elems.size() % 2) return false;
        std::vector<int> matched(elems.size(), 0);
        for (std::size_t i = 0; i < elems.size(); ++i) {
            if (matched[i]) continue;
            bool found = false;
            for (std::size_t j = i + 1; j < elems.size(); ++j) {
                if (matched[j]) continue;
                if (std::abs(profs[elems[j]].lambda - std::conj(profs[elems[i]].lambda)) <=
                    reg.tol_regime) {
                    matched[i] = matched[j] = 1;
                    found = true;
                    break;
                }
            }
            if (!found) return false;
        }
        return true;
    };

    const std::uint32_t top = (1u << ell) - 1u;
    for (std::uint32_t order = 1; order <= static_cast<std::uint32_t>(ell); ++order) {
        for (std::uint32_t mask = 1; mask <= top; ++mask) {
            auto elems = mask_elements(mask);
            if (elems.size() != order) continue;
            if (elems.size() % 2 == 1 || !conjugate_subset(elems)) {
                table.L[mask] = Vec::Zero(dec.n);
                continue;
            }
            // The alpha-dependent normalization applies to the pair clause of
            // the top-level ell = 2 table; nested pairs use the theorem case.
            const int a_here = (elems.size() == 2 && ell == 2) ? alpha : 0;
            if (elems.size() == 2) {
                const auto& pi = profs[elems[0]];
                const auto& pj = profs[elems[1]];
                // Phi_{lambda(.),1}[f*] per singleton block.
                Vec star_i = fs[elems[0]], star_j = fs[elems[1]];
                for (int r = 1; r < pi.p; ++r) star_i = dec.nilpotent * star_i;
                for (int r = 1; r < pj.p; ++r) star_j = dec.nilpotent * star_j;
                Vec proj_i = phi_project(dec, pi.nu, 1, star_i);
                Vec proj_j = phi_project(dec, pj.nu, 1, star_j);

                PartitionSet ps = enumerate_partitions(elems);
                BlockFunction g = [&](const std::vector<int>& block, int state) {
                    return block[0] == elems[0] ? proj_i[state] : proj_j[state];
                };
                Vec zeta(model.n);
                for (int x = 0; x < model.n; ++x)
                    zeta[x] = model.branch_rate[x] * zeta_apply_prepared(model, ps, g, x);
                const int p_tilde = pi.p + pj.p;
                double scale = factorial(p_tilde - 2) /
                               (factorial(pi.p - 1) * factorial(pj.p - 1) *
                                factorial(p1 + p_tilde - a_here - 2));
                table.L[mask] = scale * phi_project(dec, 0, 1, Vec(npow * zeta));
                continue;
            }
            // Conjugate tuples of even size >= 4: damped recursive integral.
            PartitionSet ps = enumerate_partitions(elems);
            BlockFunction g = [&](const std::vector<int>& block, int state) {
                return table.L.at(block_mask(block))[state];
            };
            Vec zeta(model.n);
            for (int x = 0; x < model.n; ++x)
                zeta[x] = model.branch_rate[x] * zeta_apply_prepared(model, ps, g, x);
            const double damp = l1 * elems.size() / 2.0;
            const double gap = damp - l1;
            if (gap <= 0)
                throw NumericalError("limit_critical: nonpositive gap for |A| >= 4");
            auto integrand = [&](double s) -> Vec {
                return Vec(std::exp(-damp * s) * (expm(dec.mean, s) * zeta));
            };
            auto res = improper_integral(integrand, gap, p1 - 1, quad);
            table.err_estimate = std::max(table.err_estimate, res.err_estimate);
            table.horizon = std::max(table.horizon, res.horizon);
            table.L[mask] = res.value;
        }
    }
    return table;
}

std::string limit_table_csv(const LimitTable& table) {
    std::ostringstream out;
    out.precision(17);
    out << "subset_mask,state,re,im,T,err_estimate\n";
    for (const auto& [mask, v] : table.L)
        for (int x = 0; x < v.size(); ++x)
            out << mask << ',' << x << ',' << v[x].real() << ',' << v[x].imag() << ','
                << table.horizon << ',' << table.err_estimate << "\n";
    return out.str();
}

} // namespace bmp
