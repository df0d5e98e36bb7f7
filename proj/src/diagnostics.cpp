#include "bmp/diagnostics.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <sstream>

namespace bmp {

namespace {

double factorial(int k) {
    double f = 1;
    for (int i = 2; i <= k; ++i) f *= i;
    return f;
}

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double unit_uniform(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    return (static_cast<double>(mix64(state) >> 11) + 0.5) * 0x1.0p-53;
}

} // namespace

FunctionDictionary build_dictionary(const SpectralDecomposition& dec,
                                    const RegimeClassification& reg, Regime regime,
                                    std::uint64_t seed, int n_random) {
    FunctionDictionary dict;
    dict.regime = regime;
    dict.id = regime_name(regime) + "-seed" + std::to_string(seed);

    // Blocks belonging to the class. For the small class this is every block
    // from tau on (their span is ker(lambda_{tau-1})).
    std::vector<int> class_blocks;
    for (int i = 0; i < dec.m(); ++i) {
        if (regime == Regime::Small) {
            if (reg.tau && i >= *reg.tau) class_blocks.push_back(i);
        } else if (reg.tags[i] == regime) {
            class_blocks.push_back(i);
        }
    }

    for (int i : class_blocks)
        for (const auto& chain : dec.blocks[i].chains)
            for (const auto& v : chain) {
                double nn = sup_norm(v);
                if (nn == 0) continue;
                dict.members.push_back(v / nn);
                dict.provenance.push_back("eigenbasis");
            }

    // Random unit-sup-norm combinations. Within a single block for large and
    // critical (so each member sits in exactly one Ei(lambda_i)); across the
    // whole kernel for small.
    std::uint64_t state = seed;
    for (int r = 0; r < n_random && !class_blocks.empty(); ++r) {
        Vec f = Vec::Zero(dec.n);
        if (regime == Regime::Small) {
            for (int i : class_blocks)
                for (const auto& chain : dec.blocks[i].chains)
                    for (const auto& v : chain)
                        f += Complex(2 * unit_uniform(state) - 1,
                                     2 * unit_uniform(state) - 1) * v;
        } else {
            int i = class_blocks[r % class_blocks.size()];
            for (const auto& chain : dec.blocks[i].chains)
                for (const auto& v : chain)
                    f += Complex(2 * unit_uniform(state) - 1,
                                 2 * unit_uniform(state) - 1) * v;
        }
        double nn = sup_norm(f);
        if (nn == 0) continue;
        dict.members.push_back(f / nn);
        dict.provenance.push_back("random-in-class");
    }
    return dict;
}

DeltaCurve delta_large(const BmpModel& model, const SpectralDecomposition& dec,
                       const RegimeClassification& reg, const FunctionDictionary& dict,
                       int ell, const std::vector<double>& grid, bool lemma_form,
                       const QuadSpec& quad, double ode_tol) {
    if (dict.regime != Regime::Large) throw NotInRegime("delta_large: dictionary regime mismatch");
    DeltaCurve curve;
    curve.regime = Regime::Large;
    curve.ell = ell;
    curve.times = grid;
    curve.delta.assign(grid.size(), 0.0);
    curve.convention_id = lemma_form ? "L3.1-twisted" : "T1-proof-consistent";
    curve.dict_id = dict.id;

    const std::uint32_t top = (1u << ell) - 1u;
    for (const auto& f : dict.members) {
        std::vector<Vec> fs(ell, f);
        auto prof = classify_function(dec, reg, f);
        if (prof.nu < 0 || prof.regime != Regime::Large)
            throw NotInRegime("delta_large: dictionary member not in Ei(Lambda_L)");
        Complex lam_tilde = static_cast<double>(ell) * prof.lambda;
        const int p_tilde = ell * prof.p;

        if (lemma_form) {
            LimitTable lim = limit_large(model, dec, reg, fs, quad);
            for (std::size_t gi = 0; gi < grid.size(); ++gi) {
                const double t = grid[gi];
                std::vector<Vec> twisted(ell);
                for (int i = 0; i < ell; ++i) twisted[i] = exp_nilpotent(dec, -t, f);
                MomentTable mt = moment_hierarchy(model, twisted, {t}, ode_tol);
                Vec diff = std::exp(-lam_tilde * t) * mt.at(0, top) - lim.at(top);
                curve.delta[gi] = std::max(curve.delta[gi], sup_norm(diff));
            }
        } else {
            std::vector<Vec> fstar(ell);
            Vec fs1 = f;
            for (int r = 1; r < prof.p; ++r) fs1 = dec.nilpotent * fs1;
            for (int i = 0; i < ell; ++i) fstar[i] = fs1;
            LimitTable lim = limit_large(model, dec, reg, fstar, quad);
            double fact = std::pow(factorial(prof.p - 1), ell);
            MomentTable mt = moment_hierarchy(model, fs, grid, ode_tol);
            for (std::size_t gi = 0; gi < grid.size(); ++gi) {
                const double t = grid[gi];
                Vec diff = std::exp(-lam_tilde * t) * std::pow(1.0 + t, -(p_tilde - ell)) *
                               mt.at(gi, top) -
                           lim.at(top) / fact;
                curve.delta[gi] = std::max(curve.delta[gi], sup_norm(diff));
            }
        }
    }
    return curve;
}

DeltaCurve delta_small(const BmpModel& model, const SpectralDecomposition& dec,
                       const RegimeClassification& reg, const FunctionDictionary& dict,
                       int ell, const std::vector<double>& grid, bool star_form,
                       const QuadSpec& quad, double ode_tol) {
    if (dict.regime != Regime::Small) throw NotInRegime("delta_small: dictionary regime mismatch");
    if (ell % 2 != 0) throw std::invalid_argument("delta_small: ell must be even");
    if (star_form && ell != 2)
        throw std::invalid_argument("delta_small: star form is a second-moment statement");

    DeltaCurve curve;
    curve.regime = Regime::Small;
    curve.ell = ell;
    curve.times = grid;
    curve.delta.assign(grid.size(), 0.0);
    curve.convention_id = star_form ? "L3.2-operator-normalized" : "T2-exp-rate-t";
    curve.dict_id = dict.id;

    const double l1 = dec.lambda1();
    const int p1 = dec.blocks[0].p;
    const std::uint32_t top = (1u << ell) - 1u;
    for (const auto& f : dict.members) {
        std::vector<Vec> fs(ell, f);
        MomentTable mt = moment_hierarchy(model, fs, grid, ode_tol);
        if (star_form) {
            auto star = limit_small_star(model, dec, reg, fs, quad);
            for (std::size_t gi = 0; gi < grid.size(); ++gi) {
                const double t = grid[gi];
                Vec normalized = std::exp(-l1 * t) * exp_nilpotent(dec, -t, mt.at(gi, top));
                curve.delta[gi] =
                    std::max(curve.delta[gi], sup_norm(Vec(normalized - star.value)));
            }
        } else {
            LimitTable lim = limit_small(model, dec, reg, fs, quad);
            for (std::size_t gi = 0; gi < grid.size(); ++gi) {
                const double t = grid[gi];
                Vec diff = std::exp(-ell * l1 * t / 2.0) *
                               std::pow(1.0 + t, -ell * (p1 - 1) / 2.0) * mt.at(gi, top) -
                           lim.at(top);
                curve.delta[gi] = std::max(curve.delta[gi], sup_norm(diff));
            }
        }
    }
    return curve;
}

DeltaCurve delta_critical(const BmpModel& model, const SpectralDecomposition& dec,
                          const RegimeClassification& reg,
                          const std::vector<std::vector<Vec>>& tuples,
                          const std::vector<double>& grid, int alpha,
                          const QuadSpec& quad, double ode_tol) {
    DeltaCurve curve;
    curve.regime = Regime::Critical;
    curve.ell = tuples.empty() ? 0 : static_cast<int>(tuples.front().size());
    curve.times = grid;
    curve.delta.assign(grid.size(), 0.0);
    curve.convention_id = "T3-exp-rate-t";
    curve.dict_id = "explicit-tuples";

    const double l1 = dec.lambda1();
    const int p1 = dec.blocks[0].p;
    for (const auto& fs : tuples) {
        const int ell = static_cast<int>(fs.size());
        if (ell % 2 != 0) throw std::invalid_argument("delta_critical: tuples must be even");
        const std::uint32_t top = (1u << ell) - 1u;
        auto tp = tuple_profile(dec, reg, fs);
        LimitTable lim = limit_critical(model, dec, reg, fs, ell == 2 ? alpha : 0, quad);
        MomentTable mt = moment_hierarchy(model, fs, grid, ode_tol);

        Mat nalpha = Mat::Identity(dec.n, dec.n);
        for (int r = 0; r < alpha; ++r) nalpha = dec.nilpotent * nalpha;
        const double beta = (ell == 2) ? tp.p_tilde + p1 - alpha - 2
                                       : tp.p_tilde + ell * (p1 - 2) / 2.0;
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
            const double t = grid[gi];
            Vec moment = mt.at(gi, top);
            if (ell == 2 && alpha > 0) moment = nalpha * moment;
            Vec diff = std::exp(-ell * l1 * t / 2.0) * std::pow(1.0 + t, -beta) * moment -
                       lim.at(top);
            curve.delta[gi] = std::max(curve.delta[gi], sup_norm(diff));
        }
    }
    return curve;
}

std::vector<double> verify_h1(const BmpModel& model, const SpectralDecomposition& dec,
                              const std::vector<double>& grid,
                              const std::vector<Vec>& dict_b1, int retain) {
    (void)model;
    const int m = retain < 0 ? dec.m() : std::min(retain, dec.m());
    if (m < 1) throw std::invalid_argument("verify_h1: need at least one retained cluster");
    const double re_last = dec.blocks[m - 1].lambda.real();

    std::vector<double> defect(grid.size(), 0.0);
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        const double t = grid[gi];
        Mat es = RealMat((t * dec.mean).exp()).cast<Complex>();
        for (const auto& f : dict_b1) {
            Vec approx = Vec::Zero(dec.n);
            for (int i = 0; i < m; ++i)
                approx += std::exp(dec.blocks[i].lambda * t) *
                          exp_nilpotent(dec, t, phi_sum(dec, i, f));
            Vec diff = es * f - approx;
            defect[gi] = std::max(defect[gi], std::exp(-re_last * t) * sup_norm(diff));
        }
    }
    return defect;
}

std::string delta_curve_csv(const DeltaCurve& curve) {
    std::ostringstream out;
    out.precision(17);
    out << "regime,ell,t,delta,convention_id,dict_id\n";
    for (std::size_t i = 0; i < curve.times.size(); ++i)
        out << regime_name(curve.regime) << ',' << curve.ell << ',' << curve.times[i] << ','
            << curve.delta[i] << ',' << curve.convention_id << ',' << curve.dict_id << "\n";
    return out.str();
}

} // namespace bmp
