#include "bmp/spectral.hpp"

#include <json.hpp>
#include <unsupported/Eigen/MatrixFunctions>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace bmp {

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::Large: return "large";
        case Regime::Critical: return "critical";
        case Regime::Small: return "small";
    }
    return "?";
}

int EigenvalueBlock::chain_count_at_rank(int j) const {
    int c = 0;
    for (const auto& chain : chains)
        if (static_cast<int>(chain.size()) >= j) ++c;
    return c;
}

int EigenvalueBlock::algebraic_multiplicity() const {
    int a = 0;
    for (const auto& chain : chains) a += static_cast<int>(chain.size());
    return a;
}

namespace {

// Orthonormal null-space basis of Mt (columns), singular values below
// tol * max(sigma_max, 1).
template <typename MatrixT>
std::vector<Eigen::Matrix<typename MatrixT::Scalar, Eigen::Dynamic, 1>>
null_basis(const MatrixT& Mt, double tol) {
    using VecT = Eigen::Matrix<typename MatrixT::Scalar, Eigen::Dynamic, 1>;
    Eigen::JacobiSVD<MatrixT> svd(Mt, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    double cutoff = tol * std::max(sv.size() ? sv[0] : 0.0, 1.0);
    std::vector<VecT> out;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] <= cutoff) out.push_back(svd.matrixV().col(i));
    return out;
}

// Linear-functional application: no conjugation.
Complex dual_apply(const Vec& dual, const Vec& f) {
    return (dual.array() * f.array()).sum();
}

// Gram-Schmidt append; returns false if v is (numerically) in the span.
template <typename VecT>
bool gs_append(std::vector<VecT>& ortho, VecT v, double tol) {
    for (const auto& u : ortho) v -= u * (u.dot(v));
    double nn = v.norm();
    if (nn < tol) return false;
    ortho.push_back(v / nn);
    return true;
}

// Builds Jordan chains for one eigenvalue of multiplicity `amult` of the
// complex matrix B = A - lambda I. Works in scalar type T (double when the
// eigenvalue is real so chains come out real).
template <typename MatrixT>
std::vector<std::vector<Eigen::Matrix<typename MatrixT::Scalar, Eigen::Dynamic, 1>>>
jordan_chains(const MatrixT& B, int amult, double tol_rank) {
    using VecT = Eigen::Matrix<typename MatrixT::Scalar, Eigen::Dynamic, 1>;
    const int n = static_cast<int>(B.rows());

    // Null-space dimensions d_j of B^j until the full multiplicity is caught.
    std::vector<std::vector<VecT>> kernels; // kernels[j-1] = basis of ker B^j
    MatrixT P = MatrixT::Identity(n, n);
    int p = 0;
    std::vector<int> d{0};
    while (true) {
        P = B * P;
        ++p;
        auto K = null_basis(P, tol_rank);
        kernels.push_back(K);
        d.push_back(static_cast<int>(K.size()));
        if (d[p] == amult) break;
        if (d[p] <= d[p - 1] || p > n)
            throw IllConditioned("jordan_chains: null-space growth stalled before "
                                 "reaching the algebraic multiplicity");
    }

    // levels[j-1]: vectors of exact rank j already produced by longer chains.
    std::vector<std::vector<VecT>> levels(p);
    std::vector<std::vector<VecT>> chains;
    for (int j = p; j >= 1; --j) {
        int needed = (d[j] - d[j - 1]) - static_cast<int>(levels[j - 1].size());
        if (needed < 0)
            throw IllConditioned("jordan_chains: inconsistent chain counts");
        if (needed == 0) continue;

        // Orthonormal span to select against: ker B^{j-1} plus everything
        // already occupying level j.
        std::vector<VecT> ortho;
        if (j >= 2)
            for (const auto& v : kernels[j - 2]) gs_append(ortho, v, 1e-12);
        for (const auto& v : levels[j - 1]) gs_append(ortho, VecT(v.normalized()), 1e-12);

        for (int c = 0; c < needed; ++c) {
            // Candidate with the largest residual against the current span.
            VecT best;
            double best_norm = -1;
            for (const auto& cand : kernels[j - 1]) {
                VecT r = cand;
                for (const auto& u : ortho) r -= u * (u.dot(r));
                double nn = r.norm();
                if (nn > best_norm + 1e-15) {
                    best_norm = nn;
                    best = r;
                }
            }
            if (best_norm < tol_rank)
                throw IllConditioned("jordan_chains: cannot find independent chain top");
            VecT top = best / best.norm();
            gs_append(ortho, top, 1e-12);

            // Lower the top through the chain: chain[r-1] has rank r.
            std::vector<VecT> chain(j);
            chain[j - 1] = top;
            for (int r = j - 1; r >= 1; --r) chain[r - 1] = B * chain[r];
            double base = chain[0].norm();
            if (base < tol_rank)
                throw IllConditioned("jordan_chains: degenerate chain bottom");
            for (auto& v : chain) v /= base;
            for (int r = 1; r < j; ++r) levels[r - 1].push_back(chain[r - 1]);
            chains.push_back(std::move(chain));
        }
    }
    // Longest chains first; deterministic tie-break by construction order.
    std::stable_sort(chains.begin(), chains.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    return chains;
}

} // namespace

SpectralDecomposition decompose(const RealMat& A, double tol_cluster, double tol_rank) {
    const int n = static_cast<int>(A.rows());
    if (A.cols() != n || n < 1) throw std::invalid_argument("decompose: A must be square");

    Eigen::EigenSolver<RealMat> es(A);
    if (es.info() != Eigen::Success) throw NumericalError("decompose: eigensolver failed");
    std::vector<Complex> evs(es.eigenvalues().data(), es.eigenvalues().data() + n);

    // Cluster eigenvalues: sort by (Re desc, Im asc), merge near-neighbours.
    std::sort(evs.begin(), evs.end(), [](Complex a, Complex b) {
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() < b.imag();
    });
    struct Cluster {
        Complex mean;
        int count = 0;
    };
    std::vector<Cluster> clusters;
    for (Complex ev : evs) {
        if (!clusters.empty() && std::abs(ev - clusters.back().mean) <= tol_cluster) {
            auto& c = clusters.back();
            c.mean = (c.mean * static_cast<double>(c.count) + ev) / static_cast<double>(c.count + 1);
            ++c.count;
        } else {
            clusters.push_back({ev, 1});
        }
    }
    std::sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
        if (a.mean.real() != b.mean.real()) return a.mean.real() > b.mean.real();
        return a.mean.imag() < b.mean.imag();
    });

    // Snap near-real cluster means to the real axis.
    for (auto& c : clusters)
        if (std::abs(c.mean.imag()) <= tol_cluster) c.mean = Complex(c.mean.real(), 0.0);

    if (std::abs(clusters.front().mean.imag()) > tol_cluster)
        throw DominanceViolation("decompose: dominant eigenvalue cluster is not real");
    if (clusters.size() >= 2 &&
        clusters.front().mean.real() - clusters[1].mean.real() <= tol_cluster)
        throw DominanceViolation("decompose: dominant eigenvalue is not strictly dominant");

    SpectralDecomposition dec;
    dec.n = n;
    dec.mean = A;

    for (const auto& c : clusters) {
        EigenvalueBlock blk;
        blk.lambda = c.mean;
        if (c.mean.imag() == 0.0) {
            RealMat B = A - c.mean.real() * RealMat::Identity(n, n);
            auto chains = jordan_chains(B, c.count, tol_rank);
            for (auto& ch : chains) {
                std::vector<Vec> cch;
                for (auto& v : ch) cch.push_back(v.cast<Complex>());
                blk.chains.push_back(std::move(cch));
            }
        } else {
            Mat B = A.cast<Complex>() - c.mean * Mat::Identity(n, n);
            blk.chains = jordan_chains(B, c.count, tol_rank);
        }
        blk.p = 0;
        for (const auto& ch : blk.chains) blk.p = std::max<int>(blk.p, static_cast<int>(ch.size()));
        dec.blocks.push_back(std::move(blk));
    }

    // Assemble the basis (columns chain by chain, rank ascending) and duals.
    dec.basis.resize(n, n);
    int col = 0;
    for (const auto& blk : dec.blocks)
        for (const auto& ch : blk.chains)
            for (const auto& v : ch) dec.basis.col(col++) = v;
    if (col != n) throw IllConditioned("decompose: generalized eigenvectors do not span");

    Eigen::FullPivLU<Mat> lu(dec.basis);
    if (!lu.isInvertible())
        throw IllConditioned("decompose: generalized eigenvector basis is singular");
    dec.dual_basis = lu.inverse();

    // Distribute duals back onto the chains and certify biorthogonality by the
    // chain-relation residual.
    col = 0;
    dec.nilpotent = Mat::Zero(n, n);
    double max_resid = 0;
    const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
    for (auto& blk : dec.blocks) {
        for (auto& ch : blk.chains) {
            std::vector<Vec> duals;
            for (std::size_t j = 0; j < ch.size(); ++j) {
                duals.push_back(dec.dual_basis.row(col).transpose());
                Vec resid = A.cast<Complex>() * ch[j] - blk.lambda * ch[j] -
                            (j > 0 ? ch[j - 1] : Vec(Vec::Zero(n)));
                max_resid = std::max(max_resid, sup_norm(resid) / scale);
                if (j > 0) dec.nilpotent += ch[j - 1] * dec.dual_basis.row(col);
                ++col;
            }
            blk.dual_chains.push_back(std::move(duals));
        }
        dec.p_max = std::max(dec.p_max, blk.p);
    }
    if (max_resid > 1e-8)
        throw IllConditioned("decompose: Jordan chain residual " + std::to_string(max_resid) +
                             " exceeds 1e-8");
    return dec;
}

Vec phi_project(const SpectralDecomposition& dec, int i, int j, const Vec& f) {
    if (i < 0 || i >= dec.m()) throw std::out_of_range("phi_project: eigenvalue index");
    const auto& blk = dec.blocks[i];
    if (j < 1 || j > blk.p) throw std::out_of_range("phi_project: rank index");
    Vec out = Vec::Zero(dec.n);
    for (std::size_t c = 0; c < blk.chains.size(); ++c) {
        if (static_cast<int>(blk.chains[c].size()) < j) continue;
        Complex coeff = dual_apply(blk.dual_chains[c][j - 1], f);
        out += coeff * blk.chains[c][j - 1];
    }
    return out;
}

Vec phi_sum(const SpectralDecomposition& dec, int i, const Vec& f) {
    if (i < 0 || i >= dec.m()) throw std::out_of_range("phi_sum: eigenvalue index");
    Vec out = Vec::Zero(dec.n);
    for (int j = 1; j <= dec.blocks[i].p; ++j) out += phi_project(dec, i, j, f);
    return out;
}

Vec exp_nilpotent(const SpectralDecomposition& dec, double t, const Vec& f) {
    Vec out = f;
    Vec term = f;
    for (int r = 1; r < dec.p_max; ++r) {
        term = (t / r) * (dec.nilpotent * term);
        out += term;
    }
    return out;
}

Mat semigroup(const SpectralDecomposition& dec, double t) {
    RealMat e = (t * dec.mean).exp();
    return e.cast<Complex>();
}

RegimeClassification classify_regimes(const SpectralDecomposition& dec, double tol_regime) {
    RegimeClassification reg;
    reg.tol_regime = tol_regime;
    const double l1 = dec.lambda1();
    for (int i = 0; i < dec.m(); ++i) {
        double two_re = 2.0 * dec.blocks[i].lambda.real();
        if (std::abs(two_re - l1) <= tol_regime)
            reg.tags.push_back(Regime::Critical);
        else if (two_re > l1)
            reg.tags.push_back(Regime::Large);
        else {
            if (!reg.tau) reg.tau = i;
            reg.tags.push_back(Regime::Small);
        }
    }
    return reg;
}

FunctionProfile classify_function(const SpectralDecomposition& dec,
                                  const RegimeClassification& reg, const Vec& f,
                                  double tol_member) {
    FunctionProfile prof;
    const double fn = sup_norm(f);
    if (fn == 0.0) {
        prof.zero_projection = true;
        prof.in_small_class = reg.tau.has_value();
        return prof;
    }

    // Projection magnitude per block, scale-invariant.
    std::vector<double> mag(dec.m(), 0.0);
    for (int i = 0; i < dec.m(); ++i) {
        const auto& blk = dec.blocks[i];
        for (std::size_t c = 0; c < blk.chains.size(); ++c)
            for (const auto& dual : blk.dual_chains[c]) {
                Complex v = dual_apply(dual, f);
                mag[i] = std::max(mag[i], std::abs(v) / fn);
            }
        if (mag[i] > tol_member && mag[i] < 10 * tol_member)
            throw AmbiguousMembership(
                "classify_function: projection magnitude in the ambiguous band at "
                "eigenvalue index " + std::to_string(i));
    }

    int first = -1;
    for (int i = 0; i < dec.m(); ++i)
        if (mag[i] > tol_member) {
            first = i;
            break;
        }
    if (first < 0) {
        prof.zero_projection = true;
        prof.in_small_class = reg.tau.has_value();
        return prof;
    }

    // f is in Ei(lambda_first) unless another eigenvalue with the same real
    // part also carries a projection.
    bool unique_top = true;
    for (int i = first + 1; i < dec.m(); ++i) {
        if (dec.blocks[i].lambda.real() <
            dec.blocks[first].lambda.real() - reg.tol_regime)
            break;
        if (mag[i] > tol_member) unique_top = false;
    }
    if (unique_top) {
        prof.nu = first;
        prof.lambda = dec.blocks[first].lambda;
        prof.regime = reg.tags[first];
        for (int j = dec.blocks[first].p; j >= 1; --j) {
            if (sup_norm(phi_project(dec, first, j, f)) > tol_member * fn) {
                prof.p = j;
                break;
            }
        }
        if (prof.p == 0) prof.p = 1;
    }

    if (reg.tau) {
        prof.in_small_class = true;
        for (int i = 0; i < *reg.tau; ++i)
            if (mag[i] > tol_member) prof.in_small_class = false;
    }
    return prof;
}

TupleProfile tuple_profile(const SpectralDecomposition& dec,
                           const RegimeClassification& reg,
                           const std::vector<Vec>& fs, double tol_member) {
    TupleProfile tp;
    for (const auto& f : fs) {
        auto prof = classify_function(dec, reg, f, tol_member);
        tp.lambda_tilde += prof.lambda;
        tp.p_tilde += prof.p;
        Vec fstar = f;
        for (int r = 1; r < std::max(prof.p, 1); ++r) fstar = dec.nilpotent * fstar;
        tp.f_star.push_back(std::move(fstar));
        tp.each.push_back(std::move(prof));
    }

    // Conjugate l-tuple: even length, all members in the critical class,
    // pairable so each pair's eigenvalues are complex conjugates.
    const std::size_t l = fs.size();
    if (l >= 2 && l % 2 == 0) {
        bool all_crit = true;
        for (const auto& p : tp.each)
            if (p.nu < 0 || p.regime != Regime::Critical) all_crit = false;
        if (all_crit) {
            std::vector<int> matched(l, 0);
            bool ok = true;
            for (std::size_t i = 0; i < l && ok; ++i) {
                if (matched[i]) continue;
                bool found = false;
                for (std::size_t j = i + 1; j < l; ++j) {
                    if (matched[j]) continue;
                    if (std::abs(tp.each[j].lambda - std::conj(tp.each[i].lambda)) <=
                        reg.tol_regime) {
                        matched[i] = matched[j] = 1;
                        found = true;
                        break;
                    }
                }
                ok = found;
            }
            tp.conjugate_tuple = ok;
        }
    }
    return tp;
}

std::string decomposition_to_json_string(const SpectralDecomposition& dec,
                                         const RegimeClassification& reg) {
    using nlohmann::json;
    json j;
    j["n"] = dec.n;
    j["eigenvalues"] = json::array();
    j["chains"] = json::array();
    j["regimes"] = json::array();
    for (int i = 0; i < dec.m(); ++i) {
        const auto& blk = dec.blocks[i];
        j["eigenvalues"].push_back({{"re", blk.lambda.real()}, {"im", blk.lambda.imag()}});
        json chains = json::array();
        for (const auto& ch : blk.chains) {
            json chain = json::array();
            for (const auto& v : ch) {
                json vec = json::array();
                for (int x = 0; x < dec.n; ++x)
                    vec.push_back({{"re", v[x].real()}, {"im", v[x].imag()}});
                chain.push_back(vec);
            }
            chains.push_back(chain);
        }
        j["chains"].push_back(chains);
        j["regimes"].push_back(regime_name(reg.tags[i]));
    }
    if (reg.tau) j["tau"] = *reg.tau;
    return j.dump(2);
}

} // namespace bmp
