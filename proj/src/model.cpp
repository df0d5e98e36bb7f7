#include "bmp/model.hpp"
#include "bmp/partitions.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace bmp {

namespace {
constexpr double kStochTol = 1e-12;
}

ValidationReport validate_model(const BmpModel& model) {
    ValidationReport rep;
    auto add = [&rep](const std::string& s) { rep.issues.push_back(s); };

    if (model.n <= 0) {
        add("n must be positive");
        return rep;
    }
    if (model.motion.rows() != model.n || model.motion.cols() != model.n)
        add("Q has wrong shape");
    if (model.branch_rate.size() != model.n) add("gamma has wrong length");
    if (static_cast<int>(model.offspring.size()) != model.n)
        add("offspring laws missing for some states");
    if (!rep.ok()) return rep;

    for (int x = 0; x < model.n; ++x) {
        double row_sum = model.motion.row(x).sum();
        if (std::abs(row_sum) > kStochTol)
            add("Q row " + std::to_string(x) + " sums to " + std::to_string(row_sum));
        for (int y = 0; y < model.n; ++y)
            if (x != y && model.motion(x, y) < 0)
                add("Q(" + std::to_string(x) + "," + std::to_string(y) + ") negative");
        if (!(model.branch_rate[x] >= 0) || !std::isfinite(model.branch_rate[x]))
            add("gamma[" + std::to_string(x) + "] not a finite nonnegative number");

        double p_sum = 0;
        for (const auto& atom : model.offspring[x]) {
            if (atom.p < 0) add("offspring prob negative at state " + std::to_string(x));
            p_sum += atom.p;
            for (int c : atom.children)
                if (c < 0 || c >= model.n)
                    add("offspring child state out of range at state " + std::to_string(x));
        }
        if (std::abs(p_sum - 1.0) > kStochTol)
            add("offspring probs at state " + std::to_string(x) + " sum to " +
                std::to_string(p_sum));
    }
    return rep;
}

RealMat mean_offspring_matrix(const BmpModel& model) {
    RealMat M = RealMat::Zero(model.n, model.n);
    for (int x = 0; x < model.n; ++x)
        for (const auto& atom : model.offspring[x])
            for (int c : atom.children) M(x, c) += atom.p;
    return M;
}

RealMat mean_matrix(const BmpModel& model) {
    auto rep = validate_model(model);
    if (!rep.ok()) throw std::invalid_argument("mean_matrix: invalid model: " + rep.issues.front());
    RealMat M = mean_offspring_matrix(model);
    return model.motion + model.branch_rate.asDiagonal() * (M - RealMat::Identity(model.n, model.n));
}

double offspring_moment_sup(const BmpModel& model, int k) {
    if (k < 1) throw std::invalid_argument("offspring_moment_sup: k >= 1 required");
    double sup = 0;
    for (int x = 0; x < model.n; ++x) {
        double m = 0;
        for (const auto& atom : model.offspring[x])
            m += atom.p * std::pow(static_cast<double>(atom.children.size()), k);
        sup = std::max(sup, m);
    }
    return sup;
}

namespace {

// Sum over injective tuples (i_1,...,i_L) of distinct indices into `children`
// of prod_j g(sigma_j, children[i_j]).
Complex injective_sum(const std::vector<std::vector<int>>& blocks,
                      const std::vector<int>& children, const BlockFunction& g) {
    const int L = static_cast<int>(blocks.size());
    const int N = static_cast<int>(children.size());
    if (L > N) return {0.0, 0.0};

    // Per-block values at each child position, evaluated once.
    std::vector<std::vector<Complex>> gv(L, std::vector<Complex>(N));
    for (int j = 0; j < L; ++j)
        for (int i = 0; i < N; ++i) gv[j][i] = g(blocks[j], children[i]);

    Complex total{0.0, 0.0};
    std::vector<int> used(N, 0);
    std::vector<Complex> prod(L + 1);
    prod[0] = {1.0, 0.0};
    // Depth-first over positions for each block in order.
    std::function<void(int)> rec = [&](int j) {
        if (j == L) {
            total += prod[L];
            return;
        }
        for (int i = 0; i < N; ++i) {
            if (used[i]) continue;
            used[i] = 1;
            prod[j + 1] = prod[j] * gv[j][i];
            rec(j + 1);
            used[i] = 0;
        }
    };
    rec(0);
    return total;
}

} // namespace

Complex zeta_apply_prepared(const BmpModel& model, const PartitionSet& partitions,
                            const BlockFunction& g, int x) {
    if (x < 0 || x >= model.n) throw std::invalid_argument("zeta_apply: state out of range");
    Complex total{0.0, 0.0};
    for (const auto& atom : model.offspring[x]) {
        if (atom.p == 0.0) continue;
        Complex inner{0.0, 0.0};
        for (const auto& sigma : partitions.all) {
            if (sigma.size() < 2) continue;
            inner += injective_sum(sigma.blocks, atom.children, g);
        }
        total += atom.p * inner;
    }
    return total;
}

Complex zeta_apply(const BmpModel& model, const std::vector<int>& A,
                   const BlockFunction& g, int x) {
    if (A.empty()) throw std::invalid_argument("zeta_apply: A must be nonempty");
    if (A.size() == 1) {
        if (x < 0 || x >= model.n) throw std::invalid_argument("zeta_apply: state out of range");
        return {0.0, 0.0}; // P*(A) is empty
    }
    return zeta_apply_prepared(model, enumerate_partitions(A), g, x);
}

Vec zeta_apply_all(const BmpModel& model, const std::vector<int>& A,
                   const BlockFunction& g) {
    Vec out(model.n);
    for (int x = 0; x < model.n; ++x) out[x] = zeta_apply(model, A, g, x);
    return out;
}

// ---- Builders --------------------------------------------------------------

BmpModel build_yule(double beta) {
    BmpModel m;
    m.n = 1;
    m.motion = RealMat::Zero(1, 1);
    m.branch_rate = RealVec::Constant(1, beta);
    m.offspring = {{OffspringAtom{1.0, {0, 0}}}};
    return m;
}

BmpModel build_multitype(RealMat Q, RealVec gamma,
                         std::vector<std::vector<OffspringAtom>> offspring) {
    BmpModel m;
    m.n = static_cast<int>(Q.rows());
    m.motion = std::move(Q);
    m.branch_rate = std::move(gamma);
    m.offspring = std::move(offspring);
    auto rep = validate_model(m);
    if (!rep.ok())
        throw std::invalid_argument("build_multitype: " + rep.issues.front());
    return m;
}

BmpModel build_from_mean(const RealMat& target_mean, const RealVec& gamma,
                         const RealMat* Q) {
    const int n = static_cast<int>(target_mean.rows());
    if (target_mean.cols() != n) throw std::invalid_argument("build_from_mean: M' not square");
    if (gamma.size() != n) throw std::invalid_argument("build_from_mean: gamma length mismatch");
    if ((target_mean.array() < 0).any())
        throw std::invalid_argument("build_from_mean: target requires negative offspring means");

    BmpModel m;
    m.n = n;
    m.motion = Q ? *Q : RealMat::Zero(n, n);
    m.branch_rate = gamma;
    m.offspring.resize(n);
    for (int x = 0; x < n; ++x) {
        double row_sum = target_mean.row(x).sum();
        // All-or-nothing doubled row: bursts of K = ceil(2 * row_sum) identical
        // children, so each burst probability m_y/K is at most 1/2 in total.
        int K = std::max(1, static_cast<int>(std::ceil(2.0 * row_sum)));
        double p_used = 0;
        for (int y = 0; y < n; ++y) {
            double mxy = target_mean(x, y);
            if (mxy == 0.0) continue;
            OffspringAtom atom;
            atom.p = mxy / K;
            atom.children.assign(K, y);
            p_used += atom.p;
            m.offspring[x].push_back(std::move(atom));
        }
        if (p_used > 1.0 + 1e-12)
            throw std::invalid_argument("build_from_mean: mixture probabilities exceed 1");
        m.offspring[x].push_back(OffspringAtom{1.0 - p_used, {}});
    }
    auto rep = validate_model(m);
    if (!rep.ok()) throw std::invalid_argument("build_from_mean: " + rep.issues.front());
    return m;
}

BmpModel build_from_jordan(const RealMat& J, const RealMat& V, const RealVec& gamma) {
    const int n = static_cast<int>(J.rows());
    if (V.rows() != n || V.cols() != n)
        throw std::invalid_argument("build_from_jordan: shape mismatch");
    Eigen::FullPivLU<RealMat> lu(V);
    if (!lu.isInvertible()) throw std::invalid_argument("build_from_jordan: V is singular");
    RealMat A = V * J * lu.inverse();
    RealMat M = RealMat::Identity(n, n);
    for (int x = 0; x < n; ++x) {
        if (gamma[x] <= 0) throw std::invalid_argument("build_from_jordan: gamma must be positive");
        M.row(x) += A.row(x) / gamma[x];
    }
    return build_from_mean(M, gamma);
}

// ---- JSON ------------------------------------------------------------------

using nlohmann::json;

static json to_json(const BmpModel& m) {
    json j;
    j["n"] = m.n;
    j["Q"] = json::array();
    for (int x = 0; x < m.n; ++x) {
        json row = json::array();
        for (int y = 0; y < m.n; ++y) row.push_back(m.motion(x, y));
        j["Q"].push_back(row);
    }
    j["gamma"] = json::array();
    for (int x = 0; x < m.n; ++x) j["gamma"].push_back(m.branch_rate[x]);
    j["offspring"] = json::array();
    for (int x = 0; x < m.n; ++x) {
        json law = json::array();
        for (const auto& atom : m.offspring[x])
            law.push_back(json{{"p", atom.p}, {"children", atom.children}});
        j["offspring"].push_back(law);
    }
    return j;
}

static BmpModel from_json(const json& j) {
    BmpModel m;
    m.n = j.at("n").get<int>();
    m.motion.resize(m.n, m.n);
    const auto& Q = j.at("Q");
    for (int x = 0; x < m.n; ++x)
        for (int y = 0; y < m.n; ++y) m.motion(x, y) = Q.at(x).at(y).get<double>();
    m.branch_rate.resize(m.n);
    for (int x = 0; x < m.n; ++x) m.branch_rate[x] = j.at("gamma").at(x).get<double>();
    m.offspring.resize(m.n);
    for (int x = 0; x < m.n; ++x) {
        for (const auto& a : j.at("offspring").at(x)) {
            OffspringAtom atom;
            atom.p = a.at("p").get<double>();
            atom.children = a.at("children").get<std::vector<int>>();
            m.offspring[x].push_back(std::move(atom));
        }
    }
    return m;
}

std::string model_to_json_string(const BmpModel& model) { return to_json(model).dump(2); }

BmpModel model_from_json_string(const std::string& text) {
    return from_json(json::parse(text));
}

BmpModel load_model_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    json j;
    in >> j;
    return from_json(j);
}

void save_model_json(const BmpModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model file: " + path);
    out << model_to_json_string(model) << "\n";
}

} // namespace bmp
