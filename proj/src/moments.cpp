#include "bmp/moments.hpp"

#include "bmp/ode.hpp"
#include "bmp/partitions.hpp"
#include "bmp/quadrature.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace bmp {

namespace {

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

struct HierarchySystem {
    const BmpModel* model;
    int n, k;
    std::uint32_t top;
    std::vector<PartitionSet> partitions; // per mask; empty for popcount < 2
    RealMat mean;

    explicit HierarchySystem(const BmpModel& m, int k_) : model(&m), n(m.n), k(k_) {
        top = (1u << k) - 1u;
        partitions.resize(top + 1);
        for (std::uint32_t mask = 1; mask <= top; ++mask) {
            auto elems = mask_elements(mask);
            if (elems.size() >= 2) partitions[mask] = enumerate_partitions(elems);
        }
        mean = mean_matrix(m);
    }

    // Coupled right-hand side over the stacked state (mask-major, n per mask).
    Vec rhs(const Vec& y) const {
        Vec dy(y.size());
        auto seg = [&](std::uint32_t mask) { return y.segment((mask - 1) * n, n); };
        for (std::uint32_t mask = 1; mask <= top; ++mask) {
            Vec psi = seg(mask);
            Vec d = mean.cast<Complex>() * psi;
            if (partitions[mask].all.size() > 1) {
                BlockFunction g = [&](const std::vector<int>& block, int state) {
                    return y[(block_mask(block) - 1) * n + state];
                };
                for (int x = 0; x < n; ++x) {
                    double gam = model->branch_rate[x];
                    if (gam != 0.0)
                        d[x] += gam * zeta_apply_prepared(*model, partitions[mask], g, x);
                }
            }
            dy.segment((mask - 1) * n, n) = d;
        }
        return dy;
    }

    Vec initial(const std::vector<Vec>& f) const {
        Vec y((top) * static_cast<std::size_t>(n));
        for (std::uint32_t mask = 1; mask <= top; ++mask) {
            Vec prod = Vec::Ones(n);
            for (int i : mask_elements(mask)) prod = prod.cwiseProduct(f[i]);
            y.segment((mask - 1) * n, n) = prod;
        }
        return y;
    }
};

} // namespace

std::size_t MomentTable::time_index(double t, double tol) const {
    for (std::size_t i = 0; i < times.size(); ++i)
        if (std::abs(times[i] - t) <= tol) return i;
    throw std::invalid_argument("MomentTable::time_index: t not on the grid");
}

MomentTable moment_hierarchy(const BmpModel& model, const std::vector<Vec>& f,
                             const std::vector<double>& grid, double ode_tol) {
    const int k = static_cast<int>(f.size());
    if (k < 1 || k > 6) throw std::invalid_argument("moment_hierarchy: k must be in [1, 6]");
    for (const auto& fi : f)
        if (fi.size() != model.n)
            throw std::invalid_argument("moment_hierarchy: test function length mismatch");
    if (grid.empty() || grid.front() < 0)
        throw std::invalid_argument("moment_hierarchy: grid must start at t >= 0");
    for (std::size_t i = 1; i < grid.size(); ++i)
        if (grid[i] <= grid[i - 1])
            throw std::invalid_argument("moment_hierarchy: grid must be increasing");

    HierarchySystem sys(model, k);
    std::vector<double> full_grid = grid;
    if (full_grid.front() > 0) full_grid.insert(full_grid.begin(), 0.0);
    auto states = integrate_rk45([&](double, const Vec& y) { return sys.rhs(y); },
                                 sys.initial(f), full_grid, ode_tol, ode_tol);

    MomentTable table;
    table.k = k;
    table.f = f;
    table.times = grid;
    const std::size_t skip = full_grid.size() - grid.size();
    for (std::size_t gi = 0; gi < grid.size(); ++gi) {
        std::vector<Vec> row(sys.top + 1);
        for (std::uint32_t mask = 1; mask <= sys.top; ++mask)
            row[mask] = states[gi + skip].segment((mask - 1) * model.n, model.n);
        table.values.push_back(std::move(row));
    }
    return table;
}

double duhamel_residual(const BmpModel& model, const MomentTable& table,
                        int quad_points, double ode_tol) {
    const int k = table.k;
    const int n = model.n;
    const RealMat A = mean_matrix(model);
    const std::uint32_t top = (1u << k) - 1u;

    Vec prod = Vec::Ones(n);
    for (const auto& fi : table.f) prod = prod.cwiseProduct(fi);

    double worst = 0;
    for (std::size_t ti = 0; ti < table.times.size(); ++ti) {
        const double t = table.times[ti];
        Vec lhs = table.at(ti, top);
        Vec free = (t * A).exp().cast<Complex>() * prod;
        if (k == 1) {
            worst = std::max(worst, sup_norm(Vec(lhs - free)));
            continue;
        }
        if (t == 0) {
            worst = std::max(worst, sup_norm(Vec(lhs - free)));
            continue;
        }

        // Quadrature nodes for int_0^t psi_{t-s}[gamma zeta_[k][psi_s^(.)]] ds.
        const int panels = std::max(1, quad_points / 16);
        const auto& xs = gl16_nodes();
        const auto& ws = gl16_weights();
        std::vector<double> nodes;
        std::vector<double> weights;
        const double width = t / panels;
        for (int p = 0; p < panels; ++p) {
            const double mid = p * width + width / 2, half = width / 2;
            for (int i = 0; i < 16; ++i) {
                nodes.push_back(mid + half * xs[i]);
                weights.push_back(ws[i] * half);
            }
        }
        std::vector<double> sorted = nodes;
        std::sort(sorted.begin(), sorted.end());
        MomentTable lower = moment_hierarchy(model, table.f, sorted, ode_tol);

        auto elems = mask_elements(top);
        PartitionSet ps = enumerate_partitions(elems);
        Vec integral = Vec::Zero(n);
        for (std::size_t qi = 0; qi < nodes.size(); ++qi) {
            const double s = nodes[qi];
            std::size_t si = lower.time_index(s);
            BlockFunction g = [&](const std::vector<int>& block, int state) {
                std::uint32_t m = 0;
                for (int b : block) m |= (1u << b);
                return lower.at(si, m)[state];
            };
            Vec zeta(n);
            for (int x = 0; x < n; ++x)
                zeta[x] = model.branch_rate[x] * zeta_apply_prepared(model, ps, g, x);
            integral += weights[qi] * (((t - s) * A).exp().cast<Complex>() * zeta);
        }
        worst = std::max(worst, sup_norm(Vec(lhs - free - integral)));
    }
    return worst;
}

std::string moment_table_csv(const MomentTable& table) {
    std::ostringstream out;
    out.precision(17);
    out << "t,subset_mask,state,re,im\n";
    const std::uint32_t top = (1u << table.k) - 1u;
    for (std::size_t ti = 0; ti < table.times.size(); ++ti)
        for (std::uint32_t mask = 1; mask <= top; ++mask)
            for (int x = 0; x < table.at(ti, mask).size(); ++x)
                out << table.times[ti] << ',' << mask << ',' << x << ','
                    << table.at(ti, mask)[x].real() << ',' << table.at(ti, mask)[x].imag()
                    << "\n";
    return out.str();
}

} // namespace bmp
