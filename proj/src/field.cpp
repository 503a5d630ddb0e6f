#include "shockfit/field.hpp"

#include "shockfit/errors.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace shockfit {

namespace {

using Row3 = std::array<double, 3>;

Row3 first_diff(int p) {
    if (p == 0) return {-0.5, 0.0, 0.5};
    if (p < 0) return {-1.5, 2.0, -0.5};
    return {0.5, -2.0, 1.5};
}
Row3 pick(int p) {
    Row3 r{0.0, 0.0, 0.0};
    r[p + 1] = 1.0;
    return r;
}
constexpr Row3 kSecond{1.0, -2.0, 1.0};

Eigen::Matrix<double, 1, 9> tensor(const Row3& along_t, const Row3& along_s) {
    Eigen::Matrix<double, 1, 9> out;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) out(a * 3 + b) = along_t[a] * along_s[b];
    return out;
}

struct PointEval {
    Vec2 grad = Vec2::Zero();
    double xx = 0.0, xy = 0.0, yy = 0.0;
};

PointEval eval_at(const Field& f, int node) {
    const NodeStencil& st = f.stencils->at[node];
    // Differences against the node value: the weights annihilate constants, and a
    // large common offset would otherwise dominate the rounding error.
    const double v0 = f.values[node];
    Eigen::Matrix<double, 9, 1> v;
    for (int k = 0; k < 9; ++k) v(k) = f.values[st.nodes[k]] - v0;
    const Eigen::Matrix<double, 5, 1> d = st.w * v;
    return {Vec2(d(dX), d(dY)), d(dXX), d(dXY), d(dYY)};
}

double residual_at(const Field& f, int node, bool& vacuum) {
    const PointEval e = eval_at(f, node);
    const Vec2& xi = f.grid->xy[node];
    const auto up = constant_state_potential(f.upstream, xi);
    const Vec2 g = e.grad + up.gradient;
    const double phi = f.values[node] + up.value;
    const double c2 = f.params.bernoulli_level() - (f.params.gamma - 1.0) * (phi + 0.5 * g.squaredNorm());
    if (c2 < 0.0) vacuum = true;
    return (c2 - g.x() * g.x()) * e.xx - 2.0 * g.x() * g.y() * e.xy + (c2 - g.y() * g.y()) * e.yy;
}

}  // namespace

namespace kernels {

NodeStencil node_stencil(const MappedGrid& grid, int node) {
    const int iT = grid.iT_of(node), iS = grid.iS_of(node);
    const int cT = std::clamp(iT, 1, grid.nT - 2), cS = std::clamp(iS, 1, grid.nS - 2);
    const int pT = iT - cT, pS = iS - cS;

    NodeStencil st;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) st.nodes[a * 3 + b] = grid.index(cT - 1 + a, cS - 1 + b);

    Eigen::Matrix<double, 5, 9> D;
    D.row(0) = tensor(pick(pT), first_diff(pS));       // d/ds
    D.row(1) = tensor(first_diff(pT), pick(pS));       // d/dt
    D.row(2) = tensor(pick(pT), kSecond);               // d2/ds2
    D.row(3) = tensor(first_diff(pT), first_diff(pS));  // d2/dsdt
    D.row(4) = tensor(kSecond, pick(pS));               // d2/dt2

    const Vec2 x0 = grid.xy[node];
    double h = 0.0;
    for (int k = 0; k < 9; ++k) h = std::max(h, (grid.xy[st.nodes[k]] - x0).norm());
    if (!(h > 0.0)) throw StencilError("degenerate stencil: coincident nodes");

    Eigen::Matrix<double, 9, 5> mono;
    for (int k = 0; k < 9; ++k) {
        const Vec2 d = (grid.xy[st.nodes[k]] - x0) / h;
        mono.row(k) << d.x(), d.y(), 0.5 * d.x() * d.x(), d.x() * d.y(), 0.5 * d.y() * d.y();
    }
    const Eigen::Matrix<double, 5, 5> M = D * mono;
    Eigen::FullPivLU<Eigen::Matrix<double, 5, 5>> lu(M);
    Eigen::Matrix<double, 5, 9> w;
    if (lu.rcond() >= 1e-13) {
        w = lu.solve(D);
    } else {
        // The index directions are (nearly) parallel here, as at a straight-angle
        // corner. Fall back to a least-squares quadratic through all nine nodes,
        // which is still exact on quadratics.
        Eigen::Matrix<double, 9, 6> V;
        V.col(0).setOnes();
        V.rightCols<5>() = mono;
        Eigen::JacobiSVD<Eigen::Matrix<double, 9, 6>> svd(V, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const auto& sv = svd.singularValues();
        if (!(sv(5) > 1e-10 * sv(0))) {
            std::ostringstream os;
            os << "degenerate stencil at node (" << iT << "," << iS << ")";
            throw StencilError(os.str());
        }
        const Eigen::Matrix<double, 6, 9> pinv =
            svd.matrixV() * sv.cwiseInverse().asDiagonal() * svd.matrixU().leftCols<6>().transpose();
        w = pinv.bottomRows<5>();
    }
    w.row(0) /= h;
    w.row(1) /= h;
    w.bottomRows<3>() /= h * h;
    st.w = w;
    return st;
}

Stencils build_stencils_serial(const MappedGrid& grid) {
    Stencils s;
    s.at.resize(grid.size());
    for (int n = 0; n < grid.size(); ++n) s.at[n] = node_stencil(grid, n);
    return s;
}

Stencils build_stencils_omp(const MappedGrid& grid) {
    Stencils s;
    const int n = grid.size();
    s.at.resize(n);
    bool failed = false;
    std::string message;
#pragma omp parallel for schedule(static)
    for (int k = 0; k < n; ++k) {
        try {
            s.at[k] = node_stencil(grid, k);
        } catch (const StencilError& e) {
#pragma omp critical
            {
                if (!failed) message = e.what();
                failed = true;
            }
        }
    }
    if (failed) throw StencilError(message);
    return s;
}

Eigen::VectorXd pde_residual_serial(const Field& f) {
    Eigen::VectorXd r(f.size());
    bool vacuum = false;
    for (int n = 0; n < f.size(); ++n) r[n] = residual_at(f, n, vacuum);
    if (vacuum) throw VacuumError("closure base negative inside the domain");
    return r;
}

Eigen::VectorXd pde_residual_omp(const Field& f) {
    const int n = f.size();
    Eigen::VectorXd r(n);
    bool vacuum = false;
#pragma omp parallel for schedule(static) reduction(|| : vacuum)
    for (int k = 0; k < n; ++k) {
        bool v = false;
        r[k] = residual_at(f, k, v);
        vacuum = vacuum || v;
    }
    if (vacuum) throw VacuumError("closure base negative inside the domain");
    return r;
}

}  // namespace kernels

Stencils build_stencils(const MappedGrid& grid) { return kernels::build_stencils_omp(grid); }

Field make_field(std::shared_ptr<const MappedGrid> grid, const ConstantState& upstream, const GasParams& params) {
    Field f;
    f.stencils = std::make_shared<const Stencils>(build_stencils(*grid));
    f.grid = std::move(grid);
    f.values = Eigen::VectorXd::Zero(f.grid->size());
    f.upstream = upstream;
    f.params = params;
    return f;
}

Vec2 gradient(const Field& f, int node) { return eval_at(f, node).grad; }

Eigen::Matrix2d hessian(const Field& f, int node) {
    const PointEval e = eval_at(f, node);
    Eigen::Matrix2d h;
    h << e.xx, e.xy, e.xy, e.yy;
    return h;
}

double full_value(const Field& f, int node) {
    return f.values[node] + constant_state_potential(f.upstream, f.grid->xy[node]).value;
}

Vec2 full_gradient(const Field& f, int node) {
    return gradient(f, node) + constant_state_potential(f.upstream, f.grid->xy[node]).gradient;
}

Eigen::VectorXd pde_residual(const Field& f) { return kernels::pde_residual_omp(f); }

Eigen::VectorXd ellipticity_map(const Field& f) {
    Eigen::VectorXd m(f.size());
    const double level = f.params.bernoulli_level(), gm1 = f.params.gamma - 1.0;
#pragma omp parallel for schedule(static)
    for (int k = 0; k < f.size(); ++k) {
        const double z = full_value(f, k);
        const double cs2 = 2.0 / (f.params.gamma + 1.0) * (level - gm1 * z);
        m[k] = cs2 - full_gradient(f, k).squaredNorm();
    }
    return m;
}

Eigen::VectorXd directional_derivative(const Field& f, const Vec2& e) {
    Eigen::VectorXd d(f.size());
#pragma omp parallel for schedule(static)
    for (int k = 0; k < f.size(); ++k) d[k] = gradient(f, k).dot(e);
    return d;
}

Field shifted(const Field& f, const Vec2& xi0) {
    auto g = std::make_shared<MappedGrid>(*f.grid);
    for (Vec2& p : g->xy) p -= xi0;
    Field out = f;
    out.grid = g;
    // stencil weights depend only on relative positions, so they carry over
    out.upstream.velocity = f.upstream.velocity - xi0;
    out.upstream.constant = f.upstream.constant + f.upstream.velocity.dot(xi0) - 0.5 * xi0.squaredNorm();
    out.frame_shift = f.frame_shift + xi0;
    return out;
}

void write_field_csv(std::ostream& os, const Field& f, const Vec2& e, const Vec2& e_perp) {
    const Eigen::VectorXd res = pde_residual(f);
    const Eigen::VectorXd margin = ellipticity_map(f);
    os << "T,S,xi1,xi2,phi,|Dphi|,margin,residual\n";
    os << std::setprecision(17);
    for (int k = 0; k < f.size(); ++k) {
        const Vec2& xi = f.grid->xy[k];
        os << xi.dot(e_perp) << ',' << xi.dot(e) << ',' << xi.x() << ',' << xi.y() << ',' << f.values[k] << ','
           << full_gradient(f, k).norm() << ',' << margin[k] << ',' << res[k] << '\n';
    }
}

Eigen::VectorXd sample_state(const Field& f, const ConstantState& s) {
    Eigen::VectorXd v(f.size());
    for (int k = 0; k < f.size(); ++k) {
        const Vec2& xi = f.grid->xy[k];
        v[k] = constant_state_potential(s, xi).value - constant_state_potential(f.upstream, xi).value;
    }
    return v;
}

}  // namespace shockfit
