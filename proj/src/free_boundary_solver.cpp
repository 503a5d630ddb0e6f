#include "shockfit/free_boundary_solver.hpp"

#include "shockfit/errors.hpp"

#include <Eigen/LU>
#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>

// Boost 1.74's pchip calls isnan unqualified; make std::isnan visible to it.
namespace boost::math::interpolators {
using std::isnan;
}
#include <boost/math/interpolators/pchip.hpp>

namespace shockfit {

namespace {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

std::vector<double> t_distribution(const Configuration& c, const GridOptions& g) {
    if (c.regime == Regime::Subsonic) return clustered_distribution(g.nT, g.cluster_ratio);
    return uniform_distribution(g.nT);
}

std::vector<double> s_distribution(const Configuration& c, const GridOptions& g) {
    if (c.regime == Regime::Subsonic) return reversed_distribution(clustered_distribution(g.nS, g.cluster_ratio));
    return uniform_distribution(g.nS);
}

struct LocalState {
    Vec2 grad;      // full gradient
    double value;   // full potential
    double c2;
    Eigen::Matrix<double, 5, 1> d;  // derivatives of the unknown (phi - phi_up)
};

LocalState local_state(const Field& f, int k) {
    const NodeStencil& st = f.stencils->at[k];
    Eigen::Matrix<double, 9, 1> v;
    for (int m = 0; m < 9; ++m) v(m) = f.values[st.nodes[m]] - f.values[k];  // same offset removal as eval_at
    LocalState s;
    s.d = st.w * v;
    const auto up = constant_state_potential(f.upstream, f.grid->xy[k]);
    s.grad = Vec2(s.d(dX), s.d(dY)) + up.gradient;
    s.value = f.values[k] + up.value;
    s.c2 = f.params.bernoulli_level() - (f.params.gamma - 1.0) * (s.value + 0.5 * s.grad.squaredNorm());
    return s;
}

double target_value(const NodeCondition& nc, const Field& f, int k) {
    if (!nc.state) return 0.0;
    const Vec2& xi = f.grid->xy[k];
    return constant_state_potential(*nc.state, xi).value - constant_state_potential(f.upstream, xi).value;
}

Vec2 target_gradient(const NodeCondition& nc, const Field& f, int k) {
    // gradient of the full potential that the Neumann row should reproduce along the normal
    if (!nc.state) return Vec2::Zero();
    return constant_state_potential(*nc.state, f.grid->xy[k]).gradient;
}

// Rows of the residual and (optionally) the Jacobian for node k.
double node_row(const Field& f, const BoundarySet& bc, int k, double floor, double* jac_row) {
    const NodeCondition& nc = bc.nodes[k];
    const NodeStencil& st = f.stencils->at[k];
    if (nc.kind == NodeCondition::Kind::Dirichlet) {
        if (jac_row)
            for (int m = 0; m < 9; ++m) jac_row[m] = st.nodes[m] == k ? 1.0 : 0.0;
        return f.values[k] - target_value(nc, f, k);
    }
    const LocalState s = local_state(f, k);
    // rows are made dimensionless with the local stencil size h so that
    // round-off in every row sits near machine precision times |phi|
    double h = 0.0;
    for (int m = 0; m < 9; ++m) h = std::max(h, (f.grid->xy[st.nodes[m]] - f.grid->xy[k]).norm());
    if (nc.kind == NodeCondition::Kind::Neumann) {
        if (jac_row)
            for (int m = 0; m < 9; ++m) jac_row[m] = h * (nc.normal.x() * st.w(dX, m) + nc.normal.y() * st.w(dY, m));
        return h * nc.normal.dot(s.grad - target_gradient(nc, f, k));
    }
    if (s.c2 < 0.0) throw VacuumError("closure base negative inside the domain");
    const Vec2& g = s.grad;
    const double a11 = s.c2 - g.x() * g.x(), a12 = -g.x() * g.y(), a22 = s.c2 - g.y() * g.y();
    const double inv = h * h / bc.pde_scale;
    const double r = (a11 * s.d(dXX) + 2.0 * a12 * s.d(dXY) + a22 * s.d(dYY)) * inv;
    if (jac_row) {
        const double gm1 = f.params.gamma - 1.0, gp1 = f.params.gamma + 1.0;
        // principal part, with the ellipticity floor applied to the linearization only
        double scale = 1.0;
        const double q2 = g.squaredNorm();
        if (s.c2 - q2 < floor * s.c2 && q2 > 0.0) scale = (1.0 - floor) * s.c2 / q2;
        const double p11 = s.c2 - scale * g.x() * g.x(), p12 = -scale * g.x() * g.y(), p22 = s.c2 - scale * g.y() * g.y();
        // derivative of the coefficients with respect to the gradient
        const double dgx = -gp1 * g.x() * s.d(dXX) - 2.0 * g.y() * s.d(dXY) - gm1 * g.x() * s.d(dYY);
        const double dgy = -gm1 * g.y() * s.d(dXX) - 2.0 * g.x() * s.d(dXY) - gp1 * g.y() * s.d(dYY);
        const double dval = -gm1 * (s.d(dXX) + s.d(dYY));
        for (int m = 0; m < 9; ++m) {
            double v = p11 * st.w(dXX, m) + 2.0 * p12 * st.w(dXY, m) + p22 * st.w(dYY, m) + dgx * st.w(dX, m) +
                       dgy * st.w(dY, m);
            if (st.nodes[m] == k) v += dval;
            jac_row[m] = v * inv;
        }
    }
    return r;
}

struct Linearization {
    SpMat J;
    Eigen::VectorXd R;
};

Linearization linearize(const Field& f, const BoundarySet& bc, double floor) {
    const int n = f.size();
    std::vector<Triplet> trip(static_cast<size_t>(n) * 9);
    Eigen::VectorXd R(n);
    bool vacuum = false;
#pragma omp parallel for schedule(static) reduction(|| : vacuum)
    for (int k = 0; k < n; ++k) {
        double row[9];
        try {
            R[k] = node_row(f, bc, k, floor, row);
        } catch (const VacuumError&) {
            vacuum = true;
            continue;
        }
        const NodeStencil& st = f.stencils->at[k];
        for (int m = 0; m < 9; ++m) trip[static_cast<size_t>(k) * 9 + m] = Triplet(k, st.nodes[m], row[m]);
    }
    if (vacuum) throw VacuumError("closure base negative inside the domain");
    Linearization lin;
    lin.J.resize(n, n);
    lin.J.setFromTriplets(trip.begin(), trip.end());
    lin.R = std::move(R);
    return lin;
}

class LinearSolver {
public:
    void factorize(const SpMat& J) {
        if (!analyzed_ || J.rows() != rows_) {
            lu_.analyzePattern(J);
            analyzed_ = true;
            rows_ = J.rows();
        }
        lu_.factorize(J);
        if (lu_.info() != Eigen::Success) throw SingularJacobianError("sparse LU failed: " + lu_.lastErrorMessage());
    }
    template <typename Rhs>
    auto solve(const Rhs& b) const {
        return lu_.solve(b);
    }

private:
    Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu_;
    bool analyzed_ = false;
    Eigen::Index rows_ = 0;
};

Field newton_step_with(const Field& field, const BoundarySet& bc, const SolverOptions& opts, LinearSolver& solver,
                       NewtonInfo* info) {
    const Linearization lin = linearize(field, bc, opts.ellipticity_floor);
    solver.factorize(lin.J);
    const Eigen::VectorXd delta = solver.solve(-lin.R);
    if (!delta.allFinite()) throw SingularJacobianError("Newton update is not finite");
    const double r0 = lin.R.norm();
    double lambda = 1.0;
    Field trial = field;
    for (int b = 0; b <= opts.max_backtracks; ++b, lambda *= 0.5) {
        trial.values = field.values + lambda * delta;
        double r1;
        try {
            r1 = discrete_residual(trial, bc).norm();
        } catch (const VacuumError&) {
            continue;
        }
        if (r1 <= (1.0 - opts.armijo * lambda) * r0) {
            if (info) *info = {r0, r1, lambda * delta.lpNorm<Eigen::Infinity>(), lambda};
            return trial;
        }
    }
    // A Newton update at the level of round-off means the iterate has converged
    // as far as the conditioning of the rows allows; take it rather than fail.
    const double full = delta.lpNorm<Eigen::Infinity>();
    if (full <= 1e-12 * (1.0 + field.values.lpNorm<Eigen::Infinity>())) {
        trial.values = field.values + delta;
        if (info) *info = {r0, discrete_residual(trial, bc).norm(), full, 1.0};
        return trial;
    }
    std::ostringstream os;
    os << "no Armijo step found (residual " << r0 << ")";
    throw LineSearchError(os.str());
}

struct InnerResult {
    int iterations = 0;
    double residual = 0.0;
};

InnerResult solve_inner(Field& field, const BoundarySet& bc, const SolverOptions& opts, LinearSolver& solver) {
    InnerResult out;
    for (int it = 0; it <= opts.max_inner; ++it) {
        out.residual = discrete_residual(field, bc).lpNorm<Eigen::Infinity>();
        out.iterations = it;
        // at least one step: after a shock move the residual can sit just under
        // the tolerance while still polluting the mass jump at the rh_tol level
        if (out.residual <= opts.pde_tol && it > 0) return out;
        if (it == opts.max_inner) break;
        NewtonInfo info;
        field = newton_step_with(field, bc, opts, solver, &info);
        // round-off floor: the step no longer changes the iterate
        if (info.step_norm <= 1e-14 * (1.0 + field.values.lpNorm<Eigen::Infinity>())) {
            out.residual = discrete_residual(field, bc).lpNorm<Eigen::Infinity>();
            out.iterations = it + 1;
            return out;
        }
    }
    std::ostringstream os;
    os << "inner Newton did not converge in " << opts.max_inner << " iterations (residual " << out.residual << ")";
    throw ConvergenceError(os.str());
}

Field field_on(const Field& like, std::shared_ptr<const MappedGrid> grid) {
    Field f = like;
    f.stencils = std::make_shared<const Stencils>(build_stencils(*grid));
    f.grid = std::move(grid);
    return f;
}

std::vector<int> free_nodes(const Configuration& c, int n) {
    std::vector<int> out;
    for (int j = 1; j < n - 1; ++j) out.push_back(j);
    if (c.b_slides) out.push_back(n - 1);
    return out;
}

double shock_length(const ShockGraph& s) { return std::abs(s.T_B - s.T_A); }

// Sensitivity of the mass jump (free nodes) to the unknown, as a sparse m x N matrix.
SpMat mass_jump_unknown_jacobian(const Field& f, const ShockGraph& shock, const std::vector<int>& free) {
    const std::vector<double> fp = shock.slopes();
    const double gm1 = f.params.gamma - 1.0;
    std::vector<Triplet> trip;
    trip.reserve(free.size() * 9);
    const int top = f.grid->nS - 1;
    for (size_t r = 0; r < free.size(); ++r) {
        const int j = free[r];
        const int k = f.grid->index(j, top);
        const LocalState s = local_state(f, k);
        const Vec2 nu = shock.interior_normal(j, fp[j]);
        const double rho = std::pow(s.c2, 1.0 / gm1);
        const double gn = s.grad.dot(nu);
        const Vec2 dM_dg = rho * nu - gn * rho / s.c2 * s.grad;
        const double dM_dv = -gn * rho / s.c2;
        const NodeStencil& st = f.stencils->at[k];
        for (int m = 0; m < 9; ++m) {
            double v = dM_dg.x() * st.w(dX, m) + dM_dg.y() * st.w(dY, m);
            if (st.nodes[m] == k) v += dM_dv;
            trip.emplace_back(static_cast<int>(r), st.nodes[m], v);
        }
    }
    SpMat M(static_cast<Eigen::Index>(free.size()), f.size());
    M.setFromTriplets(trip.begin(), trip.end());
    return M;
}

Eigen::VectorXd restrict_to(const Eigen::VectorXd& full, const std::vector<int>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (size_t r = 0; r < idx.size(); ++r) {
        out[static_cast<Eigen::Index>(r)] = full[idx[r]];
        if (std::isnan(full[idx[r]])) throw VacuumError("closure base negative on the shock at node " + std::to_string(idx[r]));
    }
    return out;
}

// Newton step for the free shock nodes with the field re-solved (Schur complement
// of the coupled system), or only its diagonal.
Eigen::VectorXd shock_step(const Field& field, const ShockGraph& shock, const Configuration& config,
                           const GridOptions& grid, const BoundarySet& bc, const SolverOptions& opts,
                           LinearSolver& solver) {
    const std::vector<int> free = free_nodes(config, shock.size());
    const int m = static_cast<int>(free.size());
    const int nS = field.grid->nS;
    const double delta = opts.probe_step * shock_length(shock);

    const Linearization lin = linearize(field, bc, opts.ellipticity_floor);
    solver.factorize(lin.J);
    const Eigen::VectorXd M0 = restrict_to(mass_jump(field, shock), free);

    // Finite-difference shock sensitivities with the unknown held fixed. Moving
    // node j only disturbs grid columns within two of j, so nodes five apart
    // can be probed together.
    constexpr int kColors = 5;
    std::vector<Triplet> rf_trip;
    Eigen::MatrixXd Mf = Eigen::MatrixXd::Zero(m, m);
    for (int color = 0; color < kColors; ++color) {
        std::vector<int> probe_col(shock.size(), -1);  // grid column -> free index of its probe
        ShockGraph moved = shock;
        bool any = false;
        for (int r = 0; r < m; ++r) {
            if (free[r] % kColors != color) continue;
            moved.f[free[r]] += delta;
            any = true;
            for (int c = std::max(0, free[r] - 2); c <= std::min(shock.size() - 1, free[r] + 2); ++c) probe_col[c] = r;
        }
        if (!any) continue;
        moved.refresh_endpoint_slopes();
        const Field pf = field_on(field, build_grid(config, moved, grid));
        const Eigen::VectorXd dR = (discrete_residual(pf, bc) - lin.R) / delta;
        for (int k = 0; k < pf.size(); ++k) {
            const int r = probe_col[k / nS];
            if (r >= 0 && dR[k] != 0.0) rf_trip.emplace_back(k, r, dR[k]);
        }
        const Eigen::VectorXd dM = (restrict_to(mass_jump(pf, moved), free) - M0) / delta;
        for (int i = 0; i < m; ++i) {
            const int r = probe_col[free[i]];
            if (r >= 0) Mf(i, r) = dM[i];
        }
    }
    SpMat Rf(field.size(), m);
    Rf.setFromTriplets(rf_trip.begin(), rf_trip.end());
    const SpMat Mphi = mass_jump_unknown_jacobian(field, shock, free);

    Eigen::MatrixXd G = Mf;
    constexpr int kBlock = 64;
    for (int c0 = 0; c0 < m; c0 += kBlock) {
        const int w = std::min(kBlock, m - c0);
        const Eigen::MatrixXd rhs = Eigen::MatrixXd(Rf.middleCols(c0, w));
        const Eigen::MatrixXd X = solver.solve(rhs);
        G.middleCols(c0, w) -= Mphi * X;
    }

    Eigen::VectorXd step;
    if (opts.update == ShockUpdateMode::Diagonal) {
        step = -M0.cwiseQuotient(G.diagonal());
    } else {
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(G);
        step = -lu.solve(M0);
    }
    if (!step.allFinite()) throw SingularJacobianError("shock sensitivity matrix is singular");
    Eigen::VectorXd full = Eigen::VectorXd::Zero(shock.size());
    for (int r = 0; r < m; ++r) full[free[r]] = step[r];
    return full;
}

ShockGraph apply_step(const ShockGraph& shock, const Eigen::VectorXd& step, double omega) {
    ShockGraph out = shock;
    for (int j = 0; j < out.size(); ++j)
        if (step[j] != 0.0) out.f[j] += omega * step[j];
    out.refresh_endpoint_slopes();
    return out;
}

FinalResiduals final_residuals(const Field& field, const ShockGraph& shock, const BoundarySet& bc) {
    FinalResiduals fr;
    const Eigen::VectorXd r = discrete_residual(field, bc);
    fr.pde_inf_norm = 0.0;
    for (int k = 0; k < field.size(); ++k)
        if (bc.nodes[k].kind == NodeCondition::Kind::Interior) fr.pde_inf_norm = std::max(fr.pde_inf_norm, std::abs(r[k]));
    const Eigen::VectorXd mj = mass_jump(field, shock);
    const int last = static_cast<int>(mj.size()) - (shock.symmetric_B ? 1 : 2);
    fr.rh_mass_inf_norm = 0.0;
    for (int j = 1; j <= last; ++j)
        fr.rh_mass_inf_norm = std::isnan(mj[j]) ? std::numeric_limits<double>::infinity()
                                                : std::max(fr.rh_mass_inf_norm, std::abs(mj[j]));
    fr.rh_potential_inf_norm = 0.0;
    const int top = field.grid->nS - 1;
    for (int j = 0; j < shock.size(); ++j)
        fr.rh_potential_inf_norm = std::max(fr.rh_potential_inf_norm, std::abs(field.values[field.grid->index(j, top)]));
    return fr;
}

}  // namespace

std::vector<double> ShockGraph::slopes() const {
    const int n = size();
    std::vector<double> d(n);
    for (int j = 1; j + 1 < n; ++j) {
        const double h1 = T[j] - T[j - 1], h2 = T[j + 1] - T[j];
        d[j] = -h2 / (h1 * (h1 + h2)) * f[j - 1] + (h2 - h1) / (h1 * h2) * f[j] + h1 / (h2 * (h1 + h2)) * f[j + 1];
    }
    {
        const double h1 = T[1] - T[0], h2 = T[2] - T[1];
        d[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[0] + (h1 + h2) / (h1 * h2) * f[1] - h1 / (h2 * (h1 + h2)) * f[2];
    }
    if (symmetric_B) {
        d[n - 1] = 0.0;
    } else {
        const double h1 = T[n - 1] - T[n - 2], h2 = T[n - 2] - T[n - 3];
        d[n - 1] = (2.0 * h1 + h2) / (h1 * (h1 + h2)) * f[n - 1] - (h1 + h2) / (h1 * h2) * f[n - 2] +
                   h1 / (h2 * (h1 + h2)) * f[n - 3];
    }
    return d;
}

std::vector<double> ShockGraph::second_derivatives() const {
    const int n = size();
    std::vector<double> d(n);
    for (int j = 1; j + 1 < n; ++j) {
        const double h1 = T[j] - T[j - 1], h2 = T[j + 1] - T[j];
        d[j] = 2.0 * (f[j - 1] / (h1 * (h1 + h2)) - f[j] / (h1 * h2) + f[j + 1] / (h2 * (h1 + h2)));
    }
    d[0] = d[1];
    if (symmetric_B) {
        const double h = T[n - 1] - T[n - 2];
        d[n - 1] = 2.0 * (f[n - 2] - f[n - 1]) / (h * h);
    } else {
        d[n - 1] = d[n - 2];
    }
    return d;
}

Vec2 ShockGraph::interior_normal(int, double slope) const {
    return (-e + slope * e_perp) / std::sqrt(1.0 + slope * slope);
}

void ShockGraph::refresh_endpoint_slopes() {
    const std::vector<double> d = slopes();
    fprime_A = d.front();
    fprime_B = d.back();
}

ShockGraph initial_shock(const Configuration& config, const GridOptions& grid) {
    ShockGraph s;
    s.e = config.e;
    s.e_perp = config.e_perp;
    s.T_A = config.T_A();
    s.T_B = config.T_B();
    if (!(s.T_B > s.T_A)) throw GeometryError("shock endpoints are not ordered along e_perp");
    s.symmetric_B = config.b_slides;
    const double fA = config.shock_A.dot(config.e), fB = config.shock_B.dot(config.e);
    const std::vector<double> t = t_distribution(config, grid);
    s.T.resize(t.size());
    s.f.resize(t.size());
    // Prandtl-Meyer: the shock leaves along S_O and joins S_N tangentially, and the
    // chord meets neither at the right angle. Use the cubic Hermite curve instead.
    const bool hermite = config.problem == Problem::PrandtlMeyer;
    const double L = s.T_B - s.T_A;
    const double mA = config.cone_A.dot(config.e) / config.cone_A.dot(config.e_perp) * L;
    const double mB = config.cone_B.dot(config.e) / config.cone_B.dot(config.e_perp) * L;
    for (size_t j = 0; j < t.size(); ++j) {
        const double u = t[j];
        s.T[j] = s.T_A + u * L;
        s.f[j] = fA + u * (fB - fA);
        if (hermite) {
            const double u2 = u * u, u3 = u2 * u;
            s.f[j] = (2 * u3 - 3 * u2 + 1) * fA + (u3 - 2 * u2 + u) * mA + (-2 * u3 + 3 * u2) * fB + (u3 - u2) * mB;
        }
    }
    s.T.back() = s.T_B;
    s.f.front() = fA;
    s.f.back() = fB;
    s.refresh_endpoint_slopes();
    return s;
}

void check_shock_invariants(const ShockGraph& shock, const Configuration& config, double slope_tol) {
    const int n = shock.size();
    for (int j = 0; j < n; ++j) {
        if (!std::isfinite(shock.f[j])) throw GeometryError("shock graph has a non-finite sample");
        if (j > 0 && !(shock.T[j] > shock.T[j - 1])) throw GeometryError("shock graph is not single-valued");
    }
    const std::vector<double> d = shock.slopes();
    double scale = 1.0;
    for (double v : d) scale = std::max(scale, std::abs(v));
    const double tol = slope_tol * scale;
    for (int j = 1; j + 1 < n; ++j) {
        if (d[j] > d.front() + tol || d[j] < d.back() - tol) {
            std::ostringstream os;
            os << "shock slope at node " << j << " (" << d[j] << ") leaves the endpoint bracket [" << d.back() << ", "
               << d.front() << "]";
            throw GeometryError(os.str());
        }
    }
    const ConstantState& up = config.upstream;
    for (int j = 0; j < n; ++j) {
        if ((shock.point(j) - up.velocity).norm() <= up.sound_speed) {
            std::ostringstream os;
            os << "shock node " << j << " enters the upstream sonic circle";
            throw GeometryError(os.str());
        }
    }
}

std::shared_ptr<const MappedGrid> build_grid(const Configuration& config, const ShockGraph& shock,
                                             const GridOptions& grid) {
    const int nT = shock.size();
    const std::vector<double> s = s_distribution(config, grid);
    std::vector<double> t(nT);
    for (int j = 0; j < nT; ++j) t[j] = (shock.T[j] - shock.T_A) / (shock.T_B - shock.T_A);
    t.front() = 0.0;
    t.back() = 1.0;

    QuadBoundary b;
    const int nS = static_cast<int>(s.size());
    b.top.resize(nT);
    b.bottom.resize(nT);
    for (int j = 0; j < nT; ++j) {
        b.top[j] = shock.point(j);
        b.bottom[j] = config.bottom.at(t[j]);
    }
    BoundaryPiece side_b = config.side_b;
    if (config.b_slides) side_b = BoundaryPiece::segment(config.side_b.from, shock.point(nT - 1), config.side_b.tag);
    b.side_a.resize(nS);
    b.side_b.resize(nS);
    for (int i = 0; i < nS; ++i) {
        b.side_a[i] = config.side_a.at(s[i]);
        b.side_b[i] = side_b.at(s[i]);
    }
    b.tags = {config.bottom.tag, EdgeTag::Shock, config.side_a.tag, side_b.tag};
    auto g = std::make_shared<MappedGrid>(transfinite_grid(b, t, s));
    g->T_A = shock.T_A;
    g->T_B = shock.T_B;
    if (config.vertex_at_QB) g->vertex_corners.push_back(g->index(nT - 1, 0));
    check_bijective(*g);
    return g;
}

BoundarySet make_boundary_set(const Configuration& config, const MappedGrid& grid, SonicCoupling coupling) {
    BoundarySet bc;
    bc.pde_scale = pde_scale(config);
    bc.nodes.resize(grid.size());
    for (int k = 0; k < grid.size(); ++k) {
        NodeCondition& nc = bc.nodes[k];
        const std::vector<EdgeTag> tags = grid.tags_of(k);
        if (tags.empty()) continue;
        auto has = [&](EdgeTag t) { return std::find(tags.begin(), tags.end(), t) != tags.end(); };
        const bool sonic = has(EdgeTag::SonicO) || has(EdgeTag::SonicN);
        const EdgeTag sonic_tag = has(EdgeTag::SonicO) ? EdgeTag::SonicO : EdgeTag::SonicN;
        const bool slip = has(EdgeTag::Wedge) || has(EdgeTag::Symmetry);
        if (has(EdgeTag::Shock)) {
            nc.kind = NodeCondition::Kind::Dirichlet;
            nc.tag = EdgeTag::Shock;
        } else if (sonic && (coupling == SonicCoupling::Dirichlet || !slip)) {
            nc.tag = sonic_tag;
            nc.state = config.sonic_state(sonic_tag);
            if (coupling == SonicCoupling::Dirichlet) {
                nc.kind = NodeCondition::Kind::Dirichlet;
            } else {
                nc.kind = NodeCondition::Kind::Neumann;
                nc.normal = (grid.xy[k] - nc.state->velocity).normalized();
            }
        } else {
            nc.kind = NodeCondition::Kind::Neumann;
            Vec2 n = Vec2::Zero();
            if (has(EdgeTag::Wedge)) n += config.slip_normal(EdgeTag::Wedge);
            if (has(EdgeTag::Symmetry)) n += config.slip_normal(EdgeTag::Symmetry);
            nc.normal = n.normalized();
            nc.tag = has(EdgeTag::Wedge) && has(EdgeTag::Symmetry) ? EdgeTag::VertexCorner
                     : has(EdgeTag::Wedge)                          ? EdgeTag::Wedge
                                                                    : EdgeTag::Symmetry;
        }
    }
    return bc;
}

Eigen::VectorXd discrete_residual(const Field& field, const BoundarySet& bc) {
    const int n = field.size();
    Eigen::VectorXd r(n);
    bool vacuum = false;
#pragma omp parallel for schedule(static) reduction(|| : vacuum)
    for (int k = 0; k < n; ++k) {
        try {
            r[k] = node_row(field, bc, k, 0.0, nullptr);
        } catch (const VacuumError&) {
            vacuum = true;
        }
    }
    if (vacuum) throw VacuumError("closure base negative inside the domain");
    return r;
}

Field newton_step(const Field& field, const BoundarySet& bc, const SolverOptions& opts, NewtonInfo* info) {
    LinearSolver solver;
    return newton_step_with(field, bc, opts, solver, info);
}

Eigen::VectorXd mass_jump(const Field& field, const ShockGraph& shock) {
    const std::vector<double> fp = shock.slopes();
    const int top = field.grid->nS - 1;
    Eigen::VectorXd out(shock.size());
    for (int j = 0; j < shock.size(); ++j) {
        const int k = field.grid->index(j, top);
        const LocalState s = local_state(field, k);
        if (s.c2 < 0.0) {
            out[j] = std::numeric_limits<double>::quiet_NaN();
            continue;
        }
        const double rho = std::pow(s.c2, 1.0 / (field.params.gamma - 1.0));
        const Vec2 nu = shock.interior_normal(j, fp[j]);
        const Vec2 up = constant_state_potential(field.upstream, field.grid->xy[k]).gradient;
        out[j] = rho * s.grad.dot(nu) - field.upstream.density * up.dot(nu);
    }
    return out;
}

ShockGraph update_shock(const Field& field, const ShockGraph& shock, const Configuration& config,
                        const GridOptions& grid, const SolverOptions& opts, double omega) {
    const BoundarySet bc = make_boundary_set(config, *field.grid, opts.sonic);
    LinearSolver solver;
    const Eigen::VectorXd step = shock_step(field, shock, config, grid, bc, opts, solver);
    ShockGraph out = apply_step(shock, step, omega);
    check_shock_invariants(out, config, opts.slope_tol);
    return out;
}

double pde_scale(const Configuration& config) {
    const double c = config.reflected.sound_speed;
    return std::max(1e-12, c * c);
}

namespace {

// Shock from a coarser solve, carried onto the parameter nodes of `grid`.
ShockGraph prolongate(const ShockGraph& coarse, const Configuration& config, const GridOptions& grid) {
    ShockGraph fine = initial_shock(config, grid);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    boost::math::interpolators::pchip<std::vector<double>> spline(
        std::vector<double>(coarse.T), std::vector<double>(coarse.f), nan, coarse.symmetric_B ? 0.0 : nan);
    for (int j = 1; j + 1 < fine.size(); ++j) fine.f[j] = spline(fine.T[j]);
    fine.f.back() = coarse.f.back();
    fine.refresh_endpoint_slopes();
    return fine;
}

// Carries a converged shock to a nearby configuration on the same grid by an
// affine map of (T, S) that takes the old chord onto the new one. Affine maps
// with positive scales keep concavity and the endpoint-slope ordering.
ShockGraph transfer(const ShockGraph& from, const Configuration& from_config, const Configuration& to,
                    const GridOptions& grid) {
    const ShockGraph chord = initial_shock(from_config, grid);
    ShockGraph out = initial_shock(to, grid);
    const double rise_from = chord.f.back() - chord.f.front();
    const double rise_to = out.f.back() - out.f.front();
    const int last = out.symmetric_B ? out.size() : out.size() - 1;
    const double length = from.T_B - from.T_A;
    if (std::abs(rise_from) > 1e-3 * length && rise_from * rise_to > 0.0) {
        const double k = rise_to / rise_from;
        for (int j = 1; j < last; ++j) out.f[j] = out.f.front() + (from.f[j] - from.f.front()) * k;
    } else {
        const double ratio = (out.T_B - out.T_A) / length;
        for (int j = 1; j < last; ++j) out.f[j] += (from.f[j] - chord.f[j]) * ratio;
    }
    out.refresh_endpoint_slopes();
    return out;
}

Solution solve_level(const Configuration& config, const GridOptions& grid, const SolverOptions& opts,
                     ShockGraph shock, const Eigen::VectorXd* start_values) {
    Solution sol;
    sol.config = config;
    sol.shock = std::move(shock);
    check_shock_invariants(sol.shock, config, opts.transient_slope_tol);

    auto g = build_grid(config, sol.shock, grid);
    sol.bc = make_boundary_set(config, *g, opts.sonic);
    sol.field = make_field(g, config.upstream, config.params);
    if (start_values && start_values->size() == sol.field.size()) {
        sol.field.values = *start_values;
    } else if (config.problem == Problem::PrandtlMeyer) {
        // phi_O near the vertex, phi_N near the far sonic arc, blended smoothly along T
        const Eigen::VectorXd near = sample_state(sol.field, config.reflected);
        const Eigen::VectorXd far = sample_state(sol.field, config.far_state);
        sol.field.values.resize(sol.field.size());
        for (int k = 0; k < sol.field.size(); ++k) {
            const double u = std::clamp((g->xy[k].dot(config.e_perp) - sol.shock.T_A) / (sol.shock.T_B - sol.shock.T_A), 0.0, 1.0);
            const double w = u * u * (3.0 - 2.0 * u);
            sol.field.values[k] = (1.0 - w) * near[k] + w * far[k];
        }
    } else {
        // the reflected state solves the equation everywhere
        sol.field.values = sample_state(sol.field, config.reflected);
    }

    LinearSolver solver;
    InnerResult inner;
    try {
        inner = solve_inner(sol.field, sol.bc, opts, solver);
    } catch (const SolveError&) {
        throw;
    } catch (const Error& e) {
        const std::string what = std::string("initial interior solve failed: ") + e.what();
        TraceEntry entry{0, 0, std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
                         0.0, 0.0, false, grid.nT, config.theta_w, what};
        throw SolveError(what, {entry});
    }
    const std::vector<int> free = free_nodes(config, sol.shock.size());
    auto mass_norm = [&](const Field& f, const ShockGraph& s) {
        return restrict_to(mass_jump(f, s), free).lpNorm<Eigen::Infinity>();
    };
    double current = mass_norm(sol.field, sol.shock);
    sol.trace.push_back({0, inner.iterations, inner.residual, current, 0.0, 0.0, true, grid.nT, config.theta_w, {}});

    double omega = opts.omega_initial;
    int streak = 0;
    double displacement = std::numeric_limits<double>::infinity();
    const double length = shock_length(sol.shock);

    for (int outer = 1; outer <= opts.max_outer; ++outer) {
        if (current <= opts.rh_tol && displacement <= opts.shock_tol * length) {
            sol.converged = true;
            break;
        }
        const Eigen::VectorXd step = shock_step(sol.field, sol.shock, config, grid, sol.bc, opts, solver);
        if (current <= opts.rh_tol && step.lpNorm<Eigen::Infinity>() <= opts.shock_tol * length) {
            // at the round-off floor a further step cannot be told apart from noise
            displacement = step.lpNorm<Eigen::Infinity>();
            sol.converged = true;
            sol.iterations = outer;
            break;
        }
        bool accepted = false;
        while (!accepted) {
            ShockGraph trial_shock = apply_step(sol.shock, step, omega);
            Field trial;
            double trial_norm = std::numeric_limits<double>::infinity();
            InnerResult trial_inner;
            bool ok = true;
            std::string note;
            try {
                check_shock_invariants(trial_shock, config, opts.transient_slope_tol);
                trial = field_on(sol.field, build_grid(config, trial_shock, grid));
                trial_inner = solve_inner(trial, sol.bc, opts, solver);
                trial_norm = mass_norm(trial, trial_shock);
            } catch (const GeometryError& e) {
                ok = false;
                note = e.what();
            } catch (const ConvergenceError& e) {
                ok = false;
                note = e.what();
            } catch (const LineSearchError& e) {
                ok = false;
                note = e.what();
            } catch (const VacuumError& e) {
                ok = false;
                note = e.what();
            }
            const double moved = omega * step.lpNorm<Eigen::Infinity>();
            if (ok && (trial_norm < current || trial_norm <= opts.rh_tol)) {
                sol.shock = std::move(trial_shock);
                sol.field = std::move(trial);
                current = trial_norm;
                displacement = moved;
                sol.trace.push_back({outer, trial_inner.iterations, trial_inner.residual, current, moved, omega, true, grid.nT, config.theta_w, {}});
                accepted = true;
                if (++streak >= opts.omega_streak) {
                    omega = std::min(1.0, 2.0 * omega);
                    streak = 0;
                }
            } else {
                if (ok) note = "mass jump increased";
                sol.trace.push_back(
                    {outer, trial_inner.iterations, trial_inner.residual, trial_norm, moved, omega, false, grid.nT, config.theta_w, note});
                omega *= 0.5;
                streak = 0;
                if (omega < opts.omega_min) {
                    std::ostringstream os;
                    os << "shock update stalled at outer iteration " << outer << " (mass jump " << current << ")";
                    throw SolveError(os.str(), sol.trace);
                }
            }
        }
        sol.iterations = outer;
    }
    if (!sol.converged && current <= opts.rh_tol && displacement <= opts.shock_tol * length) sol.converged = true;
    sol.final_residuals = final_residuals(sol.field, sol.shock, sol.bc);
    if (sol.converged) {
        const FinalResiduals& fr = sol.final_residuals;
        if (!(fr.pde_inf_norm <= opts.pde_tol && fr.rh_mass_inf_norm <= opts.rh_tol)) {
            std::ostringstream os;
            os << "residual floor above tolerance (pde " << fr.pde_inf_norm << ", mass jump " << fr.rh_mass_inf_norm << ")";
            throw SolveError(os.str(), sol.trace);
        }
        check_shock_invariants(sol.shock, config, opts.slope_tol);
    }
    if (!sol.converged) {
        std::ostringstream os;
        os << "outer loop reached " << opts.max_outer << " iterations (mass jump " << current << ")";
        throw SolveError(os.str(), sol.trace);
    }
    return sol;
}

}  // namespace

namespace {

void append(std::vector<TraceEntry>& to, const std::vector<TraceEntry>& from, double theta) {
    for (TraceEntry t : from) {
        t.theta = theta;
        to.push_back(std::move(t));
    }
}

// Coarse solve: straight from the chord if that works, else by continuation in
// theta_w from an anchor angle where the chord start is reliable.
Solution solve_coarse(const Configuration& config, const GridOptions& grid, const SolverOptions& opts,
                      std::vector<TraceEntry>& history) {
    std::string direct_failure;
    try {
        Solution sol = solve_level(config, grid, opts, initial_shock(config, grid), nullptr);
        append(history, sol.trace, config.theta_w);
        return sol;
    } catch (const SolveError& e) {
        append(history, e.trace, config.theta_w);
        direct_failure = e.what();
    } catch (const GeometryError& e) {
        direct_failure = e.what();
    }
    const double anchor = continuation_anchor(config, opts);
    if (!opts.continuation || !std::isfinite(anchor)) throw SolveError(direct_failure, history);

    auto at = [&](double theta) {
        return build_configuration(config.problem, config.problem == Problem::RegularReflection ? config.params
                                                                                                : GasParams{config.params.gamma, config.spec.rho_inf},
                                   config.spec, theta);
    };
    Configuration prev_cfg = at(anchor);
    if (prev_cfg.regime != config.regime) throw SolveError(direct_failure + "; anchor lies in the other regime", history);
    Solution prev;
    try {
        prev = solve_level(prev_cfg, grid, opts, initial_shock(prev_cfg, grid), nullptr);
        append(history, prev.trace, anchor);
    } catch (const SolveError& e) {
        append(history, e.trace, anchor);
        throw SolveError(std::string("continuation anchor failed: ") + e.what(), history);
    }
    double theta = anchor;
    const double max_step = (config.theta_w - anchor) / opts.continuation_steps;
    double step = max_step;
    int successes = 0;
    while (theta != config.theta_w) {
        double next = theta + step;
        if ((step > 0.0 && next > config.theta_w) || (step < 0.0 && next < config.theta_w)) next = config.theta_w;
        try {
            Configuration cfg = next == config.theta_w ? config : at(next);
            if (cfg.regime != config.regime) throw GeometryError("continuation path crosses the sonic angle");
            Solution sol = solve_level(cfg, grid, opts, transfer(prev.shock, prev.config, cfg, grid), &prev.field.values);
            append(history, sol.trace, next);
            prev = std::move(sol);
            theta = next;
            if (++successes >= 2 && std::abs(2.0 * step) <= std::abs(max_step)) {
                step *= 2.0;
                successes = 0;
            }
        } catch (const Error& e) {
            if (const auto* se = dynamic_cast<const SolveError*>(&e)) append(history, se->trace, next);
            step *= 0.5;
            successes = 0;
            if (std::abs(step) < opts.continuation_min_step) {
                std::ostringstream os;
                os.precision(10);
                os << "continuation stalled at theta_w=" << theta << " (" << e.what() << ")";
                throw SolveError(os.str(), history);
            }
        }
    }
    return prev;
}

}  // namespace

double continuation_anchor(const Configuration& config, const SolverOptions& opts) {
    if (config.problem == Problem::RegularReflection) return std::numbers::pi / 2.0 - opts.continuation_anchor_gap;
    if (config.regime == Regime::Supersonic) return opts.continuation_anchor_supersonic * config.theta_s;
    return config.theta_s + opts.continuation_anchor_subsonic * (config.theta_d - config.theta_s);
}

Solution solve(const Configuration& config, const GridOptions& grid, const SolverOptions& opts) {
    // grid sequencing: halve the resolution down to the coarsest level, solve
    // there, and hand each converged shock to the next level
    std::vector<GridOptions> levels{grid};
    if (opts.grid_sequencing)
        while (levels.back().nT > opts.coarsest_nodes && levels.back().nS > opts.coarsest_nodes &&
               (levels.back().nT - 1) % 2 == 0 && (levels.back().nS - 1) % 2 == 0) {
            GridOptions g = levels.back();
            g.nT = (g.nT - 1) / 2 + 1;
            g.nS = (g.nS - 1) / 2 + 1;
            levels.push_back(g);
        }
    std::vector<TraceEntry> history;
    Solution sol = solve_coarse(config, levels.back(), opts, history);
    for (auto it = std::next(levels.rbegin()); it != levels.rend(); ++it) {
        try {
            sol = solve_level(config, *it, opts, prolongate(sol.shock, config, *it), nullptr);
            append(history, sol.trace, config.theta_w);
        } catch (const SolveError& e) {
            append(history, e.trace, config.theta_w);
            throw SolveError(e.what(), history);
        }
    }
    sol.trace = std::move(history);
    return sol;
}

}  // namespace shockfit
