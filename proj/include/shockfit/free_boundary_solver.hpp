#pragma once

#include "shockfit/configuration.hpp"
#include "shockfit/errors.hpp"
#include "shockfit/field.hpp"

#include <Eigen/Core>

#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace shockfit {

struct GridOptions {
    int nT = 65;
    int nS = 65;
    // Geometric growth toward the reflection point when the domain has a P0 corner.
    double cluster_ratio = 1.1;
};

// How the field is tied to the known state along sonic arcs.
enum class SonicCoupling {
    Dirichlet,      // value matching
    Extrapolation,  // normal-derivative matching, with the values left free
};

enum class ShockUpdateMode {
    ReducedNewton,  // full sensitivity of every mass jump to every free node
    Diagonal,       // one-sided probe of each node's own sensitivity only
};

struct SolverOptions {
    int max_outer = 200;
    int max_inner = 50;
    double pde_tol = 1e-8;         // inner residual; PDE rows scaled by h^2 / c_ref^2, slip rows by h
    double rh_tol = 1e-9;          // mass jump, absolute
    double shock_tol = 1e-9;       // last shock displacement, relative to the shock length
    double omega_initial = 0.5;
    double omega_min = 1.0 / 64.0;
    int omega_streak = 3;
    double ellipticity_floor = 1e-3;
    double armijo = 1e-4;
    int max_backtracks = 30;
    double probe_step = 1e-7;      // finite-difference shock probe, relative to the shock length
    // Slack in the endpoint-slope bracketing check. The endpoint slopes are exact
    // while interior discrete slopes carry truncation error next to a pinned corner.
    double slope_tol = 1e-4;
    // Looser slack for intermediate outer iterates; the chord start sits exactly
    // on the bracket, so early Newton steps may poke slightly outside it.
    double transient_slope_tol = 0.05;
    // Solve on successively halved grids first (down to coarsest_nodes per side)
    // and start each level from the previous shock.
    bool grid_sequencing = true;
    int coarsest_nodes = 65;
    // If the chord start fails on the coarsest grid, walk theta_w in from an
    // anchor angle, reusing each converged shock and field as the next start.
    bool continuation = true;
    double continuation_anchor_gap = 0.05;  // anchor at pi/2 - gap (regular reflection)
    // Prandtl-Meyer anchors, as fractions of the regime interval (0, theta_s) or (theta_s, theta_d).
    double continuation_anchor_supersonic = 0.72;
    double continuation_anchor_subsonic = 0.2;
    int continuation_steps = 8;
    double continuation_min_step = 1e-4;
    SonicCoupling sonic = SonicCoupling::Dirichlet;
    ShockUpdateMode update = ShockUpdateMode::ReducedNewton;
};

// Shock as a graph S = f(T) in the orthonormal frame (e, e_perp).
struct ShockGraph {
    Vec2 e = Vec2(1.0, 0.0);
    Vec2 e_perp = Vec2(0.0, 1.0);
    double T_A = 0.0;
    double T_B = 1.0;
    std::vector<double> T;
    std::vector<double> f;
    bool symmetric_B = false;  // f'(T_B) = 0 by reflection across the symmetry line
    double fprime_A = 0.0;
    double fprime_B = 0.0;

    int size() const { return static_cast<int>(f.size()); }
    Vec2 point(int j) const { return f[j] * e + T[j] * e_perp; }
    std::vector<double> slopes() const;
    std::vector<double> second_derivatives() const;
    // Unit normal pointing into Omega (the side S < f(T)).
    Vec2 interior_normal(int j, double slope) const;
    void refresh_endpoint_slopes();
};

// Starting shock: the chord between the endpoints, or for Prandtl-Meyer the cubic
// tangent to S_O at A and to S_N at B.
ShockGraph initial_shock(const Configuration& config, const GridOptions& grid);

// Throws GeometryError if single-valuedness, slope bracketing or the upstream
// sonic-circle exclusion fails.
void check_shock_invariants(const ShockGraph& shock, const Configuration& config, double slope_tol);

std::shared_ptr<const MappedGrid> build_grid(const Configuration& config, const ShockGraph& shock,
                                             const GridOptions& grid);

struct NodeCondition {
    enum class Kind { Interior, Dirichlet, Neumann } kind = Kind::Interior;
    EdgeTag tag = EdgeTag::Shock;
    Vec2 normal = Vec2::Zero();
    std::optional<ConstantState> state;  // target for sonic value/derivative matching
};

struct BoundarySet {
    std::vector<NodeCondition> nodes;
    double pde_scale = 1.0;  // PDE rows are multiplied by h^2 / pde_scale (h: local stencil size)
};

BoundarySet make_boundary_set(const Configuration& config, const MappedGrid& grid, SonicCoupling coupling);

// Residual of the discrete problem: PDE rows inside, boundary rows on the edges,
// each made dimensionless with the local stencil size.
Eigen::VectorXd discrete_residual(const Field& field, const BoundarySet& bc);

struct NewtonInfo {
    double residual_before = 0.0;
    double residual_after = 0.0;
    double step_norm = 0.0;
    double lambda = 0.0;
};

// One damped Newton step on the interior problem (shock held fixed).
Field newton_step(const Field& field, const BoundarySet& bc, const SolverOptions& opts,
                  NewtonInfo* info = nullptr);

// Normal mass-flux jump at every shock node (the Dirichlet half holds by construction).
// Nodes where the closure base is negative get NaN.
Eigen::VectorXd mass_jump(const Field& field, const ShockGraph& shock);

// Moves the free shock nodes to reduce the mass jump. Endpoint A (and B unless
// it slides on the symmetry line) is left exactly where it is.
ShockGraph update_shock(const Field& field, const ShockGraph& shock, const Configuration& config,
                        const GridOptions& grid, const SolverOptions& opts, double omega = 1.0);

struct FinalResiduals {
    double pde_inf_norm = std::numeric_limits<double>::infinity();
    double rh_mass_inf_norm = std::numeric_limits<double>::infinity();
    double rh_potential_inf_norm = std::numeric_limits<double>::infinity();
};

struct TraceEntry {
    int outer = 0;
    int inner_iterations = 0;
    double pde = 0.0;
    double rh_mass = 0.0;
    double displacement = 0.0;
    double omega = 0.0;
    bool accepted = true;
    int level_nodes = 0;  // nT of the grid this entry belongs to
    double theta = 0.0;   // wedge angle of the configuration being solved
    std::string note;  // why a trial step was rejected
};

struct Solution {
    Configuration config;
    Field field;
    ShockGraph shock;
    BoundarySet bc;
    int iterations = 0;
    FinalResiduals final_residuals;
    bool converged = false;
    std::vector<TraceEntry> trace;
};

// Convergence failure that carries the outer-iteration trace up to the failure.
class SolveError : public ConvergenceError {
public:
    SolveError(const std::string& what, std::vector<TraceEntry> trace)
        : ConvergenceError(what), trace(std::move(trace)) {}
    std::vector<TraceEntry> trace;
};

// Reference scale for the PDE residual (square of the reflected-state sound speed).
double pde_scale(const Configuration& config);

// Wedge angle that continuation starts from, inside the regime of config.
double continuation_anchor(const Configuration& config, const SolverOptions& opts);

Solution solve(const Configuration& config, const GridOptions& grid = {}, const SolverOptions& opts = {});

}  // namespace shockfit
