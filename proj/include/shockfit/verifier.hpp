#pragma once

#include "shockfit/free_boundary_solver.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace shockfit {

struct VerifierOptions {
    int n_dirs = 17;
    double tol_conv_rel = 1e-4;     // of max |f''|
    double tol_conv_floor = 1e-8;
    double kappa_rel = 1e-3;        // of median(-f'')
    int eps_margin = 5;             // cells kept clear of each shock endpoint
    int max_probe_order = 6;
    double sign_agreement = 0.99;
    double holder_alpha = 0.5;
    double chain_radius_cells = 4.0;
    // phi_e is compared against this fraction of its range when a boundary piece
    // is claimed to carry a constant value.
    double constancy_rel = 0.05;
};

// Open cone spanned by the endpoint tangents, both oriented into the shock.
struct Cone {
    Vec2 tau_A = Vec2::Zero();
    Vec2 tau_B = Vec2::Zero();

    bool degenerate() const;
    bool contains(const Vec2& e) const;  // open cone
    Vec2 bisector() const;
    // n directions, angle-uniform from tau_A to tau_B inclusive.
    std::vector<Vec2> sample(int n) const;
};

Cone shock_cone(const Solution& s);

// Shock resampled as a graph S = f(T) in the frame (e, e_perp) with T increasing
// from A to B. Derivatives of the unknown phi - phi_upstream.
struct ShockFrame {
    Vec2 e = Vec2::Zero();
    Vec2 e_perp = Vec2::Zero();
    std::vector<int> nodes;  // grid nodes on the shock, A to B
    std::vector<double> T, f, fp, fpp;  // fpp is NaN at the two endpoints
    std::vector<Vec2> nu, tau;           // interior normal; tangent from A to B
    std::vector<double> phi_nu, phi_tau, phi_e, phi_tautau;

    int size() const { return static_cast<int>(T.size()); }
};

// Throws ConeError unless e is strictly inside the cone and GraphError unless the
// shock is single valued over e_perp and nu.e < 0 at every node.
ShockFrame shock_frame(const Solution& s, const Vec2& e);

// Frame the solver used for the shock; always a valid graph.
ShockFrame solver_frame(const Solution& s);

struct DegeneratePoint {
    int index = 0;
    double T = 0.0;
    std::string order;  // "4", "6", "unresolved" or "positive" (f'' crosses zero with the wrong sign)
};

struct ConvexityReport {
    std::string verdict;  // "uniformly convex", "convex" or "not convex"
    double min_neg_fpp = 0.0;       // min of -f'' over interior samples
    double min_neg_fpp_inner = 0.0; // same, eps_margin cells from the endpoints
    int worst_index = 0;
    double tol_conv = 0.0;
    double kappa_min = 0.0;
    std::vector<DegeneratePoint> degenerate;
    // order classification repeated in the cone-bisector frame (reported only)
    std::vector<DegeneratePoint> degenerate_bisector;
    int sign_samples = 0;
    double sign_agreement = 1.0;   // fraction of |f''| > tol_conv samples where sign(f'') = sign(-phi_nu^2 phi_tautau / phi_e^3)
    double max_magnitude_gap = 0.0;  // relative, reported only

    bool convex() const { return verdict != "not convex"; }
    bool uniformly_convex() const { return verdict == "uniformly convex"; }
};

ConvexityReport convexity_report(const Solution& s, const VerifierOptions& opts = {});
// Same report on a bare graph; used for manufactured shocks. phi_* may be empty.
ConvexityReport convexity_report(const ShockFrame& frame, const VerifierOptions& opts = {});

struct DirectionRecord {
    Vec2 e = Vec2::Zero();
    bool interior = true;        // strictly inside the cone
    double min_shock = 0.0;      // min phi_e over interior shock nodes
    int argmin_shock = 0;        // grid node
    double min_domain = 0.0;     // min phi_e over every node of the closed domain
    int argmin_domain = 0;
    double max_nu_dot_e = 0.0;   // over interior shock nodes
    bool pass = false;
};

struct MonotonicityReport {
    std::vector<DirectionRecord> directions;
    bool pass = false;          // phi_e > 0 on the shock interior for every direction
    bool domain_pass = false;   // phi_e > 0 on the closed domain for directions inside the cone
    bool normal_pass = false;   // nu.e < 0 on the shock interior for directions inside the cone
};

MonotonicityReport monotonicity_report(const Solution& s, int n_dirs = 17);

struct EntropyEllipticityAudit {
    double min_density_jump = 0.0;   // rho - rho_upstream over the shock
    int density_at = 0;
    double max_phi_nu = 0.0;         // must be negative
    int phi_nu_at = 0;
    double min_ellipticity = 0.0;    // c^2 - |D phi|^2 over interior and shock-interior nodes
    int ellipticity_at = 0;
    double min_normal_flux = 0.0;    // D phi . nu over the shock
    double min_upstream_gap = 0.0;   // D phi_up . nu - D phi . nu over the shock
    int normal_at = 0;

    bool entropy() const { return min_density_jump > 0.0 && max_phi_nu < 0.0; }
    bool elliptic() const { return min_ellipticity > 0.0; }
    bool normal_order() const { return min_normal_flux > 0.0 && min_upstream_gap > 0.0; }
};

EntropyEllipticityAudit entropy_ellipticity_audit(const Solution& s);

struct ShockNodeCheck {
    int j = 0;
    double a = 0.0;      // g(tau) = rho (c^2 - phi_nu^2) phi_nu of the full potential
    double lhs = 0.0;    // D^2 phi [e, tau]  or D^2 phi [tau, h]
    double rhs = 0.0;
    double relative = 0.0;
};

struct IdentityReport {
    Vec2 e = Vec2::Zero();
    std::vector<ShockNodeCheck> nodes;  // interior shock nodes
    double g_sign_fraction = 0.0;        // g(tau) > 0 and g(-tau) < 0
    double max_relative = 0.0;           // over nodes eps_margin cells from the endpoints
    double rms_relative = 0.0;
};

// Throws DegenerateError where c^2 - phi_nu^2 vanishes.
IdentityReport g_identity_check(const Solution& s, const Vec2& e, const VerifierOptions& opts = {});

struct ObliqueReport {
    std::vector<ShockNodeCheck> nodes;  // lhs = D^2 phi[tau, h], rhs = h . nu
    double max_h_dot_nu = 0.0;
    int h_dot_nu_at = 0;
    double max_relative = 0.0;
    double rms_relative = 0.0;
};

ObliqueReport oblique_condition_check(const Solution& s, const VerifierOptions& opts = {});

enum class ChainKind { Minimal, Maximal };

struct Chain {
    ChainKind kind = ChainKind::Minimal;
    double radius = 0.0;
    std::vector<int> nodes;
    std::vector<Vec2> centers;
    std::vector<double> values;
    bool terminal_is_boundary = false;
    bool terminal_is_local_extremum = false;
};

// Ball queries on a fixed grid; bucketed so each query touches only nearby nodes.
class ChainTracer {
public:
    ChainTracer(const MappedGrid& grid, double radius);

    double radius() const { return radius_; }
    // Nodes within the closed ball around a node, in increasing node index.
    std::vector<int> ball(int node) const;
    // Throws RadiusError unless the grid cells meeting the ball form one edge-connected piece.
    void check_connected(int node, const std::vector<int>& ball_nodes) const;
    bool is_local_extremum(const Eigen::VectorXd& w, int node, ChainKind kind) const;
    Chain trace(const Eigen::VectorXd& w, int start, ChainKind kind) const;

private:
    const MappedGrid& grid_;
    double radius_;
    Vec2 lo_;
    int nx_ = 1, ny_ = 1;
    std::vector<std::vector<int>> buckets_;
};

// Four times the median grid edge length.
double default_chain_radius(const MappedGrid& grid, double cells = 4.0);
int nearest_node(const MappedGrid& grid, const Vec2& p);

Chain trace_chain(const MappedGrid& grid, const Eigen::VectorXd& w, int start, double r, ChainKind kind);
Chain trace_chain(const Solution& s, const Vec2& e, int start, double r, ChainKind kind);

struct ChainDiagnostics {
    int starts = 0;          // boundary nodes that are not local minima
    int good = 0;            // ended on the boundary at a local minimum, strictly decreasing, below the start
    int longest = 0;
    int first_bad_start = -1;
    bool pass() const { return good == starts; }
};

// Minimal chains from every boundary node that is not a discrete local minimum.
ChainDiagnostics chain_diagnostics(const MappedGrid& grid, const Eigen::VectorXd& w, double r);

struct ConditionRecord {
    std::string condition;
    std::string status;  // "pass", "fail" or "not-checked"
    double margin = 0.0; // positive when the condition holds
    double T = 0.0;      // worst point in the solver frame (NaN when not applicable)
    double S = 0.0;
    std::string note;
};

struct VerificationReport {
    std::vector<ConditionRecord> records;
    const ConditionRecord& at(const std::string& condition) const;
    bool passed(const std::string& condition) const { return at(condition).status == "pass"; }
    nlohmann::json to_json() const;
};

// Every record name condition_audit emits, in order.
const std::vector<std::string>& audit_conditions();

VerificationReport condition_audit(const Solution& s, const VerifierOptions& opts = {});

}  // namespace shockfit
