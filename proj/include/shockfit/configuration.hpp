#pragma once

#include "shockfit/gas_algebra.hpp"
#include "shockfit/grid.hpp"

#include <string>

namespace shockfit {

enum class Problem { RegularReflection, PrandtlMeyer };
enum class Regime { Supersonic, Subsonic };

std::string to_string(Problem p);
std::string to_string(Regime r);

// Incoming data: rho1 for regular reflection, (rho_inf, u_inf) for Prandtl-Meyer.
struct UpstreamSpec {
    double rho1 = 0.0;
    double rho_inf = 0.0;
    double u_inf = 0.0;
};

// A fixed piece of the domain boundary: a straight segment or a circular arc.
struct BoundaryPiece {
    enum class Kind { Segment, Arc } kind = Kind::Segment;
    Vec2 from = Vec2::Zero();
    Vec2 to = Vec2::Zero();
    Vec2 center = Vec2::Zero();
    double radius = 0.0;
    double angle_from = 0.0;
    double angle_to = 0.0;
    EdgeTag tag = EdgeTag::Wedge;

    static BoundaryPiece segment(const Vec2& a, const Vec2& b, EdgeTag tag);
    // Shorter arc of the circle (center, radius) from a to b.
    static BoundaryPiece arc(const Vec2& center, double radius, const Vec2& a, const Vec2& b, EdgeTag tag);
    Vec2 at(double u) const;
};

struct Configuration {
    Problem problem = Problem::RegularReflection;
    GasParams params;
    UpstreamSpec spec;
    double theta_w = 0.0;
    Regime regime = Regime::Supersonic;

    ConstantState upstream;   // state (1) or the incoming state
    ConstantState reflected;  // weak state (2) or weak phi_O
    ConstantState far_state;  // phi_N (Prandtl-Meyer only)
    ConstantState rest_state; // state (0) (regular reflection only)

    double xi1_0 = 0.0;
    double theta_d = 0.0;
    double theta_s = 0.0;
    double shock_offset_N = 0.0;

    Vec2 P0 = Vec2::Zero(), P1 = Vec2::Zero(), P2 = Vec2::Zero(), P3 = Vec2::Zero(), P4 = Vec2::Zero();

    Vec2 wedge_tangent = Vec2::Zero();
    Vec2 wedge_normal = Vec2::Zero();  // nu_w, pointing from the wedge into the flow

    // Shock frame: S = xi.e, T = xi.e_perp, with Omega on the side S < f(T).
    Vec2 e = Vec2::Zero();
    Vec2 e_perp = Vec2::Zero();
    // Directions spanning the cone at the two shock endpoints (e_S1, e_xi2 or e_SO, e_SN).
    Vec2 cone_A = Vec2::Zero();
    Vec2 cone_B = Vec2::Zero();

    // Shock endpoints: A is pinned; B is pinned unless it slides on the symmetry line.
    Vec2 shock_A = Vec2::Zero();
    Vec2 shock_B = Vec2::Zero();  // initial position when sliding
    bool b_slides = false;

    // Fixed boundary pieces; side_b's far end follows the shock endpoint when B slides.
    BoundaryPiece side_a;   // Q_A -> A
    BoundaryPiece bottom;   // Q_A -> Q_B
    BoundaryPiece side_b;   // Q_B -> B
    bool vertex_at_QB = false;  // wedge/symmetry corner (the wedge vertex)

    Vec2 frame_shift = Vec2::Zero();

    double T_A() const { return shock_A.dot(e_perp); }
    double T_B() const { return shock_B.dot(e_perp); }
    // Constant state whose Dirichlet data a sonic-tagged edge carries.
    const ConstantState& sonic_state(EdgeTag tag) const;
    // Unit normal of a slip boundary (wedge or symmetry).
    Vec2 slip_normal(EdgeTag tag) const;
};

Configuration build_configuration(Problem problem, const GasParams& params, const UpstreamSpec& upstream,
                                  double theta_w, const AlgebraOptions& opts = {});

// Admissible wedge-angle interval (lower, upper) for the problem.
std::pair<double, double> admissible_theta_range(Problem problem, const GasParams& params,
                                                 const UpstreamSpec& upstream, const AlgebraOptions& opts = {});

}  // namespace shockfit
