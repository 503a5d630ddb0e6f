#include "shockfit/configuration.hpp"

#include "shockfit/errors.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace shockfit {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

double angle_of(const Vec2& v) { return std::atan2(v.y(), v.x()); }

// Nearest intersection (smallest lambda > 0) of the ray p + lambda*dir with the circle.
Vec2 ray_circle(const Vec2& p, const Vec2& dir, const Vec2& center, double radius) {
    const Vec2 d = p - center;
    const double b = dir.dot(d);
    const double disc = b * b - (d.squaredNorm() - radius * radius);
    if (disc < 0.0) throw GeometryError("ray misses the sonic circle");
    const double root = std::sqrt(disc);
    const double lam = (-b - root > 0.0) ? -b - root : -b + root;
    if (!(lam > 0.0)) throw GeometryError("sonic circle lies behind the ray origin");
    return p + lam * dir;
}

[[noreturn]] void out_of_range(double theta, double lo, double hi) {
    std::ostringstream os;
    os.precision(17);
    os << "theta_w=" << theta << " outside the admissible interval (" << lo << ", " << hi << ")";
    throw DetachmentError(os.str());
}

Configuration regular_reflection(const GasParams& params, const UpstreamSpec& up, double theta,
                                 const AlgebraOptions& opts) {
    params.validate();
    if (!(up.rho1 > params.rho0)) throw EntropyError("rho1 must exceed rho0 for an admissible incident shock");

    Configuration c;
    c.problem = Problem::RegularReflection;
    c.params = params;
    c.spec = up;
    c.theta_w = theta;
    c.theta_d = detachment_angle(up.rho1, params, opts);
    if (!(theta > c.theta_d && theta < kHalfPi)) out_of_range(theta, c.theta_d, kHalfPi);
    c.theta_s = reflection_sonic_angle(up.rho1, params, opts);

    const IncidentShock inc = incident_shock_state(up.rho1, params);
    c.upstream = inc.state1;
    c.xi1_0 = inc.xi1_0;
    c.rest_state = make_state(Vec2::Zero(), 0.0, params);
    c.reflected = solve_reflection_state2(up.rho1, params, theta, opts).weak;

    c.wedge_tangent = Vec2(std::cos(theta), std::sin(theta));
    c.wedge_normal = Vec2(-std::sin(theta), std::cos(theta));
    c.P0 = reflection_point(c.xi1_0, theta);
    c.P3 = Vec2::Zero();

    // S1: the reflected shock line {phi1 = phi2}; e_S1 points from P0 toward the axis.
    const Vec2 jump = c.upstream.velocity - c.reflected.velocity;
    Vec2 e_s1(-jump.y(), jump.x());
    e_s1.normalize();
    if (e_s1.y() > 0.0) e_s1 = -e_s1;
    const double cross = (c.reflected.constant - c.upstream.constant) / jump.x();
    c.P2 = Vec2(cross, 0.0);
    if (!(c.P2.x() < 0.0)) throw GeometryError("reflected shock line does not cut the symmetry axis behind the wedge vertex");

    const Vec2 O2 = c.reflected.velocity;
    const double c2 = c.reflected.sound_speed;
    c.regime = (c.P0 - O2).norm() > c2 ? Regime::Supersonic : Regime::Subsonic;

    c.e = Vec2(-1.0, 0.0);
    c.e_perp = Vec2(0.0, -1.0);
    c.cone_A = e_s1;
    c.cone_B = Vec2(0.0, 1.0);
    c.b_slides = true;
    c.vertex_at_QB = true;
    c.shock_B = c.P2;

    if (c.regime == Regime::Supersonic) {
        c.P1 = ray_circle(c.P0, e_s1, O2, c2);
        c.P4 = O2 + c2 * c.wedge_tangent;
        c.shock_A = c.P1;
        c.side_a = BoundaryPiece::arc(O2, c2, c.P4, c.P1, EdgeTag::SonicO);
        c.bottom = BoundaryPiece::segment(c.P4, c.P3, EdgeTag::Wedge);
    } else {
        c.P1 = c.P0;
        c.P4 = c.P0;
        c.shock_A = c.P0;
        const Vec2 mid = 0.5 * (c.P0 + c.P3);
        c.side_a = BoundaryPiece::segment(mid, c.P0, EdgeTag::Wedge);
        c.bottom = BoundaryPiece::segment(mid, c.P3, EdgeTag::Wedge);
    }
    c.side_b = BoundaryPiece::segment(c.P3, c.shock_B, EdgeTag::Symmetry);
    return c;
}

Configuration prandtl_meyer(const GasParams& params, const UpstreamSpec& up, double theta,
                            const AlgebraOptions& opts) {
    const PrandtlStates ps = prandtl_states(up.rho_inf, up.u_inf, params.gamma, theta, opts);

    Configuration c;
    c.problem = Problem::PrandtlMeyer;
    c.params = ps.params;
    c.spec = up;
    c.theta_w = theta;
    c.theta_d = ps.theta_d;
    c.theta_s = ps.theta_s;
    c.upstream = ps.inflow;
    c.reflected = ps.state_O_weak;
    c.far_state = ps.state_N;
    c.shock_offset_N = ps.shock_offset_N;

    const Vec2 t(std::cos(theta), std::sin(theta));
    const Vec2 n(-std::sin(theta), std::cos(theta));
    c.wedge_tangent = t;
    c.wedge_normal = n;

    const double a = up.u_inf * std::cos(theta), b = up.u_inf * std::sin(theta);
    const double q = c.reflected.velocity.norm(), cO = c.reflected.sound_speed;
    const double cN = c.far_state.sound_speed, d = c.shock_offset_N;
    if (!(cN > d)) throw GeometryError("sonic circle of phi_N does not reach the line S_N");

    // Gamma_sonic^N is the arc of the phi_N circle on the far side of its center,
    // so that the constant region N extends to infinity along the wedge.
    c.P3 = (a + cN) * t;
    c.P2 = (a + std::sqrt(cN * cN - d * d)) * t + d * n;
    c.regime = q > cO ? Regime::Supersonic : Regime::Subsonic;

    // S_O passes through the origin with direction w (pointing away from the wedge).
    const Vec2 w_local = Vec2(b, a - q).normalized();
    const Vec2 w = w_local.x() * t + w_local.y() * n;

    c.e = n;
    c.e_perp = t;
    c.cone_A = w;
    c.cone_B = -t;
    c.b_slides = false;
    c.vertex_at_QB = false;
    c.shock_B = c.P2;
    c.side_b = BoundaryPiece::arc(c.far_state.velocity, cN, c.P3, c.P2, EdgeTag::SonicN);

    if (c.regime == Regime::Supersonic) {
        c.P4 = (q - cO) * t;
        const double wt = w_local.x();
        const double disc = q * q * wt * wt - q * q + cO * cO;
        if (disc < 0.0) throw GeometryError("S_O misses the sonic circle of phi_O");
        c.P1 = (q * wt - std::sqrt(disc)) * w;
        c.shock_A = c.P1;
        c.side_a = BoundaryPiece::arc(c.reflected.velocity, cO, c.P4, c.P1, EdgeTag::SonicO);
        c.bottom = BoundaryPiece::segment(c.P4, c.P3, EdgeTag::Wedge);
        if (!(c.P3.dot(t) > c.P4.dot(t))) throw GeometryError("sonic arcs overlap on the wedge");
    } else {
        c.P1 = Vec2::Zero();
        c.P4 = Vec2::Zero();
        c.shock_A = Vec2::Zero();
        const Vec2 mid = 0.5 * c.P3;
        c.side_a = BoundaryPiece::segment(mid, Vec2::Zero(), EdgeTag::Wedge);
        c.bottom = BoundaryPiece::segment(mid, c.P3, EdgeTag::Wedge);
    }
    return c;
}

}  // namespace

std::string to_string(Problem p) {
    return p == Problem::RegularReflection ? "regular_reflection" : "prandtl_meyer";
}

std::string to_string(Regime r) { return r == Regime::Supersonic ? "supersonic" : "subsonic"; }

BoundaryPiece BoundaryPiece::segment(const Vec2& a, const Vec2& b, EdgeTag tag) {
    BoundaryPiece p;
    p.kind = Kind::Segment;
    p.from = a;
    p.to = b;
    p.tag = tag;
    return p;
}

BoundaryPiece BoundaryPiece::arc(const Vec2& center, double radius, const Vec2& a, const Vec2& b, EdgeTag tag) {
    BoundaryPiece p;
    p.kind = Kind::Arc;
    p.from = a;
    p.to = b;
    p.center = center;
    p.radius = radius;
    p.angle_from = angle_of(a - center);
    double to = angle_of(b - center);
    while (to - p.angle_from > std::numbers::pi) to -= 2.0 * std::numbers::pi;
    while (to - p.angle_from < -std::numbers::pi) to += 2.0 * std::numbers::pi;
    p.angle_to = to;
    p.tag = tag;
    return p;
}

Vec2 BoundaryPiece::at(double u) const {
    if (u <= 0.0) return from;
    if (u >= 1.0) return to;
    if (kind == Kind::Segment) return (1.0 - u) * from + u * to;
    const double a = angle_from + u * (angle_to - angle_from);
    return center + radius * Vec2(std::cos(a), std::sin(a));
}

const ConstantState& Configuration::sonic_state(EdgeTag tag) const {
    if (tag == EdgeTag::SonicN) return far_state;
    if (tag == EdgeTag::SonicO) return reflected;
    throw std::invalid_argument("edge tag " + to_string(tag) + " carries no sonic state");
}

Vec2 Configuration::slip_normal(EdgeTag tag) const {
    if (tag == EdgeTag::Wedge) return wedge_normal;
    if (tag == EdgeTag::Symmetry) return Vec2(0.0, 1.0);
    throw std::invalid_argument("edge tag " + to_string(tag) + " is not a slip boundary");
}

Configuration build_configuration(Problem problem, const GasParams& params, const UpstreamSpec& upstream,
                                  double theta_w, const AlgebraOptions& opts) {
    return problem == Problem::RegularReflection ? regular_reflection(params, upstream, theta_w, opts)
                                                 : prandtl_meyer(params, upstream, theta_w, opts);
}

std::pair<double, double> admissible_theta_range(Problem problem, const GasParams& params,
                                                 const UpstreamSpec& upstream, const AlgebraOptions& opts) {
    if (problem == Problem::RegularReflection) return {detachment_angle(upstream.rho1, params, opts), kHalfPi};
    return {0.0, prandtl_detachment_angle(upstream.rho_inf, upstream.u_inf, params.gamma, opts)};
}

}  // namespace shockfit
