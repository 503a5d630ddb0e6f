#include "shockfit/configuration.hpp"
#include "shockfit/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <string>

using namespace shockfit;

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

const GasParams kRR{2.0, 1.0};
const UpstreamSpec kRRUp{2.0, 0.0, 0.0};
const GasParams kPM{1.4, 1.0};
const UpstreamSpec kPMUp{0.0, 1.0, 2.5};

double on_circle(const Vec2& p, const ConstantState& s) { return (p - s.velocity).norm() - s.sound_speed; }

// Signed distance-like value of the line {phi_a = phi_b} at p.
double on_jump_line(const Vec2& p, const ConstantState& a, const ConstantState& b) {
    const double jump = constant_state_potential(a, p).value - constant_state_potential(b, p).value;
    return jump / (a.velocity - b.velocity).norm();
}

double on_wedge(const Vec2& p, const Configuration& c) { return p.dot(c.wedge_normal); }

}  // namespace

TEST(RegularReflectionGeometry, ReflectionPointAtMidpointAngle) {
    const double theta_d = detachment_angle(kRRUp.rho1, kRR);
    const double theta = 0.5 * (theta_d + kHalfPi);
    const Configuration c = build_configuration(Problem::RegularReflection, kRR, kRRUp, theta);
    EXPECT_EQ(c.P0.x(), c.xi1_0);
    EXPECT_EQ(c.P0.y(), c.xi1_0 * std::tan(theta));
}

TEST(RegularReflectionGeometry, CornerPointsOnTheirCurves) {
    const auto [lo, hi] = admissible_theta_range(Problem::RegularReflection, kRR, kRRUp);
    for (double u : {0.15, 0.5, 0.85, 0.99}) {
        const double theta = lo + u * (hi - lo);
        const Configuration c = build_configuration(Problem::RegularReflection, kRR, kRRUp, theta);
        SCOPED_TRACE(theta);
        EXPECT_NEAR(on_wedge(c.P0, c), 0.0, 1e-10);
        EXPECT_NEAR(c.P0.x(), c.xi1_0, 1e-10);
        EXPECT_NEAR(on_jump_line(c.P2, c.upstream, c.reflected), 0.0, 1e-10);
        EXPECT_NEAR(c.P2.y(), 0.0, 1e-12);
        EXPECT_EQ(c.P3, Vec2::Zero());
        if (c.regime == Regime::Supersonic) {
            EXPECT_NEAR(on_circle(c.P1, c.reflected), 0.0, 1e-10);
            EXPECT_NEAR(on_jump_line(c.P1, c.upstream, c.reflected), 0.0, 1e-10);
            EXPECT_NEAR(on_circle(c.P4, c.reflected), 0.0, 1e-10);
            EXPECT_NEAR(on_wedge(c.P4, c), 0.0, 1e-10);
            // the sonic center sits on the wedge between P0 and the vertex
            const double along = c.reflected.velocity.dot(c.wedge_tangent);
            EXPECT_NEAR(on_wedge(c.reflected.velocity, c), 0.0, 1e-10);
            EXPECT_GT(along, 0.0);
            EXPECT_LT(along, c.P0.dot(c.wedge_tangent));
        }
    }
}

TEST(RegularReflectionGeometry, RegimeMatchesSonicCircleTest) {
    const double theta_s = reflection_sonic_angle(kRRUp.rho1, kRR);
    for (double d : {-1e-3, 1e-3}) {
        const Configuration c = build_configuration(Problem::RegularReflection, kRR, kRRUp, theta_s + d);
        const bool outside = (c.P0 - c.reflected.velocity).norm() > c.reflected.sound_speed;
        EXPECT_EQ(c.regime == Regime::Supersonic, outside);
    }
    EXPECT_EQ(build_configuration(Problem::RegularReflection, kRR, kRRUp, theta_s + 1e-3).regime, Regime::Supersonic);
    EXPECT_EQ(build_configuration(Problem::RegularReflection, kRR, kRRUp, theta_s - 1e-3).regime, Regime::Subsonic);
}

TEST(RegularReflectionGeometry, FrameAndDomainOrientation) {
    const Configuration c = build_configuration(Problem::RegularReflection, kRR, kRRUp, kHalfPi - 0.05);
    EXPECT_NEAR(c.e.dot(c.e_perp), 0.0, 1e-15);
    EXPECT_LT(c.T_A(), c.T_B());
    // the wedge vertex lies on the domain side of the shock chord
    const double t = (c.P3.dot(c.e_perp) - c.T_A()) / (c.T_B() - c.T_A());
    const double chord = (1.0 - t) * c.shock_A.dot(c.e) + t * c.shock_B.dot(c.e);
    EXPECT_LT(c.P3.dot(c.e), chord);
    EXPECT_TRUE(c.b_slides);
}

TEST(RegularReflectionGeometry, RejectsInadmissibleInput) {
    const double theta_d = detachment_angle(kRRUp.rho1, kRR);
    try {
        build_configuration(Problem::RegularReflection, kRR, kRRUp, theta_d - 0.01);
        FAIL() << "expected DetachmentError";
    } catch (const DetachmentError& e) {
        EXPECT_NE(std::string(e.what()).find("admissible interval"), std::string::npos);
    }
    EXPECT_THROW(build_configuration(Problem::RegularReflection, kRR, kRRUp, kHalfPi), DetachmentError);
    EXPECT_THROW(build_configuration(Problem::RegularReflection, kRR, UpstreamSpec{0.9, 0, 0}, 1.3), EntropyError);
}

TEST(PrandtlMeyerGeometry, CornerPointsOnTheirCurves) {
    const auto [lo, hi] = admissible_theta_range(Problem::PrandtlMeyer, kPM, kPMUp);
    for (double u : {0.2, 0.5, 0.75, 0.95}) {
        const double theta = lo + u * (hi - lo);
        const Configuration c = build_configuration(Problem::PrandtlMeyer, kPM, kPMUp, theta);
        SCOPED_TRACE(theta);
        EXPECT_NEAR(on_circle(c.P2, c.far_state), 0.0, 1e-10);
        EXPECT_NEAR(on_jump_line(c.P2, c.upstream, c.far_state), 0.0, 1e-10);
        EXPECT_NEAR(on_circle(c.P3, c.far_state), 0.0, 1e-10);
        EXPECT_NEAR(on_wedge(c.P3, c), 0.0, 1e-10);
        EXPECT_NEAR(on_wedge(c.far_state.velocity, c), 0.0, 1e-10);
        EXPECT_NEAR(on_wedge(c.reflected.velocity, c), 0.0, 1e-10);
        // S_O passes through the vertex
        EXPECT_NEAR(on_jump_line(Vec2::Zero(), c.upstream, c.reflected), 0.0, 1e-10);
        if (c.regime == Regime::Supersonic) {
            EXPECT_NEAR(on_circle(c.P1, c.reflected), 0.0, 1e-10);
            EXPECT_NEAR(on_jump_line(c.P1, c.upstream, c.reflected), 0.0, 1e-10);
            EXPECT_NEAR(on_circle(c.P4, c.reflected), 0.0, 1e-10);
            EXPECT_NEAR(on_wedge(c.P4, c), 0.0, 1e-10);
        } else {
            EXPECT_EQ(c.shock_A, Vec2::Zero());
        }
    }
}

TEST(PrandtlMeyerGeometry, SonicArcJustBelowSonicAngle) {
    const double theta_s = prandtl_sonic_angle(kPMUp.rho_inf, kPMUp.u_inf, kPM.gamma);
    const Configuration c = build_configuration(Problem::PrandtlMeyer, kPM, kPMUp, theta_s - 1e-3);
    ASSERT_EQ(c.regime, Regime::Supersonic);
    EXPECT_GT((c.P1 - c.P4).norm(), 1e-6);
    EXPECT_GT(c.P1.norm(), 0.0);
    EXPECT_EQ(build_configuration(Problem::PrandtlMeyer, kPM, kPMUp, theta_s + 1e-3).regime, Regime::Subsonic);
}

TEST(PrandtlMeyerGeometry, EndpointSlopesBracketTheChord) {
    // a concave shock from A to B needs the chord slope between the two tangent slopes
    for (double theta : {0.3, 0.5, 0.78}) {
        const Configuration c = build_configuration(Problem::PrandtlMeyer, kPM, kPMUp, theta);
        const auto slope = [&](const Vec2& d) { return d.dot(c.e) / d.dot(c.e_perp); };
        const double chord = slope(c.shock_B - c.shock_A);
        EXPECT_LT(chord, slope(c.cone_A)) << theta;
        EXPECT_GT(chord, slope(c.cone_B)) << theta;
    }
}

TEST(BoundaryPieces, ArcStaysOnItsCircle) {
    const BoundaryPiece a = BoundaryPiece::arc(Vec2(1.0, 2.0), 0.5, Vec2(1.5, 2.0), Vec2(1.0, 2.5), EdgeTag::SonicO);
    for (double u = 0.0; u <= 1.0; u += 0.125) EXPECT_NEAR((a.at(u) - Vec2(1.0, 2.0)).norm(), 0.5, 1e-14);
    EXPECT_NEAR((a.at(0.5) - Vec2(1.0 + 0.5 * std::sqrt(0.5), 2.0 + 0.5 * std::sqrt(0.5))).norm(), 0.0, 1e-14);
    EXPECT_EQ(a.at(1.0), Vec2(1.0, 2.5));
}
