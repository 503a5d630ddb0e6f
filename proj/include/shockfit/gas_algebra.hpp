#pragma once

#include <Eigen/Core>

#include <array>
#include <vector>

namespace shockfit {

using Vec2 = Eigen::Vector2d;

struct GasParams {
    double gamma = 1.4;
    double rho0 = 1.0;

    // Throws std::invalid_argument unless gamma > 1 and rho0 > 0.
    void validate() const;
    // rho0^(gamma-1): the Bernoulli level that every closure is measured against.
    double bernoulli_level() const;
};

struct ConstantState {
    Vec2 velocity = Vec2::Zero();
    double constant = 0.0;
    double density = 1.0;
    double sound_speed = 1.0;
};

struct SonicCircle {
    Vec2 center = Vec2::Zero();
    double radius = 1.0;
};

struct AlgebraOptions {
    double residual_tol = 1e-10;
    double angle_tol = 1e-10;
    int scan_points = 401;
};

double density(double q_sq, double z, const GasParams& params);
double sound_speed_sq(double q_sq, double z, const GasParams& params);
double ellipticity_margin(const Vec2& grad_phi, double z, const GasParams& params);

// Builds a state from (velocity, constant); density and sound speed follow from the closure.
ConstantState make_state(const Vec2& velocity, double constant, const GasParams& params);

struct PotentialSample {
    double value = 0.0;
    Vec2 gradient = Vec2::Zero();
};

PotentialSample constant_state_potential(const ConstantState& state, const Vec2& xi);

struct IncidentShock {
    ConstantState state1;
    double xi1_0 = 0.0;
};

IncidentShock incident_shock_state(double rho1, const GasParams& params);

struct RHResidual {
    double mass_jump = 0.0;
    double potential_jump = 0.0;
};

RHResidual rh_residual(const ConstantState& up, const Vec2& down_grad, double down_value,
                       const Vec2& normal, const Vec2& xi, const GasParams& params);

struct ReflectionRoots {
    ConstantState weak;
    ConstantState strong;
    // False when the strong root sits so close to the vacuum bound that double
    // precision cannot meet the residual tolerance (happens as theta_w -> pi/2).
    bool strong_resolved = true;
};

// Reflection point on the wedge for the given incident shock location.
Vec2 reflection_point(double xi1_0, double theta_w);

// Residuals of the three defining equations for state (2) at P0: slip on the
// wedge, potential continuity, and normal mass flux. Each is divided by the
// size of the terms it balances (floored at 1), since P0 recedes to infinity
// as theta_w -> pi/2.
std::array<double, 3> reflection_state2_residuals(const IncidentShock& incident,
                                                  const ConstantState& state2,
                                                  const GasParams& params, double theta_w);

ReflectionRoots solve_reflection_state2(double rho1, const GasParams& params, double theta_w,
                                        const AlgebraOptions& opts = {});

// Number of entropy-admissible roots of the state (2) system; used for existence bisection.
int count_reflection_roots(double rho1, const GasParams& params, double theta_w,
                           const AlgebraOptions& opts = {});

double detachment_angle(double rho1, const GasParams& params, const AlgebraOptions& opts = {});

// Wedge angle where the weak state (2) turns from subsonic to supersonic at P0.
double reflection_sonic_angle(double rho1, const GasParams& params, const AlgebraOptions& opts = {});

struct PrandtlStates {
    GasParams params;          // gamma with rho0 set to rho_inf
    ConstantState inflow;      // velocity (u_inf, 0), constant -u_inf^2/2
    ConstantState state_N;
    ConstantState state_O_weak;
    ConstantState state_O_strong;
    double shock_offset_N = 0.0;  // distance of S_N from the wedge line
    double theta_s = 0.0;
    double theta_d = 0.0;
};

PrandtlStates prandtl_states(double rho_inf, double u_inf, double gamma, double theta_w,
                             const AlgebraOptions& opts = {});

// Detachment and sonic angles only; theta_w is not needed for these.
double prandtl_detachment_angle(double rho_inf, double u_inf, double gamma,
                                const AlgebraOptions& opts = {});
double prandtl_sonic_angle(double rho_inf, double u_inf, double gamma, const AlgebraOptions& opts = {});

SonicCircle sonic_circle(const ConstantState& state);

}  // namespace shockfit
