#include "shockfit/gas_algebra.hpp"

#include "shockfit/errors.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace shockfit {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

double closure_base(double q_sq, double z, const GasParams& p) {
    return p.bernoulli_level() - (p.gamma - 1.0) * (z + 0.5 * q_sq);
}

[[noreturn]] void throw_vacuum(double base) {
    std::ostringstream os;
    os << "closure base is negative (" << base << "): vacuum";
    throw VacuumError(os.str());
}

using ScalarFn = std::function<double(double)>;

double refine_root(const ScalarFn& f, double a, double b, double fa, double fb) {
    boost::uintmax_t max_iter = 200;
    const auto tol = boost::math::tools::eps_tolerance<double>(std::numeric_limits<double>::digits - 2);
    try {
        auto r = boost::math::tools::toms748_solve(f, a, b, fa, fb, tol, max_iter);
        return 0.5 * (r.first + r.second);
    } catch (const std::exception& e) {
        throw ConvergenceError(std::string("bracketed root refinement failed: ") + e.what());
    }
}

// Sign changes of f on a geometric grid over [lo, hi], plus pairs of roots that
// hide inside one scan cell near a fold (detected through a local extremum of f
// whose refined value has the opposite sign).
std::vector<double> scan_roots(const ScalarFn& f, double lo, double hi, int n) {
    std::vector<double> x(n), v(n);
    const double ratio = std::log(hi / lo);
    for (int k = 0; k < n; ++k) {
        x[k] = lo * std::exp(ratio * k / (n - 1));
        v[k] = f(x[k]);
    }
    x[n - 1] = hi;
    std::vector<double> roots;
    for (int k = 0; k + 1 < n; ++k) {
        if (v[k] == 0.0) {
            roots.push_back(x[k]);
            continue;
        }
        if (v[k] * v[k + 1] < 0.0) roots.push_back(refine_root(f, x[k], x[k + 1], v[k], v[k + 1]));
    }
    for (int k = 1; k + 1 < n; ++k) {
        const bool same_sign = v[k - 1] * v[k] > 0.0 && v[k] * v[k + 1] > 0.0;
        const bool turning = (v[k] - v[k - 1]) * (v[k + 1] - v[k]) < 0.0;
        if (!same_sign || !turning) continue;
        const double s = v[k] > 0.0 ? 1.0 : -1.0;
        // only an extremum that moves toward zero can hide a root pair
        if (std::abs(v[k]) > std::abs(v[k - 1]) || std::abs(v[k]) > std::abs(v[k + 1])) continue;
        auto g = [&](double t) { return s * f(t); };
        auto m = boost::math::tools::brent_find_minima(g, x[k - 1], x[k + 1], std::numeric_limits<double>::digits);
        const double fm = f(m.first);
        if (fm * s < 0.0) {
            roots.push_back(refine_root(f, x[k - 1], m.first, v[k - 1], fm));
            roots.push_back(refine_root(f, m.first, x[k + 1], fm, v[k + 1]));
        }
    }
    std::sort(roots.begin(), roots.end());
    return roots;
}

// Bisection on a monotone predicate: pred(lo) == false, pred(hi) == true.
// Continues to adjacent doubles so the returned value is as sharp as the predicate.
double bisect_predicate(const std::function<bool(double)>& pred, double lo, double hi) {
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (pred(mid) ? hi : lo) = mid;
    }
    return hi;
}

// --- regular reflection, state (2) ---------------------------------------

struct State2System {
    IncidentShock inc;
    GasParams params;
    double theta;
    double rho1;
    Vec2 p0;
    double tan_t;

    State2System(double rho1_, const GasParams& p, double theta_w)
        : inc(incident_shock_state(rho1_, p)), params(p), theta(theta_w), rho1(rho1_),
          p0(reflection_point(inc.xi1_0, theta_w)), tan_t(std::tan(theta_w)) {}

    Vec2 velocity(double u2) const { return {u2, u2 * tan_t}; }
    double constant(double u2) const { return -velocity(u2).dot(p0); }

    double base(double u2) const {
        const Vec2 v2 = velocity(u2);
        return params.bernoulli_level() - (params.gamma - 1.0) * (constant(u2) + 0.5 * v2.squaredNorm());
    }

    // Largest u2 before the state (2) closure reaches vacuum.
    double vacuum_bound() const {
        const double c2 = std::cos(theta) * std::cos(theta);
        const double x0 = inc.xi1_0;
        return x0 + std::sqrt(x0 * x0 + 2.0 * params.bernoulli_level() * c2 / (params.gamma - 1.0));
    }

    double mass(double u2) const {
        const Vec2 v2 = velocity(u2);
        const double b = std::max(base(u2), 0.0);
        const double rho2 = std::pow(b, 1.0 / (params.gamma - 1.0));
        const Vec2 v1 = inc.state1.velocity;
        const Vec2 nu = (v1 - v2).normalized();
        return rho2 * (v2 - p0).dot(nu) - rho1 * (v1 - p0).dot(nu);
    }

    std::vector<ConstantState> admissible_roots(const AlgebraOptions& opts) const {
        const double ub = vacuum_bound();
        auto f = [this](double u) { return mass(u); };
        const auto roots = scan_roots(f, ub * 1e-15, ub * (1.0 - 1e-9), opts.scan_points);
        std::vector<ConstantState> out;
        for (double u2 : roots) {
            if (base(u2) <= 0.0) continue;
            ConstantState s = make_state(velocity(u2), constant(u2), params);
            if (s.density > rho1) out.push_back(s);
        }
        std::sort(out.begin(), out.end(),
                  [](const ConstantState& a, const ConstantState& b) { return a.density < b.density; });
        return out;
    }
};

// --- Prandtl-Meyer states ------------------------------------------------

struct PrandtlSystem {
    GasParams params;
    double rho_inf, u_inf, theta, a, b;

    PrandtlSystem(double rho_inf_, double u_inf_, double gamma, double theta_w)
        : params{gamma, rho_inf_}, rho_inf(rho_inf_), u_inf(u_inf_), theta(theta_w),
          a(u_inf_ * std::cos(theta_w)), b(u_inf_ * std::sin(theta_w)) {}

    double level() const { return params.bernoulli_level(); }

    double rho_O(double q) const {
        const double base = level() + (params.gamma - 1.0) * 0.5 * (u_inf * u_inf - q * q);
        return std::pow(base, 1.0 / (params.gamma - 1.0));
    }
    double mass_O(double q) const {
        return rho_inf * (u_inf * u_inf - q * a) - rho_O(q) * (q * a - q * q);
    }
    double rho_N(double d) const {
        const double base = level() + (params.gamma - 1.0) * (b * d + 0.5 * b * b);
        return std::pow(base, 1.0 / (params.gamma - 1.0));
    }

    // Oblique roots q in (0, a), sorted by increasing density (decreasing q).
    std::vector<double> oblique_roots(const AlgebraOptions& opts) const {
        if (a <= 0.0) return {};
        auto f = [this](double p) { return mass_O(a - p); };
        auto ps = scan_roots(f, a * 1e-12, a * (1.0 - 1e-9), opts.scan_points);
        std::vector<double> qs;
        for (double p : ps) qs.push_back(a - p);
        std::sort(qs.begin(), qs.end(), std::greater<>());
        return qs;
    }

    double normal_offset() const {
        auto h = [this](double d) { return rho_N(d) * d - rho_inf * (b + d); };
        double hi = std::max(b, 1e-3);
        while (h(hi) <= 0.0) {
            hi *= 2.0;
            if (hi > 1e12) throw ConvergenceError("normal reflection offset not bracketed");
        }
        return refine_root(h, 0.0, hi, h(0.0), h(hi));
    }

    ConstantState inflow() const {
        return make_state(Vec2(u_inf, 0.0), -0.5 * u_inf * u_inf, params);
    }
    Vec2 tangent() const { return {std::cos(theta), std::sin(theta)}; }
};

bool prandtl_has_roots(double rho_inf, double u_inf, double gamma, double theta, const AlgebraOptions& o) {
    return !PrandtlSystem(rho_inf, u_inf, gamma, theta).oblique_roots(o).empty();
}

void check_supersonic_inflow(double rho_inf, double u_inf, double gamma) {
    const double c_inf = std::pow(rho_inf, 0.5 * (gamma - 1.0));
    if (!(u_inf > c_inf)) {
        std::ostringstream os;
        os << "incoming state is not supersonic at the origin: u_inf=" << u_inf << " c_inf=" << c_inf;
        throw SupersonicInflowError(os.str());
    }
}

}  // namespace

void GasParams::validate() const {
    if (!(gamma > 1.0)) throw std::invalid_argument("gamma must exceed 1");
    if (!(rho0 > 0.0)) throw std::invalid_argument("rho0 must be positive");
}

double GasParams::bernoulli_level() const { return std::pow(rho0, gamma - 1.0); }

double density(double q_sq, double z, const GasParams& params) {
    const double base = closure_base(q_sq, z, params);
    if (base < 0.0) throw_vacuum(base);
    return std::pow(base, 1.0 / (params.gamma - 1.0));
}

double sound_speed_sq(double q_sq, double z, const GasParams& params) {
    const double base = closure_base(q_sq, z, params);
    if (base < 0.0) throw_vacuum(base);
    return base;
}

double ellipticity_margin(const Vec2& grad_phi, double z, const GasParams& params) {
    const double q_sq = grad_phi.squaredNorm();
    const double base = closure_base(q_sq, z, params);
    if (base < 0.0) throw_vacuum(base);
    const double c_star_sq = 2.0 / (params.gamma + 1.0) * (params.bernoulli_level() - (params.gamma - 1.0) * z);
    return c_star_sq - q_sq;
}

ConstantState make_state(const Vec2& velocity, double constant, const GasParams& params) {
    ConstantState s;
    s.velocity = velocity;
    s.constant = constant;
    const double c2 = sound_speed_sq(velocity.squaredNorm(), constant, params);
    s.density = std::pow(c2, 1.0 / (params.gamma - 1.0));
    s.sound_speed = std::sqrt(c2);
    if (!(s.density > 0.0)) throw VacuumError("constant state has zero density");
    return s;
}

PotentialSample constant_state_potential(const ConstantState& state, const Vec2& xi) {
    return {-0.5 * xi.squaredNorm() + state.velocity.dot(xi) + state.constant, state.velocity - xi};
}

IncidentShock incident_shock_state(double rho1, const GasParams& params) {
    params.validate();
    const double rho0 = params.rho0;
    if (!(rho1 > rho0)) throw EntropyError("incident shock needs rho1 > rho0");
    const double gm1 = params.gamma - 1.0;
    const double u1 = std::sqrt(2.0 * (rho1 - rho0) * (std::pow(rho1, gm1) - std::pow(rho0, gm1)) /
                                (gm1 * (rho1 + rho0)));
    IncidentShock out;
    out.xi1_0 = rho1 * u1 / (rho1 - rho0);
    out.state1.velocity = Vec2(u1, 0.0);
    out.state1.constant = -u1 * out.xi1_0;
    out.state1.density = rho1;
    out.state1.sound_speed = std::pow(rho1, 0.5 * gm1);
    return out;
}

RHResidual rh_residual(const ConstantState& up, const Vec2& down_grad, double down_value,
                       const Vec2& normal, const Vec2& xi, const GasParams& params) {
    const auto upv = constant_state_potential(up, xi);
    const double rho = density(down_grad.squaredNorm(), down_value, params);
    return {rho * down_grad.dot(normal) - up.density * upv.gradient.dot(normal), down_value - upv.value};
}

Vec2 reflection_point(double xi1_0, double theta_w) { return {xi1_0, xi1_0 * std::tan(theta_w)}; }

std::array<double, 3> reflection_state2_residuals(const IncidentShock& incident, const ConstantState& s2,
                                                  const GasParams& params, double theta_w) {
    const Vec2 p0 = reflection_point(incident.xi1_0, theta_w);
    const Vec2 nu_w(-std::sin(theta_w), std::cos(theta_w));
    const auto up = constant_state_potential(incident.state1, p0);
    const auto v2 = constant_state_potential(s2, p0);
    const Vec2 nu = (incident.state1.velocity - s2.velocity).normalized();
    // on the wedge line xi . nu_w = 0, so slip reduces to the velocity
    const double slip = s2.velocity.dot(nu_w) / std::max(1.0, s2.velocity.norm());
    const auto rh = rh_residual(incident.state1, v2.gradient, v2.value, nu, p0, params);
    const double flux = std::max(1.0, incident.state1.density * (incident.state1.velocity.norm() + p0.norm()));
    const double level = std::max(1.0, std::abs(up.value));
    return {slip, rh.potential_jump / level, rh.mass_jump / flux};
}

ReflectionRoots solve_reflection_state2(double rho1, const GasParams& params, double theta_w,
                                        const AlgebraOptions& opts) {
    if (!(theta_w > 0.0 && theta_w < kHalfPi)) throw std::invalid_argument("theta_w must lie in (0, pi/2)");
    const State2System sys(rho1, params, theta_w);
    const auto roots = sys.admissible_roots(opts);
    if (roots.empty()) {
        std::ostringstream os;
        os << "no real state (2) at theta_w=" << theta_w << " (below detachment)";
        throw DetachmentError(os.str());
    }
    ReflectionRoots out{roots.front(), roots.size() > 1 ? roots[1] : roots.front(), true};
    auto within = [&](const ConstantState& st) {
        const auto r = reflection_state2_residuals(sys.inc, st, params, theta_w);
        return std::all_of(r.begin(), r.end(), [&](double v) { return std::abs(v) < opts.residual_tol; });
    };
    if (!within(out.weak)) throw ConvergenceError("weak state (2) residual above tolerance");
    out.strong_resolved = roots.size() > 1 && within(out.strong);
    return out;
}

int count_reflection_roots(double rho1, const GasParams& params, double theta_w, const AlgebraOptions& opts) {
    return static_cast<int>(State2System(rho1, params, theta_w).admissible_roots(opts).size());
}

double detachment_angle(double rho1, const GasParams& params, const AlgebraOptions& opts) {
    auto exists = [&](double t) { return count_reflection_roots(rho1, params, t, opts) > 0; };
    const double lo = 1e-6, hi = kHalfPi - 1e-6;
    if (exists(lo) || !exists(hi)) throw ConvergenceError("root existence does not change sign in (0, pi/2)");
    return bisect_predicate(exists, lo, hi);
}

double reflection_sonic_angle(double rho1, const GasParams& params, const AlgebraOptions& opts) {
    const double td = detachment_angle(rho1, params, opts);
    const IncidentShock inc = incident_shock_state(rho1, params);
    auto supersonic = [&](double t) {
        const auto r = solve_reflection_state2(rho1, params, t, opts);
        return (reflection_point(inc.xi1_0, t) - r.weak.velocity).norm() > r.weak.sound_speed;
    };
    double lo = td + 1e-9;
    // closer to pi/2 the weak root drops below double-precision resolution
    const double hi = kHalfPi - 1e-6;
    if (supersonic(lo)) return lo;
    if (!supersonic(hi)) throw ConvergenceError("weak state (2) never becomes supersonic at P0");
    return bisect_predicate(supersonic, lo, hi);
}

double prandtl_detachment_angle(double rho_inf, double u_inf, double gamma, const AlgebraOptions& opts) {
    check_supersonic_inflow(rho_inf, u_inf, gamma);
    auto none = [&](double t) { return !prandtl_has_roots(rho_inf, u_inf, gamma, t, opts); };
    const double lo = 1e-6, hi = kHalfPi - 1e-6;
    if (none(lo) || !none(hi)) throw ConvergenceError("oblique root existence does not change sign");
    return bisect_predicate(none, lo, hi);
}

double prandtl_sonic_angle(double rho_inf, double u_inf, double gamma, const AlgebraOptions& opts) {
    const double td = prandtl_detachment_angle(rho_inf, u_inf, gamma, opts);
    auto subsonic = [&](double t) {
        const PrandtlSystem sys(rho_inf, u_inf, gamma, t);
        const auto qs = sys.oblique_roots(opts);
        if (qs.empty()) return true;
        const double q = qs.front();
        const double c = std::pow(sys.rho_O(q), 0.5 * (gamma - 1.0));
        return q <= c;
    };
    const double lo = 1e-6;
    if (subsonic(lo)) throw ConvergenceError("weak oblique state subsonic at vanishing wedge angle");
    return bisect_predicate(subsonic, lo, td);
}

PrandtlStates prandtl_states(double rho_inf, double u_inf, double gamma, double theta_w,
                             const AlgebraOptions& opts) {
    GasParams{gamma, rho_inf}.validate();
    check_supersonic_inflow(rho_inf, u_inf, gamma);
    PrandtlStates out;
    out.theta_d = prandtl_detachment_angle(rho_inf, u_inf, gamma, opts);
    if (!(theta_w > 0.0) || theta_w >= out.theta_d) {
        std::ostringstream os;
        os << "theta_w=" << theta_w << " outside (0, theta_d=" << out.theta_d << ")";
        throw DetachmentError(os.str());
    }
    out.theta_s = prandtl_sonic_angle(rho_inf, u_inf, gamma, opts);

    const PrandtlSystem sys(rho_inf, u_inf, gamma, theta_w);
    out.params = sys.params;
    out.inflow = sys.inflow();
    const Vec2 t = sys.tangent();

    const double d = sys.normal_offset();
    out.shock_offset_N = d;
    out.state_N = make_state(sys.a * t, out.inflow.constant - sys.b * d, sys.params);

    const auto qs = sys.oblique_roots(opts);
    if (qs.empty()) throw DetachmentError("no oblique state below the detachment angle");
    out.state_O_weak = make_state(qs.front() * t, out.inflow.constant, sys.params);
    out.state_O_strong = make_state((qs.size() > 1 ? qs[1] : qs.front()) * t, out.inflow.constant, sys.params);
    return out;
}

SonicCircle sonic_circle(const ConstantState& state) { return {state.velocity, state.sound_speed}; }

}  // namespace shockfit
