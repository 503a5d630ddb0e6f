#include "shockfit/cli.hpp"
#include "shockfit/errors.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace shockfit::cli {

namespace {

std::string where(const YAML::Node& n, const std::string& field) {
    const YAML::Mark m = n.Mark();
    if (m.is_null()) return "'" + field + "'";
    return "'" + field + "' (line " + std::to_string(m.line + 1) + ")";
}

[[noreturn]] void fail(const YAML::Node& n, const std::string& field, const std::string& msg) {
    throw ConfigError(where(n, field) + ": " + msg);
}

void require_map(const YAML::Node& n, const std::string& field) {
    if (!n.IsMap()) fail(n, field, "expected a table");
}

void allow_only(const YAML::Node& n, const std::string& field, const std::set<std::string>& keys) {
    require_map(n, field);
    for (const auto& kv : n) {
        const std::string k = kv.first.as<std::string>();
        if (!keys.count(k)) fail(kv.first, field.empty() ? k : field + "." + k, "unknown key");
    }
}

template <class T>
T read(const YAML::Node& n, const std::string& field) {
    try {
        return n.as<T>();
    } catch (const YAML::Exception&) {
        fail(n, field, "cannot read value '" + YAML::Dump(n) + "'");
    }
}

template <class T>
void maybe(const YAML::Node& parent, const std::string& key, const std::string& prefix, T& out) {
    if (const YAML::Node n = parent[key]) out = read<T>(n, prefix + "." + key);
}

Problem parse_problem(const YAML::Node& n) {
    const auto s = read<std::string>(n, "problem");
    if (s == "regular_reflection") return Problem::RegularReflection;
    if (s == "prandtl_meyer") return Problem::PrandtlMeyer;
    fail(n, "problem", "expected regular_reflection or prandtl_meyer, got '" + s + "'");
}

std::string interval_text(double lo, double hi) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "(%.10g, %.10g)", lo, hi);
    return buf;
}

void read_solver(const YAML::Node& n, SolverOptions& o) {
    allow_only(n, "solver",
               {"max_outer", "max_inner", "pde_tol", "rh_tol", "shock_tol", "slope_tol", "sonic_coupling",
                "shock_update", "grid_sequencing", "coarsest_nodes", "continuation", "continuation_steps"});
    maybe(n, "max_outer", "solver", o.max_outer);
    maybe(n, "max_inner", "solver", o.max_inner);
    maybe(n, "pde_tol", "solver", o.pde_tol);
    maybe(n, "rh_tol", "solver", o.rh_tol);
    maybe(n, "shock_tol", "solver", o.shock_tol);
    maybe(n, "slope_tol", "solver", o.slope_tol);
    maybe(n, "grid_sequencing", "solver", o.grid_sequencing);
    maybe(n, "coarsest_nodes", "solver", o.coarsest_nodes);
    maybe(n, "continuation", "solver", o.continuation);
    maybe(n, "continuation_steps", "solver", o.continuation_steps);
    if (const YAML::Node s = n["sonic_coupling"]) {
        const auto v = read<std::string>(s, "solver.sonic_coupling");
        if (v == "dirichlet") o.sonic = SonicCoupling::Dirichlet;
        else if (v == "extrapolation") o.sonic = SonicCoupling::Extrapolation;
        else fail(s, "solver.sonic_coupling", "expected dirichlet or extrapolation");
    }
    if (const YAML::Node s = n["shock_update"]) {
        const auto v = read<std::string>(s, "solver.shock_update");
        if (v == "reduced_newton") o.update = ShockUpdateMode::ReducedNewton;
        else if (v == "diagonal") o.update = ShockUpdateMode::Diagonal;
        else fail(s, "solver.shock_update", "expected reduced_newton or diagonal");
    }
    if (o.max_outer < 1 || o.max_inner < 1) fail(n, "solver", "iteration limits must be positive");
    if (!(o.pde_tol > 0.0 && o.rh_tol > 0.0 && o.shock_tol > 0.0)) fail(n, "solver", "tolerances must be positive");
}

void read_verifier(const YAML::Node& n, VerifierOptions& o) {
    allow_only(n, "verifier",
               {"n_dirs", "tol_conv_rel", "tol_conv_floor", "kappa_rel", "eps_margin", "max_probe_order",
                "sign_agreement", "chain_radius_cells", "constancy_rel"});
    maybe(n, "n_dirs", "verifier", o.n_dirs);
    maybe(n, "tol_conv_rel", "verifier", o.tol_conv_rel);
    maybe(n, "tol_conv_floor", "verifier", o.tol_conv_floor);
    maybe(n, "kappa_rel", "verifier", o.kappa_rel);
    maybe(n, "eps_margin", "verifier", o.eps_margin);
    maybe(n, "max_probe_order", "verifier", o.max_probe_order);
    maybe(n, "sign_agreement", "verifier", o.sign_agreement);
    maybe(n, "chain_radius_cells", "verifier", o.chain_radius_cells);
    maybe(n, "constancy_rel", "verifier", o.constancy_rel);
    if (o.n_dirs < 2) fail(n, "verifier.n_dirs", "need at least 2 directions");
    if (o.eps_margin < 1) fail(n, "verifier.eps_margin", "must be at least 1");
    if (!(o.chain_radius_cells > 0.0)) fail(n, "verifier.chain_radius_cells", "must be positive");
}

}  // namespace

CaseConfig parse_config(const std::string& text, bool seed_frozen) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError("line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    if (!root || root.IsNull()) throw ConfigError("empty configuration");
    allow_only(root, "", {"problem", "gas", "upstream", "theta_w", "grid", "solver", "verifier", "shock_direction",
                          "output"});

    CaseConfig c;
    c.frozen = seed_frozen;
    if (!root["problem"]) throw ConfigError("'problem' is required");
    c.problem = parse_problem(root["problem"]);

    if (!root["gas"]) throw ConfigError("'gas' is required");
    const YAML::Node gas = root["gas"];
    allow_only(gas, "gas", {"gamma", "rho0"});
    if (!gas["gamma"]) fail(gas, "gas.gamma", "required");
    c.gas.gamma = read<double>(gas["gamma"], "gas.gamma");
    maybe(gas, "rho0", "gas", c.gas.rho0);
    if (!(c.gas.gamma > 1.0)) fail(gas["gamma"], "gas.gamma", "must exceed 1");
    if (!(c.gas.rho0 > 0.0)) fail(gas, "gas.rho0", "must be positive");

    if (!root["upstream"]) throw ConfigError("'upstream' is required");
    const YAML::Node up = root["upstream"];
    if (c.problem == Problem::RegularReflection) {
        allow_only(up, "upstream", {"rho1"});
        if (!up["rho1"]) fail(up, "upstream.rho1", "required for regular_reflection");
        c.upstream.rho1 = read<double>(up["rho1"], "upstream.rho1");
        if (!(c.upstream.rho1 > c.gas.rho0)) fail(up["rho1"], "upstream.rho1", "must exceed gas.rho0");
    } else {
        allow_only(up, "upstream", {"rho_inf", "u_inf"});
        if (!up["rho_inf"] || !up["u_inf"]) fail(up, "upstream", "rho_inf and u_inf are required for prandtl_meyer");
        c.upstream.rho_inf = read<double>(up["rho_inf"], "upstream.rho_inf");
        c.upstream.u_inf = read<double>(up["u_inf"], "upstream.u_inf");
        if (!(c.upstream.rho_inf > 0.0 && c.upstream.u_inf > 0.0)) fail(up, "upstream", "rho_inf and u_inf must be positive");
    }

    std::pair<double, double> range;
    try {
        range = admissible_theta_range(c.problem, c.gas, c.upstream);
    } catch (const std::exception& e) {
        fail(up, "upstream", std::string("no admissible wedge angles: ") + e.what());
    }

    if (!root["theta_w"]) throw ConfigError("'theta_w' is required");
    const YAML::Node th = root["theta_w"];
    if (th.IsScalar()) {
        c.theta_w.push_back(read<double>(th, "theta_w"));
    } else {
        allow_only(th, "theta_w", {"from", "to", "count"});
        if (!th["from"] || !th["to"] || !th["count"]) fail(th, "theta_w", "a sweep needs from, to and count");
        const double from = read<double>(th["from"], "theta_w.from");
        const double to = read<double>(th["to"], "theta_w.to");
        const int count = read<int>(th["count"], "theta_w.count");
        if (count < 1) fail(th["count"], "theta_w.count", "must be at least 1");
        for (int i = 0; i < count; ++i) c.theta_w.push_back(count == 1 ? from : from + (to - from) * i / (count - 1));
    }
    for (double t : c.theta_w)
        if (!(t > range.first && t < range.second)) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "%.10g", t);
            fail(th, "theta_w", std::string("value ") + buf + " outside the admissible interval " +
                                    interval_text(range.first, range.second));
        }

    if (const YAML::Node g = root["grid"]) {
        allow_only(g, "grid", {"nT", "nS", "cluster_ratio"});
        maybe(g, "nT", "grid", c.grid.nT);
        maybe(g, "nS", "grid", c.grid.nS);
        maybe(g, "cluster_ratio", "grid", c.grid.cluster_ratio);
        if (c.grid.nT < 9 || c.grid.nS < 9) fail(g, "grid", "nT and nS must be at least 9");
        if (!(c.grid.cluster_ratio >= 1.0)) fail(g, "grid.cluster_ratio", "must be at least 1");
    }

    for (const char* section : {"solver", "verifier"})
        if (seed_frozen && root[section])
            fail(root[section], section, "--seed-frozen locks these options at their defaults; remove the section");
    if (const YAML::Node s = root["solver"]) read_solver(s, c.solver);
    if (const YAML::Node v = root["verifier"]) read_verifier(v, c.verifier);

    if (const YAML::Node d = root["shock_direction"]) {
        c.shock_direction = read<std::string>(d, "shock_direction");
        if (c.shock_direction != "bisector" && c.shock_direction != "wedge_normal" && c.shock_direction != "cone_a" &&
            c.shock_direction != "cone_b")
            fail(d, "shock_direction", "expected bisector, wedge_normal, cone_a or cone_b");
    }
    if (const YAML::Node o = root["output"]) c.output_dir = read<std::string>(o, "output");
    return c;
}

CaseConfig load_config(const std::filesystem::path& path, bool seed_frozen) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str(), seed_frozen);
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace shockfit::cli
