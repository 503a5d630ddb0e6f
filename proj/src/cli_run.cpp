#include "shockfit/cli.hpp"
#include "shockfit/errors.hpp"

#include <nlohmann/json.hpp>
#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace shockfit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string case_key(Problem problem, double theta_w) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_theta_%.10f", problem == Problem::RegularReflection ? "rr" : "pm", theta_w);
    return buf;
}

const std::vector<std::string>& hard_audits() {
    static const std::vector<std::string> names = {"A1", "A3", "A5", "convexity", "monotonicity", "equivalence"};
    return names;
}

int exit_code(const std::vector<CaseResult>& cases) {
    bool any_converged = false;
    for (const CaseResult& c : cases) {
        if (!c.converged) continue;
        any_converged = true;
        if (!c.hard_pass()) return 1;
    }
    return any_converged ? 0 : 1;
}

namespace {

json vec_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

// NaN and infinities have no JSON literal; they become null.
json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json trace_json(const std::vector<TraceEntry>& trace) {
    json out = json::array();
    for (const TraceEntry& t : trace)
        out.push_back({{"outer", t.outer},
                       {"inner_iterations", t.inner_iterations},
                       {"pde", num(t.pde)},
                       {"rh_mass", num(t.rh_mass)},
                       {"displacement", num(t.displacement)},
                       {"omega", num(t.omega)},
                       {"accepted", t.accepted},
                       {"level_nodes", t.level_nodes},
                       {"theta_w", num(t.theta)},
                       {"note", t.note}});
    return out;
}

Vec2 declared_direction(const Solution& s, const std::string& which) {
    const Cone cone = shock_cone(s);
    if (which == "wedge_normal") return s.config.wedge_normal;
    if (which == "cone_a") return cone.tau_A;
    if (which == "cone_b") return cone.tau_B;
    return cone.bisector();
}

void write_shock_csv(const fs::path& path, const Solution& s, const Vec2& e) {
    const ShockFrame fr = solver_frame(s);
    std::ofstream os(path);
    os << "T,f,fp,fpp,phi_nu,phi_e\n";
    for (int j = 0; j < fr.size(); ++j) {
        const double phi_e = gradient(s.field, fr.nodes[j]).dot(e);
        os << format_number(fr.T[j]) << ',' << format_number(fr.f[j]) << ',' << format_number(fr.fp[j]) << ','
           << format_number(fr.fpp[j]) << ',' << format_number(fr.phi_nu[j]) << ',' << format_number(phi_e) << '\n';
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream os(path);
    os << j.dump(2) << '\n';
}

CaseResult run_case(const CaseConfig& c, double theta, const fs::path& root) {
    CaseResult r;
    r.key = case_key(c.problem, theta);
    r.theta_w = theta;
    const fs::path dir = root / r.key;
    fs::create_directories(dir);
    for (const char* stale : {"field.csv", "shock.csv", "report.json"}) fs::remove(dir / stale);

    json rep;
    rep["key"] = r.key;
    rep["problem"] = to_string(c.problem);
    rep["theta_w"] = theta;
    rep["gas"] = {{"gamma", c.gas.gamma}, {"rho0", c.gas.rho0}};
    rep["upstream"] = c.problem == Problem::RegularReflection
                          ? json{{"rho1", c.upstream.rho1}}
                          : json{{"rho_inf", c.upstream.rho_inf}, {"u_inf", c.upstream.u_inf}};
    rep["grid"] = {{"nT", c.grid.nT}, {"nS", c.grid.nS}};
    rep["frozen_defaults"] = c.frozen;
    rep["converged"] = false;
    rep["error"] = nullptr;

    auto finish = [&](const std::string& err) {
        r.error = err;
        if (!err.empty()) rep["error"] = err;
        write_json(dir / "report.json", rep);
        return r;
    };

    Configuration cfg;
    try {
        cfg = build_configuration(c.problem, c.gas, c.upstream, theta);
    } catch (const std::exception& e) {
        return finish(std::string("configuration: ") + e.what());
    }
    r.regime = to_string(cfg.regime);
    rep["regime"] = r.regime;

    Solution s;
    try {
        s = solve(cfg, c.grid, c.solver);
    } catch (const SolveError& e) {
        rep["trace"] = trace_json(e.trace);
        return finish(std::string("solve: ") + e.what());
    } catch (const std::exception& e) {
        return finish(std::string("solve: ") + e.what());
    }
    r.converged = s.converged;
    r.iterations = s.iterations;
    rep["converged"] = s.converged;
    rep["iterations"] = s.iterations;
    rep["final_residuals"] = {{"pde", num(s.final_residuals.pde_inf_norm)},
                              {"rh_mass", num(s.final_residuals.rh_mass_inf_norm)},
                              {"rh_potential", num(s.final_residuals.rh_potential_inf_norm)}};
    rep["trace"] = trace_json(s.trace);

    {
        std::ofstream os(dir / "field.csv");
        write_field_csv(os, s.field, cfg.e, cfg.e_perp);
    }
    try {
        const Vec2 e = declared_direction(s, c.shock_direction);
        rep["shock_direction"] = {{"name", c.shock_direction}, {"e", vec_json(e)}};
        write_shock_csv(dir / "shock.csv", s, e);

        const VerificationReport audit = condition_audit(s, c.verifier);
        const ConvexityReport conv = convexity_report(s, c.verifier);
        const MonotonicityReport mono = monotonicity_report(s, c.verifier.n_dirs);
        r.min_neg_fpp = conv.min_neg_fpp;
        r.convexity = conv.verdict;
        r.monotonicity = mono.pass ? "pass" : "fail";
        r.min_phi_e = std::numeric_limits<double>::infinity();
        for (const DirectionRecord& d : mono.directions) r.min_phi_e = std::min(r.min_phi_e, d.min_shock);
        for (const std::string& h : hard_audits())
            if (!audit.passed(h)) r.failed_hard.push_back(h);

        json degenerate = json::array();
        for (const DegeneratePoint& p : conv.degenerate) degenerate.push_back({{"T", p.T}, {"order", p.order}});
        rep["convexity"] = {{"verdict", conv.verdict},
                            {"min_neg_fpp", num(conv.min_neg_fpp)},
                            {"tol_conv", num(conv.tol_conv)},
                            {"kappa_min", num(conv.kappa_min)},
                            {"sign_agreement", num(conv.sign_agreement)},
                            {"degenerate", degenerate}};
        json dirs = json::array();
        for (const DirectionRecord& d : mono.directions)
            dirs.push_back({{"e", vec_json(d.e)},
                            {"interior", d.interior},
                            {"min_shock", num(d.min_shock)},
                            {"min_domain", num(d.min_domain)},
                            {"pass", d.pass}});
        rep["monotonicity"] = {{"pass", mono.pass}, {"domain_pass", mono.domain_pass}, {"directions", dirs}};
        rep["conditions"] = audit.to_json();
        rep["hard_audits"] = {{"names", hard_audits()}, {"pass", r.failed_hard.empty()}};
    } catch (const std::exception& e) {
        return finish(std::string("verify: ") + e.what());
    }
    return finish("");
}

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += "\"\"";
        else out += ch == '\n' ? ' ' : ch;
    }
    return out + "\"";
}

std::string log_line(const CaseResult& r, size_t i, size_t n) {
    std::ostringstream os;
    os << '[' << i + 1 << '/' << n << "] " << r.key << ": ";
    if (!r.converged) os << "not converged (" << r.error << ')';
    else if (!r.error.empty()) os << r.error;
    else {
        os << r.convexity << ", monotonicity " << r.monotonicity;
        if (!r.failed_hard.empty()) {
            os << ", failed";
            for (const auto& h : r.failed_hard) os << ' ' << h;
        }
    }
    return os.str();
}

}  // namespace

std::vector<CaseResult> run(const CaseConfig& config, int threads, std::ostream& log) {
    const size_t n = config.theta_w.size();
    std::vector<CaseResult> results(n);
    std::vector<char> done(n, 0);
    std::atomic<size_t> next{0};
    std::mutex mu;
    size_t printed = 0;
    threads = std::max(1, std::min<int>(threads, static_cast<int>(n)));
    const int inner = std::max(1, omp_get_max_threads() / threads);
    fs::create_directories(config.output_dir);

    auto worker = [&] {
        omp_set_num_threads(inner);
        for (size_t i; (i = next.fetch_add(1)) < n;) {
            CaseResult r = run_case(config, config.theta_w[i], config.output_dir);
            std::lock_guard<std::mutex> lock(mu);
            results[i] = std::move(r);
            done[i] = 1;
            while (printed < n && done[printed]) {
                log << log_line(results[printed], printed, n) << '\n';
                ++printed;
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    std::ofstream os(config.output_dir / "summary.csv");
    write_summary_csv(os, results);
    return results;
}

void write_summary_csv(std::ostream& os, const std::vector<CaseResult>& cases) {
    os << "key,theta_w,regime,converged,iterations,min_neg_fpp,min_phi_e,convexity,monotonicity,hard_audits,error\n";
    for (const CaseResult& c : cases) {
        std::string hard = "n/a";
        if (c.converged && c.error.empty()) {
            hard = c.failed_hard.empty() ? "pass" : "fail:";
            for (size_t i = 0; i < c.failed_hard.size(); ++i) hard += (i ? ";" : "") + c.failed_hard[i];
        }
        const bool audited = c.converged && c.error.empty();
        os << c.key << ',' << format_number(c.theta_w) << ',' << c.regime << ',' << (c.converged ? 1 : 0) << ','
           << c.iterations << ',' << (audited ? format_number(c.min_neg_fpp) : "") << ','
           << (audited ? format_number(c.min_phi_e) : "") << ',' << c.convexity << ',' << c.monotonicity << ','
           << hard << ',' << csv_quote(c.error) << '\n';
    }
}

// ---------------------------------------------------------------------------
// compare

namespace {

std::vector<std::string> summary_keys(const fs::path& run) {
    std::ifstream in(run / "summary.csv");
    if (!in) throw KeyMismatchError("no summary.csv in " + run.string());
    std::vector<std::string> keys;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line))
        if (!line.empty()) keys.push_back(line.substr(0, line.find(',')));
    return keys;
}

json read_report(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw KeyMismatchError("missing " + path.string());
    return json::parse(in);
}

// (T, f) columns of a shock CSV; empty if the case has none.
std::pair<std::vector<double>, std::vector<double>> read_shock(const fs::path& path) {
    std::pair<std::vector<double>, std::vector<double>> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const size_t c1 = line.find(','), c2 = line.find(',', c1 + 1);
        out.first.push_back(std::stod(line.substr(0, c1)));
        out.second.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
    }
    return out;
}

double interpolate(const std::vector<double>& T, const std::vector<double>& f, double t) {
    const bool rising = T.back() >= T.front();
    auto it = rising ? std::lower_bound(T.begin(), T.end(), t)
                     : std::lower_bound(T.begin(), T.end(), t, std::greater<double>());
    if (it == T.begin()) return f.front();
    if (it == T.end()) return f.back();
    const size_t k = static_cast<size_t>(it - T.begin());
    if (T[k] == t) return f[k];
    const double w = (t - T[k - 1]) / (T[k] - T[k - 1]);
    return (1.0 - w) * f[k - 1] + w * f[k];
}

std::map<std::string, std::string> statuses(const json& rep) {
    std::map<std::string, std::string> out;
    if (rep.contains("conditions"))
        for (const auto& c : rep["conditions"]) out[c["condition"].get<std::string>()] = c["status"].get<std::string>();
    return out;
}

}  // namespace

std::vector<CaseDiff> compare(const fs::path& run_a, const fs::path& run_b) {
    const std::vector<std::string> ka = summary_keys(run_a), kb = summary_keys(run_b);
    if (ka != kb) {
        std::set<std::string> sa(ka.begin(), ka.end()), sb(kb.begin(), kb.end());
        std::string msg = "case keys differ:";
        for (const auto& k : sa)
            if (!sb.count(k)) msg += " only in A: " + k + ";";
        for (const auto& k : sb)
            if (!sa.count(k)) msg += " only in B: " + k + ";";
        if (sa == sb) msg += " same keys in a different order";
        throw KeyMismatchError(msg);
    }

    std::vector<CaseDiff> diffs;
    for (const std::string& key : ka) {
        CaseDiff d;
        d.key = key;
        const json ra = read_report(run_a / key / "report.json");
        const json rb = read_report(run_b / key / "report.json");
        d.theta_w = ra.value("theta_w", 0.0);
        if (ra.value("converged", false) != rb.value("converged", false)) d.flips.push_back("converged");
        const std::string va = ra.contains("convexity") ? ra["convexity"].value("verdict", "") : "";
        const std::string vb = rb.contains("convexity") ? rb["convexity"].value("verdict", "") : "";
        if (va != vb) d.flips.push_back("convexity");
        const auto sa = statuses(ra), sb = statuses(rb);
        for (const std::string& name : audit_conditions()) {
            auto ia = sa.find(name), ib = sb.find(name);
            const std::string a = ia == sa.end() ? "" : ia->second, b = ib == sb.end() ? "" : ib->second;
            if (a != b) d.flips.push_back(name);
        }

        auto sha = read_shock(run_a / key / "shock.csv");
        auto shb = read_shock(run_b / key / "shock.csv");
        if (!sha.first.empty() && !shb.first.empty()) {
            // sample the finer shock at the coarser nodes
            if (sha.first.size() > shb.first.size()) std::swap(sha, shb);
            for (size_t j = 0; j < sha.first.size(); ++j)
                d.max_shock_diff = std::max(
                    d.max_shock_diff, std::abs(sha.second[j] - interpolate(shb.first, shb.second, sha.first[j])));
            d.nodes = static_cast<int>(sha.first.size());
        }
        diffs.push_back(std::move(d));
    }
    return diffs;
}

void write_compare_csv(std::ostream& os, const std::vector<CaseDiff>& diffs) {
    os << "key,theta_w,nodes,max_shock_diff,flips\n";
    for (const CaseDiff& d : diffs) {
        os << d.key << ',' << format_number(d.theta_w) << ',' << d.nodes << ',' << format_number(d.max_shock_diff)
           << ',';
        for (size_t i = 0; i < d.flips.size(); ++i) os << (i ? ";" : "") << d.flips[i];
        os << '\n';
    }
}

}  // namespace shockfit::cli
