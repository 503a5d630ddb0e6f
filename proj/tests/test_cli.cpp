#include "shockfit/cli.hpp"
#include "shockfit/errors.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace shockfit;
namespace fs = std::filesystem;

namespace {

const char* kBase = R"(problem: regular_reflection
gas: {gamma: 2.0, rho0: 1.0}
upstream: {rho1: 2.0}
)";

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("shockfit_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

std::vector<cli::CaseResult> run_near_normal(int n, const fs::path& out) {
    cli::CaseConfig c = cli::parse_config(std::string(kBase) + "theta_w: 1.5207963267948966\ngrid: {nT: " +
                                          std::to_string(n) + ", nS: " + std::to_string(n) + "}\n");
    c.output_dir = out;
    std::ostringstream log;
    return cli::run(c, 1, log);
}

std::string config_error(const std::string& text, bool frozen = false) {
    try {
        cli::parse_config(text, frozen);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, ParsesSweepInOrder) {
    const cli::CaseConfig c = cli::parse_config(std::string(kBase) +
                                                "theta_w: {from: 1.1, to: 1.5, count: 8}\n"
                                                "grid: {nT: 33, nS: 17}\n"
                                                "solver: {max_outer: 40, sonic_coupling: extrapolation}\n"
                                                "verifier: {n_dirs: 9}\n"
                                                "shock_direction: wedge_normal\n"
                                                "output: out/dir\n");
    ASSERT_EQ(c.theta_w.size(), 8u);
    EXPECT_EQ(c.theta_w.front(), 1.1);
    EXPECT_EQ(c.theta_w.back(), 1.5);
    for (size_t i = 1; i < c.theta_w.size(); ++i) EXPECT_GT(c.theta_w[i], c.theta_w[i - 1]);
    EXPECT_EQ(c.grid.nT, 33);
    EXPECT_EQ(c.grid.nS, 17);
    EXPECT_EQ(c.solver.max_outer, 40);
    EXPECT_EQ(c.solver.sonic, SonicCoupling::Extrapolation);
    EXPECT_EQ(c.verifier.n_dirs, 9);
    EXPECT_EQ(c.shock_direction, "wedge_normal");
    EXPECT_EQ(c.output_dir, fs::path("out/dir"));
}

TEST(Config, PrandtlMeyerUpstream) {
    const cli::CaseConfig c = cli::parse_config(
        "problem: prandtl_meyer\ngas: {gamma: 1.4}\nupstream: {rho_inf: 1.0, u_inf: 2.5}\ntheta_w: 0.5\n");
    EXPECT_EQ(c.problem, Problem::PrandtlMeyer);
    EXPECT_EQ(c.upstream.u_inf, 2.5);
    EXPECT_EQ(c.gas.rho0, 1.0);
}

TEST(Config, ThetaBelowDetachmentNamesTheInterval) {
    const std::string msg = config_error(std::string(kBase) + "theta_w: 0.5\n");
    EXPECT_NE(msg.find("admissible interval"), std::string::npos) << msg;
    const auto range = admissible_theta_range(Problem::RegularReflection, GasParams{2.0, 1.0}, UpstreamSpec{2.0, 0, 0});
    char lo[32];
    std::snprintf(lo, sizeof lo, "%.10g", range.first);
    EXPECT_NE(msg.find(lo), std::string::npos) << msg;
    EXPECT_NE(config_error(std::string(kBase) + "theta_w: {from: 1.2, to: 1.6, count: 3}\n"), "");
}

TEST(Config, SchemaViolationsReportFieldAndLine) {
    std::string msg = config_error(std::string(kBase) + "theta_w: 1.3\ngrid: {nT: 33, nQ: 3}\n");
    EXPECT_NE(msg.find("grid.nQ"), std::string::npos) << msg;
    EXPECT_NE(msg.find("line 5"), std::string::npos) << msg;

    msg = config_error(std::string(kBase) + "theta_w: steep\n");
    EXPECT_NE(msg.find("'theta_w'"), std::string::npos) << msg;

    msg = config_error("problem: mach_reflection\n");
    EXPECT_NE(msg.find("problem"), std::string::npos) << msg;

    msg = config_error("problem: regular_reflection\ngas: {gamma: 2.0}\nupstream: {rho1: 0.5}\ntheta_w: 1.3\n");
    EXPECT_NE(msg.find("upstream.rho1"), std::string::npos) << msg;

    EXPECT_NE(config_error(std::string(kBase) + "theta_w: 1.3\ngrid: {nT: 4, nS: 4}\n"), "");
    EXPECT_NE(config_error(std::string(kBase)), "");
}

TEST(Config, FrozenDefaultsRejectOverrides) {
    const std::string text = std::string(kBase) + "theta_w: 1.3\nsolver: {max_outer: 3}\n";
    EXPECT_EQ(config_error(text), "");
    EXPECT_NE(config_error(text, true).find("seed-frozen"), std::string::npos);
    EXPECT_TRUE(cli::parse_config(std::string(kBase) + "theta_w: 1.3\n", true).frozen);
}

TEST(Run, ExitPolicy) {
    cli::CaseResult ok;
    ok.converged = true;
    cli::CaseResult stalled;
    cli::CaseResult bad = ok;
    bad.failed_hard = {"A1"};
    EXPECT_EQ(cli::exit_code({ok, stalled}), 0);
    EXPECT_EQ(cli::exit_code({stalled, stalled}), 1);
    EXPECT_EQ(cli::exit_code({ok, bad}), 1);
    EXPECT_EQ(cli::exit_code({}), 1);
}

TEST(Run, SingleCaseWritesThreeArtifacts) {
    const fs::path out = scratch("single");
    const auto results = run_near_normal(65, out);
    ASSERT_EQ(results.size(), 1u);
    EXPECT_EQ(cli::exit_code(results), 0);
    const fs::path dir = out / results[0].key;
    for (const char* f : {"field.csv", "shock.csv", "report.json"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_EQ(lines(out / "summary.csv").size(), 2u);
    EXPECT_EQ(lines(dir / "shock.csv").front(), "T,f,fp,fpp,phi_nu,phi_e");
    EXPECT_EQ(lines(dir / "shock.csv").size(), 66u);
    EXPECT_EQ(lines(dir / "field.csv").size(), 65u * 65u + 1u);
    const std::string rep = slurp(dir / "report.json");
    for (const char* k : {"\"conditions\"", "\"trace\"", "\"final_residuals\"", "\"hard_audits\""})
        EXPECT_NE(rep.find(k), std::string::npos) << k;
}

TEST(Run, SweepKeepsEveryCaseInOrder) {
    const fs::path out = scratch("sweep");
    cli::CaseConfig c = cli::parse_config(std::string(kBase) +
                                          "theta_w: {from: 1.40, to: 1.54, count: 8}\ngrid: {nT: 17, nS: 17}\n");
    c.output_dir = out;
    std::ostringstream log;
    const auto results = cli::run(c, 3, log);
    const auto rows = lines(out / "summary.csv");
    ASSERT_EQ(rows.size(), 9u);
    for (size_t i = 0; i < 8; ++i) {
        EXPECT_EQ(rows[i + 1].substr(0, rows[i + 1].find(',')), cli::case_key(c.problem, c.theta_w[i]));
        EXPECT_EQ(results[i].theta_w, c.theta_w[i]);
    }
    // log lines come out in configuration order whatever the completion order
    std::istringstream in(log.str());
    std::string line;
    for (int i = 1; std::getline(in, line); ++i) EXPECT_EQ(line.rfind("[" + std::to_string(i) + "/8]", 0), 0u) << line;
}

TEST(Run, IdenticalRunsAreByteIdenticalAndCompareClean) {
    const fs::path a = scratch("det_a"), b = scratch("det_b");
    const auto ra = run_near_normal(33, a);
    run_near_normal(33, b);
    for (const char* f : {"field.csv", "shock.csv", "report.json"})
        EXPECT_EQ(slurp(a / ra[0].key / f), slurp(b / ra[0].key / f)) << f;
    EXPECT_EQ(slurp(a / "summary.csv"), slurp(b / "summary.csv"));
    const auto diffs = cli::compare(a, b);
    ASSERT_EQ(diffs.size(), 1u);
    EXPECT_EQ(diffs[0].max_shock_diff, 0.0);
    EXPECT_GT(diffs[0].nodes, 0);
    EXPECT_TRUE(diffs[0].flips.empty());
}

TEST(Compare, ListsVerdictFlips) {
    const fs::path a = scratch("flip_a"), b = scratch("flip_b");
    const auto ra = run_near_normal(33, a);
    fs::copy(a, b, fs::copy_options::recursive);
    const fs::path rep = b / ra[0].key / "report.json";
    std::string text = slurp(rep);
    const std::string from = "\"condition\": \"A8\"";
    const size_t at = text.find(from);
    ASSERT_NE(at, std::string::npos);
    const size_t status = text.find("\"status\": \"pass\"", at);
    text.replace(status, 16, "\"status\": \"fail\"");
    std::ofstream(rep) << text;
    const auto diffs = cli::compare(a, b);
    ASSERT_EQ(diffs[0].flips.size(), 1u);
    EXPECT_EQ(diffs[0].flips[0], "A8");
}

TEST(Compare, MismatchedKeysAreRejected) {
    const fs::path a = scratch("key_a"), b = scratch("key_b");
    run_near_normal(17, a);
    cli::CaseConfig c = cli::parse_config(std::string(kBase) + "theta_w: 1.5\ngrid: {nT: 17, nS: 17}\n");
    c.output_dir = b;
    std::ostringstream log;
    cli::run(c, 1, log);
    EXPECT_THROW(cli::compare(a, b), KeyMismatchError);
}

TEST(Compare, ShockDifferencesShrinkUnderRefinement) {
    const fs::path g33 = scratch("ref33"), g65 = scratch("ref65"), g129 = scratch("ref129");
    run_near_normal(33, g33);
    run_near_normal(65, g65);
    run_near_normal(129, g129);
    const double coarse = cli::compare(g33, g65)[0].max_shock_diff;
    const double fine = cli::compare(g65, g129)[0].max_shock_diff;
    EXPECT_EQ(cli::compare(g33, g65)[0].nodes, 33);
    // first order at least
    EXPECT_GE(coarse / fine, 2.0) << coarse << " " << fine;
}

TEST(Format, SeventeenDigitsRoundTrip) {
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 1.5207963267948966}) EXPECT_EQ(std::stod(cli::format_number(x)), x);
    EXPECT_EQ(cli::format_number(std::nan("")), "nan");
}
