#pragma once

#include "shockfit/verifier.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace shockfit::cli {

// One configuration file; every theta_w value becomes one case. The schema is
// documented in docs/config.md.
struct CaseConfig {
    Problem problem = Problem::RegularReflection;
    GasParams gas;
    UpstreamSpec upstream;
    std::vector<double> theta_w;  // sweep expanded, in order
    GridOptions grid;
    SolverOptions solver;
    VerifierOptions verifier;
    // Direction used for phi_e in the shock CSV: "bisector", "wedge_normal",
    // "cone_a" or "cone_b".
    std::string shock_direction = "bisector";
    std::filesystem::path output_dir;
    bool frozen = false;  // solver and verifier options locked at their defaults
};

// Throws ConfigError naming the offending field and its line.
CaseConfig parse_config(const std::string& text, bool seed_frozen = false);
CaseConfig load_config(const std::filesystem::path& path, bool seed_frozen = false);

// Directory name of a case inside the output directory.
std::string case_key(Problem problem, double theta_w);

// Audits whose failure on a converged case makes the run fail.
const std::vector<std::string>& hard_audits();

struct CaseResult {
    std::string key;
    double theta_w = 0.0;
    std::string regime;
    bool converged = false;
    int iterations = 0;
    std::string error;  // empty when solve and audit both completed
    double min_neg_fpp = 0.0;
    double min_phi_e = 0.0;  // over the sampled cone directions and interior shock nodes
    std::string convexity;
    std::string monotonicity;  // "pass" or "fail"
    std::vector<std::string> failed_hard;
    bool hard_pass() const { return converged && error.empty() && failed_hard.empty(); }
};

// Exit code: 0 on success, 1 if a hard audit failed on a converged case or no
// case converged.
int exit_code(const std::vector<CaseResult>& cases);

// Runs the cases on `threads` workers and writes the artifacts; the summary and
// the log lines come out in configuration order.
std::vector<CaseResult> run(const CaseConfig& config, int threads, std::ostream& log);

void write_summary_csv(std::ostream& os, const std::vector<CaseResult>& cases);

struct CaseDiff {
    std::string key;
    double theta_w = 0.0;
    int nodes = 0;                 // shock nodes compared (0 if either case has no shock)
    double max_shock_diff = 0.0;   // along the shock-frame normal direction e
    std::vector<std::string> flips;  // "converged", "convexity" or a condition name
};

// Throws KeyMismatchError unless both runs hold the same case keys.
std::vector<CaseDiff> compare(const std::filesystem::path& run_a, const std::filesystem::path& run_b);
void write_compare_csv(std::ostream& os, const std::vector<CaseDiff>& diffs);

// Fixed 17-significant-digit formatting used by every artifact.
std::string format_number(double x);

}  // namespace shockfit::cli
