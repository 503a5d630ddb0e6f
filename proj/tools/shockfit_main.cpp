// Command-line front end: `run <config>` and `compare <dirA> <dirB>`.
#include "shockfit/cli.hpp"
#include "shockfit/errors.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <thread>

namespace fs = std::filesystem;
using namespace shockfit;

int main(int argc, char** argv) {
    CLI::App app{"Shock-fitting solver and convexity auditor for self-similar transonic shocks"};
    app.require_subcommand(1);
    app.fallthrough();  // global options may follow the subcommand

    int threads = 1;
    std::string out;
    bool frozen = false;
    app.add_option("--threads", threads, "Cases run concurrently")->check(CLI::PositiveNumber);
    app.add_option("--out", out, "Output directory (overrides the config)");
    app.add_flag("--seed-frozen", frozen, "Lock solver and verifier options at their defaults");

    std::string config_path;
    CLI::App* run = app.add_subcommand("run", "Solve and audit every case of a configuration");
    run->add_option("config", config_path, "YAML case configuration")->required();

    std::string dir_a, dir_b;
    CLI::App* cmp = app.add_subcommand("compare", "Per-case differences between two run directories");
    cmp->add_option("dirA", dir_a)->required();
    cmp->add_option("dirB", dir_b)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            cli::CaseConfig cfg = cli::load_config(config_path, frozen);
            if (!out.empty()) cfg.output_dir = out;
            if (cfg.output_dir.empty()) throw ConfigError("no output directory: set 'output' or pass --out");
            const auto results = cli::run(cfg, threads, std::cerr);
            cli::write_summary_csv(std::cout, results);
            return cli::exit_code(results);
        }
        const auto diffs = cli::compare(dir_a, dir_b);
        cli::write_compare_csv(std::cout, diffs);
        if (!out.empty()) {
            fs::create_directories(out);
            std::ofstream os(fs::path(out) / "compare.csv");
            cli::write_compare_csv(os, diffs);
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
    } catch (const KeyMismatchError& e) {
        std::cerr << "key mismatch: " << e.what() << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
    }
    return 2;
}
