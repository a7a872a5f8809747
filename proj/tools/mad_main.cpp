#include "mad/cli.hpp"

#include <CLI11.hpp>

#include <string>
#include <vector>

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent debate orchestration engine and experiment harness"};
    app.require_subcommand(1);

    std::string config_path;
    std::string run_dir;
    std::string reference_report;
    std::vector<std::string> methods;
    std::vector<std::string> variants;
    std::vector<double> thresholds;
    mad::cli::CliOverrides overrides;
    std::string backend_kind;
    std::string out_dir;
    std::uint64_t seed = 0;
    int parallelism = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
        cmd->add_option("--backend", backend_kind, "Backend override: simulated|replay|http");
        cmd->add_option("--seed", seed, "Seed override");
        cmd->add_option("--parallelism", parallelism, "Question-level parallelism");
        cmd->add_option("--out", out_dir, "Output directory override");
    };

    CLI::App* run = app.add_subcommand("run", "Run methods over a dataset and write traces + reports");
    add_common(run);
    run->add_option("--methods", methods, "Methods to run (comma-separated)")
        ->delimiter(',');

    CLI::App* replay = app.add_subcommand("replay", "Re-verify a run directory from its traces");
    replay->add_option("dir", run_dir, "Run output directory")->required();

    CLI::App* tune = app.add_subcommand("tune-sid", "Tune the SID-ET skip rate against a reference report");
    add_common(tune);
    tune->add_option("--reference", reference_report, "Reference report CSV (must contain svr_mad rows)")
        ->required();

    CLI::App* sweep = app.add_subcommand("sweep", "Acceptance-threshold sweep over posterior-signal variants");
    add_common(sweep);
    sweep->add_option("--variants", variants, "Variants: svr,min_ll,ppl,conf")->delimiter(',');
    sweep->add_option("--thresholds", thresholds, "Oriented thresholds")->delimiter(',');

    CLI11_PARSE(app, argc, argv);

    if (!methods.empty()) overrides.methods = methods;
    if (!backend_kind.empty()) overrides.backend_kind = backend_kind;
    if (run->count("--seed") || tune->count("--seed") || sweep->count("--seed")) {
        overrides.seed = seed;
    }
    if (parallelism > 0) overrides.parallelism = parallelism;
    if (!out_dir.empty()) overrides.out_dir = out_dir;

    if (run->parsed()) return mad::cli::cmd_run(config_path, overrides);
    if (replay->parsed()) return mad::cli::cmd_replay(run_dir);
    if (tune->parsed()) return mad::cli::cmd_tune_sid(config_path, reference_report, overrides);
    if (sweep->parsed()) return mad::cli::cmd_sweep(config_path, variants, thresholds, overrides);
    return mad::cli::kExitConfigError;
}
