#pragma once

#include "mad/core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mad::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 1;
inline constexpr int kExitBackendError = 2;
inline constexpr int kExitDatasetError = 3;
inline constexpr int kExitReplayMismatch = 4;

struct CliConfig {
    ExperimentConfig experiment;
    std::string dataset_path;
    int synthetic_questions = 0;  // generate a simulator dataset instead of loading
    std::vector<std::string> methods;
    std::string out_dir = "out";
    int parallelism = 1;
    std::optional<double> sid_threshold;
    int sid_skip_rate = 50;
    std::vector<std::string> sweep_variants;
    std::vector<double> sweep_thresholds;
};

// Parses the declarative JSON config; unknown fields are rejected.
CliConfig load_cli_config(const std::string& path);

struct CliOverrides {
    std::optional<std::vector<std::string>> methods;
    std::optional<std::string> backend_kind;  // simulated | replay | http
    std::optional<std::uint64_t> seed;
    std::optional<int> parallelism;
    std::optional<std::string> out_dir;
};

CliConfig apply_overrides(CliConfig config, const CliOverrides& overrides);

int cmd_run(const std::string& config_path, const CliOverrides& overrides);

// Recomputes final answers and metrics from persisted traces (no backend) and
// checks them against the stored report.
int cmd_replay(const std::string& run_dir);

int cmd_tune_sid(const std::string& config_path, const std::string& reference_report,
                 const CliOverrides& overrides);

int cmd_sweep(const std::string& config_path, const std::vector<std::string>& variants,
              const std::vector<double>& thresholds, const CliOverrides& overrides);

}  // namespace mad::cli
