#pragma once

#include <string>
#include <vector>

#include "hdtreat/config.hpp"
#include "hdtreat/harness.hpp"

namespace hdtreat {

// Subcommand bodies; they throw (invalid_input / numeric_error /
// internal_error) and run_cli maps those onto exit codes 2 / 3 / 4.
void cmd_dgp(const RunConfig& cfg, const std::string& out_dir);
void cmd_estimate(const RunConfig& cfg, const std::string& dataset_path,
                  const std::string& out_dir);
void cmd_experiment(const RunConfig& cfg, const std::string& out_dir, int threads);
void cmd_cv(const RunConfig& cfg, const std::string& dataset_path, const std::string& out_dir);

ExperimentSpec experiment_spec_from_config(const RunConfig& cfg);

// Full command-line entry: subcommands dgp | estimate | experiment | cv with
// global flags --config PATH, --set K=V (repeatable), --seed N, --threads N,
// --out DIR. Returns the process exit code.
int run_cli(const std::vector<std::string>& args);

}  // namespace hdtreat
