#pragma once

#include "nhop_cli/config.hpp"

#include <iosfwd>
#include <string>

namespace nhop::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitIncomplete = 3,
  kExitVerifyFailed = 4,
};

enum class Baseline { kNone, kSimple, kValueIteration };

struct CommandOptions {
  std::string out_dir;         ///< overrides NHOP_EQL_OUT and the config
  unsigned threads = 0;        ///< 0: NHOP_EQL_THREADS, then the config
  Baseline baseline = Baseline::kNone;
  bool plots = false;
  std::string estimation_out;  ///< train: also write the estimated models here
  std::ostream* messages = nullptr;  ///< progress and warnings; stderr when null
};

/// Writes model_seed<k>.txt and estimation-error CSVs. Returns an ExitCode.
int cmd_estimate(const ExperimentConfig& cfg, const CommandOptions& options);
/// Writes metrics, error traces, policies and a summary per seed.
int cmd_train(const ExperimentConfig& cfg, const CommandOptions& options);
/// Writes report.csv; kExitVerifyFailed iff an asserted check fails.
int cmd_verify(const ExperimentConfig& cfg, const CommandOptions& options);

/// Parses the config and dispatches; config errors become kExitConfig.
int run_command(const std::string& command, const std::string& config_path, const CommandOptions& options);

std::string resolve_out_dir(const ExperimentConfig& cfg, const CommandOptions& options);
unsigned resolve_threads(const ExperimentConfig& cfg, const CommandOptions& options);

/// Writes to a temporary sibling and renames it over path.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace nhop::cli
