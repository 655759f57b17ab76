#pragma once

#include "nhop/environments.hpp"
#include "nhop/estimation.hpp"
#include "nhop/metrics.hpp"
#include "nhop/schedules.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace nhop::cli {

/// Bad or missing configuration. field() names the offending key.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class EnvFamily { kErdosRenyi, kCliffWalk, kSiso };

struct EnvironmentConfig {
  EnvFamily family = EnvFamily::kErdosRenyi;
  ErdosRenyiSpec er;
  CliffWalkSpec cliff = CliffWalkSpec::standard(4);
  SisoSpec siso;

  Index num_states() const;
  TabularEnvironment build() const;
};

enum class SizeBand { kSmall, kModest, kLarge };

SizeBand band_for(Index num_states);
const char* to_string(SizeBand band);

struct VerifyConfig {
  std::vector<std::string> checks = {"prop1", "prop3", "prop4", "variance_vs_k", "adc", "weights"};
  std::vector<unsigned> prop3_orders = {2, 3, 4, 5, 6, 7, 8, 9, 10};
  double prop4_gamma = 1.0 - 1e-5;
  std::vector<std::vector<unsigned>> prop4_chains = {{1, 2, 4, 8}, {3, 6, 12}};
  double prop4_rel_tol = 1e-6;
  std::vector<unsigned> variance_K = {2, 4, 6};
  std::size_t variance_iterations = 50'000;
  std::vector<std::size_t> adc_lags = {1, 2, 5, 10, 50};
  double late_fraction = 0.1;
  double weight_window_frac = 0.2;
  double weight_tol = 0.01;
};

struct ExperimentConfig {
  EnvironmentConfig environment;
  SamplingConfig sampling;
  ScheduleSet schedules;
  double gamma = 0.95;
  std::vector<std::uint64_t> seeds = {1};
  std::vector<ProbeCell> probes;
  std::string output_dir;
  std::size_t max_iterations = 2'000'000;
  std::size_t iterations = 0;  ///< fixed training budget; 0 uses the visit rule
  std::size_t log_every = 1;
  std::vector<std::size_t> milestones;  ///< estimation checkpoints; empty picks |S| * 2^k
  MatrixNorm estimation_norm = MatrixNorm::kFrobenius;
  unsigned threads = 1;
  VerifyConfig verify;

  SizeBand band = SizeBand::kModest;
  std::vector<std::string> warnings;  ///< out-of-band settings found while parsing
  std::string canonical;              ///< resolved config as canonical JSON
  std::string hash;                   ///< FNV-1a of canonical, 16 hex digits
};

/// Parses and validates a JSON experiment file. Throws ConfigError.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view data);

}  // namespace nhop::cli
