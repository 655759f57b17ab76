#pragma once

#include "nhop/mdp.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace nhop {

struct ProbeCell {
  Index state = 0;
  Index action = 0;
  bool operator==(const ProbeCell&) const = default;
};

enum class ApeMode {
  kTieTolerant,  ///< a state is correct if pi_hat attains min_a Q* within tol
  kStrict,       ///< a state is correct only if pi_hat(s) == pi_star(s)
};

/// Fraction of states where pi_hat is not optimal.
double ape(const Policy& pi_star, const Policy& pi_hat, const QTable& q_star, double tol = 1e-9,
           ApeMode mode = ApeMode::kTieTolerant);

/**
 * Probe-cell errors over time. ensemble[p][i] = Q^it(s_p, a_p) - Q*(s_p, a_p)
 * at logged iteration t[i]; learners[n][p][i] is the same for learner n.
 */
struct ErrorTrace {
  std::vector<ProbeCell> probes;
  std::vector<std::size_t> t;
  std::vector<std::vector<double>> ensemble;
  std::vector<std::vector<std::vector<double>>> learners;

  std::size_t length() const noexcept { return t.size(); }
};

struct MetricsRow {
  std::size_t t = 0;
  double u = 0.0;
  std::vector<double> weights;
  std::optional<double> ape_ensemble;
  std::vector<double> ape_learners;
};

/**
 * Per-iteration record of a training run. Series labels name the learners
 * (e.g. "n1", "n2", "simple").
 */
struct MetricsLog {
  std::vector<std::string> labels;
  std::vector<MetricsRow> rows;
  ErrorTrace trace;
  std::map<std::string, std::string> metadata;

  /// CSV with a versioned header comment; probe columns carry the raw error
  /// plus mean and variance over a centered window of half-width
  /// window_half_width, clipped at the ends of the run.
  void write_csv(std::ostream& os, std::size_t window_half_width = 20) const;
};

inline constexpr const char* kMetricsCsvVersion = "nhop-eql metrics v1";

}  // namespace nhop
