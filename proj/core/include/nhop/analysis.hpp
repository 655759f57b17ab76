#pragma once

#include "nhop/ensemble.hpp"
#include "nhop/environments.hpp"
#include "nhop/mdp.hpp"
#include "nhop/metrics.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace nhop {

struct WindowMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Mean and E[x^2] - E[x]^2 over x[begin, end). Throws std::out_of_range on
/// an empty or out-of-bounds range.
WindowMoments window_moments(const std::vector<double>& x, std::size_t begin, std::size_t end);

/// Moments over the centered window [t - delta, t + delta] (2 delta + 1
/// samples). Throws std::out_of_range if the window leaves the series.
WindowMoments error_moments(const std::vector<double>& series, std::size_t t, std::size_t delta);

struct BoundParams {
  double u = 0.5;
  double lambda = 1.0;
  unsigned K = 2;
  double gamma = 0.95;
  unsigned n = 2;
  double cost_norm = 1.0;
};

/// (1 - u) / (1 + u) * lambda^2: limiting error variance with independent errors.
double prop1_bound(const BoundParams& p);
/// 2 lambda^2 / (1 + u)^2 + prop1_bound: the same without independence.
double cor2_bound(const BoundParams& p);
/// gamma / (1 - gamma^n) * (1 - gamma^(n-1)) / (1 - gamma) * cost_norm.
/// Throws std::invalid_argument for n <= 1 or gamma outside (0, 1).
double prop3_bound(const BoundParams& p);

/// One line of a verification report. Informational rows never fail a report.
struct CheckRow {
  std::string check;
  std::string instance;
  std::string statistic;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = true;
  bool asserted = true;
};

struct Report {
  std::vector<CheckRow> rows;

  void add(CheckRow row) { rows.push_back(std::move(row)); }
  void append(const Report& other) { rows.insert(rows.end(), other.rows.begin(), other.rows.end()); }
  /// True iff every asserted row passes.
  bool passed() const;
  void write_csv(std::ostream& os) const;
};

inline constexpr const char* kReportCsvVersion = "nhop-eql report v1";

/**
 * For every environment of order n > 1 in envs (envs[0] has order 1), compares
 * ||Q1_pi - Qn_pi||_2 over all (s, a) with prop3_bound(gamma, n, ||c_pi||_2),
 * using exact policy evaluation. Also records whether the gaps are monotone in n.
 */
Report check_prop3(const std::vector<TabularEnvironment>& envs, const Policy& pi_hat, DiscountFactor gamma,
                   const std::string& instance = "");

/**
 * Evaluates pi_hat exactly on every environment and checks, for each chain
 * n, 2n, 4n, ... present in envs, Q(n) >= Q(2n) >= ... elementwise over (s, a)
 * up to rel_tol * max(|lhs|, |rhs|); and that Q(1) dominates every other order.
 */
Report check_prop4_ordering(const std::vector<TabularEnvironment>& envs, const Policy& pi_hat, DiscountFactor gamma,
                            const std::vector<std::vector<unsigned>>& chains, double rel_tol = 1e-6,
                            const std::string& instance = "");

struct VarianceVsKConfig {
  std::vector<unsigned> K_list = {2, 4, 6};
  std::vector<std::uint64_t> seeds;
  std::size_t iterations = 20'000;  ///< fixed budget per run
  SamplingConfig sampling;          ///< K and orders are overridden per entry of K_list
  ScheduleSet schedules;            ///< c2 is overridden with default_epsilon_bases(K)
  double gamma = 0.95;
  std::vector<ProbeCell> probes;
  double late_fraction = 0.1;
};

struct VarianceVsKEntry {
  unsigned K = 0;
  std::vector<unsigned> orders;
  std::vector<double> variances;  ///< one per seed, averaged over probes
  double median = 0.0;
  double standard_error = 0.0;
};

struct VarianceVsKResult {
  std::vector<VarianceVsKEntry> entries;
  Report report;
};

/**
 * Trains with each K on env over all seeds at a fixed budget and measures the
 * variance of the ensemble error over the final late_fraction of iterations.
 * Asserts that the median variance is nonincreasing in K, tolerating one
 * increase no larger than the standard error of the later entry; the gaps
 * between consecutive K are reported as informational rows.
 */
VarianceVsKResult check_variance_vs_k(const TabularEnvironment& env, const Reference& reference,
                                      const VarianceVsKConfig& cfg, const std::string& instance = "");

/**
 * Late-run behaviour of the ensemble error over several independent runs
 * (one trace per run, same probes). For every probe asserts that
 *   - the mean over runs of the late-window mean is within 3 standard errors of 0,
 *   - each run's late-window variance is at most 10% of its early-window variance,
 *   - each run's late-window variance is at most cor2_bound(u_final, lambda_hat),
 * where the windows are the first and last late_fraction of the trace and
 * lambda_hat comes from estimate_lambda over the early window.
 */
Report check_prop1_behavior(const std::vector<ErrorTrace>& traces, const std::vector<double>& final_u,
                            const std::vector<std::string>& run_labels, double late_fraction = 0.1,
                            const std::string& instance = "");

/// Sample distance correlation (V-statistic) in [0, 1]; 0 if either input is
/// constant. Throws std::invalid_argument on unequal lengths or fewer than 2 samples.
double distance_correlation(const std::vector<double>& x, const std::vector<double>& y);

/**
 * Dependence of errors across time: for each learner (and the ensemble) the
 * mean over probes and lags of distance_correlation(x[0..T-lag), x[lag..T)).
 * Rows are informational.
 */
Report adc_error_independence(const ErrorTrace& trace, const std::vector<unsigned>& orders,
                              const std::vector<std::size_t>& lags, const std::string& instance = "");

struct WeightConvergence {
  std::vector<double> final_weights;
  /// First logged t after which no weight moves by tol or more; rows.size()
  /// when the trajectory never settles.
  std::size_t converged_at = 0;
  bool converged = false;
  /// Learner indices sorted by final weight, largest first.
  std::vector<std::size_t> ordering;
  /// max_n |w_t - w_{t - window}| over the final window_frac of the run.
  double final_window_change = 0.0;
};

WeightConvergence weight_convergence(const MetricsLog& log, double window_frac = 0.2, double tol = 0.01);

/// max_n sqrt(3 var(X^(n))) with each variance taken over x[begin, end) and averaged over probes.
double estimate_lambda(const ErrorTrace& trace, std::size_t begin, std::size_t end);

double median(std::vector<double> x);

}  // namespace nhop
