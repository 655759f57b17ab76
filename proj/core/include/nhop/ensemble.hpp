#pragma once

#include "nhop/environments.hpp"
#include "nhop/estimation.hpp"
#include "nhop/mdp.hpp"
#include "nhop/metrics.hpp"
#include "nhop/random.hpp"
#include "nhop/schedules.hpp"

#include <optional>
#include <vector>

namespace nhop {

/// q(s,a) <- (1 - alpha) q(s,a) + alpha (c + gamma min_a' q(s',a')).
void q_update(QTable& q, Index s, Index a, Index next, double cost, double alpha, double gamma);

/// Uniform action with probability epsilon, otherwise the lowest-index argmin.
Index epsilon_greedy_action(const QTable& q, Index s, double epsilon, RngStream& rng);

/// q_it <- u q_it + (1 - u) sum_n w_n q_tables[n], in place.
void ensemble_update(QTable& q_it, const std::vector<QTable>& q_tables, const Vector& w, double u);

/// Reference solution used to score a run as it progresses.
struct Reference {
  QTable q_star;
  Policy pi_star;

  static Reference from(const ValueIterationResult& vi) { return {vi.q, vi.policy}; }
};

struct RunOptions {
  std::optional<Reference> reference;  ///< enables APE columns and the error trace
  std::vector<ProbeCell> probes;
  std::size_t max_iterations = 2'000'000;
  /// When positive, run exactly this many time steps instead of the visit rule.
  std::size_t fixed_iterations = 0;
  std::size_t log_every = 1;
  double ape_tolerance = 1e-9;
  /// Estimation may hit its sample cap; by default training proceeds anyway.
  bool accept_incomplete_model = true;
};

struct WeightStats {
  double min_weight = 1.0;
  double max_weight = 0.0;
  double max_sum_deviation = 0.0;
};

struct NeqlResult {
  QTable q_it;
  Policy policy;
  std::vector<QTable> learner_q;
  std::vector<unsigned> orders;
  Vector weights;
  MetricsLog log;
  std::size_t iterations = 0;
  bool complete = false;  ///< visit rule satisfied (or fixed budget run)
  std::optional<EstimatedModel> model;
  WeightStats weight_stats;
};

/**
 * Ensemble Q-learning over multi-timescale environments. envs[0] must be the
 * original environment; the others are synthetic environments of the listed
 * orders. Learner n draws from its own stream derive_seed(seed, n + 1); resets
 * and the initial weights use derive_seed(seed, 0).
 */
NeqlResult run_neql(const std::vector<TabularEnvironment>& envs, const ScheduleSet& schedules,
                    DiscountFactor gamma, const SamplingConfig& cfg, std::uint64_t seed,
                    const RunOptions& options = {});

/// Estimates the model from the original environment first (stream
/// derive_seed(seed, 0xE5) ), builds the synthetic environments for
/// cfg.resolved_orders() and trains on them.
NeqlResult run_neql(const TabularEnvironment& original, const SamplingConfig& cfg, const ScheduleSet& schedules,
                    DiscountFactor gamma, std::uint64_t seed, const RunOptions& options = {});

struct SimpleQResult {
  QTable q;
  Policy policy;
  MetricsLog log;
  std::size_t iterations = 0;
  bool complete = false;
};

/// Single-learner epsilon-greedy Q-learning with the same reset and visit
/// rules; exploration uses schedules.c2[0].
SimpleQResult run_simple_q(const TabularEnvironment& env, const ScheduleSet& schedules, DiscountFactor gamma,
                           Index v, Index l, std::uint64_t seed, const RunOptions& options = {});

struct ViEnsembleOptions {
  std::optional<Reference> reference;
  std::size_t iterations = 0;  ///< 0: run until every (s, a) has v samples
  std::size_t max_iterations = 200'000;
  std::size_t rebuild_every = 10;
  double vi_tolerance = 1e-8;
  double ape_tolerance = 1e-9;
  /// Replaces the sampled estimate with this tensor (diagnostics only).
  const TransitionTensor* perfect_model = nullptr;
};

struct ViEnsembleResult {
  ValueFunction v_it;
  Policy policy;
  std::vector<ValueFunction> env_values;
  Vector weights;
  MetricsLog log;
  std::size_t iterations = 0;
  bool complete = false;
};

/**
 * Value-iteration ensemble: each iteration samples one trajectory of l
 * uniform-random steps to refine P_hat; every rebuild_every iterations the
 * n-hop tensors are rebuilt and solved exactly; weights are
 * softmax(-||v1 - vn||_2) and v_it is blended with u_t. The policy is greedy
 * with respect to c_hat + gamma P_hat v_it.
 */
ViEnsembleResult run_vi_ensemble(const TabularEnvironment& original, const SamplingConfig& cfg,
                                 const ScheduleSet& schedules, DiscountFactor gamma, std::uint64_t seed,
                                 const ViEnsembleOptions& options = {});

}  // namespace nhop
