#pragma once

#include "nhop/environments.hpp"
#include "nhop/mdp.hpp"
#include "nhop/random.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace nhop {

/// Granularity of the visit criterion that ends sampling.
enum class VisitCounting {
  kPerTransitionAction,  ///< every observed (s, s', a) needs v visits
  kPerTransition,        ///< every observed (s, s') needs v visits, summed over actions
};

struct SamplingConfig {
  Index trajectory_length = 10;     ///< l
  Index min_transition_visits = 40; ///< v
  Index num_environments = 4;       ///< K
  std::vector<unsigned> orders;     ///< empty means {1, ..., K}
  std::size_t max_total_samples = 5'000'000;
  VisitCounting counting = VisitCounting::kPerTransitionAction;

  /// Throws std::invalid_argument on l < 1, v < 1, K < 2, a zero cap, or an
  /// order list that is not K distinct positive orders containing 1.
  void validate() const;

  /// The explicit order list, or {1, ..., K} when none was given.
  std::vector<unsigned> resolved_orders() const;
};

using CountMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

struct EstimatedModel {
  std::vector<CountMatrix> counts;  ///< per action, |S| x |S|
  double prior_mass = 0.0;          ///< pseudo-count added to every cell
  TransitionTensor p_hat;
  CostModel c_hat;
  std::size_t samples_used = 0;
  bool complete = false;            ///< false when the sample cap ended sampling
};

/// Called after every trajectory that crosses a milestone, with the sample
/// count and the normalized estimate at that point.
using EstimationObserver = std::function<void(std::size_t samples, const TransitionTensor& p_hat)>;

struct EstimationOptions {
  std::vector<std::size_t> milestones;  ///< ascending sample counts
  EstimationObserver observer;
};

/**
 * Sample averaging from the original environment. Trajectories of length l
 * start from a uniform state and follow uniform-random actions. Sampling
 * stops after the first trajectory that leaves every observed transition with
 * at least v visits, or when the cap is reached (model flagged incomplete).
 */
EstimatedModel estimate_model(const TabularEnvironment& env, const SamplingConfig& cfg, RngStream& rng,
                              const EstimationOptions& options = {});

/// Normalized estimate from raw counts: row_normalize(prior + counts).
TransitionTensor normalize_counts(const std::vector<CountMatrix>& counts, double prior_mass);

/**
 * One environment per order: order 1 wraps p_hat unchanged, order n > 1 uses
 * matrix_power_ptt(p_hat, n). All share the estimated expected costs. Throws
 * std::invalid_argument for an incomplete model unless accept_incomplete.
 */
std::vector<TabularEnvironment> build_multiscale_envs(const EstimatedModel& model,
                                                      const std::vector<unsigned>& orders,
                                                      bool accept_incomplete = false);

/// Same construction from a known tensor and cost model.
std::vector<TabularEnvironment> build_multiscale_envs(const TransitionTensor& p, const CostModel& costs,
                                                      const std::vector<unsigned>& orders);

enum class MatrixNorm { kFrobenius, kSpectral };

/// (1/|A|) sum_a ||P_a - P_hat_a||. Throws std::invalid_argument on a shape mismatch.
double estimation_error(const TransitionTensor& p_true, const TransitionTensor& p_hat,
                        MatrixNorm norm = MatrixNorm::kFrobenius);

/**
 * Orders for a K-member ensemble: 1, 2, 3, then ascending orders that are not
 * a power-of-two multiple of an order already chosen (5, 7, 9, 11, ...). If
 * max_order runs out first, the skipped orders fill the remaining slots in
 * ascending order. Throws std::invalid_argument unless 2 <= K <= max_order.
 */
std::vector<unsigned> select_orders(unsigned K, unsigned max_order);

}  // namespace nhop
