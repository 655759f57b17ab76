#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nhop {

using Index = std::size_t;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Optimal or policy value function, one entry per state.
using ValueFunction = Vector;

/// Discount factor, strictly inside (0, 1).
class DiscountFactor {
 public:
  explicit DiscountFactor(double gamma);
  double value() const noexcept { return gamma_; }

 private:
  double gamma_;
};

/**
 * Per-action stack of |S| x |S| transition matrices. Entry (s, s', a) is the
 * probability of moving from s to s' under action a.
 *
 * Construction only checks shapes; stochasticity is checked by validate_ptt so
 * that malformed tensors can still be represented and reported.
 */
class TransitionTensor {
 public:
  TransitionTensor() = default;
  explicit TransitionTensor(std::vector<Matrix> per_action);

  static TransitionTensor identity(Index num_states, Index num_actions);

  Index num_states() const noexcept;
  Index num_actions() const noexcept { return matrices_.size(); }

  double operator()(Index s, Index next, Index a) const { return matrices_[a](s, next); }
  const Matrix& action_matrix(Index a) const { return matrices_.at(a); }
  const std::vector<Matrix>& matrices() const noexcept { return matrices_; }

  bool operator==(const TransitionTensor& other) const;

 private:
  std::vector<Matrix> matrices_;
};

/**
 * Stage costs. expected(s, a) is the average cost c_a(s); transition costs
 * c_a(s, s') are optional and, when present, expected costs are derived from
 * them so the two always agree.
 */
class CostModel {
 public:
  CostModel() = default;

  /// Costs that depend only on (s, a). Matrix is |S| x |A|.
  static CostModel from_expected(Matrix expected);

  /// Costs that depend on (s, s', a); expected costs are averaged under P.
  static CostModel from_transitions(const TransitionTensor& P, std::vector<Matrix> transition_costs);

  Index num_states() const noexcept { return static_cast<Index>(expected_.rows()); }
  Index num_actions() const noexcept { return static_cast<Index>(expected_.cols()); }

  const Matrix& expected() const noexcept { return expected_; }
  double expected(Index s, Index a) const { return expected_(s, a); }

  bool has_transition_costs() const noexcept { return !transition_.empty(); }
  double transition(Index s, Index next, Index a) const { return transition_[a](s, next); }
  const std::vector<Matrix>& transition_costs() const noexcept { return transition_; }

  bool operator==(const CostModel& other) const;

 private:
  Matrix expected_;
  std::vector<Matrix> transition_;
};

/// Deterministic stationary policy.
struct Policy {
  std::vector<Index> action_of;

  Index size() const noexcept { return action_of.size(); }
  Index operator[](Index s) const { return action_of[s]; }
  bool operator==(const Policy&) const = default;
};

/// Action-value table, |S| x |A|.
class QTable {
 public:
  QTable() = default;
  QTable(Index num_states, Index num_actions) : values_(Matrix::Zero(num_states, num_actions)) {}
  explicit QTable(Matrix values) : values_(std::move(values)) {}

  Index num_states() const noexcept { return static_cast<Index>(values_.rows()); }
  Index num_actions() const noexcept { return static_cast<Index>(values_.cols()); }

  double& operator()(Index s, Index a) { return values_(s, a); }
  double operator()(Index s, Index a) const { return values_(s, a); }

  const Matrix& values() const noexcept { return values_; }
  Matrix& values() noexcept { return values_; }

  /// Lowest-index argmin of row s.
  Index greedy_action(Index s) const;
  double min_value(Index s) const { return values_.row(static_cast<Eigen::Index>(s)).minCoeff(); }

  bool operator==(const QTable& other) const { return values_ == other.values_; }

 private:
  Matrix values_;
};

/// Thrown when an iterative solver stops before reaching its tolerance.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

struct RowFailure {
  Index state;
  Index action;
  double row_sum;
  double min_entry;
};

struct ValidationReport {
  std::vector<RowFailure> failures;
  bool passed() const noexcept { return failures.empty(); }
};

/// Stochasticity tolerance right after construction.
inline constexpr double kStochasticTolerance = 1e-9;
/// Looser tolerance for tensors produced by repeated multiplication.
inline constexpr double kPoweredStochasticTolerance = 1e-6;

/// Checks every (s, a) row for nonnegativity and unit sum within tol.
ValidationReport validate_ptt(const TransitionTensor& P, double tol = kStochasticTolerance);

/// P_a^n for every action. n = 0 is rejected.
TransitionTensor matrix_power_ptt(const TransitionTensor& P, unsigned n);

/**
 * Normalizes each row of a nonnegative matrix to sum to one. All-zero rows
 * become uniform and a warning is logged; their indices are appended to
 * zero_rows when given. Negative entries throw std::invalid_argument.
 */
Matrix row_normalize(const Matrix& M, std::vector<Index>* zero_rows = nullptr);

struct ValueIterationResult {
  ValueFunction values;
  Policy policy;
  QTable q;
  std::size_t iterations = 0;
  double residual = 0.0;
};

/**
 * Jacobi value iteration for cost minimization. Stops as soon as the Bellman
 * residual max_s |v(s) - min_a (c_a(s) + gamma * sum_s' p_a(s,s') v(s'))|
 * drops below tol, and returns that v together with the Q-table built from it
 * and its greedy policy. Throws ConvergenceError after max_iters sweeps.
 */
ValueIterationResult value_iteration(const TransitionTensor& P, const CostModel& C,
                                     DiscountFactor gamma, double tol = 1e-10,
                                     std::size_t max_iters = 1'000'000,
                                     const ValueFunction* initial = nullptr);

struct PolicyEvaluationOptions {
  double tolerance = 1e-8;
  /// Largest |S| solved by dense LU; above it a damped fixed-point iteration is used.
  Index direct_solve_limit = 2000;
  double damping = 0.9;
  std::size_t max_iterations = 10'000'000;
};

/// Exact Q-function of a fixed policy: Q(s,a) = c_a(s) + gamma * sum p_a(s,s') Q(s', pi(s')).
QTable policy_q_evaluation(const TransitionTensor& P, const CostModel& C, DiscountFactor gamma,
                           const Policy& pi, const PolicyEvaluationOptions& options = {});

/// Max over (s,a) of |Q(s,a) - c_a(s) - gamma * sum p_a(s,s') Q(s', pi(s'))|.
double policy_bellman_residual(const TransitionTensor& P, const CostModel& C, DiscountFactor gamma,
                               const Policy& pi, const QTable& q);

/// Lowest-index argmin of every row.
Policy greedy_policy_from_q(const QTable& q);

/// Transition matrix and cost vector of the Markov chain induced by pi.
Matrix policy_transition_matrix(const TransitionTensor& P, const Policy& pi);
Vector policy_cost_vector(const CostModel& C, const Policy& pi);

}  // namespace nhop
