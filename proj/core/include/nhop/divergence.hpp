#pragma once

#include "nhop/mdp.hpp"

#include <vector>

namespace nhop {

/// Softmax with max-shift.
Vector softmax(const Vector& x);

/// exp(-q_i) / sum_j exp(-q_j), computed with a min-shift.
Vector q_to_probabilities(const Vector& q_row);

/// Row-wise q_to_probabilities of a whole table.
Matrix q_table_probabilities(const QTable& q);

/// Jensen-Shannon divergence in bits, in [0, 1]. Throws std::invalid_argument
/// on a length mismatch or negative entries.
double jsd(const Vector& p, const Vector& q);

/// Mean over rows (states) of jsd between matching rows.
double ajsd(const Matrix& p, const Matrix& q);

/// softmax over n of 1 - ajsd(probabilities of q_tables[0], of q_tables[n]).
/// Throws std::invalid_argument for fewer than two tables or mismatched shapes.
Vector compute_weights(const std::vector<QTable>& q_tables);

/// Softmax of K inputs in [0, 1] stays inside [1/(1+(K-1)e), e/(e+K-1)].
double weight_lower_bound(Index K);
double weight_upper_bound(Index K);

/**
 * Keeps per-state JSD values between learner 0 and every other learner so a
 * Q-update of a single row only costs O(|A|) per affected pair. Produces the
 * same weights as compute_weights up to floating-point summation order.
 */
class WeightTracker {
 public:
  explicit WeightTracker(const std::vector<QTable>& q_tables);

  /// Refreshes the cached probabilities of learner n at state s.
  void update_row(const std::vector<QTable>& q_tables, Index n, Index s);

  Vector weights() const;
  double ajsd_of(Index n) const;

 private:
  void refresh_jsd(Index n, Index s);

  std::vector<Matrix> probs_;  // per learner, |S| x |A|
  Matrix jsd_;                 // |S| x K, column 0 unused
};

}  // namespace nhop
