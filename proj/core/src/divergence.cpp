#include "nhop/divergence.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nhop {

Vector softmax(const Vector& x) {
  if (x.size() == 0) return x;
  Vector e = (x.array() - x.maxCoeff()).exp();
  return e / e.sum();
}

Vector q_to_probabilities(const Vector& q_row) {
  if (q_row.size() == 0) return q_row;
  Vector e = (-(q_row.array() - q_row.minCoeff())).exp();
  return e / e.sum();
}

Matrix q_table_probabilities(const QTable& q) {
  Matrix out(q.values().rows(), q.values().cols());
  for (Eigen::Index s = 0; s < out.rows(); ++s) out.row(s) = q_to_probabilities(q.values().row(s).transpose()).transpose();
  return out;
}

namespace {

double jsd_unchecked(const double* p, const double* q, Eigen::Index n, Eigen::Index stride_p, Eigen::Index stride_q) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = p[i * stride_p];
    const double b = q[i * stride_q];
    const double m = 0.5 * (a + b);
    if (a > 0.0) acc += a * std::log2(a / m);
    if (b > 0.0) acc += b * std::log2(b / m);
  }
  return std::clamp(0.5 * acc, 0.0, 1.0);
}

}  // namespace

double jsd(const Vector& p, const Vector& q) {
  if (p.size() != q.size()) throw std::invalid_argument("jsd: distributions have different lengths");
  if ((p.array() < 0.0).any() || (q.array() < 0.0).any())
    throw std::invalid_argument("jsd: negative probability");
  return jsd_unchecked(p.data(), q.data(), p.size(), 1, 1);
}

double ajsd(const Matrix& p, const Matrix& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) throw std::invalid_argument("ajsd: tables have different shapes");
  if (p.rows() == 0) return 0.0;
  double total = 0.0;
  for (Eigen::Index s = 0; s < p.rows(); ++s) total += jsd(p.row(s).transpose(), q.row(s).transpose());
  return total / static_cast<double>(p.rows());
}

Vector compute_weights(const std::vector<QTable>& q_tables) {
  if (q_tables.size() < 2) throw std::invalid_argument("compute_weights needs at least two tables");
  const Matrix ref = q_table_probabilities(q_tables.front());
  Vector raw(static_cast<Eigen::Index>(q_tables.size()));
  raw(0) = 1.0;
  for (std::size_t n = 1; n < q_tables.size(); ++n)
    raw(static_cast<Eigen::Index>(n)) = 1.0 - ajsd(ref, q_table_probabilities(q_tables[n]));
  return softmax(raw);
}

double weight_lower_bound(Index K) {
  return 1.0 / (1.0 + static_cast<double>(K - 1) * std::numbers::e);
}

double weight_upper_bound(Index K) {
  return std::numbers::e / (std::numbers::e + static_cast<double>(K - 1));
}

WeightTracker::WeightTracker(const std::vector<QTable>& q_tables) {
  if (q_tables.size() < 2) throw std::invalid_argument("WeightTracker needs at least two tables");
  for (const auto& q : q_tables) {
    if (q.num_states() != q_tables.front().num_states() || q.num_actions() != q_tables.front().num_actions())
      throw std::invalid_argument("WeightTracker: tables have different shapes");
    probs_.push_back(q_table_probabilities(q));
  }
  const auto S = probs_.front().rows();
  jsd_ = Matrix::Zero(S, static_cast<Eigen::Index>(q_tables.size()));
  for (Index n = 1; n < q_tables.size(); ++n)
    for (Eigen::Index s = 0; s < S; ++s) refresh_jsd(n, static_cast<Index>(s));
}

void WeightTracker::refresh_jsd(Index n, Index s) {
  const auto& p = probs_.front();
  const auto& q = probs_[n];
  const auto r = static_cast<Eigen::Index>(s);
  jsd_(r, static_cast<Eigen::Index>(n)) =
      jsd_unchecked(p.data() + r, q.data() + r, p.cols(), p.outerStride(), q.outerStride());
}

void WeightTracker::update_row(const std::vector<QTable>& q_tables, Index n, Index s) {
  const auto r = static_cast<Eigen::Index>(s);
  probs_[n].row(r) = q_to_probabilities(q_tables[n].values().row(r).transpose()).transpose();
  if (n == 0) {
    for (Index m = 1; m < probs_.size(); ++m) refresh_jsd(m, s);
  } else {
    refresh_jsd(n, s);
  }
}

double WeightTracker::ajsd_of(Index n) const {
  if (n == 0) return 0.0;
  return jsd_.col(static_cast<Eigen::Index>(n)).mean();
}

Vector WeightTracker::weights() const {
  Vector raw(jsd_.cols());
  for (Eigen::Index n = 0; n < raw.size(); ++n) raw(n) = 1.0 - ajsd_of(static_cast<Index>(n));
  return softmax(raw);
}

}  // namespace nhop
