#include "nhop/mdp.hpp"

#include "nhop/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nhop {

DiscountFactor::DiscountFactor(double gamma) : gamma_(gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) {
    std::ostringstream os;
    os << "gamma must lie in (0, 1), got " << gamma;
    throw std::invalid_argument(os.str());
  }
}

TransitionTensor::TransitionTensor(std::vector<Matrix> per_action) : matrices_(std::move(per_action)) {
  if (matrices_.empty()) throw std::invalid_argument("TransitionTensor: no actions");
  const auto n = matrices_.front().rows();
  if (n == 0) throw std::invalid_argument("TransitionTensor: no states");
  for (const auto& m : matrices_) {
    if (m.rows() != n || m.cols() != n)
      throw std::invalid_argument("TransitionTensor: every action matrix must be |S| x |S|");
  }
}

TransitionTensor TransitionTensor::identity(Index num_states, Index num_actions) {
  const auto n = static_cast<Eigen::Index>(num_states);
  return TransitionTensor(std::vector<Matrix>(num_actions, Matrix::Identity(n, n)));
}

Index TransitionTensor::num_states() const noexcept {
  return matrices_.empty() ? 0 : static_cast<Index>(matrices_.front().rows());
}

bool TransitionTensor::operator==(const TransitionTensor& other) const {
  if (matrices_.size() != other.matrices_.size()) return false;
  for (std::size_t a = 0; a < matrices_.size(); ++a) {
    if (matrices_[a].rows() != other.matrices_[a].rows() || matrices_[a] != other.matrices_[a])
      return false;
  }
  return true;
}

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + " must be finite");
}

}  // namespace

CostModel CostModel::from_expected(Matrix expected) {
  if (expected.size() == 0) throw std::invalid_argument("CostModel: empty cost matrix");
  require_finite(expected, "expected costs");
  CostModel c;
  c.expected_ = std::move(expected);
  return c;
}

CostModel CostModel::from_transitions(const TransitionTensor& P, std::vector<Matrix> transition_costs) {
  const auto S = static_cast<Eigen::Index>(P.num_states());
  const auto A = P.num_actions();
  if (transition_costs.size() != A)
    throw std::invalid_argument("CostModel: one transition cost matrix per action required");
  Matrix expected(S, static_cast<Eigen::Index>(A));
  for (Index a = 0; a < A; ++a) {
    const auto& tc = transition_costs[a];
    if (tc.rows() != S || tc.cols() != S)
      throw std::invalid_argument("CostModel: transition cost matrices must be |S| x |S|");
    require_finite(tc, "transition costs");
    expected.col(static_cast<Eigen::Index>(a)) = P.action_matrix(a).cwiseProduct(tc).rowwise().sum();
  }
  CostModel c;
  c.expected_ = std::move(expected);
  c.transition_ = std::move(transition_costs);
  return c;
}

bool CostModel::operator==(const CostModel& other) const {
  if (expected_.rows() != other.expected_.rows() || expected_.cols() != other.expected_.cols())
    return false;
  if (expected_ != other.expected_ || transition_.size() != other.transition_.size()) return false;
  for (std::size_t a = 0; a < transition_.size(); ++a)
    if (transition_[a] != other.transition_[a]) return false;
  return true;
}

Index QTable::greedy_action(Index s) const {
  const auto row = values_.row(static_cast<Eigen::Index>(s));
  Index best = 0;
  for (Eigen::Index a = 1; a < row.size(); ++a)
    if (row(a) < row(static_cast<Eigen::Index>(best))) best = static_cast<Index>(a);
  return best;
}

ValidationReport validate_ptt(const TransitionTensor& P, double tol) {
  ValidationReport report;
  for (Index a = 0; a < P.num_actions(); ++a) {
    const auto& m = P.action_matrix(a);
    for (Eigen::Index s = 0; s < m.rows(); ++s) {
      const double sum = m.row(s).sum();
      const double lo = m.row(s).minCoeff();
      if (lo < 0.0 || !std::isfinite(sum) || std::abs(sum - 1.0) > tol)
        report.failures.push_back({static_cast<Index>(s), a, sum, lo});
    }
  }
  return report;
}

TransitionTensor matrix_power_ptt(const TransitionTensor& P, unsigned n) {
  if (n == 0) throw std::invalid_argument("matrix_power_ptt: order must be at least 1");
  std::vector<Matrix> out;
  out.reserve(P.num_actions());
  for (const auto& base : P.matrices()) {
    // binary exponentiation
    Matrix result;
    Matrix square = base;
    bool have_result = false;
    for (unsigned k = n; k > 0; k >>= 1) {
      if (k & 1u) {
        result = have_result ? Matrix(result * square) : square;
        have_result = true;
      }
      if (k > 1) square = square * square;
    }
    out.push_back(std::move(result));
  }
  return TransitionTensor(std::move(out));
}

Matrix row_normalize(const Matrix& M, std::vector<Index>* zero_rows) {
  if ((M.array() < 0.0).any()) throw std::invalid_argument("row_normalize: negative entry");
  Matrix out = M;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double sum = out.row(r).sum();
    if (sum > 0.0) {
      out.row(r) /= sum;
    } else {
      out.row(r).setConstant(1.0 / static_cast<double>(out.cols()));
      if (zero_rows) zero_rows->push_back(static_cast<Index>(r));
      log_warning("row_normalize: row " + std::to_string(r) + " is all zero, using the uniform row");
    }
  }
  return out;
}

namespace {

void check_dims(const TransitionTensor& P, const CostModel& C) {
  if (C.num_states() != P.num_states() || C.num_actions() != P.num_actions())
    throw std::invalid_argument("cost model dimensions do not match the transition tensor");
}

// Q(s,a) = c_a(s) + gamma * (P_a v)(s)
Matrix bellman_q(const TransitionTensor& P, const CostModel& C, double gamma, const Vector& v) {
  Matrix q = C.expected();
  for (Index a = 0; a < P.num_actions(); ++a)
    q.col(static_cast<Eigen::Index>(a)).noalias() += gamma * (P.action_matrix(a) * v);
  return q;
}

}  // namespace

Policy greedy_policy_from_q(const QTable& q) {
  Policy pi;
  pi.action_of.resize(q.num_states());
  for (Index s = 0; s < q.num_states(); ++s) pi.action_of[s] = q.greedy_action(s);
  return pi;
}

ValueIterationResult value_iteration(const TransitionTensor& P, const CostModel& C,
                                     DiscountFactor gamma, double tol, std::size_t max_iters,
                                     const ValueFunction* initial) {
  check_dims(P, C);
  const auto S = static_cast<Eigen::Index>(P.num_states());
  Vector v = initial ? *initial : Vector::Zero(S);
  if (v.size() != S) throw std::invalid_argument("value_iteration: initial value has wrong size");

  double residual = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < max_iters; ++it) {
    Matrix q = bellman_q(P, C, gamma.value(), v);
    Vector tv = q.rowwise().minCoeff();
    residual = (tv - v).cwiseAbs().maxCoeff();
    if (residual < tol) {
      ValueIterationResult r;
      r.q = QTable(std::move(q));
      r.policy = greedy_policy_from_q(r.q);
      r.values = std::move(v);
      r.iterations = it;
      r.residual = residual;
      return r;
    }
    v = std::move(tv);
  }
  std::ostringstream os;
  os << "value_iteration did not converge in " << max_iters << " iterations (residual " << residual << ")";
  throw ConvergenceError(os.str(), residual);
}

Matrix policy_transition_matrix(const TransitionTensor& P, const Policy& pi) {
  const auto S = static_cast<Eigen::Index>(P.num_states());
  if (pi.size() != P.num_states()) throw std::invalid_argument("policy does not cover every state");
  Matrix out(S, S);
  for (Eigen::Index s = 0; s < S; ++s) {
    const Index a = pi[static_cast<Index>(s)];
    if (a >= P.num_actions()) throw std::invalid_argument("policy action out of range");
    out.row(s) = P.action_matrix(a).row(s);
  }
  return out;
}

Vector policy_cost_vector(const CostModel& C, const Policy& pi) {
  const auto S = static_cast<Eigen::Index>(C.num_states());
  if (pi.size() != C.num_states()) throw std::invalid_argument("policy does not cover every state");
  Vector c(S);
  for (Eigen::Index s = 0; s < S; ++s) {
    const Index a = pi[static_cast<Index>(s)];
    if (a >= C.num_actions()) throw std::invalid_argument("policy action out of range");
    c(s) = C.expected(static_cast<Index>(s), a);
  }
  return c;
}

double policy_bellman_residual(const TransitionTensor& P, const CostModel& C, DiscountFactor gamma,
                               const Policy& pi, const QTable& q) {
  const auto S = static_cast<Eigen::Index>(P.num_states());
  Vector on_policy(S);
  for (Eigen::Index s = 0; s < S; ++s) on_policy(s) = q(static_cast<Index>(s), pi[static_cast<Index>(s)]);
  return (q.values() - bellman_q(P, C, gamma.value(), on_policy)).cwiseAbs().maxCoeff();
}

QTable policy_q_evaluation(const TransitionTensor& P, const CostModel& C, DiscountFactor gamma,
                           const Policy& pi, const PolicyEvaluationOptions& options) {
  check_dims(P, C);
  const auto S = static_cast<Eigen::Index>(P.num_states());
  const double g = gamma.value();
  const Matrix P_pi = policy_transition_matrix(P, pi);
  const Vector c_pi = policy_cost_vector(C, pi);

  Vector v;
  if (P.num_states() <= options.direct_solve_limit) {
    const Matrix A = Matrix::Identity(S, S) - g * P_pi;
    const Eigen::PartialPivLU<Matrix> lu(A);
    v = lu.solve(c_pi);
    v += lu.solve(Vector(c_pi - A * v));  // one step of iterative refinement
  } else {
    const double beta = options.damping;
    v = Vector::Zero(S);
    double residual = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    for (; it < options.max_iterations; ++it) {
      Vector tv = c_pi + g * (P_pi * v);
      residual = (tv - v).cwiseAbs().maxCoeff();
      if (residual < options.tolerance) break;
      v = (1.0 - beta) * v + beta * tv;
    }
    if (it == options.max_iterations)
      throw ConvergenceError("policy_q_evaluation: fixed-point iteration did not converge", residual);
  }

  QTable q(bellman_q(P, C, g, v));
  const double residual = policy_bellman_residual(P, C, gamma, pi, q);
  if (!(residual <= options.tolerance)) {
    std::ostringstream os;
    os << "policy_q_evaluation: residual " << residual << " exceeds tolerance " << options.tolerance;
    throw ConvergenceError(os.str(), residual);
  }
  return q;
}

}  // namespace nhop
