#include "nhop/environments.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace nhop {

TabularEnvironment::TabularEnvironment(TransitionTensor ptt, CostModel costs, std::uint64_t seed,
                                       unsigned order, double tol)
    : ptt_(std::move(ptt)), costs_(std::move(costs)), seed_(seed), order_(order) {
  if (order_ < 1) throw std::invalid_argument("environment order must be at least 1");
  if (costs_.num_states() != ptt_.num_states() || costs_.num_actions() != ptt_.num_actions())
    throw std::invalid_argument("cost model dimensions do not match the transition tensor");
  if (const auto report = validate_ptt(ptt_, tol); !report.passed()) {
    const auto& f = report.failures.front();
    std::ostringstream os;
    os << "transition tensor is not row-stochastic at (s=" << f.state << ", a=" << f.action
       << "), row sum " << f.row_sum;
    throw std::invalid_argument(os.str());
  }

  const Index S = num_states();
  const Index A = num_actions();
  cumulative_.resize(S * A);
  for (Index s = 0; s < S; ++s) {
    for (Index a = 0; a < A; ++a) {
      auto& cum = cumulative_[s * A + a];
      cum.resize(S);
      double acc = 0.0;
      for (Index n = 0; n < S; ++n) {
        acc += ptt_(s, n, a);
        cum[n] = acc;
      }
    }
  }
}

TabularEnvironment::Step TabularEnvironment::step(Index s, Index a, RngStream& rng) const {
  const auto& cum = cumulative_[s * num_actions() + a];
  const double target = rng.uniform01() * cum.back();
  // first entry strictly above target, so zero-probability states are never hit
  auto it = std::upper_bound(cum.begin(), cum.end(), target);
  if (it == cum.end()) --it;
  const auto next = static_cast<Index>(it - cum.begin());
  const double cost = costs_.has_transition_costs() ? costs_.transition(s, next, a) : costs_.expected(s, a);
  return {next, cost};
}

TabularEnvironment build_er_env(const ErdosRenyiSpec& spec) {
  if (spec.num_states < 2) throw std::invalid_argument("ER environment needs at least 2 states");
  if (spec.num_actions < 1) throw std::invalid_argument("ER environment needs at least 1 action");
  if (!(spec.edge_probability > 0.0 && spec.edge_probability <= 1.0))
    throw std::invalid_argument("ER edge probability must lie in (0, 1]");

  const auto S = static_cast<Eigen::Index>(spec.num_states);
  RngStream rng(spec.seed);
  std::vector<Matrix> mats;
  mats.reserve(spec.num_actions);
  for (Index a = 0; a < spec.num_actions; ++a) {
    Matrix adj = Matrix::Zero(S, S);
    for (Eigen::Index i = 0; i < S; ++i) {
      for (Eigen::Index j = 0; j < S; ++j)
        if (rng.uniform01() < spec.edge_probability) adj(i, j) = 1.0;
      if (adj.row(i).sum() == 0.0) adj(i, i) = 1.0;
    }
    mats.push_back(row_normalize(adj));
  }
  Matrix costs(S, static_cast<Eigen::Index>(spec.num_actions));
  for (Eigen::Index s = 0; s < S; ++s)
    for (Eigen::Index a = 0; a < costs.cols(); ++a) costs(s, a) = rng.uniform01();
  return TabularEnvironment(TransitionTensor(std::move(mats)), CostModel::from_expected(std::move(costs)), spec.seed);
}

CliffWalkSpec CliffWalkSpec::standard(Index rows, Index cols) {
  CliffWalkSpec spec;
  spec.rows = rows;
  spec.cols = cols == 0 ? 3 * rows : cols;
  spec.start = {rows - 1, 0};
  spec.goal = {rows - 1, spec.cols - 1};
  spec.cliff.clear();
  for (Index c = 1; c + 1 < spec.cols; ++c) spec.cliff.push_back({rows - 1, c});
  return spec;
}

TabularEnvironment build_cliffwalk_env(const CliffWalkSpec& spec) {
  if (spec.rows < 2 || spec.cols < 2) throw std::invalid_argument("cliff walk needs at least 2 rows and 2 columns");
  auto inside = [&](GridCell c) { return c.row < spec.rows && c.col < spec.cols; };
  if (!inside(spec.start) || !inside(spec.goal)) throw std::invalid_argument("cliff walk start/goal off the grid");
  for (const auto& c : spec.cliff) {
    if (!inside(c)) throw std::invalid_argument("cliff cell off the grid");
    if (c == spec.start || c == spec.goal) throw std::invalid_argument("start and goal cannot be cliff cells");
  }
  if (spec.start == spec.goal) throw std::invalid_argument("start and goal must differ");

  const Index S = spec.rows * spec.cols;
  const auto n = static_cast<Eigen::Index>(S);
  std::vector<bool> is_cliff(S, false);
  for (const auto& c : spec.cliff) is_cliff[spec.state_of(c)] = true;
  const Index start = spec.state_of(spec.start);
  const Index goal = spec.state_of(spec.goal);

  std::vector<Matrix> probs(4, Matrix::Zero(n, n));
  std::vector<Matrix> costs(4, Matrix::Zero(n, n));
  for (Index r = 0; r < spec.rows; ++r) {
    for (Index c = 0; c < spec.cols; ++c) {
      const Index s = r * spec.cols + c;
      for (Index a = 0; a < 4; ++a) {
        Index next = s;
        double cost = kMoveCost;
        if (s == goal) {
          next = start;
        } else {
          Index nr = r;
          Index nc = c;
          if (a == kUp && r > 0) --nr;
          if (a == kDown && r + 1 < spec.rows) ++nr;
          if (a == kLeft && c > 0) --nc;
          if (a == kRight && c + 1 < spec.cols) ++nc;
          next = nr * spec.cols + nc;
          if (is_cliff[next]) {
            next = start;
            cost = kCliffCost;
          } else if (next == goal) {
            cost = kGoalCost;
          }
        }
        const auto si = static_cast<Eigen::Index>(s);
        const auto ni = static_cast<Eigen::Index>(next);
        probs[a](si, ni) = 1.0;
        costs[a](si, ni) = cost;
      }
    }
  }
  TransitionTensor P(std::move(probs));
  auto C = CostModel::from_transitions(P, std::move(costs));
  return TabularEnvironment(std::move(P), std::move(C));
}

TabularEnvironment build_siso_env(const SisoSpec& spec) {
  auto prob_ok = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob_ok(spec.arrival_prob) || !prob_ok(spec.success_prob))
    throw std::invalid_argument("SISO probabilities must lie in [0, 1]");

  const Index B = spec.buffer_size;
  const auto n = static_cast<Eigen::Index>(B + 1);
  const double pa = spec.arrival_prob;
  std::vector<Matrix> probs(2, Matrix::Zero(n, n));
  Matrix costs = Matrix::Zero(n, 2);

  for (Index b = 0; b <= B; ++b) {
    const auto bi = static_cast<Eigen::Index>(b);
    for (Index a : {Index{kTransmit}, Index{kSilent}}) {
      const auto ai = static_cast<Eigen::Index>(a);
      const bool sending = a == kTransmit && b > 0;
      // occupancy after the service phase, with probabilities
      const double p_sent = sending ? spec.success_prob : 0.0;
      const std::pair<Index, double> after[2] = {{b - (sending ? 1 : 0), p_sent}, {b, 1.0 - p_sent}};
      double drop_prob = 0.0;
      for (const auto& [level, p] : after) {
        if (p == 0.0) continue;
        const auto li = static_cast<Eigen::Index>(level);
        if (level < B) {
          probs[a](bi, li + 1) += p * pa;
        } else {
          probs[a](bi, li) += p * pa;
          drop_prob += p * pa;
        }
        probs[a](bi, li) += p * (1.0 - pa);
      }
      costs(bi, ai) = (sending ? spec.transmit_cost : 0.0) + spec.drop_cost * drop_prob;
    }
  }
  return TabularEnvironment(TransitionTensor(std::move(probs)), CostModel::from_expected(std::move(costs)));
}

}  // namespace nhop
