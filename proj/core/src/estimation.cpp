#include "nhop/estimation.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace nhop {

void SamplingConfig::validate() const {
  if (trajectory_length < 1) throw std::invalid_argument("trajectory length l must be at least 1");
  if (min_transition_visits < 1) throw std::invalid_argument("visit threshold v must be at least 1");
  if (num_environments < 2) throw std::invalid_argument("ensemble size K must be at least 2");
  if (max_total_samples < 1) throw std::invalid_argument("sample cap must be positive");
  if (orders.empty()) return;
  if (orders.size() != num_environments) {
    std::ostringstream os;
    os << "order list has " << orders.size() << " entries but K = " << num_environments;
    throw std::invalid_argument(os.str());
  }
  std::set<unsigned> seen;
  for (unsigned n : orders) {
    if (n == 0) throw std::invalid_argument("orders must be positive");
    if (!seen.insert(n).second) throw std::invalid_argument("orders must be distinct");
  }
  if (!seen.count(1)) throw std::invalid_argument("order list must contain 1");
}

std::vector<unsigned> SamplingConfig::resolved_orders() const {
  if (!orders.empty()) return orders;
  std::vector<unsigned> out(num_environments);
  for (Index i = 0; i < num_environments; ++i) out[i] = static_cast<unsigned>(i + 1);
  return out;
}

TransitionTensor normalize_counts(const std::vector<CountMatrix>& counts, double prior_mass) {
  std::vector<Matrix> mats;
  mats.reserve(counts.size());
  for (const auto& c : counts) mats.push_back(row_normalize(c.cast<double>().array() + prior_mass));
  return TransitionTensor(std::move(mats));
}

namespace {

// Number of observed cells still below the visit threshold.
class DeficitTracker {
 public:
  DeficitTracker(Index S, std::int64_t v) : v_(v), counts_(CountMatrix::Zero(S, S)) {}

  void add(Index s, Index next) {
    auto& c = counts_(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(next));
    ++c;
    if (c == 1 && v_ > 1) ++deficit_;
    if (c == v_ && v_ > 1) --deficit_;
  }

  std::size_t deficit() const { return deficit_; }

 private:
  std::int64_t v_;
  CountMatrix counts_;
  std::size_t deficit_ = 0;
};

}  // namespace

EstimatedModel estimate_model(const TabularEnvironment& env, const SamplingConfig& cfg, RngStream& rng,
                              const EstimationOptions& options) {
  cfg.validate();
  const Index S = env.num_states();
  const Index A = env.num_actions();
  const auto v = static_cast<std::int64_t>(cfg.min_transition_visits);

  EstimatedModel model;
  model.prior_mass = 1.0 / static_cast<double>(S);
  model.counts.assign(A, CountMatrix::Zero(S, S));
  Matrix cost_sum = Matrix::Zero(S, A);
  Matrix cost_n = Matrix::Zero(S, A);

  // per action trackers for the strict reading, a single shared one otherwise
  std::vector<DeficitTracker> trackers(cfg.counting == VisitCounting::kPerTransitionAction ? A : 1,
                                       DeficitTracker(S, v));
  auto total_deficit = [&] {
    std::size_t d = 0;
    for (const auto& t : trackers) d += t.deficit();
    return d;
  };

  std::size_t next_milestone = 0;
  while (true) {
    Index s = env.reset(rng);
    for (Index k = 0; k < cfg.trajectory_length && model.samples_used < cfg.max_total_samples; ++k) {
      const Index a = rng.uniform_index(A);
      const auto step = env.step(s, a, rng);
      ++model.counts[a](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(step.next_state));
      trackers[trackers.size() == 1 ? 0 : a].add(s, step.next_state);
      cost_sum(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) += step.cost;
      cost_n(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) += 1.0;
      ++model.samples_used;
      s = step.next_state;
    }

    if (options.observer && next_milestone < options.milestones.size() &&
        model.samples_used >= options.milestones[next_milestone]) {
      while (next_milestone < options.milestones.size() && model.samples_used >= options.milestones[next_milestone])
        ++next_milestone;
      options.observer(model.samples_used, normalize_counts(model.counts, model.prior_mass));
    }

    if (total_deficit() == 0) {
      model.complete = true;
      break;
    }
    if (model.samples_used >= cfg.max_total_samples) break;
  }

  model.p_hat = normalize_counts(model.counts, model.prior_mass);
  Matrix c_hat = env.costs().expected();
  for (Eigen::Index s = 0; s < c_hat.rows(); ++s)
    for (Eigen::Index a = 0; a < c_hat.cols(); ++a)
      if (cost_n(s, a) > 0) c_hat(s, a) = cost_sum(s, a) / cost_n(s, a);
  model.c_hat = CostModel::from_expected(std::move(c_hat));
  return model;
}

std::vector<TabularEnvironment> build_multiscale_envs(const TransitionTensor& p, const CostModel& costs,
                                                      const std::vector<unsigned>& orders) {
  std::vector<TabularEnvironment> envs;
  envs.reserve(orders.size());
  const auto expected = CostModel::from_expected(costs.expected());
  for (unsigned n : orders) {
    if (n == 0) throw std::invalid_argument("orders must be positive");
    if (n == 1)
      envs.emplace_back(p, expected, 0, 1, kPoweredStochasticTolerance);
    else
      envs.emplace_back(matrix_power_ptt(p, n), expected, 0, n, kPoweredStochasticTolerance);
  }
  return envs;
}

std::vector<TabularEnvironment> build_multiscale_envs(const EstimatedModel& model,
                                                      const std::vector<unsigned>& orders,
                                                      bool accept_incomplete) {
  if (!model.complete && !accept_incomplete)
    throw std::invalid_argument("estimated model is incomplete; pass accept_incomplete to use it anyway");
  return build_multiscale_envs(model.p_hat, model.c_hat, orders);
}

double estimation_error(const TransitionTensor& p_true, const TransitionTensor& p_hat, MatrixNorm norm) {
  if (p_true.num_actions() != p_hat.num_actions() || p_true.num_states() != p_hat.num_states())
    throw std::invalid_argument("estimation_error: tensor shapes differ");
  if (p_true.num_actions() == 0) return 0.0;
  double total = 0.0;
  for (Index a = 0; a < p_true.num_actions(); ++a) {
    const Matrix diff = p_true.action_matrix(a) - p_hat.action_matrix(a);
    if (norm == MatrixNorm::kFrobenius) {
      total += diff.norm();
    } else {
      Eigen::JacobiSVD<Matrix> svd(diff);
      total += svd.singularValues().size() ? svd.singularValues()(0) : 0.0;
    }
  }
  return total / static_cast<double>(p_true.num_actions());
}

std::vector<unsigned> select_orders(unsigned K, unsigned max_order) {
  if (K < 2) throw std::invalid_argument("select_orders: K must be at least 2");
  if (max_order < K) throw std::invalid_argument("select_orders: max_order must be at least K");

  std::vector<unsigned> chosen;
  std::vector<unsigned> skipped;
  auto dominated = [&](unsigned n) {
    for (unsigned m : chosen) {
      for (unsigned k = 2 * m; k <= n; k *= 2)
        if (k == n) return true;
    }
    return false;
  };
  for (unsigned n = 1; n <= max_order && chosen.size() < K; ++n) {
    if (n <= 3 || !dominated(n))
      chosen.push_back(n);
    else
      skipped.push_back(n);
  }
  for (std::size_t i = 0; chosen.size() < K && i < skipped.size(); ++i) chosen.push_back(skipped[i]);
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace nhop
