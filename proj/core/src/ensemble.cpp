#include "nhop/ensemble.hpp"

#include "nhop/divergence.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace nhop {

void q_update(QTable& q, Index s, Index a, Index next, double cost, double alpha, double gamma) {
  const double target = cost + gamma * q.min_value(next);
  q(s, a) = (1.0 - alpha) * q(s, a) + alpha * target;
}

Index epsilon_greedy_action(const QTable& q, Index s, double epsilon, RngStream& rng) {
  if (rng.uniform01() < epsilon) return rng.uniform_index(q.num_actions());
  return q.greedy_action(s);
}

void ensemble_update(QTable& q_it, const std::vector<QTable>& q_tables, const Vector& w, double u) {
  if (static_cast<Eigen::Index>(q_tables.size()) != w.size())
    throw std::invalid_argument("ensemble_update: one weight per table required");
  Matrix blend = Matrix::Zero(q_it.values().rows(), q_it.values().cols());
  for (std::size_t n = 0; n < q_tables.size(); ++n) blend += w(static_cast<Eigen::Index>(n)) * q_tables[n].values();
  q_it.values() = u * q_it.values() + (1.0 - u) * blend;
}

namespace {

// Visit counter over (s, a) that knows how many cells are still short of v.
class VisitTracker {
 public:
  VisitTracker(Index S, Index A, Index v) : v_(v), visits_(S * A, 0), deficit_(S * A), A_(A) {}

  void add(Index s, Index a) {
    if (++visits_[s * A_ + a] == v_) --deficit_;
  }
  bool satisfied() const { return deficit_ == 0; }

 private:
  Index v_;
  std::vector<Index> visits_;
  std::size_t deficit_;
  Index A_;
};

class Recorder {
 public:
  Recorder(MetricsLog& log, const RunOptions& options, std::size_t num_learners) : log_(log), options_(options) {
    if (options.reference) {
      auto& tr = log_.trace;
      tr.probes = options.probes;
      tr.ensemble.assign(options.probes.size(), {});
      tr.learners.assign(num_learners, std::vector<std::vector<double>>(options.probes.size()));
    }
  }

  void record(std::size_t t, double u, const Vector& w, const QTable& q_it, const std::vector<QTable>& learners) {
    if (options_.log_every > 1 && t % options_.log_every != 0) return;
    MetricsRow row;
    row.t = t;
    row.u = u;
    row.weights.assign(w.data(), w.data() + w.size());
    if (const auto& ref = options_.reference) {
      row.ape_ensemble = ape(ref->pi_star, greedy_policy_from_q(q_it), ref->q_star, options_.ape_tolerance);
      for (const auto& q : learners)
        row.ape_learners.push_back(ape(ref->pi_star, greedy_policy_from_q(q), ref->q_star, options_.ape_tolerance));
      auto& tr = log_.trace;
      tr.t.push_back(t);
      for (std::size_t p = 0; p < options_.probes.size(); ++p) {
        const auto [s, a] = options_.probes[p];
        const double star = ref->q_star(s, a);
        tr.ensemble[p].push_back(q_it(s, a) - star);
        for (std::size_t n = 0; n < learners.size(); ++n) tr.learners[n][p].push_back(learners[n](s, a) - star);
      }
    }
    log_.rows.push_back(std::move(row));
  }

 private:
  MetricsLog& log_;
  const RunOptions& options_;
};

void check_probes(const RunOptions& options, Index S, Index A) {
  for (const auto& p : options.probes)
    if (p.state >= S || p.action >= A) throw std::invalid_argument("probe cell outside the state-action space");
  if (options.reference &&
      (options.reference->q_star.num_states() != S || options.reference->q_star.num_actions() != A))
    throw std::invalid_argument("reference Q* does not match the environment");
}

}  // namespace

NeqlResult run_neql(const std::vector<TabularEnvironment>& envs, const ScheduleSet& schedules,
                    DiscountFactor gamma, const SamplingConfig& cfg, std::uint64_t seed,
                    const RunOptions& options) {
  if (envs.size() < 2) throw std::invalid_argument("run_neql needs at least two environments");
  if (envs.front().order() != 1) throw std::invalid_argument("first environment must be the original (order 1)");
  schedules.validate();
  if (cfg.trajectory_length < 1 || cfg.min_transition_visits < 1)
    throw std::invalid_argument("trajectory length and visit threshold must be positive");
  const Index S = envs.front().num_states();
  const Index A = envs.front().num_actions();
  for (const auto& e : envs)
    if (e.num_states() != S || e.num_actions() != A) throw std::invalid_argument("environments differ in shape");
  check_probes(options, S, A);

  const std::size_t K = envs.size();
  const double g = gamma.value();

  NeqlResult result;
  for (const auto& e : envs) {
    result.orders.push_back(e.order());
    result.log.labels.push_back("n" + std::to_string(e.order()));
  }
  result.log.metadata["seed"] = std::to_string(seed);

  RngStream common(derive_seed(seed, 0));
  std::vector<RngStream> streams;
  for (std::size_t n = 0; n < K; ++n) streams.emplace_back(derive_seed(seed, n + 1));

  // initial weights only matter until the first refresh below
  Vector w(static_cast<Eigen::Index>(K));
  for (auto& x : w) x = common.uniform01();
  w = softmax(w);

  std::vector<QTable> q(K, QTable(S, A));
  QTable q_it(S, A);
  WeightTracker tracker(q);
  VisitTracker visits(S, A, cfg.min_transition_visits);
  Recorder recorder(result.log, options, K);
  auto& stats = result.weight_stats;

  const std::size_t budget = options.fixed_iterations > 0 ? options.fixed_iterations : options.max_iterations;
  std::vector<Index> state(K);
  std::size_t t = 0;
  bool done = false;
  while (!done) {
    const Index s0 = envs.front().reset(common);
    std::fill(state.begin(), state.end(), s0);
    for (Index k = 0; k < cfg.trajectory_length; ++k) {
      if (t >= budget) {
        done = true;
        break;
      }
      const double alpha = schedules.alpha(t);
      for (std::size_t n = 0; n < K; ++n) {
        const Index s = state[n];
        const Index a = epsilon_greedy_action(q[n], s, schedules.epsilon(n, t), streams[n]);
        const auto step = envs[n].step(s, a, streams[n]);
        q_update(q[n], s, a, step.next_state, step.cost, alpha, g);
        tracker.update_row(q, n, s);
        if (n == 0) visits.add(s, a);
        state[n] = step.next_state;
      }
      w = tracker.weights();
      stats.min_weight = std::min(stats.min_weight, w.minCoeff());
      stats.max_weight = std::max(stats.max_weight, w.maxCoeff());
      stats.max_sum_deviation = std::max(stats.max_sum_deviation, std::abs(w.sum() - 1.0));

      const double u = schedules.update_ratio(t);
      ensemble_update(q_it, q, w, u);
      recorder.record(t, u, w, q_it, q);
      ++t;
    }
    if (options.fixed_iterations > 0) {
      result.complete = t >= options.fixed_iterations;
    } else if (visits.satisfied()) {
      result.complete = true;
      done = true;
    }
  }

  result.iterations = t;
  result.policy = greedy_policy_from_q(q_it);
  result.q_it = std::move(q_it);
  result.learner_q = std::move(q);
  result.weights = w;
  return result;
}

NeqlResult run_neql(const TabularEnvironment& original, const SamplingConfig& cfg, const ScheduleSet& schedules,
                    DiscountFactor gamma, std::uint64_t seed, const RunOptions& options) {
  cfg.validate();
  auto orders = cfg.resolved_orders();
  if (orders.front() != 1) {
    std::erase(orders, 1u);
    orders.insert(orders.begin(), 1u);
  }
  RngStream rng(derive_seed(seed, 0xE5));
  auto model = estimate_model(original, cfg, rng);
  auto envs = build_multiscale_envs(model, orders, options.accept_incomplete_model);
  // the order-1 learner interacts with the real environment
  envs.front() = original;
  auto result = run_neql(envs, schedules, gamma, cfg, seed, options);
  result.model = std::move(model);
  return result;
}

SimpleQResult run_simple_q(const TabularEnvironment& env, const ScheduleSet& schedules, DiscountFactor gamma,
                           Index v, Index l, std::uint64_t seed, const RunOptions& options) {
  schedules.validate();
  if (v < 1 || l < 1) throw std::invalid_argument("trajectory length and visit threshold must be positive");
  const Index S = env.num_states();
  const Index A = env.num_actions();
  check_probes(options, S, A);

  SimpleQResult result;
  result.log.labels = {"simple"};
  result.log.metadata["seed"] = std::to_string(seed);
  RngStream common(derive_seed(seed, 0));
  RngStream stream(derive_seed(seed, 1));
  std::vector<QTable> q(1, QTable(S, A));
  VisitTracker visits(S, A, v);
  Recorder recorder(result.log, options, 1);
  const Vector w = Vector::Ones(1);

  const std::size_t budget = options.fixed_iterations > 0 ? options.fixed_iterations : options.max_iterations;
  std::size_t t = 0;
  bool done = false;
  while (!done) {
    Index s = env.reset(common);
    for (Index k = 0; k < l; ++k) {
      if (t >= budget) {
        done = true;
        break;
      }
      const Index a = epsilon_greedy_action(q[0], s, schedules.epsilon(0, t), stream);
      const auto step = env.step(s, a, stream);
      q_update(q[0], s, a, step.next_state, step.cost, schedules.alpha(t), gamma.value());
      visits.add(s, a);
      s = step.next_state;
      recorder.record(t, 0.0, w, q[0], q);
      ++t;
    }
    if (options.fixed_iterations > 0) {
      result.complete = t >= options.fixed_iterations;
    } else if (visits.satisfied()) {
      result.complete = true;
      done = true;
    }
  }
  result.iterations = t;
  result.policy = greedy_policy_from_q(q[0]);
  result.q = std::move(q[0]);
  return result;
}

namespace {

Policy greedy_from_values(const TransitionTensor& P, const Matrix& costs, const ValueFunction& v, double gamma) {
  Matrix q(costs.rows(), costs.cols());
  for (Index a = 0; a < P.num_actions(); ++a)
    q.col(static_cast<Eigen::Index>(a)) = costs.col(static_cast<Eigen::Index>(a)) + gamma * P.action_matrix(a) * v;
  return greedy_policy_from_q(QTable(std::move(q)));
}

}  // namespace

ViEnsembleResult run_vi_ensemble(const TabularEnvironment& original, const SamplingConfig& cfg,
                                 const ScheduleSet& schedules, DiscountFactor gamma, std::uint64_t seed,
                                 const ViEnsembleOptions& options) {
  cfg.validate();
  schedules.validate();
  if (options.rebuild_every < 1) throw std::invalid_argument("rebuild interval must be positive");
  const Index S = original.num_states();
  const Index A = original.num_actions();
  const auto orders = cfg.resolved_orders();
  const std::size_t K = orders.size();
  const double g = gamma.value();

  ViEnsembleResult result;
  for (unsigned n : orders) result.log.labels.push_back("n" + std::to_string(n));
  result.log.metadata["seed"] = std::to_string(seed);

  RngStream rng(derive_seed(seed, 0));
  std::vector<CountMatrix> counts(A, CountMatrix::Zero(S, S));
  Matrix cost_sum = Matrix::Zero(S, A);
  Matrix cost_n = Matrix::Zero(S, A);
  VisitTracker visits(S, A, cfg.min_transition_visits);
  const double prior = 1.0 / static_cast<double>(S);

  result.v_it = ValueFunction::Zero(S);
  result.env_values.assign(K, ValueFunction());
  result.weights = Vector::Constant(static_cast<Eigen::Index>(K), 1.0 / static_cast<double>(K));
  TransitionTensor p_hat;
  Matrix c_hat;

  const std::size_t budget = options.iterations > 0 ? options.iterations : options.max_iterations;
  std::size_t it = 0;
  for (; it < budget; ++it) {
    Index s = original.reset(rng);
    for (Index k = 0; k < cfg.trajectory_length; ++k) {
      const Index a = rng.uniform_index(A);
      const auto step = original.step(s, a, rng);
      ++counts[a](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(step.next_state));
      cost_sum(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) += step.cost;
      cost_n(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) += 1.0;
      visits.add(s, a);
      s = step.next_state;
    }

    if (it % options.rebuild_every == 0) {
      if (options.perfect_model) {
        p_hat = *options.perfect_model;
        c_hat = original.costs().expected();
      } else {
        p_hat = normalize_counts(counts, prior);
        c_hat = original.costs().expected();
        for (Eigen::Index i = 0; i < c_hat.rows(); ++i)
          for (Eigen::Index a = 0; a < c_hat.cols(); ++a)
            if (cost_n(i, a) > 0) c_hat(i, a) = cost_sum(i, a) / cost_n(i, a);
      }
      const auto costs = CostModel::from_expected(c_hat);
      const auto envs = build_multiscale_envs(p_hat, costs, orders);
      for (std::size_t n = 0; n < K; ++n) {
        const ValueFunction* warm = result.env_values[n].size() ? &result.env_values[n] : nullptr;
        result.env_values[n] = value_iteration(envs[n].ptt(), costs, gamma, options.vi_tolerance, 1'000'000, warm).values;
      }
      Vector raw(static_cast<Eigen::Index>(K));
      for (std::size_t n = 0; n < K; ++n)
        raw(static_cast<Eigen::Index>(n)) = -(result.env_values[0] - result.env_values[n]).norm();
      result.weights = softmax(raw);
    }

    const double u = schedules.update_ratio(it);
    ValueFunction blend = ValueFunction::Zero(S);
    for (std::size_t n = 0; n < K; ++n) blend += result.weights(static_cast<Eigen::Index>(n)) * result.env_values[n];
    result.v_it = u * result.v_it + (1.0 - u) * blend;

    MetricsRow row;
    row.t = it;
    row.u = u;
    row.weights.assign(result.weights.data(), result.weights.data() + result.weights.size());
    if (const auto& ref = options.reference) {
      row.ape_ensemble = ape(ref->pi_star, greedy_from_values(p_hat, c_hat, result.v_it, g), ref->q_star,
                             options.ape_tolerance);
      for (const auto& vn : result.env_values)
        row.ape_learners.push_back(
            ape(ref->pi_star, greedy_from_values(p_hat, c_hat, vn, g), ref->q_star, options.ape_tolerance));
    }
    result.log.rows.push_back(std::move(row));

    if (options.iterations == 0 && visits.satisfied()) {
      result.complete = true;
      ++it;
      break;
    }
  }
  if (options.iterations > 0) result.complete = it >= options.iterations;
  result.iterations = it;
  result.policy = greedy_from_values(p_hat, c_hat, result.v_it, g);
  return result;
}

}  // namespace nhop
