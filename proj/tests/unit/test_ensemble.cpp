#include "nhop/analysis.hpp"
#include "nhop/divergence.hpp"
#include "nhop/ensemble.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

using namespace nhop;

namespace {

ScheduleSet schedules(double c1 = 100, double c4 = 1000) {
  ScheduleSet s;
  s.c1 = c1;
  s.c4 = c4;
  return s;
}

SamplingConfig sampling(Index l, Index v, std::vector<unsigned> orders) {
  SamplingConfig cfg;
  cfg.trajectory_length = l;
  cfg.min_transition_visits = v;
  cfg.num_environments = orders.size();
  cfg.orders = std::move(orders);
  return cfg;
}

Reference reference(const TabularEnvironment& env, double gamma) {
  return Reference::from(value_iteration(env.ptt(), env.costs(), DiscountFactor(gamma)));
}

}  // namespace

TEST(QUpdate, FullOverwrite) {
  QTable q(2, 2);
  q(0, 1) = 9.0;
  q_update(q, 0, 1, 1, 0.4, 1.0, 0.7);
  EXPECT_DOUBLE_EQ(q(0, 1), 0.4);
}

TEST(QUpdate, ZeroStepSizeNoChange) {
  QTable q(Matrix::Random(3, 2));
  const QTable before = q;
  q_update(q, 2, 0, 1, 5.0, 0.0, 0.9);
  EXPECT_EQ(q, before);
}

TEST(QUpdate, HandComputation) {
  Matrix m(2, 2);
  m << 0, 0, 1, 2;
  QTable q(m);
  q_update(q, 0, 0, 1, 0.5, 0.5, 0.9);
  EXPECT_NEAR(q(0, 0), 0.7, 1e-15);
}

TEST(EpsilonGreedy, ZeroEpsilonIsGreedy) {
  Matrix m(1, 4);
  m << 1, 1.4, 0.8, 2;
  const QTable q(m);
  RngStream rng(1);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(epsilon_greedy_action(q, 0, 0.0, rng), 2u);
}

TEST(EpsilonGreedy, FullExplorationUniform) {
  const QTable q(1, 4);
  RngStream rng(8);
  const int n = 100000;
  std::vector<int> hits(4, 0);
  for (int k = 0; k < n; ++k) ++hits[epsilon_greedy_action(q, 0, 1.0, rng)];
  const double sigma = std::sqrt(0.25 * 0.75 / n);
  for (int h : hits) EXPECT_NEAR(static_cast<double>(h) / n, 0.25, 3 * sigma);
}

TEST(EnsembleUpdate, FullExploitationKeepsIterate) {
  QTable q_it(Matrix::Random(3, 2));
  const QTable before = q_it;
  ensemble_update(q_it, {QTable(Matrix::Random(3, 2)), QTable(Matrix::Random(3, 2))}, Vector::Constant(2, 0.5), 1.0);
  EXPECT_EQ(q_it, before);
}

TEST(EnsembleUpdate, FullExplorationIsWeightedSum) {
  const QTable a(Matrix::Random(3, 2));
  const QTable b(Matrix::Random(3, 2));
  QTable q_it(Matrix::Random(3, 2));
  Vector w(2);
  w << 0.3, 0.7;
  ensemble_update(q_it, {a, b}, w, 0.0);
  EXPECT_LT((q_it.values() - (0.3 * a.values() + 0.7 * b.values())).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(EnsembleUpdate, UnrolledRecursion) {
  const double u = 0.6;
  std::vector<std::vector<QTable>> tables;
  std::vector<Vector> weights;
  RngStream rng(4);
  for (int i = 0; i < 3; ++i) {
    tables.push_back({QTable(Matrix::Random(2, 2)), QTable(Matrix::Random(2, 2)), QTable(Matrix::Random(2, 2))});
    Vector w(3);
    for (int n = 0; n < 3; ++n) w(n) = rng.uniform01();
    weights.push_back(w / w.sum());
  }
  QTable q_it(2, 2);
  for (int i = 0; i < 3; ++i) ensemble_update(q_it, tables[i], weights[i], u);
  Matrix expected = Matrix::Zero(2, 2);
  for (int i = 0; i < 3; ++i)
    for (int n = 0; n < 3; ++n) expected += (1 - u) * std::pow(u, 2 - i) * weights[i](n) * tables[i][n].values();
  EXPECT_LT((q_it.values() - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(EnsembleUpdate, StaysInConvexHull) {
  RngStream rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<QTable> tables{QTable(Matrix::Random(4, 3)), QTable(Matrix::Random(4, 3)), QTable(Matrix::Random(4, 3))};
    QTable q_it(Matrix::Random(4, 3));
    Matrix lo = q_it.values(), hi = q_it.values();
    for (const auto& q : tables) {
      lo = lo.cwiseMin(q.values());
      hi = hi.cwiseMax(q.values());
    }
    Vector w(3);
    for (int n = 0; n < 3; ++n) w(n) = rng.uniform01();
    ensemble_update(q_it, tables, w / w.sum(), rng.uniform01());
    EXPECT_TRUE((q_it.values().array() >= lo.array() - 1e-15).all());
    EXPECT_TRUE((q_it.values().array() <= hi.array() + 1e-15).all());
  }
}

TEST(EnsembleUpdate, WeightCountMismatchThrows) {
  QTable q_it(2, 2);
  EXPECT_THROW(ensemble_update(q_it, {QTable(2, 2)}, Vector::Ones(2), 0.5), std::invalid_argument);
}

TEST(RunNeql, SingleStateConvergesToCheapestAction) {
  Matrix c(1, 3);
  c << 0.6, 0.2, 0.9;
  const TabularEnvironment env(TransitionTensor::identity(1, 3), CostModel::from_expected(c));
  auto s = schedules();
  s.u_form = UpdateRatioForm::kConstant;
  s.u_constant = 0.5;
  RunOptions opt;
  opt.fixed_iterations = 20000;
  const double gamma = 0.5;
  const auto r = run_neql(env, sampling(5, 10, {1, 2, 3}), s, DiscountFactor(gamma), 3, opt);
  EXPECT_EQ(r.policy[0], 1u);
  EXPECT_NEAR(r.q_it(0, 1), 0.2 / (1 - gamma), 1e-2);
}

TEST(RunNeql, WeightsStayOnSimplexInsideExtremes) {
  const auto env = build_er_env({20, 2, 0.3, 5});
  RunOptions opt;
  opt.reference = reference(env, 0.95);
  const auto r = run_neql(env, sampling(10, 20, {1, 2, 3, 5}), schedules(), DiscountFactor(0.95), 1, opt);
  ASSERT_FALSE(r.log.rows.empty());
  EXPECT_LE(r.weight_stats.max_sum_deviation, 1e-9);
  EXPECT_GE(r.weight_stats.min_weight, weight_lower_bound(4));
  EXPECT_LE(r.weight_stats.max_weight, weight_upper_bound(4));
  for (std::size_t i = 0; i < r.log.rows.size(); ++i) {
    double sum = 0.0;
    for (double w : r.log.rows[i].weights) sum += w;
    EXPECT_NEAR(sum, 1.0, 1e-9);
    if (i > 0) EXPECT_GT(r.log.rows[i].t, r.log.rows[i - 1].t);
  }
}

TEST(RunNeql, SameSeedSameRun) {
  const auto env = build_er_env({15, 2, 0.3, 9});
  RunOptions opt;
  opt.reference = reference(env, 0.9);
  opt.probes = {{0, 0}, {3, 1}};
  const auto cfg = sampling(5, 10, {1, 2});
  const auto a = run_neql(env, cfg, schedules(), DiscountFactor(0.9), 42, opt);
  const auto b = run_neql(env, cfg, schedules(), DiscountFactor(0.9), 42, opt);
  EXPECT_EQ(a.q_it, b.q_it);
  EXPECT_EQ(a.log.trace.ensemble, b.log.trace.ensemble);
  EXPECT_EQ(a.iterations, b.iterations);
  const auto c = run_neql(env, cfg, schedules(), DiscountFactor(0.9), 43, opt);
  EXPECT_FALSE(a.q_it == c.q_it);
}

TEST(RunNeql, VisitRuleTerminatesOnTrajectoryBoundary) {
  const auto env = build_er_env({10, 2, 0.4, 2});
  const auto r = run_neql(env, sampling(7, 5, {1, 2}), schedules(), DiscountFactor(0.9), 1);
  EXPECT_TRUE(r.complete);
  EXPECT_EQ(r.iterations % 7, 0u);
}

TEST(RunNeql, IterationCapMarksIncomplete) {
  const auto env = build_er_env({30, 2, 0.2, 2});
  RunOptions opt;
  opt.max_iterations = 100;
  const auto r = run_neql(env, sampling(10, 40, {1, 2}), schedules(), DiscountFactor(0.9), 1, opt);
  EXPECT_FALSE(r.complete);
  EXPECT_EQ(r.iterations, 100u);
}

TEST(RunNeql, RejectsWrongFirstEnvironment) {
  const auto env = build_er_env({10, 2, 0.4, 2});
  const auto envs = build_multiscale_envs(env.ptt(), env.costs(), {2, 1});
  EXPECT_THROW(run_neql(envs, schedules(), DiscountFactor(0.9), sampling(5, 5, {1, 2}), 1), std::invalid_argument);
}

TEST(RunNeql, WeightsSettleOnSmallMdp) {
  const auto env = build_er_env({10, 2, 0.4, 3});
  RunOptions opt;
  opt.fixed_iterations = 40000;
  opt.log_every = 10;
  const auto r = run_neql(env, sampling(10, 10, {1, 2, 3}), schedules(), DiscountFactor(0.9), 2, opt);
  const auto wc = weight_convergence(r.log, 0.2, 0.01);
  EXPECT_LT(wc.final_window_change, 0.01);
  EXPECT_TRUE(wc.converged);
}

TEST(RunSimpleQ, DeterministicTwoStateMatchesDp) {
  Matrix stay = Matrix::Identity(2, 2);
  Matrix swap(2, 2);
  swap << 0, 1, 1, 0;
  Matrix c(2, 2);
  c << 1.0, 0.5, 0.2, 0.8;
  const TabularEnvironment env(TransitionTensor({stay, swap}), CostModel::from_expected(c));
  const double gamma = 0.5;
  // Q*(0, stay) = 1 + g v(0); Q*(0, swap) = .5 + g v(1); Q*(1, stay) = .2 + g v(1); Q*(1, swap) = .8 + g v(0).
  // Guess pi* = (swap, stay): v(1) = .2 / (1 - g) = .4, v(0) = .5 + g * .4 = .7.
  Matrix q_star(2, 2);
  q_star << 1 + gamma * 0.7, 0.5 + gamma * 0.4, 0.2 + gamma * 0.4, 0.8 + gamma * 0.7;
  auto s = schedules(1000);
  s.c3 = 0.3;
  RunOptions opt;
  opt.fixed_iterations = 200000;
  const auto r = run_simple_q(env, s, DiscountFactor(gamma), 10, 10, 5, opt);
  EXPECT_LT((r.q.values() - q_star).cwiseAbs().maxCoeff(), 1e-2);
  EXPECT_EQ(r.policy.action_of, (std::vector<Index>{1, 0}));
}

TEST(RunSimpleQ, MyopicLimitPicksCheapestAction) {
  const auto env = build_er_env({8, 3, 0.5, 4});
  RunOptions opt;
  opt.fixed_iterations = 30000;
  auto s = schedules();
  s.c3 = 0.2;
  const auto r = run_simple_q(env, s, DiscountFactor(1e-9), 10, 10, 1, opt);
  for (Index st = 0; st < 8; ++st) {
    Index best = 0;
    env.costs().expected().row(st).minCoeff(&best);
    EXPECT_EQ(r.policy[st], best) << "state " << st;
  }
}

TEST(RunViEnsemble, PerfectModelRecoversOptimalValues) {
  const auto env = build_er_env({12, 2, 0.3, 7});
  const auto vi = value_iteration(env.ptt(), env.costs(), DiscountFactor(0.9), 1e-10);
  ViEnsembleOptions opt;
  opt.perfect_model = &env.ptt();
  opt.iterations = 60000;
  auto s = schedules();
  s.c4 = 500;
  const auto r = run_vi_ensemble(env, sampling(10, 5, {1, 2, 3}), s, DiscountFactor(0.9), 1, opt);
  EXPECT_LT((r.env_values[0] - vi.values).cwiseAbs().maxCoeff(), 1e-6);
  ValueFunction blend = ValueFunction::Zero(12);
  for (int n = 0; n < 3; ++n) blend += r.weights(n) * r.env_values[n];
  EXPECT_LT((r.v_it - blend).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(RunViEnsemble, IdenticalEnvironmentsGiveUniformWeights) {
  // Identical rows make P idempotent, so every power is the same environment.
  Matrix row(1, 4);
  row << 0.1, 0.2, 0.3, 0.4;
  const Matrix p = row.replicate(4, 1);
  Matrix c(4, 2);
  c << 0.1, 0.9, 0.5, 0.4, 0.3, 0.3, 0.8, 0.2;
  const TabularEnvironment env(TransitionTensor({p, p}), CostModel::from_expected(c));
  ViEnsembleOptions opt;
  opt.perfect_model = &env.ptt();
  opt.iterations = 20;
  const auto r = run_vi_ensemble(env, sampling(5, 5, {1, 2, 3}), schedules(), DiscountFactor(0.9), 1, opt);
  for (int n = 0; n < 3; ++n) EXPECT_NEAR(r.weights(n), 1.0 / 3.0, 1e-9);
}

TEST(Comparison, EnsembleNotWorseThanSimpleQOnLargerGraph) {
  const auto env = build_er_env({200, 2, 0.2, 2024});
  const auto ref = reference(env, 0.95);
  std::vector<double> ape_neql, ape_simple;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunOptions opt;
    opt.log_every = 1000;
    const auto r = run_neql(env, sampling(10, 40, {1, 2, 3, 5}), schedules(), DiscountFactor(0.95), seed, opt);
    opt.fixed_iterations = r.iterations;
    const auto s = run_simple_q(env, schedules(), DiscountFactor(0.95), 40, 10, seed, opt);
    ape_neql.push_back(ape(ref.pi_star, r.policy, ref.q_star));
    ape_simple.push_back(ape(ref.pi_star, s.policy, ref.q_star));
  }
  EXPECT_LE(median(ape_neql), median(ape_simple));
}

TEST(Comparison, EnsembleBeatsValueIterationVariantAtMatchedWallClock) {
  using Clock = std::chrono::steady_clock;
  const auto env = build_er_env({100, 2, 0.2, 2024});
  const auto ref = reference(env, 0.95);
  std::vector<double> ape_neql, ape_vi;
  const auto cfg = sampling(10, 40, {1, 2, 3, 5});
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RunOptions opt;
    opt.log_every = 1000;
    const auto t0 = Clock::now();
    const auto r = run_neql(env, cfg, schedules(), DiscountFactor(0.95), seed, opt);
    const double neql_seconds = std::chrono::duration<double>(Clock::now() - t0).count();

    // size the variant's budget from a timed probe run, then spend the same wall clock
    ViEnsembleOptions probe;
    probe.iterations = 50;
    const auto t1 = Clock::now();
    run_vi_ensemble(env, cfg, schedules(), DiscountFactor(0.95), seed, probe);
    const double per_iteration = std::chrono::duration<double>(Clock::now() - t1).count() / 50.0;
    ViEnsembleOptions vo;
    vo.iterations = std::max<std::size_t>(1, static_cast<std::size_t>(neql_seconds / per_iteration));
    const auto v = run_vi_ensemble(env, cfg, schedules(), DiscountFactor(0.95), seed, vo);
    ape_neql.push_back(ape(ref.pi_star, r.policy, ref.q_star));
    ape_vi.push_back(ape(ref.pi_star, v.policy, ref.q_star));
  }
  EXPECT_LE(median(ape_neql), median(ape_vi));
}
