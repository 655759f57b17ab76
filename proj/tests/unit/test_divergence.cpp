#include "nhop/divergence.hpp"
#include "nhop/schedules.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace nhop;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

// Direct transcription of the base-2 definition, no clamping or shortcuts.
double jsd_reference(const std::vector<double>& p, const std::vector<double>& q) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = (p[i] + q[i]) / 2;
    if (p[i] > 0) acc += p[i] * std::log(p[i] / m) / std::log(2.0);
    if (q[i] > 0) acc += q[i] * std::log(q[i] / m) / std::log(2.0);
  }
  return acc / 2;
}

}  // namespace

TEST(QToProbabilities, WorkedExample) {
  const Vector p = q_to_probabilities(vec({1, 1.4, 0.8, 2}));
  const double expected[] = {0.31, 0.21, 0.37, 0.11};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(p(i), expected[i], 0.005) << i;
}

TEST(QToProbabilities, EqualRowIsUniform) {
  const Vector p = q_to_probabilities(Vector::Constant(5, 3.3));
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(p(i), 0.2, 1e-15);
}

TEST(QToProbabilities, ShiftInvariant) {
  const Vector q = vec({0.3, -1.2, 4.0});
  const Vector a = q_to_probabilities(q);
  const Vector b = q_to_probabilities((q.array() + 17.5).matrix());
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(QToProbabilities, LargeValuesDoNotOverflow) {
  const Vector p = q_to_probabilities(vec({2000, 2001, 1999}));
  EXPECT_TRUE(p.allFinite());
  EXPECT_NEAR(p.sum(), 1.0, 1e-15);
  EXPECT_GT(p(2), p(0));
}

TEST(Softmax, MatchesClosedForm) {
  const Vector w = softmax(vec({1, 0}));
  const double e = std::exp(1.0);
  EXPECT_NEAR(w(0), e / (e + 1), 1e-15);
  EXPECT_NEAR(w(1), 1 / (e + 1), 1e-15);
}

TEST(Jsd, SelfIsZero) {
  const Vector p = vec({0.2, 0.5, 0.3});
  EXPECT_EQ(jsd(p, p), 0.0);
}

TEST(Jsd, DisjointIsOne) { EXPECT_DOUBLE_EQ(jsd(vec({1, 0}), vec({0, 1})), 1.0); }

TEST(Jsd, HalfAgainstPointMass) {
  EXPECT_NEAR(jsd(vec({0.5, 0.5}), vec({1, 0})), 0.31127812445913283, 1e-12);
  EXPECT_NEAR(jsd(vec({0.5, 0.5}), vec({1, 0})), jsd_reference({0.5, 0.5}, {1, 0}), 1e-14);
}

TEST(Jsd, SymmetricAndBounded) {
  RngStream rng(3);
  for (int k = 0; k < 200; ++k) {
    Vector p(4), q(4);
    for (int i = 0; i < 4; ++i) {
      p(i) = rng.uniform01() < 0.2 ? 0.0 : rng.uniform01();
      q(i) = rng.uniform01();
    }
    if (p.sum() == 0) p(0) = 1;
    p /= p.sum();
    q /= q.sum();
    const double d = jsd(p, q);
    EXPECT_DOUBLE_EQ(d, jsd(q, p));
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
    EXPECT_NEAR(d, jsd_reference({p(0), p(1), p(2), p(3)}, {q(0), q(1), q(2), q(3)}), 1e-12);
  }
}

TEST(Jsd, RejectsBadInput) {
  EXPECT_THROW(jsd(vec({0.5, 0.5}), vec({1.0})), std::invalid_argument);
  EXPECT_THROW(jsd(vec({1.5, -0.5}), vec({0.5, 0.5})), std::invalid_argument);
}

TEST(Ajsd, IdenticalTablesZero) {
  const Matrix p = q_table_probabilities(QTable(Matrix::Random(6, 3)));
  EXPECT_EQ(ajsd(p, p), 0.0);
}

TEST(Ajsd, DisjointEverywhereIsOne) {
  Matrix p(3, 2), q(3, 2);
  p << 1, 0, 0, 1, 1, 0;
  q << 0, 1, 1, 0, 0, 1;
  EXPECT_DOUBLE_EQ(ajsd(p, q), 1.0);
}

TEST(Ajsd, MeanOfStateDivergences) {
  Matrix p(2, 2), q(2, 2);
  p << 0.3, 0.7, 0.5, 0.5;
  q << 0.3, 0.7, 1.0, 0.0;
  EXPECT_NEAR(ajsd(p, q), 0.31127812445913283 / 2, 1e-12);
}

TEST(ComputeWeights, IdenticalTablesUniform) {
  const QTable q(Matrix::Random(5, 3));
  const Vector w = compute_weights({q, q, q, q});
  for (int n = 0; n < 4; ++n) EXPECT_NEAR(w(n), 0.25, 1e-15);
}

TEST(ComputeWeights, TwoDisjointTables) {
  Matrix a(2, 2), b(2, 2);
  a << 0, 1000, 1000, 0;
  b << 1000, 0, 0, 1000;
  const Vector w = compute_weights({QTable(a), QTable(b)});
  const double e = std::exp(1.0);
  EXPECT_NEAR(w(0), e / (e + 1), 1e-12);
  EXPECT_NEAR(w(1), 1 / (e + 1), 1e-12);
  EXPECT_NEAR(w(0), 0.731, 5e-4);
}

TEST(ComputeWeights, AlwaysInsideExtremes) {
  RngStream rng(17);
  for (Index K : {2u, 3u, 4u, 6u}) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<QTable> tables;
      for (Index n = 0; n < K; ++n) {
        Matrix m(8, 3);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 50.0 * rng.uniform01();
        tables.emplace_back(m);
      }
      const Vector w = compute_weights(tables);
      EXPECT_NEAR(w.sum(), 1.0, 1e-12);
      EXPECT_GE(w.minCoeff(), weight_lower_bound(K) - 1e-15);
      EXPECT_LE(w.maxCoeff(), weight_upper_bound(K) + 1e-15);
      EXPECT_GE(w.minCoeff(), 1.0 / (std::exp(1.0) * K));
      EXPECT_LE(w.maxCoeff(), std::exp(1.0) / K);
    }
  }
}

TEST(WeightBounds, ClosedForm) {
  const double e = std::exp(1.0);
  EXPECT_NEAR(weight_lower_bound(4), 1 / (1 + 3 * e), 1e-15);
  EXPECT_NEAR(weight_upper_bound(4), e / (e + 3), 1e-15);
}

TEST(WeightTracker, MatchesFullRecomputation) {
  RngStream rng(2);
  std::vector<QTable> q(4, QTable(10, 3));
  WeightTracker tracker(q);
  for (int step = 0; step < 500; ++step) {
    const Index n = rng.uniform_index(4);
    const Index s = rng.uniform_index(10);
    q[n](s, rng.uniform_index(3)) = 5.0 * rng.uniform01();
    tracker.update_row(q, n, s);
    if (step % 50 == 0) {
      const Vector full = compute_weights(q);
      EXPECT_LT((tracker.weights() - full).cwiseAbs().maxCoeff(), 1e-12) << "step " << step;
    }
  }
}

TEST(Schedules, Alpha) {
  ScheduleSet s;
  s.c1 = 100;
  EXPECT_DOUBLE_EQ(s.alpha(0), 1.0);
  EXPECT_DOUBLE_EQ(s.alpha(100), 0.5);
}

TEST(Schedules, EpsilonDecaysToFloorPerLearner) {
  ScheduleSet s;
  s.c2 = {0.9, 0.99};
  s.c3 = 0.05;
  EXPECT_DOUBLE_EQ(s.epsilon(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(s.epsilon(0, 2), 0.81);
  EXPECT_DOUBLE_EQ(s.epsilon(0, 1000), 0.05);
  EXPECT_GT(s.epsilon(1, 50), s.epsilon(0, 50));
  EXPECT_DOUBLE_EQ(s.epsilon(7, 3), s.epsilon(1, 3));
}

TEST(Schedules, UpdateRatioFormsAreMonotoneTowardOne) {
  for (auto form : {UpdateRatioForm::kExponential, UpdateRatioForm::kHyperbolic, UpdateRatioForm::kGeometric}) {
    ScheduleSet s;
    s.u_form = form;
    s.c4 = form == UpdateRatioForm::kGeometric ? 0.999 : 500.0;
    double prev = s.update_ratio(0);
    EXPECT_GE(prev, 0.0);
    for (std::size_t t = 1; t < 100000; t += 97) {
      const double u = s.update_ratio(t);
      EXPECT_GE(u, prev);
      EXPECT_LE(u, 1.0);
      prev = u;
    }
    EXPECT_GT(s.update_ratio(10'000'000), 0.999) << to_string(form);
  }
}

TEST(Schedules, ExponentialStartsAtZero) {
  ScheduleSet s;
  s.c4 = 1000;
  EXPECT_EQ(s.update_ratio(0), 0.0);
  EXPECT_NEAR(s.update_ratio(1000), 1 - std::exp(-1.0), 1e-15);
}

TEST(Schedules, ConstantForm) {
  ScheduleSet s;
  s.u_form = UpdateRatioForm::kConstant;
  s.u_constant = 0.5;
  EXPECT_EQ(s.update_ratio(0), 0.5);
  EXPECT_EQ(s.update_ratio(123456), 0.5);
}

TEST(Schedules, Validation) {
  ScheduleSet s;
  EXPECT_NO_THROW(s.validate());
  s.c2 = {};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.u_form = UpdateRatioForm::kGeometric;
  s.c4 = 5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.c1 = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Schedules, FormNamesRoundTrip) {
  for (auto f : {UpdateRatioForm::kConstant, UpdateRatioForm::kExponential, UpdateRatioForm::kHyperbolic,
                 UpdateRatioForm::kGeometric})
    EXPECT_EQ(parse_update_ratio_form(to_string(f)), f);
  EXPECT_THROW(parse_update_ratio_form("linear"), std::invalid_argument);
}

TEST(Schedules, DefaultEpsilonBases) {
  EXPECT_EQ(default_epsilon_bases(4), (std::vector<double>{0.95, 0.97, 0.97, 0.99}));
  EXPECT_EQ(default_epsilon_bases(2), (std::vector<double>{0.95, 0.97}));
}
