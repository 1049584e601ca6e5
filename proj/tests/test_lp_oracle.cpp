#include <gtest/gtest.h>

#include "gsot/lp_oracle.hpp"
#include "gsot/transport.hpp"
#include "oracles.hpp"

using namespace gsot;

namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace

TEST(ExactTransport, ZeroCostMatching) {
  const Histogram half{0.5, 0.5};
  const auto sol = exact_transport(CostMatrix(mat2(0, 1, 1, 0)), half, half);
  EXPECT_EQ(sol.value, 0.0);
  EXPECT_TRUE(sol.plan.isApprox(Matrix(Matrix::Identity(2, 2) / 2)));
}

TEST(ExactTransport, TwoByTwoVertex) {
  const auto sol = exact_transport(CostMatrix(mat2(0, 1, 1, 0)), Histogram{0.7, 0.3}, Histogram{0.4, 0.6});
  EXPECT_NEAR(sol.value, 0.3, 1e-15);
  EXPECT_LE((sol.plan - mat2(0.4, 0.3, 0, 0.3)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ExactTransport, SingleCell) {
  const auto sol = exact_transport(CostMatrix(Matrix::Constant(1, 1, 2.5)), Histogram{1.0}, Histogram{1.0});
  EXPECT_EQ(sol.value, 2.5);
  EXPECT_EQ(sol.nonzeros, 1);
}

TEST(ExactTransport, MatchesVertexEnumeration) {
  auto gen = oracle::rng(71);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = trial % 2 ? 4 : 3, m = trial % 3 ? 4 : 3;
    const CostMatrix cost = oracle::random_cost(gen, n, m);
    const Histogram p = oracle::random_histogram(gen, n), q = oracle::random_histogram(gen, m);
    const auto sol = exact_transport(cost, p, q);
    EXPECT_NEAR(sol.value, oracle::enumerate_vertices(cost.matrix(), p.values(), q.values()), 1e-12) << trial;
  }
}

TEST(ExactTransport, RationalInstanceMatchesEnumeration) {
  // Entries on a coarse grid create ties and degenerate bases.
  auto gen = oracle::rng(72);
  std::uniform_int_distribution<int> pick(0, 4);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix c(4, 4);
    for (Index k = 0; k < 16; ++k) c.data()[k] = pick(gen);
    const Histogram p{0.25, 0.25, 0.25, 0.25}, q{0.5, 0.25, 0.125, 0.125};
    const auto sol = exact_transport(CostMatrix(c), p, q);
    EXPECT_NEAR(sol.value, oracle::enumerate_vertices(c, p.values(), q.values()), 1e-12) << trial;
  }
}

TEST(ExactTransport, PlanIsFeasibleVertex) {
  auto gen = oracle::rng(73);
  for (int trial = 0; trial < 20; ++trial) {
    const CostMatrix cost = oracle::random_cost(gen, 7, 5);
    const Histogram p = oracle::random_histogram(gen, 7), q = oracle::random_histogram(gen, 5);
    const auto sol = exact_transport(cost, p, q);
    EXPECT_LE((sol.plan.rowwise().sum() - p.values()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((sol.plan.colwise().sum().transpose() - q.values()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(sol.nonzeros, 7 + 5 - 1);
    EXPECT_NEAR(sol.value, transport_cost(sol.plan, cost), 1e-15);
  }
}

TEST(ExactTransport, SymmetricMetricProperties) {
  auto gen = oracle::rng(74);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix pts = oracle::uniform_matrix(gen, 6, 2, 0.0, 1.0);
    Matrix c(6, 6);
    for (Index i = 0; i < 6; ++i)
      for (Index j = 0; j < 6; ++j) c(i, j) = (pts.row(i) - pts.row(j)).norm();
    const CostMatrix cost(c);
    const Histogram p = oracle::random_histogram(gen, 6), q = oracle::random_histogram(gen, 6);
    EXPECT_NEAR(exact_transport(cost, p, p).value, 0.0, 1e-15);
    EXPECT_NEAR(exact_transport(cost, p, q).value, exact_transport(cost, q, p).value, 1e-12);
  }
}

TEST(ExactTransport, LowerBoundsRegularizedPlans) {
  auto gen = oracle::rng(75);
  for (const auto& reg : {RegularizerSpec::entropic(0.1), RegularizerSpec::quadratic(0.1),
                          RegularizerSpec::tsallis(0.1, 0.5), RegularizerSpec::tsallis(0.1, 2.0)}) {
    const CostMatrix cost = oracle::random_cost(gen, 6, 6);
    const Histogram p = oracle::random_histogram(gen, 6), q = oracle::random_histogram(gen, 6);
    SolverConfig cfg;
    cfg.tol = 1e-12;
    const auto r = solve_transport(reg, cost, p, q, cfg);
    ASSERT_TRUE(r.converged) << reg.name();
    EXPECT_LE(exact_transport(cost, p, q).value, transport_cost(r.plan, cost) + 1e-10) << reg.name();
  }
}

TEST(ExactTransport, Limits) {
  const Histogram p(Vector::Constant(70, 1.0 / 70));
  try {
    exact_transport(CostMatrix(Matrix::Zero(70, 70)), p, p);
    FAIL() << "expected size limit";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::SizeLimit);
  }
  auto gen = oracle::rng(76);
  const CostMatrix cost = oracle::random_cost(gen, 10, 10);
  const Histogram a = oracle::random_histogram(gen, 10), b = oracle::random_histogram(gen, 10);
  ExactOptions opts;
  opts.max_pivots = 1;
  try {
    exact_transport(cost, a, b, opts);
    FAIL() << "expected pivot limit";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::PivotLimit);
  }
  EXPECT_THROW(exact_transport(cost, Histogram{1.0}, b), Error);
}
