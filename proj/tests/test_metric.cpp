#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "leafsolve/fixtures.hpp"
#include "leafsolve/metric.hpp"
#include "support.hpp"

using namespace leafsolve;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Eigen::MatrixXd mat2(double a, double b, double c, double d) {
  Eigen::MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

const Eigen::VectorXd kEquator = vec({kPi / 2, 0});

RectGrid sphere_grid() { return RectGrid::centered(kEquator, 0.05, 11); }

// Sphere with Gamma^u_vv shifted by delta.
BundleConnection perturbed_sphere(double delta) {
  auto s = fixtures::round_sphere();
  std::vector<Expr> gamma;
  for (int a = 0; a < 2; ++a) {
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) gamma.push_back(s.christoffel(a, i, j));
    }
  }
  gamma[(0 * 2 + 1) * 2 + 1] = gamma[(0 * 2 + 1) * 2 + 1] + delta;
  return BundleConnection::from_christoffel(s.base_vars(), gamma, s.domain());
}

}  // namespace

TEST(MetricSeed, Validation) {
  EXPECT_THROW(MetricSeed::make(vec({0, 0}), mat2(1, 0.1, 0, 1)), DimensionError);
  EXPECT_THROW(MetricSeed::make(vec({0, 0}), mat2(1, 1, 1, 1)), DimensionError);
  EXPECT_THROW(MetricSeed::make(vec({0, 0, 0}), mat2(1, 0, 0, 1)), DimensionError);
  auto s = MetricSeed::make(vec({0, 0}), mat2(1, 0, 0, -2));
  EXPECT_EQ(s.signature, (Signature{1, 1}));
  EXPECT_EQ(MetricSeed::make(vec({0, 0}), mat2(1e-8, 0, 0, 1e-8)).signature, (Signature{2, 0}));
}

TEST(Hypothesis, FlatAndSphere) {
  auto flat = check_antisymmetry_hypothesis(fixtures::flat({"a", "b"}), MetricSeed::make(vec({0, 0}), mat2(2, 1, 1, -1)));
  EXPECT_TRUE(flat.pass);
  EXPECT_EQ(flat.residual, 0.0);
  auto s = fixtures::round_sphere();
  auto rep = check_antisymmetry_hypothesis(s, MetricSeed::make(kEquator, Eigen::MatrixXd::Identity(2, 2)));
  EXPECT_TRUE(rep.pass);
  EXPECT_LT(rep.residual, 1e-7);
  EXPECT_EQ(rep.samples, 8u * 5u);
}

// g-antisymmetric operators are traceless, so trace(R) = 1 forces failure
// for any g0: for g0 = I the residual of A = [[1, 0], [0, 0]] is 2.
TEST(Hypothesis, TraceObstructedFails) {
  auto c = fixtures::trace_obstructed();
  for (const auto& g0 : {mat2(1, 0, 0, 1), mat2(2, 0.5, 0.5, 1), mat2(1, 0, 0, -1)}) {
    auto rep = check_antisymmetry_hypothesis(c, MetricSeed::make(vec({0, 0}), g0));
    EXPECT_FALSE(rep.pass);
    EXPECT_GT(rep.residual, 1e-2);
  }
  auto rep = check_antisymmetry_hypothesis(c, MetricSeed::make(vec({0, 0}), Eigen::MatrixXd::Identity(2, 2)));
  EXPECT_NEAR(rep.residual, 2.0, 0.5);
}

TEST(Hypothesis, RejectsTorsion) {
  std::vector<Expr> gamma(8, Expr(0.0));
  gamma[(0 * 2 + 0) * 2 + 1] = 1.0;
  auto c = BundleConnection::from_christoffel({"a", "b"}, gamma, Box::unbounded(2));
  auto seed = MetricSeed::make(vec({0, 0}), Eigen::MatrixXd::Identity(2, 2));
  EXPECT_THROW(check_antisymmetry_hypothesis(c, seed), PreconditionError);
  EXPECT_THROW(recover_metric(c, seed, RectGrid::centered(vec({0, 0}), 0.1, 3)), PreconditionError);
}

TEST(Recover, FlatIsConstant) {
  Eigen::MatrixXd g0 = mat2(2, 0.5, 0.5, -1);
  auto mg = recover_metric(fixtures::flat({"a", "b"}), MetricSeed::make(vec({0.1, 0.2}), g0),
                           RectGrid::centered(vec({0.1, 0.2}), 0.5, 7));
  EXPECT_EQ(mg.unreachable(), 0u);
  for (const auto& g : mg.g) EXPECT_LT((g - g0).lpNorm<Eigen::Infinity>(), 1e-12);
  EXPECT_LT(mg.max_nabla_g(true), 1e-12);
  EXPECT_EQ(mg.signature_mismatches, 0u);
}

TEST(Recover, SphereMatchesRoundMetric) {
  auto s = fixtures::round_sphere();
  auto mg = recover_metric(s, MetricSeed::make(kEquator, Eigen::MatrixXd::Identity(2, 2)), sphere_grid());
  ASSERT_EQ(mg.unreachable(), 0u);
  const long anchor = mg.grid.find_node(kEquator);
  EXPECT_EQ(mg.g[static_cast<std::size_t>(anchor)], Eigen::MatrixXd::Identity(2, 2));
  double worst = 0, asym = 0;
  for (std::size_t i = 0; i < mg.grid.size(); ++i) {
    worst = std::max(worst, (mg.g[i] - fixtures::round_sphere_metric(1, mg.grid.point(i))).lpNorm<Eigen::Infinity>());
    asym = std::max(asym, (mg.g[i] - mg.g[i].transpose()).lpNorm<Eigen::Infinity>());
  }
  EXPECT_LT(worst, 1e-6);
  EXPECT_LT(asym, 1e-10);
  auto rep = verify_levi_civita(s, mg, 1e-5);
  EXPECT_TRUE(rep.pass) << rep.max_nabla_g;
  EXPECT_EQ(rep.max_torsion, 0.0);
}

TEST(Recover, HomothetyAndLinearity) {
  auto s = fixtures::round_sphere();
  auto grid = RectGrid::centered(kEquator, 0.1, 5);
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(2, 2), B = mat2(1, 0.3, 0.3, -2);
  auto ga = recover_metric(s, MetricSeed::make(kEquator, A), grid);
  auto g4 = recover_metric(s, MetricSeed::make(kEquator, 4 * A), grid);
  MetricOptions o;
  o.override_hypothesis = true;  // B is not the round metric
  auto gb = recover_metric(s, MetricSeed::make(kEquator, B), grid, o);
  auto gab = recover_metric(s, MetricSeed::make(kEquator, A + B), grid, o);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_LT((g4.g[i] - 4 * fixtures::round_sphere_metric(1, grid.point(i))).lpNorm<Eigen::Infinity>(), 4e-6);
    EXPECT_LT((ga.g[i] + gb.g[i] - gab.g[i]).lpNorm<Eigen::Infinity>(), 1e-10);
  }
}

// The recovered metric is parallel along the sampling rays.
TEST(Recover, ParallelAlongRays) {
  auto s = fixtures::round_sphere();
  Eigen::MatrixXd g0 = 2 * Eigen::MatrixXd::Identity(2, 2);
  auto grid = RectGrid::centered(kEquator, 0.1, 5);
  auto mg = recover_metric(s, MetricSeed::make(kEquator, g0), grid);
  auto spray = geodesic_spray(s);
  for (std::size_t i : {0u, 7u, 24u}) {
    auto gt = geodesic_with_transport(s, kEquator, log_map(spray, kEquator, grid.point(i)), 1.0, 1e-3);
    EXPECT_LT((gt.P.transpose() * mg.g[i] * gt.P - g0).lpNorm<Eigen::Infinity>(), 1e-8);
  }
}

TEST(Recover, LorentzianSignatureIsConstant) {
  auto s = fixtures::round_sphere();
  MetricOptions o;
  o.override_hypothesis = true;
  auto mg = recover_metric(s, MetricSeed::make(kEquator, mat2(1, 0, 0, -1)), RectGrid::centered(kEquator, 0.2, 5), o);
  EXPECT_EQ(mg.signature_mismatches, 0u);
}

TEST(Recover, TraceObstructedNeedsOverride) {
  auto c = fixtures::trace_obstructed();
  auto seed = MetricSeed::make(vec({0, 0}), Eigen::MatrixXd::Identity(2, 2));
  auto grid = RectGrid::centered(vec({0, 0}), 0.3, 11);
  EXPECT_THROW(recover_metric(c, seed, grid), PreconditionError);
  MetricOptions o;
  o.override_hypothesis = true;
  auto mg = recover_metric(c, seed, grid, o);
  EXPECT_EQ(mg.unreachable(), 0u);
  EXPECT_GT(mg.max_hypothesis_residual(), 1e-2);
  EXPECT_GT(mg.max_nabla_g(), 1e-2);
}

TEST(Recover, AnchorMustBeNode) {
  EXPECT_THROW(recover_metric(fixtures::flat({"a", "b"}), MetricSeed::make(vec({0.01, 0}), Eigen::MatrixXd::Identity(2, 2)),
                              RectGrid::centered(vec({0, 0}), 0.1, 3)),
               DimensionError);
}

TEST(LeviCivita, PerturbedConnectionFails) {
  auto mg = recover_metric(fixtures::round_sphere(), MetricSeed::make(kEquator, Eigen::MatrixXd::Identity(2, 2)),
                           sphere_grid());
  auto rep = verify_levi_civita(perturbed_sphere(0.1), mg, 1e-5);
  EXPECT_FALSE(rep.pass);
  EXPECT_GE(rep.max_nabla_g, 0.05);
  auto flat = recover_metric(fixtures::flat({"a", "b"}), MetricSeed::make(vec({0, 0}), mat2(1, 0, 0, 3)),
                             RectGrid::centered(vec({0, 0}), 0.2, 5));
  EXPECT_TRUE(verify_levi_civita(fixtures::flat({"a", "b"}), flat, 1e-12).pass);
}

// Where the connection is Levi-Civita for g, curvature is g-antisymmetric
// grid-wide within ten times the compatibility residual.
TEST(LeviCivita, CurvatureAntisymmetryFollows) {
  auto s = fixtures::round_sphere();
  auto mg = recover_metric(s, MetricSeed::make(kEquator, Eigen::MatrixXd::Identity(2, 2)), sphere_grid());
  auto R = curvature(s);
  double worst = 0;
  for (std::size_t i = 0; i < mg.grid.size(); ++i) {
    auto vals = R.evaluate(mg.grid.point(i));
    worst = std::max(worst, antisymmetry_residual(mg.g[i], reshape(vals.data() + 4, 2, 2)));
  }
  EXPECT_LT(worst, 10 * mg.max_nabla_g(true));
}

TEST(HigherOrder, FlatSphereAndTrace) {
  auto flat = higher_order_metric_check(fixtures::flat({"a", "b"}), MetricSeed::make(vec({0, 0}), mat2(1, 0, 0, -1)), 3);
  ASSERT_EQ(flat.orders.size(), 4u);
  for (const auto& o : flat.orders) EXPECT_EQ(o.residual, 0.0);
  EXPECT_TRUE(flat.pass);
  auto s = higher_order_metric_check(fixtures::round_sphere(), MetricSeed::make(kEquator, Eigen::MatrixXd::Identity(2, 2)), 4);
  ASSERT_EQ(s.orders.size(), 5u);
  for (const auto& o : s.orders) EXPECT_LT(o.residual, 1e-8) << o.order;
  EXPECT_TRUE(s.pass);
  auto t = higher_order_metric_check(fixtures::trace_obstructed(), MetricSeed::make(vec({0, 0}), Eigen::MatrixXd::Identity(2, 2)), 2);
  EXPECT_FALSE(t.pass);
  EXPECT_GT(t.orders[0].residual, 1.0);
}

TEST(HigherOrder, BudgetExceededIsReported) {
  auto rep = higher_order_metric_check(fixtures::trace_obstructed(), MetricSeed::make(vec({0, 0}), Eigen::MatrixXd::Identity(2, 2)),
                                       4, 1e-8, 10);
  EXPECT_TRUE(rep.budget_exceeded);
  EXPECT_FALSE(rep.pass);
  EXPECT_LT(rep.orders.size(), 5u);
}
