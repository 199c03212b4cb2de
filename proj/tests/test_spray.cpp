#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "leafsolve/fixtures.hpp"
#include "leafsolve/spray.hpp"
#include "support.hpp"

using namespace leafsolve;
using namespace leafsolve::testing;

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Spray flat_spray(int n, double half = 1.0) {
  auto xs = names("x", n);
  return Spray(xs, names("v", n), std::vector<Expr>(n, Expr(0.0)),
               Box(Eigen::VectorXd::Constant(n, -half), Eigen::VectorXd::Constant(n, half)));
}

// Quadratic-in-v spray with small random polynomial coefficients.
Spray random_spray(std::mt19937_64& rng) {
  auto xs = names("x", 2), vs = names("v", 2);
  auto X = vars(xs), V = vars(vs);
  std::vector<Expr> accel;
  for (int a = 0; a < 2; ++a) {
    Expr e = 0.0;
    for (int i = 0; i < 2; ++i) {
      for (int j = i; j < 2; ++j) e = e + 0.3 * random_polynomial(rng, X, 1, 2) * V[i] * V[j];
    }
    accel.push_back(e);
  }
  return Spray(xs, vs, accel, Box(Eigen::VectorXd::Constant(2, -3.0), Eigen::VectorXd::Constant(2, 3.0)));
}

Eigen::Vector3d ambient(const Eigen::VectorXd& x) {
  return {std::sin(x[0]) * std::cos(x[1]), std::sin(x[0]) * std::sin(x[1]), std::cos(x[0])};
}

// Chart velocity of an ambient tangent vector w at x.
Eigen::VectorXd chart_velocity(const Eigen::VectorXd& x, const Eigen::Vector3d& w) {
  Eigen::Matrix<double, 3, 2> frame;
  frame.col(0) << std::cos(x[0]) * std::cos(x[1]), std::cos(x[0]) * std::sin(x[1]), -std::sin(x[0]);
  frame.col(1) << -std::sin(x[0]) * std::sin(x[1]), std::sin(x[0]) * std::cos(x[1]), 0;
  return frame.colPivHouseholderQr().solve(w);
}

Eigen::VectorXd chart_point(const Eigen::Vector3d& p) { return vec({std::acos(p[2]), std::atan2(p[1], p[0])}); }

}  // namespace

TEST(Spray, ValidatesNames) {
  EXPECT_THROW(Spray({"x"}, {"x"}, {Expr(0.0)}, Box::unbounded(1)), DimensionError);
  EXPECT_THROW(Spray({"x"}, {"v"}, {Expr::variable("w")}, Box::unbounded(1)), DimensionError);
  EXPECT_THROW(Spray({"x"}, {"v"}, {Expr(0.0), Expr(0.0)}, Box::unbounded(1)), DimensionError);
  EXPECT_EQ(default_velocity_names({"v1", "x"}), (std::vector<std::string>{"_v1", "_v2"}));
}

TEST(GeodesicSpray, FlatAndSphere) {
  auto f = geodesic_spray(fixtures::flat({"a", "b"}));
  for (Expr e : f.acceleration()) EXPECT_TRUE(e.is_const(0.0));
  auto s = geodesic_spray(fixtures::round_sphere());
  EXPECT_EQ(s.v_vars(), (std::vector<std::string>{"v1", "v2"}));
  // u'' = sin u cos u v'^2, v'' = -2 cot u u' v'.
  Eigen::VectorXd a = s.acceleration_at(vec({1.0, 0.0}), vec({0.5, 2.0}));
  EXPECT_NEAR(a[0], std::sin(1.0) * std::cos(1.0) * 4.0, 1e-14);
  EXPECT_NEAR(a[1], -2.0 * std::cos(1.0) / std::sin(1.0) * 0.5 * 2.0, 1e-14);
  EXPECT_LT(homogeneity_defect(s), 1e-12);
}

TEST(GeodesicSpray, RejectsNonTangent) {
  std::vector<ExprMatrix> w(2, ExprMatrix(3, 3));
  BundleConnection c({"a", "b"}, w, Box::unbounded(2));
  EXPECT_THROW(geodesic_spray(c), DimensionError);
}

TEST(Homogeneity, DetectsNonQuadratic) {
  Spray s({"x"}, {"v"}, {Expr::variable("v")}, Box::unbounded(1));
  EXPECT_GT(homogeneity_defect(s), 0.1);
}

TEST(SolveSpray, EquatorIsPeriodic) {
  auto s = geodesic_spray(fixtures::round_sphere());
  auto run = solve_spray(s, vec({kPi / 2, 0}), vec({0, 1}), 2 * kPi, 1e-3);
  ASSERT_TRUE(run.completed);
  for (double t : {0.5, 2.0, 4.0}) EXPECT_NEAR(run.curve(t)[0], kPi / 2, 1e-12);
  EXPECT_NEAR(run.curve.back()[1], 2 * kPi, 1e-6);
}

TEST(SolveSpray, ZeroVelocityAndFlat) {
  auto s = geodesic_spray(fixtures::round_sphere());
  auto run = solve_spray(s, vec({1.0, 0.3}), vec({0, 0}), 1.0, 0.1);
  EXPECT_EQ(run.curve.back().head(2), vec({1.0, 0.3}));
  auto f = flat_spray(2, 5.0);
  auto fr = solve_spray(f, vec({0.1, 0.2}), vec({1, -2}), 1.5, 0.1);
  EXPECT_NEAR((fr.curve.back().head(2) - vec({1.6, -2.8})).norm(), 0.0, 1e-13);
}

TEST(SolveSpray, ChartExitReturnsPartialSolution) {
  auto f = flat_spray(1);
  auto run = solve_spray(f, vec({0.0}), vec({1.0}), 3.0, 0.1);
  EXPECT_FALSE(run.completed);
  EXPECT_NEAR(run.exit_time, 1.0, 1e-12);
  EXPECT_NEAR(run.curve.back()[0], 1.0, 1e-12);
}

// gamma_v(t s) = gamma_{s v}(t).
TEST(SolveSpray, Reparameterization) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 3; ++trial) {
    auto s = random_spray(rng);
    Eigen::VectorXd x = vec({0.2, -0.1}), v = vec({0.6, 0.4});
    auto slow = solve_spray(s, x, 0.5 * v, 1.0, 1e-3);
    auto fast = solve_spray(s, x, v, 0.5, 1e-3);
    ASSERT_TRUE(slow.completed && fast.completed);
    EXPECT_LT((slow.curve.back().head(2) - fast.curve.back().head(2)).norm(), 1e-8);
  }
}

TEST(ExpMap, BasicProperties) {
  auto s = geodesic_spray(fixtures::round_sphere());
  Eigen::VectorXd x = vec({1.2, 0.3});
  EXPECT_EQ(exp_map(s, x, vec({0, 0}), 1e-2), x);
  auto f = flat_spray(2);
  EXPECT_NEAR((exp_map(f, vec({0.1, 0.1}), vec({0.3, -0.2}), 0.1) - vec({0.4, -0.1})).norm(), 0, 1e-14);
  Eigen::MatrixXd J = finite_diff_jacobian([&](const Eigen::VectorXd& v) { return exp_map(s, x, v, 1e-3); },
                                           vec({0, 0}), 1e-5);
  EXPECT_LT((J - Eigen::MatrixXd::Identity(2, 2)).lpNorm<Eigen::Infinity>(), 1e-6);
  EXPECT_THROW(exp_map(f, vec({0, 0}), vec({2, 0}), 0.1), ChartExit);
}

// exp_x(s v) agrees with the solution from (x, v) at time s.
TEST(ExpMap, AgreesWithSolutionAtTimeS) {
  auto s = geodesic_spray(fixtures::round_sphere());
  Eigen::VectorXd x = vec({1.0, 0.2}), v = vec({0.3, 0.7});
  auto run = solve_spray(s, x, v, 1.0, 1e-3);
  for (double t : {0.25, 0.5, 1.0}) {
    EXPECT_LT((exp_map(s, x, t * v, 1e-3) - run.curve(t).head(2)).norm(), 1e-8) << t;
  }
}

TEST(LogMap, RoundTripsOnSphere) {
  auto s = geodesic_spray(fixtures::round_sphere());
  Eigen::VectorXd x = vec({kPi / 2, 0});
  EXPECT_EQ(log_map(s, x, x), vec({0, 0}));
  std::mt19937_64 rng(22);
  for (int k = 0; k < 10; ++k) {
    Eigen::VectorXd v = vec({uniform(rng, -0.8, 0.8), uniform(rng, -0.8, 0.8)});
    Eigen::VectorXd target = exp_map(s, x, v, 1e-3);
    Eigen::VectorXd w = log_map(s, x, target);
    EXPECT_LT((exp_map(s, x, w, 1e-3) - target).norm(), 1e-9);
    EXPECT_LT((w - v).norm(), 1e-8);
  }
}

TEST(LogMap, FlatNeedsNoIteration) {
  auto f = flat_spray(3);
  LogOptions o;
  o.max_iter = 0;
  EXPECT_NEAR((log_map(f, vec({0, 0, 0}), vec({0.1, 0.2, 0.3}), o) - vec({0.1, 0.2, 0.3})).norm(), 0, 1e-15);
}

TEST(LogMap, ReportsFailure) {
  auto s = geodesic_spray(fixtures::round_sphere());
  LogOptions o;
  o.max_iter = 0;
  EXPECT_THROW(log_map(s, vec({kPi / 2, 0}), vec({1.0, 0.5}), o), ConvergenceError);
}

TEST(NormalRadius, FlatLimitedByChart) {
  auto nr = estimate_normal_radius(flat_spray(2), vec({0, 0}));
  EXPECT_TRUE(nr.certified);
  EXPECT_GE(nr.radius, 0.9);
  auto near = estimate_normal_radius(flat_spray(2), vec({0.9, 0}));
  EXPECT_NEAR(near.radius, 0.1, 1e-6);
}

TEST(NormalRadius, SphereBelowConjugateDistance) {
  auto nr = estimate_normal_radius(geodesic_spray(fixtures::round_sphere()), vec({kPi / 2, 0}));
  EXPECT_TRUE(nr.certified);
  EXPECT_GT(nr.radius, 0.1);
  EXPECT_LT(nr.radius, kPi);
}

TEST(NormalRadius, LogInvertsExpInsideRadius) {
  auto s = geodesic_spray(fixtures::round_sphere());
  Eigen::VectorXd x = vec({1.3, 0.4});
  auto nr = estimate_normal_radius(s, x);
  std::mt19937_64 rng(23);
  for (int k = 0; k < 5; ++k) {
    Eigen::VectorXd v = vec({uniform(rng, -1, 1), uniform(rng, -1, 1)});
    v *= 0.9 * nr.radius / v.norm() * uniform(rng, 0.1, 1.0);
    EXPECT_LT((log_map(s, x, exp_map(s, x, v, 1e-3)) - v).norm(), 1e-8);
  }
}

TEST(Piecewise, SingleLegMatchesSolve) {
  auto s = geodesic_spray(fixtures::round_sphere());
  PiecewisePath p{vec({1.0, 0.0}), {{Eigen::VectorXd(), vec({0.2, 0.5}), 1.3}}};
  auto c = piecewise_solve(s, p, 1e-2);
  auto run = solve_spray(s, vec({1.0, 0.0}), vec({0.2, 0.5}), 1.3, 1e-2);
  EXPECT_EQ(c.back(), run.curve.back());
}

TEST(Piecewise, FlatBackAndForth) {
  auto f = flat_spray(2);
  PiecewisePath p{vec({0.1, 0.1}), {{Eigen::VectorXd(), vec({0.5, 0.2}), 1.0}, {Eigen::VectorXd(), vec({-0.5, -0.2}), 1.0}}};
  auto c = piecewise_solve(f, p, 0.1);
  EXPECT_NEAR((c.back().head(2) - vec({0.1, 0.1})).norm(), 0, 1e-14);
  EXPECT_NEAR(c.t1(), 2.0, 1e-14);
  EXPECT_NEAR(c(0.5)[2], 0.5, 1e-14);
  EXPECT_NEAR(c(1.5)[2], -0.5, 1e-14);
}

TEST(Piecewise, RejectsBadLegs) {
  auto f = flat_spray(2);
  PiecewisePath zero{vec({0, 0}), {{Eigen::VectorXd(), vec({1, 0}), 0.0}}};
  EXPECT_THROW(piecewise_solve(f, zero, 0.1), DimensionError);
  PiecewisePath gap{vec({0, 0}), {{Eigen::VectorXd(), vec({0.1, 0}), 1.0}, {vec({0.5, 0}), vec({0.1, 0}), 1.0}}};
  EXPECT_THROW(piecewise_solve(f, gap, 0.1), DimensionError);
  PiecewisePath out{vec({0, 0}), {{Eigen::VectorXd(), vec({0.7, 0}), 1.0}, {Eigen::VectorXd(), vec({0.7, 0}), 1.0}}};
  try {
    piecewise_solve(f, out, 0.1);
    FAIL() << "expected ChartExit";
  } catch (const ChartExit& e) {
    // x = 0.7 t leaves [-1, 1] at t = 1/0.7; the last accepted step is t = 1.4.
    EXPECT_NEAR(e.last_valid_t(), 1.4, 1e-12);
  }
}

// Octant triangle with orthonormal vertices A, B, C placed away from the
// chart poles; each leg is a quarter great circle.
TEST(Piecewise, SphereOctantTriangleCloses) {
  auto s = geodesic_spray(fixtures::round_sphere());
  Eigen::Vector3d zrow(0.6, -0.48, 0.64);
  Eigen::Vector3d r0 = zrow.unitOrthogonal();
  Eigen::Vector3d r1 = zrow.cross(r0);
  Eigen::Matrix3d M;
  M.row(0) = r0;
  M.row(1) = r1;
  M.row(2) = zrow;
  const Eigen::Vector3d A = M.col(0), B = M.col(1), C = M.col(2);
  const Eigen::VectorXd a = chart_point(A), b = chart_point(B), c = chart_point(C);
  PiecewisePath p{a, {{Eigen::VectorXd(), chart_velocity(a, B), kPi / 2},
                      {Eigen::VectorXd(), chart_velocity(b, C), kPi / 2},
                      {Eigen::VectorXd(), chart_velocity(c, A), kPi / 2}}};
  auto curve = piecewise_solve(s, p, 1e-3);
  EXPECT_LT((ambient(curve(kPi / 2).head(2)) - B).norm(), 1e-6);
  EXPECT_LT((ambient(curve(kPi).head(2)) - C).norm(), 1e-6);
  EXPECT_LT((ambient(curve.back().head(2)) - A).norm(), 1e-6);
}

// Geodesics are autoparallel: the symbolic acceleration agrees with a finite
// difference of the computed velocity.
TEST(GeodesicSpray, CurveIsAutoparallel) {
  auto s = geodesic_spray(fixtures::round_sphere());
  auto run = solve_spray(s, vec({1.1, 0.0}), vec({0.4, 0.9}), 1.0, 1e-3);
  for (double t : {0.2, 0.5, 0.8}) {
    const double h = 1e-4;
    Eigen::VectorXd acc = (run.curve(t + h).tail(2) - run.curve(t - h).tail(2)) / (2 * h);
    Eigen::VectorXd y = run.curve(t);
    EXPECT_LT((acc - s.acceleration_at(y.head(2), y.tail(2))).norm(), 1e-6);
  }
}
