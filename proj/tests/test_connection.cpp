#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "leafsolve/connection.hpp"
#include "leafsolve/fixtures.hpp"
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

Eigen::VectorXd to_vec(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

BundleConnection random_connection(std::mt19937_64& rng, const std::vector<std::string>& base, std::size_t r,
                                   bool tangent = false) {
  auto xs = vars(base);
  std::vector<ExprMatrix> omega;
  for (std::size_t i = 0; i < base.size(); ++i) {
    ExprMatrix w(r, r);
    for (std::size_t a = 0; a < r; ++a) {
      for (std::size_t b = 0; b < r; ++b) w(a, b) = random_polynomial(rng, xs, 2, 3);
    }
    omega.push_back(w);
  }
  const auto n = static_cast<long>(base.size());
  return BundleConnection(base, omega, Box(Eigen::VectorXd::Constant(n, -2.0), Eigen::VectorXd::Constant(n, 2.0)),
                          tangent);
}

Eigen::MatrixXd curvature_at(const TensorFieldExpr& R, const Eigen::VectorXd& x, int i, int j) {
  auto vals = R.evaluate(x);
  const auto r = R.r;
  const int slots[2] = {i, j};
  return reshape(vals.data() + R.index(slots, 0, 0), r, r);
}

}  // namespace

TEST(Connection, ChristoffelLayout) {
  std::vector<std::string> xs{"x1", "x2"};
  std::vector<Expr> gamma;
  for (int k = 0; k < 8; ++k) gamma.push_back(Expr(k + 1.0));
  auto c = BundleConnection::from_christoffel(xs, gamma, Box::unbounded(2));
  EXPECT_TRUE(c.tangent());
  for (int a = 0; a < 2; ++a) {
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        EXPECT_EQ(c.christoffel(a, i, j), gamma[(a * 2 + i) * 2 + j]);
        EXPECT_EQ(c.omega(i)(a, j), gamma[(a * 2 + i) * 2 + j]);
      }
    }
  }
}

TEST(Connection, RejectsBadShapes) {
  std::vector<std::string> xs{"x1", "x2"};
  EXPECT_THROW(BundleConnection::from_christoffel(xs, std::vector<Expr>(7), Box::unbounded(2)), DimensionError);
  std::vector<ExprMatrix> w(2, ExprMatrix(2, 2));
  w[1] = ExprMatrix(3, 3);
  EXPECT_THROW(BundleConnection(xs, w, Box::unbounded(2)), DimensionError);
  std::vector<ExprMatrix> u(2, ExprMatrix(2, 2));
  u[0](0, 0) = Expr::variable("z");
  EXPECT_THROW(BundleConnection(xs, u, Box::unbounded(2)), DimensionError);
  EXPECT_THROW(BundleConnection(xs, std::vector<ExprMatrix>(2, ExprMatrix(3, 3)), Box::unbounded(2), true),
               DimensionError);
}

TEST(Connection, OmegaOutsideDomainThrows) {
  auto s = fixtures::round_sphere();
  EXPECT_THROW(s.omega_at(vec({0.0, 0.0})), OutOfDomain);
}

TEST(Curvature, UnitSphere) {
  auto s = fixtures::round_sphere();
  auto R = curvature(s);
  for (double th : {0.4, 1.0, kPi / 2, 2.5}) {
    Eigen::MatrixXd m = curvature_at(R, vec({th, 0.3}), 0, 1);
    // R(d_th, d_ph) d_ph = sin^2 th d_th, R(d_th, d_ph) d_th = -d_ph.
    EXPECT_NEAR(m(0, 1), std::sin(th) * std::sin(th), 1e-12);
    EXPECT_NEAR(m(1, 0), -1.0, 1e-12);
    EXPECT_NEAR(m(0, 0), 0.0, 1e-12);
    EXPECT_NEAR(m(1, 1), 0.0, 1e-12);
  }
}

TEST(Curvature, FlatIsZero) {
  auto R = curvature(fixtures::flat({"a", "b", "c"}));
  for (Expr e : R.comps) EXPECT_TRUE(e.is_const(0.0));
}

// R_ij s = nabla_i nabla_j s - nabla_j nabla_i s for arbitrary sections.
TEST(Curvature, MatchesCommutatorOfCovariantDerivatives) {
  std::mt19937_64 rng(11);
  auto base = names("x", 3);
  auto xs = vars(base);
  for (int trial = 0; trial < 5; ++trial) {
    auto c = random_connection(rng, base, 2);
    auto R = curvature(c);
    std::vector<Expr> s{random_transcendental(rng, xs), random_polynomial(rng, xs, 3, 4)};
    auto p = random_point(rng, 3, -1, 1);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        auto ij = covariant_derivative(c, covariant_derivative(c, s, j), i);
        auto ji = covariant_derivative(c, covariant_derivative(c, s, i), j);
        Eigen::VectorXd lhs = evaluate(ij, base, to_vec(p)) - evaluate(ji, base, to_vec(p));
        Eigen::VectorXd rhs = curvature_at(R, to_vec(p), static_cast<int>(i), static_cast<int>(j)) *
                              evaluate(s, base, to_vec(p));
        EXPECT_LT((lhs - rhs).lpNorm<Eigen::Infinity>(), 1e-9 * (1 + rhs.lpNorm<Eigen::Infinity>()));
      }
    }
  }
}

TEST(Curvature, AntisymmetricInSlots) {
  std::mt19937_64 rng(12);
  auto base = names("x", 3);
  auto c = random_connection(rng, base, 2);
  auto R = curvature(c);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          const int ij[2] = {i, j}, ji[2] = {j, i};
          EXPECT_EQ(R.comps[R.index(ij, a, b)], -R.comps[R.index(ji, a, b)]);
        }
      }
    }
  }
}

TEST(Torsion, SymmetricIsZeroAndAsymmetricIsNot) {
  auto T = torsion(fixtures::round_sphere());
  for (Expr e : T.comps) EXPECT_TRUE(e.is_const(0.0));
  std::vector<std::string> xs{"x1", "x2"};
  std::vector<Expr> gamma(8, Expr(0.0));
  gamma[(0 * 2 + 0) * 2 + 1] = Expr::variable("x2");  // Gamma^1_12 = x2, Gamma^1_21 = 0
  auto c = BundleConnection::from_christoffel(xs, gamma, Box::unbounded(2));
  auto t = torsion(c).evaluate(vec({0.0, 3.0}));
  // T[i][j][a]: T^1_12 = 3, T^1_21 = -3.
  EXPECT_DOUBLE_EQ(t[(0 * 2 + 1) * 2 + 0], 3.0);
  EXPECT_DOUBLE_EQ(t[(1 * 2 + 0) * 2 + 0], -3.0);
  std::mt19937_64 rng(1);
  EXPECT_THROW(torsion(random_connection(rng, xs, 2)), DimensionError);
}

// For a vector field the tensor derivative agrees with nabla_z X.
TEST(CovariantTensor, VectorFieldMatchesSectionDerivative) {
  std::mt19937_64 rng(13);
  auto base = names("x", 2);
  auto xs = vars(base);
  auto c = random_connection(rng, base, 2, true);
  TensorFieldExpr X(base, 2, 0, FiberKind::Vector);
  X.comps = {random_transcendental(rng, xs), random_polynomial(rng, xs, 2, 3)};
  auto dX = covariant_derivative_tensor(c, &c, X, 1);
  ASSERT_EQ(dX.arity, 1);
  for (std::size_t z = 0; z < 2; ++z) {
    auto expected = covariant_derivative(c, X.comps, z);
    for (std::size_t a = 0; a < 2; ++a) {
      EXPECT_NEAR(eval(dX.comps[z * 2 + a], env_of(base, {0.3, -0.2})),
                  eval(expected[a], env_of(base, {0.3, -0.2})), 1e-12);
    }
  }
}

// Leibniz rule: d_z(alpha(X)) = (nabla_z alpha)(X) + alpha(nabla_z X).
TEST(CovariantTensor, OneFormLeibniz) {
  std::mt19937_64 rng(14);
  auto base = names("x", 3);
  auto xs = vars(base);
  auto c = random_connection(rng, base, 3, true);
  TensorFieldExpr alpha(base, 3, 1, FiberKind::Scalar);
  std::vector<Expr> X;
  for (int i = 0; i < 3; ++i) {
    alpha.comps[i] = random_polynomial(rng, xs, 3, 3);
    X.push_back(random_transcendental(rng, xs));
  }
  auto da = covariant_derivative_tensor(c, nullptr, alpha, 1);
  Expr pairing = 0.0;
  for (int i = 0; i < 3; ++i) pairing = pairing + alpha.comps[i] * X[i];
  auto env = env_of(base, random_point(rng, 3, -1, 1));
  for (std::size_t z = 0; z < 3; ++z) {
    auto dXz = covariant_derivative(c, X, z);
    double rhs = 0;
    for (int i = 0; i < 3; ++i) rhs += eval(da.comps[z * 3 + i], env) * eval(X[i], env) + eval(alpha.comps[i], env) * eval(dXz[i], env);
    EXPECT_NEAR(eval(differentiate(pairing, base[z]), env), rhs, 1e-9);
  }
}

TEST(CovariantTensor, SphereMetricAndCurvatureAreParallel) {
  auto s = fixtures::round_sphere();
  const double rho = 1.0;
  TensorFieldExpr g(s.base_vars(), 2, 2, FiberKind::Scalar);
  Expr sn = sin(Expr::variable("u") / rho);
  g.comps = {Expr(1.0), Expr(0.0), Expr(0.0), rho * rho * sn * sn};
  auto dg = covariant_derivative_tensor(s, nullptr, g, 1);
  auto dR = covariant_derivative_tensor(s, &s, curvature(s), 2);
  EXPECT_EQ(dR.arity, 4);
  for (double u : {0.5, 1.2, 2.0}) {
    for (double v : dg.evaluate(vec({u, 0.7}))) EXPECT_NEAR(v, 0.0, 1e-12);
    for (double v : dR.evaluate(vec({u, 0.7}))) EXPECT_NEAR(v, 0.0, 1e-10);
  }
}

TEST(CovariantTensor, BudgetExceeded) {
  std::mt19937_64 rng(20);
  auto c = random_connection(rng, names("x", 2), 2, true);
  try {
    covariant_derivative_tensor(c, &c, curvature(c), 3, 200);
    FAIL() << "expected BudgetExceeded";
  } catch (const BudgetExceeded& e) {
    EXPECT_LT(e.completed_order(), 3);
  }
}

TEST(Transport, FlatKeepsSectionsConstant) {
  auto c = fixtures::flat({"a", "b"});
  auto sol = parallel_transport(c, segment_curve(vec({0, 0}), vec({1, 2})), vec({3, 4}), 0, 1, 0.1);
  EXPECT_NEAR((sol.back() - vec({3, 4})).norm(), 0.0, 1e-15);
}

TEST(Transport, PreservesSphereMetric) {
  auto s = fixtures::round_sphere();
  CurveFn curve = [](double t, Eigen::VectorXd& x, Eigen::VectorXd& xd) {
    x = vec({1.0 + 0.3 * std::sin(t), 2 * t});
    xd = vec({0.3 * std::cos(t), 2.0});
  };
  Eigen::MatrixXd P0 = Eigen::MatrixXd::Identity(2, 2);
  auto sol = parallel_transport(s, curve, P0, 0, 2, 1e-3);
  Eigen::MatrixXd g0 = fixtures::round_sphere_metric(1, vec({1.0, 0.0}));
  Eigen::VectorXd x1, xd1;
  curve(2.0, x1, xd1);
  Eigen::MatrixXd P = Eigen::Map<const Eigen::MatrixXd>(sol.back().data(), 2, 2);
  Eigen::MatrixXd g1 = P.transpose() * fixtures::round_sphere_metric(1, x1) * P;
  EXPECT_LT((g1 - g0).lpNorm<Eigen::Infinity>(), 1e-10);
}

// Around the latitude th0 a vector turns by 2 pi (1 - cos th0) relative to
// the orthonormal frame (d_th, d_ph / sin th).
TEST(Transport, SphereHolonomy) {
  auto s = fixtures::round_sphere();
  for (double th0 : {kPi / 3, kPi / 4, 1.2}) {
    CurveFn loop = [th0](double t, Eigen::VectorXd& x, Eigen::VectorXd& xd) {
      x = vec({th0, t});
      xd = vec({0, 1});
    };
    auto sol = parallel_transport(s, loop, vec({1.0, 0.0}), 0, 2 * kPi, 1e-3);
    const Eigen::VectorXd& e = sol.back();
    double angle = std::atan2(e[1] * std::sin(th0), e[0]);
    double expected = std::remainder(2 * kPi * (1 - std::cos(th0)), 2 * kPi);
    EXPECT_NEAR(std::remainder(angle - expected, 2 * kPi), 0.0, 1e-8) << th0;
  }
}

TEST(Transport, LeavingDomainThrows) {
  auto s = fixtures::round_sphere();
  EXPECT_THROW(parallel_transport(s, segment_curve(vec({1, 0}), vec({-1, 0})), vec({1, 0}), 0, 1, 0.01), ChartExit);
}

TEST(GeodesicTransport, GreatCircleFromEquator) {
  auto s = fixtures::round_sphere();
  const double a = 0.3, b = 0.4, T = 2.0;
  auto g = geodesic_with_transport(s, vec({kPi / 2, 0}), vec({a, b}), T, 1e-3);
  ASSERT_TRUE(g.completed);
  // Ambient: p0 = (1,0,0), velocity (0, b, -a).
  const double speed = std::hypot(a, b);
  Eigen::Vector3d p0(1, 0, 0), u(0, b / speed, -a / speed);
  Eigen::Vector3d p = std::cos(speed * T) * p0 + std::sin(speed * T) * u;
  EXPECT_NEAR(g.x[0], std::acos(p[2]), 1e-10);
  EXPECT_NEAR(g.x[1], std::atan2(p[1], p[0]), 1e-10);
  Eigen::MatrixXd G = g.P.transpose() * fixtures::round_sphere_metric(1, g.x) * g.P;
  EXPECT_LT((G - Eigen::MatrixXd::Identity(2, 2)).lpNorm<Eigen::Infinity>(), 1e-10);
  // The velocity is transported too.
  EXPECT_LT((g.P * vec({a, b}) - g.v).norm(), 1e-10);
}

TEST(GeodesicTransport, ReportsChartExit) {
  auto s = fixtures::round_sphere();
  auto g = geodesic_with_transport(s, vec({kPi / 2, 0}), vec({1, 0}), 3.0, 1e-2);
  EXPECT_FALSE(g.completed);
  EXPECT_GT(g.exit_time, 1.5);
  EXPECT_LT(g.exit_time, kPi / 2 + 0.01);
}

// The pairing of a transported covector with a transported vector is constant.
TEST(Dual, PreservesPairing) {
  std::mt19937_64 rng(15);
  auto base = names("x", 2);
  auto c = random_connection(rng, base, 3);
  auto d = dual_connection(c);
  auto curve = segment_curve(vec({-0.5, 0.2}), vec({0.7, -0.4}));
  auto s = parallel_transport(c, curve, vec({1, 2, 3}), 0, 1, 1e-3);
  auto a = parallel_transport(d, curve, vec({0.5, -1, 2}), 0, 1, 1e-3);
  EXPECT_NEAR(s.back().dot(a.back()), vec({1, 2, 3}).dot(vec({0.5, -1, 2})), 1e-10);
}

// Curvature of the bilinear-form connection: R^ G = -R^T G - G R.
TEST(Bilinear, CurvatureIdentity) {
  std::mt19937_64 rng(16);
  auto base = names("x", 2);
  for (int trial = 0; trial < 3; ++trial) {
    auto c = random_connection(rng, base, 2);
    auto bc = bilinear_connection(c);
    auto R = curvature(c), Rb = curvature(bc);
    for (int k = 0; k < 5; ++k) {
      Eigen::VectorXd x = to_vec(random_point(rng, 2, -1, 1));
      Eigen::MatrixXd Rx = curvature_at(R, x, 0, 1), Rbx = curvature_at(Rb, x, 0, 1);
      Eigen::Matrix2d G;
      G << uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1);
      Eigen::Matrix2d expected = -Rx.transpose() * G - G * Rx;
      Eigen::Vector4d vG(G(0, 0), G(0, 1), G(1, 0), G(1, 1));
      Eigen::Vector4d got = Rbx * vG;
      Eigen::Vector4d want(expected(0, 0), expected(0, 1), expected(1, 0), expected(1, 1));
      EXPECT_LT((got - want).lpNorm<Eigen::Infinity>(), 1e-10);
    }
  }
}

// Curvature on Lin(TM, TN): M-M pairs give -sigma R^M, N-N pairs R^N sigma,
// mixed pairs vanish.
TEST(Hom, CurvatureIdentity) {
  std::mt19937_64 rng(17);
  auto cm = random_connection(rng, names("x", 2), 2);
  auto cn = random_connection(rng, names("y", 3), 3);
  auto h = hom_connection(cm, cn);
  EXPECT_EQ(h.n(), 5u);
  EXPECT_EQ(h.r(), 6u);
  auto Rh = curvature(h), Rm = curvature(cm), Rn = curvature(cn);
  Eigen::VectorXd p = to_vec(random_point(rng, 5, -1, 1));
  Eigen::MatrixXd sigma(3, 2);
  sigma.setRandom();
  Eigen::VectorXd vs(6);
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 2; ++b) vs[a * 2 + b] = sigma(a, b);
  }
  auto flat_of = [](const Eigen::MatrixXd& m) {
    Eigen::VectorXd v(m.size());
    for (long a = 0; a < m.rows(); ++a) {
      for (long b = 0; b < m.cols(); ++b) v[a * m.cols() + b] = m(a, b);
    }
    return v;
  };
  Eigen::MatrixXd expM = -sigma * curvature_at(Rm, p.head(2), 0, 1);
  EXPECT_LT((curvature_at(Rh, p, 0, 1) * vs - flat_of(expM)).lpNorm<Eigen::Infinity>(), 1e-10);
  Eigen::MatrixXd expN = curvature_at(Rn, p.tail(3), 0, 2) * sigma;
  EXPECT_LT((curvature_at(Rh, p, 2, 4) * vs - flat_of(expN)).lpNorm<Eigen::Infinity>(), 1e-10);
  EXPECT_LT((curvature_at(Rh, p, 1, 3) * vs).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Hom, RejectsSharedNames) {
  auto c = fixtures::flat({"a", "b"});
  EXPECT_THROW(hom_connection(c, c), DimensionError);
}

// (f* R)_{jk} = sum_{il} d_j f^i d_k f^l R_il o f.
TEST(Pullback, CurvatureIsPulledBack) {
  std::mt19937_64 rng(18);
  auto base = names("x", 2);
  auto c = random_connection(rng, base, 2);
  std::vector<std::string> nv{"p1", "p2", "p3"};
  auto ps = vars(nv);
  std::vector<Expr> f{0.5 * sin(ps[0]) + 0.2 * ps[1] * ps[2], 0.4 * ps[2] - 0.3 * ps[0] * ps[0]};
  auto pc = pullback_connection(c, f, nv, Box::unbounded(3));
  auto R = curvature(c), Rp = curvature(pc);
  Eigen::VectorXd p = to_vec(random_point(rng, 3, -1, 1));
  Eigen::VectorXd fp = evaluate(f, nv, p);
  Eigen::MatrixXd J = finite_diff_jacobian([&](const Eigen::VectorXd& q) { return evaluate(f, nv, q); }, p, 1e-4);
  Eigen::MatrixXd R01 = curvature_at(R, fp, 0, 1);
  for (int j = 0; j < 3; ++j) {
    for (int k = 0; k < 3; ++k) {
      Eigen::MatrixXd want = (J(0, j) * J(1, k) - J(1, j) * J(0, k)) * R01;
      EXPECT_LT((curvature_at(Rp, p, j, k) - want).lpNorm<Eigen::Infinity>(), 1e-7);
    }
  }
}

// Levi form of the horizontal distribution equals -R(v, w) xi.
TEST(Horizontal, LeviFormIsMinusCurvature) {
  std::mt19937_64 rng(19);
  auto base = names("x", 2);
  for (int trial = 0; trial < 3; ++trial) {
    auto c = random_connection(rng, base, 2);
    auto d = horizontal_distribution(c, {"s1", "s2"}, Box::unbounded(2));
    auto R = curvature(c);
    for (int k = 0; k < 5; ++k) {
      Eigen::VectorXd x = to_vec(random_point(rng, 2, -1, 1)), xi = to_vec(random_point(rng, 2, -2, 2));
      Eigen::VectorXd v = to_vec(random_point(rng, 2, -1, 1)), w = to_vec(random_point(rng, 2, -1, 1));
      Eigen::VectorXd p(4);
      p << x, xi;
      Eigen::VectorXd want = -(v[0] * w[1] - v[1] * w[0]) * curvature_at(R, x, 0, 1) * xi;
      EXPECT_LT((d.levi_form(p, v, w) - want).lpNorm<Eigen::Infinity>(), 1e-10);
    }
  }
}
