#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "leafsolve/cah.hpp"
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

const Eigen::VectorXd kEquator = vec({kPi / 2, 0});

BundleConnection random_tangent(std::mt19937_64& rng, const std::vector<std::string>& base) {
  auto xs = vars(base);
  const std::size_t n = base.size();
  std::vector<ExprMatrix> omega;
  for (std::size_t i = 0; i < n; ++i) {
    ExprMatrix w(n, n);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) w(a, b) = random_polynomial(rng, xs, 2, 2);
    }
    omega.push_back(w);
  }
  const auto nl = static_cast<long>(n);
  return BundleConnection(base, omega, Box(Eigen::VectorXd::Constant(nl, -2.0), Eigen::VectorXd::Constant(nl, 2.0)),
                          true);
}

// Gamma^1_11 = x2, everything else zero.
BundleConnection gamma111_x2() {
  std::vector<Expr> gamma(8, Expr(0.0));
  gamma[0] = Expr::variable("x2");
  return BundleConnection::from_christoffel({"x1", "x2"}, gamma,
                                            Box(Eigen::Vector2d(-2.0, -2.0), Eigen::Vector2d(2.0, 2.0)));
}

std::string sigma_name(std::size_t a, std::size_t b) { return "s" + std::to_string(a) + "_" + std::to_string(b); }

// Lift of the constant source vector X to the graph distribution on
// M x N x Lin(R^n, R^m): (X, sigma X, sigma omega^M_X - omega^N_{sigma X} sigma).
VectorField lifted_field(const BundleConnection& M, const BundleConnection& N, const Eigen::VectorXd& X) {
  const std::size_t n = M.n(), m = N.n();
  VectorField f;
  f.coords = M.base_vars();
  for (const auto& y : N.base_vars()) f.coords.push_back(y);
  ExprMatrix s(m, n);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      f.coords.push_back(sigma_name(a, b));
      s(a, b) = Expr::variable(sigma_name(a, b));
    }
  }
  ExprMatrix Xc(n, 1);
  for (std::size_t i = 0; i < n; ++i) Xc(i, 0) = X[static_cast<long>(i)];
  const ExprMatrix sX = s * Xc;
  ExprMatrix wM = ExprMatrix::constant(Eigen::MatrixXd::Zero(static_cast<long>(n), static_cast<long>(n)));
  ExprMatrix wN = ExprMatrix::constant(Eigen::MatrixXd::Zero(static_cast<long>(m), static_cast<long>(m)));
  for (std::size_t i = 0; i < n; ++i) wM = wM + Expr(X[static_cast<long>(i)]) * M.omega(i);
  for (std::size_t c = 0; c < m; ++c) wN = wN + sX(c, 0) * N.omega(c);
  for (std::size_t i = 0; i < n; ++i) f.comps.push_back(X[static_cast<long>(i)]);
  for (std::size_t a = 0; a < m; ++a) f.comps.push_back(sX(a, 0));
  const ExprMatrix vert = s * wM - wN * s;
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < n; ++b) f.comps.push_back(vert(a, b));
  }
  return f;
}

// (a, b, c) -> (b - sigma a, c + omega^N_b sigma - sigma omega^M_a).
HomLevi quotient(const BundleConnection& M, const BundleConnection& N, const Eigen::VectorXd& p,
                 const Eigen::VectorXd& w) {
  const long n = static_cast<long>(M.n()), m = static_cast<long>(N.n());
  const Eigen::VectorXd x = p.head(n), y = p.segment(n, m);
  Eigen::MatrixXd s(m, n), c(m, n);
  for (long a = 0; a < m; ++a) {
    for (long b = 0; b < n; ++b) {
      s(a, b) = p[n + m + a * n + b];
      c(a, b) = w[n + m + a * n + b];
    }
  }
  const Eigen::VectorXd va = w.head(n), vb = w.segment(n, m);
  return {vb - s * va, c + N.omega_along(y, vb) * s - s * M.omega_along(x, va)};
}

double levi_gap(const HomLevi& a, const HomLevi& b) {
  return std::max((a.torsion_part - b.torsion_part).lpNorm<Eigen::Infinity>(),
                  (a.curvature_part - b.curvature_part).lpNorm<Eigen::Infinity>());
}

}  // namespace

TEST(CahProblem, Validation) {
  auto s = fixtures::round_sphere();
  EXPECT_THROW(CahProblem(s, s, kEquator, kEquator, Eigen::MatrixXd::Identity(3, 2)), DimensionError);
  EXPECT_THROW(CahProblem(s, s, vec({0.0, 0.0}), kEquator, Eigen::MatrixXd::Identity(2, 2)), OutOfDomain);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
  bad(0, 1) = std::nan("");
  EXPECT_THROW(CahProblem(s, s, kEquator, kEquator, bad), DimensionError);
  std::mt19937_64 rng(3);
  std::vector<ExprMatrix> w(2, ExprMatrix(3, 3));
  for (auto& m : w) m = ExprMatrix::constant(Eigen::MatrixXd::Zero(3, 3));
  BundleConnection non_tangent({"a", "b"}, w, Box::unbounded(2));
  EXPECT_THROW(CahProblem(non_tangent, s, kEquator, kEquator, Eigen::MatrixXd::Identity(2, 2)), DimensionError);
}

TEST(CahMap, IdentityOnSameManifold) {
  auto s = fixtures::round_sphere();
  CahProblem prob(s, s, kEquator, kEquator, Eigen::MatrixXd::Identity(2, 2));
  auto map = cah_map(prob, RectGrid::centered(kEquator, 0.2, 5));
  EXPECT_EQ(map.unreachable(), 0u);
  for (std::size_t i = 0; i < map.grid.size(); ++i) {
    EXPECT_LT((map.f[i] - map.grid.point(i)).lpNorm<Eigen::Infinity>(), 1e-8);
    EXPECT_LT((map.sigma[i] - Eigen::MatrixXd::Identity(2, 2)).lpNorm<Eigen::Infinity>(), 1e-8);
  }
  EXPECT_LT(map.max_curvature_relates(), 1e-10);
}

TEST(CahMap, AnchorIsExact) {
  auto s = fixtures::round_sphere();
  Eigen::MatrixXd sig = fixtures::sphere_rotation_x_sigma0(0.7);
  CahProblem prob(s, s, kEquator, kEquator, sig);
  auto sol = induced_geodesic_and_sigma(prob, kEquator);
  EXPECT_EQ(sol.v.norm(), 0.0);
  EXPECT_EQ(sol.f, kEquator);
  EXPECT_EQ(sol.sigma, sig);
}

TEST(CahMap, FlatIsAffineLinear) {
  auto M = fixtures::flat({"x1", "x2"});
  auto N = fixtures::flat({"y1", "y2", "y3"});
  Eigen::MatrixXd A(3, 2);
  A << 1, 2, -0.5, 0.3, 0.7, -1.1;
  const Eigen::VectorXd x0 = vec({0.1, -0.2}), y0 = vec({1, 2, 3});
  CahProblem prob(M, N, x0, y0, A);
  auto map = cah_map(prob, RectGrid::centered(x0, 0.5, 5));
  for (std::size_t i = 0; i < map.grid.size(); ++i) {
    EXPECT_LT((map.f[i] - (y0 + A * (map.grid.point(i) - x0))).lpNorm<Eigen::Infinity>(), 1e-10);
    EXPECT_LT((map.sigma[i] - A).lpNorm<Eigen::Infinity>(), 1e-12);
  }
  EXPECT_LT(map.max_jacobian_residual(true), 1e-9);
  EXPECT_TRUE(affine_residual(prob, map, 1e-8).pass);
}

TEST(CahMap, RotationSigmaMatchesJacobian) {
  for (double angle : {0.4, -1.3}) {
    Eigen::MatrixXd J =
        finite_diff_jacobian([&](const Eigen::VectorXd& x) { return fixtures::sphere_rotation_x(angle, x); }, kEquator);
    EXPECT_LT((J - fixtures::sphere_rotation_x_sigma0(angle)).lpNorm<Eigen::Infinity>(), 1e-8);
  }
}

TEST(CahMap, ReproducesSphereRotation) {
  const double angle = 0.4;
  auto s = fixtures::round_sphere();
  CahProblem prob(s, s, kEquator, fixtures::sphere_rotation_x(angle, kEquator), fixtures::sphere_rotation_x_sigma0(angle));
  auto map = cah_map(prob, RectGrid::centered(kEquator, 0.2, 9));
  EXPECT_EQ(map.unreachable(), 0u);
  for (std::size_t i = 0; i < map.grid.size(); ++i) {
    const Eigen::VectorXd x = map.grid.point(i);
    EXPECT_LT((map.f[i] - fixtures::sphere_rotation_x(angle, x)).lpNorm<Eigen::Infinity>(), 1e-6);
    Eigen::MatrixXd J =
        finite_diff_jacobian([&](const Eigen::VectorXd& p) { return fixtures::sphere_rotation_x(angle, p); }, x);
    EXPECT_LT((map.sigma[i] - J).lpNorm<Eigen::Infinity>(), 1e-6);
  }
  EXPECT_LT(map.max_torsion_relates(), 1e-8);
  EXPECT_LT(map.max_curvature_relates(), 1e-8);
  auto rep = affine_residual(prob, map, 1e-5);
  EXPECT_TRUE(rep.pass) << rep.max_nabla_sigma;
  EXPECT_LT(rep.max_jacobian_residual, 1e-5);
}

TEST(CahMap, SphereToFlatIsObstructed) {
  auto M = fixtures::round_sphere();
  auto N = fixtures::flat({"y1", "y2"});
  CahProblem prob(M, N, kEquator, vec({0, 0}), Eigen::MatrixXd::Identity(2, 2));
  auto map = cah_map(prob, RectGrid::centered(kEquator, 0.1, 3));
  EXPECT_GT(map.max_curvature_relates(), 0.5);
  EXPECT_LT(map.max_torsion_relates(), 1e-12);
  EXPECT_FALSE(affine_residual(prob, cah_map(prob, RectGrid::centered(kEquator, 0.2, 9)), 1e-5).pass);
}

TEST(CahMap, UnreachableNodesAreReported) {
  auto s = fixtures::round_sphere();
  CahProblem prob(s, s, kEquator, vec({0.2, 0}), Eigen::MatrixXd::Identity(2, 2));
  // Target geodesics heading north from u = 0.2 leave the chart.
  auto map = cah_map(prob, RectGrid::centered(kEquator, 0.3, 3));
  EXPECT_GT(map.unreachable(), 0u);
  for (std::size_t i = 0; i < map.grid.size(); ++i) {
    if (!map.reachable[i]) {
      EXPECT_FALSE(map.failure[i].empty());
      EXPECT_TRUE(std::isnan(map.f[i][0]));
    }
  }
}

TEST(CheckRelates, NormalizesByLargestEntry) {
  std::vector<double> TM(8, 0.0), TN(8, 0.0), RM(16, 0.0), RN(16, 0.0);
  RM[(0 * 2 + 1) * 4 + 0 * 2 + 1] = 4.0;
  Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
  auto raw = check_relates(I, TM, TN, RM, RN, false);
  auto norm = check_relates(I, TM, TN, RM, RN, true);
  EXPECT_DOUBLE_EQ(raw.curvature, 4.0);
  EXPECT_DOUBLE_EQ(norm.curvature, 1.0);
  EXPECT_DOUBLE_EQ(norm.torsion, 0.0);
}

TEST(LeviFormHom, MatchesSymbolicBracket) {
  std::mt19937_64 rng(11);
  for (auto [n, m] : {std::pair{2, 2}, std::pair{2, 3}, std::pair{3, 2}}) {
    auto M = random_tangent(rng, names("x", n));
    auto N = random_tangent(rng, names("y", m));
    const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n), y0 = Eigen::VectorXd::Zero(m);
    for (int trial = 0; trial < 4; ++trial) {
      Eigen::VectorXd x = Eigen::VectorXd::Random(n) * 0.5, y = Eigen::VectorXd::Random(m) * 0.5;
      Eigen::MatrixXd s = Eigen::MatrixXd::Random(m, n);
      Eigen::VectorXd v1 = Eigen::VectorXd::Random(n), v2 = Eigen::VectorXd::Random(n);
      CahProblem prob(M, N, x0, y0, s);
      Eigen::VectorXd p(n + m + m * n);
      p << x, y, Eigen::Map<const Eigen::VectorXd>(Eigen::MatrixXd(s.transpose()).data(), m * n);
      auto V1 = lifted_field(M, N, v1), V2 = lifted_field(M, N, v2);
      const auto br = lie_bracket(V1, V2);
      const Eigen::VectorXd exact = evaluate(br.comps, br.coords, p);
      HomLevi want = quotient(M, N, p, exact);
      HomLevi got = levi_form_hom(prob, x, y, s, v1, v2);
      EXPECT_LT(levi_gap(got, want), 1e-10);
      // Horizontal part of the bracket vanishes.
      EXPECT_LT(exact.head(n).norm(), 1e-12);
    }
  }
}

TEST(LeviFormHom, MatchesFlowCommutator) {
  std::mt19937_64 rng(12);
  auto M = random_tangent(rng, names("x", 2));
  auto N = random_tangent(rng, names("y", 2));
  CahProblem prob(M, N, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  for (int trial = 0; trial < 3; ++trial) {
    Eigen::VectorXd x = Eigen::VectorXd::Random(2) * 0.5, y = Eigen::VectorXd::Random(2) * 0.5;
    Eigen::MatrixXd s = Eigen::MatrixXd::Random(2, 2);
    Eigen::VectorXd v1 = Eigen::VectorXd::Random(2), v2 = Eigen::VectorXd::Random(2);
    Eigen::VectorXd p(8);
    p << x, y, s(0, 0), s(0, 1), s(1, 0), s(1, 1);
    const Eigen::VectorXd br = flow_commutator_oracle(lifted_field(M, N, v1), lifted_field(M, N, v2), p, 1e-3);
    EXPECT_LT(levi_gap(levi_form_hom(prob, x, y, s, v1, v2), quotient(M, N, p, br)), 1e-2);
  }
}

TEST(LeviFormHom, VanishesIffRelates) {
  auto s = fixtures::round_sphere();
  CahProblem prob(s, s, kEquator, kEquator, Eigen::MatrixXd::Identity(2, 2));
  std::mt19937_64 rng(5);
  int zero = 0;
  for (int k = 0; k < 200; ++k) {
    const Eigen::VectorXd x = vec({kPi / 2, uniform(rng, -1, 1)}), y = vec({kPi / 2, uniform(rng, -1, 1)});
    Eigen::MatrixXd sig(2, 2);
    if (k % 2 == 0) {
      // Orthogonal maps relate the curvature where both metrics are the identity.
      const double a = uniform(rng, -kPi, kPi), r = k % 4 == 0 ? 1.0 : -1.0;
      sig << std::cos(a), -r * std::sin(a), std::sin(a), r * std::cos(a);
    } else {
      sig = Eigen::MatrixXd::Random(2, 2);
    }
    double levi = 0;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        auto L = levi_form_hom(prob, x, y, sig, Eigen::VectorXd::Unit(2, i), Eigen::VectorXd::Unit(2, j));
        levi = std::max({levi, L.torsion_part.lpNorm<Eigen::Infinity>(), L.curvature_part.lpNorm<Eigen::Infinity>()});
      }
    }
    auto rel = check_relates(sig, prob.source_torsion(x), prob.target_torsion(y), prob.source_curvature(x),
                             prob.target_curvature(y), false);
    const bool relates = std::max(rel.torsion, rel.curvature) < 1e-9;
    EXPECT_EQ(levi < 1e-9, relates) << k;
    zero += relates ? 1 : 0;
  }
  EXPECT_EQ(zero, 100);
}

TEST(HigherOrderCah, SphereIdentityPasses) {
  auto s = fixtures::round_sphere();
  CahProblem prob(s, s, kEquator, fixtures::sphere_rotation_x(0.4, kEquator), fixtures::sphere_rotation_x_sigma0(0.4));
  auto rep = higher_order_cah_check(prob, 4);
  ASSERT_EQ(rep.orders.size(), 5u);
  EXPECT_TRUE(rep.pass);
  for (const auto& o : rep.orders) {
    EXPECT_LT(o.torsion, 1e-8);
    EXPECT_LT(o.curvature, 1e-8);
  }
}

TEST(HigherOrderCah, DifferentRadiiFailAtOrderZero) {
  auto M = fixtures::round_sphere(1.0);
  auto N = fixtures::round_sphere(2.0);
  CahProblem prob(M, N, kEquator, vec({kPi, 0}), Eigen::MatrixXd::Identity(2, 2));
  auto rep = higher_order_cah_check(prob, 1);
  EXPECT_FALSE(rep.pass);
  EXPECT_NEAR(rep.orders[0].curvature, 0.75, 1e-9);
  EXPECT_LT(rep.orders[0].torsion, 1e-12);
}

TEST(HigherOrderCah, ContractionMatchesDirectSum) {
  // Order-1 residual against a brute-force contraction for a non-square sigma.
  std::mt19937_64 rng(21);
  auto M = random_tangent(rng, names("x", 2));
  auto N = random_tangent(rng, names("y", 3));
  Eigen::MatrixXd sig = Eigen::MatrixXd::Random(3, 2);
  const Eigen::VectorXd x0 = vec({0.1, 0.2}), y0 = vec({-0.1, 0.3, 0.2});
  CahProblem prob(M, N, x0, y0, sig);
  auto rep = higher_order_cah_check(prob, 1, 1e-8);
  ASSERT_EQ(rep.orders.size(), 2u);
  auto tM = covariant_derivative_tensor(M, &M, torsion(M), 1), tN = covariant_derivative_tensor(N, &N, torsion(N), 1);
  auto vM = tM.evaluate(x0), vN = tN.evaluate(y0);
  double worst = 0, scale = 1;
  for (double v : vM) scale = std::max(scale, std::abs(v));
  for (double v : vN) scale = std::max(scale, std::abs(v));
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      for (int k = 0; k < 2; ++k) {
        for (int a = 0; a < 3; ++a) {
          double lhs = 0, rhs = 0;
          const int ijk[3] = {i, j, k};
          for (int b = 0; b < 2; ++b) lhs += sig(a, b) * vM[tM.index(ijk, b)];
          for (int p = 0; p < 3; ++p) {
            for (int q = 0; q < 3; ++q) {
              for (int r = 0; r < 3; ++r) {
                const int pqr[3] = {p, q, r};
                rhs += sig(p, i) * sig(q, j) * sig(r, k) * vN[tN.index(pqr, a)];
              }
            }
          }
          worst = std::max(worst, std::abs(lhs - rhs));
        }
      }
    }
  }
  EXPECT_NEAR(rep.orders[1].torsion, worst / scale, 1e-12);
}

TEST(AffineSymmetry, FailsAtOrderOneWithWitness) {
  auto rep = affine_symmetry_check(gamma111_x2(), vec({0.3, 0.5}), 4);
  EXPECT_FALSE(rep.pass);
  ASSERT_GE(rep.orders.size(), 2u);
  EXPECT_LT(rep.orders[0].max_abs, 1e-12);
  EXPECT_EQ(rep.orders[1].tensor, 'R');
  EXPECT_GT(rep.orders[1].max_abs, 0.1);
  ASSERT_EQ(rep.orders[1].witness.size(), 5u);
  EXPECT_FALSE(rep.map.has_value());
}

TEST(AffineSymmetry, SphereIsSymmetric) {
  auto s = fixtures::round_sphere();
  const RectGrid grid = RectGrid::centered(kEquator, 0.2, 9);
  auto rep = affine_symmetry_check(s, kEquator, 4, 1e-8, grid);
  ASSERT_EQ(rep.orders.size(), 5u);
  for (const auto& o : rep.orders) EXPECT_LT(o.max_abs, 1e-8) << o.order;
  ASSERT_TRUE(rep.map.has_value());
  EXPECT_TRUE(rep.pass) << rep.affine->max_nabla_sigma;
  // Geodesic symmetry about the equator point: (u, v) -> (pi - u, -v).
  CahProblem prob(s, s, kEquator, kEquator, -Eigen::MatrixXd::Identity(2, 2));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Eigen::VectorXd x = grid.point(i);
    EXPECT_LT((rep.map->f[i] - vec({kPi - x[0], -x[1]})).lpNorm<Eigen::Infinity>(), 1e-6);
    const Eigen::VectorXd back = induced_geodesic_and_sigma(prob, rep.map->f[i]).f;
    EXPECT_LT((back - x).lpNorm<Eigen::Infinity>(), 1e-5);
  }
}
