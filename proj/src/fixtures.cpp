#include "leafsolve/fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace leafsolve::fixtures {

BundleConnection round_sphere(double radius, std::vector<std::string> vars) {
  if (vars.size() != 2) throw DimensionError("the sphere needs two coordinates");
  const Expr s = Expr::variable(vars[0]) / radius;
  std::vector<Expr> gamma(8, Expr(0.0));
  gamma[(0 * 2 + 1) * 2 + 1] = -radius * sin(s) * cos(s);
  const Expr cot = cos(s) / (radius * sin(s));
  gamma[(1 * 2 + 0) * 2 + 1] = cot;
  gamma[(1 * 2 + 1) * 2 + 0] = cot;
  Eigen::Vector2d lo(radius * 0.05, -10.0), hi(radius * (std::numbers::pi - 0.05), 10.0);
  return BundleConnection::from_christoffel(std::move(vars), gamma, Box(lo, hi));
}

Eigen::MatrixXd round_sphere_metric(double radius, const Eigen::VectorXd& x) {
  const double s = std::sin(x[0] / radius);
  Eigen::MatrixXd g = Eigen::MatrixXd::Identity(2, 2);
  g(1, 1) = radius * radius * s * s;
  return g;
}

BundleConnection flat(std::vector<std::string> vars) {
  const std::size_t n = vars.size();
  return BundleConnection::from_christoffel(
      std::move(vars), std::vector<Expr>(n * n * n, Expr(0.0)),
      Box(Eigen::VectorXd::Constant(static_cast<long>(n), -10.0), Eigen::VectorXd::Constant(static_cast<long>(n), 10.0)));
}

BundleConnection trace_obstructed(std::vector<std::string> vars) {
  if (vars.size() != 2) throw DimensionError("the fixture needs two coordinates");
  std::vector<Expr> gamma(8, Expr(0.0));
  const Expr x1 = Expr::variable(vars[0]);
  gamma[(0 * 2 + 0) * 2 + 1] = x1;
  gamma[(0 * 2 + 1) * 2 + 0] = x1;
  return BundleConnection::from_christoffel(std::move(vars), gamma,
                                            Box(Eigen::Vector2d(-2.0, -2.0), Eigen::Vector2d(2.0, 2.0)));
}

Eigen::VectorXd sphere_rotation_x(double angle, const Eigen::VectorXd& x) {
  const double c = std::cos(angle), s = std::sin(angle);
  const Eigen::Vector3d p(std::sin(x[0]) * std::cos(x[1]), std::sin(x[0]) * std::sin(x[1]), std::cos(x[0]));
  const Eigen::Vector3d q(p[0], c * p[1] - s * p[2], s * p[1] + c * p[2]);
  return Eigen::Vector2d(std::acos(std::clamp(q[2], -1.0, 1.0)), std::atan2(q[1], q[0]));
}

Eigen::MatrixXd sphere_rotation_x_sigma0(double angle) {
  Eigen::MatrixXd m(2, 2);
  m << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return m;
}

}  // namespace leafsolve::fixtures
