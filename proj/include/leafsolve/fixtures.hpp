#pragma once

// Built-in fixtures used by the self-test and the test suites.

#include <string>
#include <vector>

#include "leafsolve/connection.hpp"

namespace leafsolve::fixtures {

/// Levi-Civita connection of the round sphere of the given radius in
/// coordinates (u, v) = (radius * colatitude, longitude):
///   Gamma^u_vv = -radius sin(u/radius) cos(u/radius),
///   Gamma^v_uv = Gamma^v_vu = cot(u/radius) / radius.
/// The metric du^2 + radius^2 sin^2(u/radius) dv^2 is the identity at
/// u = radius * pi/2. The domain keeps u/radius in [0.05, pi - 0.05] and
/// v in [-10, 10].
BundleConnection round_sphere(double radius = 1.0, std::vector<std::string> vars = {"u", "v"});

/// Metric of round_sphere at x.
Eigen::MatrixXd round_sphere_metric(double radius, const Eigen::VectorXd& x);

/// Flat connection (all Christoffel symbols zero) on a box of half-width 10.
BundleConnection flat(std::vector<std::string> vars);

/// Symmetric connection on R^2 (box of half-width 2) with
/// Gamma^1_12 = Gamma^1_21 = x1 and all other symbols zero. Its curvature
/// R_12 = [[1, -x1^2], [0, 0]] has trace 1, so no metric is compatible.
BundleConnection trace_obstructed(std::vector<std::string> vars = {"x1", "x2"});

/// Rotation of the unit sphere by `angle` about the ambient x-axis, in the
/// coordinates of round_sphere(1): (u, v) -> (sin u cos v, sin u sin v, cos u).
/// It fixes (pi/2, 0).
Eigen::VectorXd sphere_rotation_x(double angle, const Eigen::VectorXd& x);

/// Differential of sphere_rotation_x at (pi/2, 0): [[c, -s], [s, c]].
Eigen::MatrixXd sphere_rotation_x_sigma0(double angle);

}  // namespace leafsolve::fixtures
