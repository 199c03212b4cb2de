#pragma once

// Second-order systems x'' = A(x, x') with A quadratic in x' (sprays),
// their exponential and logarithm maps, a usable normal-radius estimate and
// piecewise solutions.

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "leafsolve/connection.hpp"
#include "leafsolve/geometry.hpp"

namespace leafsolve {

class Spray {
 public:
  /// Acceleration components over x_vars followed by v_vars; domain is a box
  /// over x.
  Spray(std::vector<std::string> x_vars, std::vector<std::string> v_vars, std::vector<Expr> acceleration, Box domain);

  std::size_t n() const { return x_vars_.size(); }
  const std::vector<std::string>& x_vars() const { return x_vars_; }
  const std::vector<std::string>& v_vars() const { return v_vars_; }
  const std::vector<Expr>& acceleration() const { return accel_; }
  const Box& domain() const { return domain_; }

  /// Throws OutOfDomain when x is outside the domain.
  Eigen::VectorXd acceleration_at(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const;

 private:
  std::vector<std::string> x_vars_;
  std::vector<std::string> v_vars_;
  std::vector<Expr> accel_;
  Box domain_;
  std::shared_ptr<const Tape> tape_;
};

/// max |A(x, a v) - a^2 A(x, v)|_inf over the given samples and
/// a in {-2, -1, 0.5, 3}. Points are drawn from the domain (clipped to
/// [-1, 1] where unbounded), velocities from [-1, 1]^n.
double homogeneity_defect(const Spray& s, int samples = 20, std::uint64_t seed = 7);

/// Velocity names for a spray over x_vars: "v1".."vn", prefixed with
/// underscores until they do not clash with x_vars.
std::vector<std::string> default_velocity_names(const std::vector<std::string>& x_vars);

/// A^a(x, v) = -sum_ij Gamma^a_ij(x) v^i v^j.
Spray geodesic_spray(const BundleConnection& conn, std::vector<std::string> v_vars = {});

struct SprayRun {
  CurveSolution curve;  // state (x, v)
  bool completed = true;
  double exit_time = 0;  // last valid t when !completed
  std::string reason;
};

/// Integrates (x', v') = (v, A(x, v)) on [0, t_end]; stops at chart exit and
/// returns the partial solution.
SprayRun solve_spray(const Spray& s, const Eigen::VectorXd& x, const Eigen::VectorXd& v, double t_end, double step);

/// Position at t = 1 of solve_spray. Throws ChartExit if the solution leaves
/// the domain first.
Eigen::VectorXd exp_map(const Spray& s, const Eigen::VectorXd& x, const Eigen::VectorXd& v, double step);

struct LogOptions {
  double step = 1e-3;
  int max_iter = 50;
  double tol = 1e-9;
};

/// v with |exp_x(v) - target| < tol by damped Newton with a finite-difference
/// Jacobian, starting from v = target - x. Throws ConvergenceError.
Eigen::VectorXd log_map(const Spray& s, const Eigen::VectorXd& x, const Eigen::VectorXd& target,
                        const LogOptions& options = {});

struct NormalRadius {
  double radius = 0;
  bool certified = false;  // false: even the smallest radius failed
  std::string warning;
};

/// Largest radius of the sweep rho_0 2^-j (j = 0..max_halvings) at which, for
/// 2n axis directions and 8 seeded random unit directions d, exp_x(rho d)
/// stays in the chart, log_map recovers rho d, and the condition number of
/// d(exp_x) at rho d is below 1e6. rho_0 is just inside the distance from x
/// to the chart boundary, capped at max_radius.
NormalRadius estimate_normal_radius(const Spray& s, const Eigen::VectorXd& x, double step = 1e-2,
                                    double max_radius = 100.0, int max_halvings = 20, std::uint64_t seed = 1);

struct Leg {
  Eigen::VectorXd point;  // empty: start where the previous leg ended
  Eigen::VectorXd velocity;
  double duration = 0;
};

struct PiecewisePath {
  Eigen::VectorXd start;
  std::vector<Leg> legs;
};

/// Concatenated solution in cumulative time; state (x, v), with a velocity
/// jump at each knot. A leg's explicit point must agree with the previous
/// endpoint to 1e-12. Throws ChartExit if a leg leaves the domain and
/// DimensionError for non-positive durations or discontinuities.
CurveSolution piecewise_solve(const Spray& s, const PiecewisePath& path, double step);

}  // namespace leafsolve
