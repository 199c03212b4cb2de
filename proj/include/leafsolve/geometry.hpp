#pragma once

// Numeric substrate: chart boxes, rectangular sample grids, vector fields and
// their brackets, fixed-step RK4 with dense output, and finite-difference
// oracles.

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "leafsolve/expr.hpp"

namespace leafsolve {

/// Padding applied to every chart-membership test.
inline constexpr double kChartPad = 1e-9;

struct Box {
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  Box() = default;
  Box(Eigen::VectorXd lo, Eigen::VectorXd hi);
  static Box unbounded(std::size_t dim);

  std::size_t dim() const { return static_cast<std::size_t>(lo.size()); }
  bool contains(const Eigen::VectorXd& p, double pad = kChartPad) const;
  /// Distance from p to the complement of the box (0 outside).
  double distance_to_boundary(const Eigen::VectorXd& p) const;
  /// The first `k` coordinates.
  Box head(std::size_t k) const;
};

/// Axis-aligned uniform grid, lo..hi inclusive with counts[i] >= 1 nodes per
/// axis. Flat indices are row-major with the last axis fastest.
class RectGrid {
 public:
  RectGrid() = default;
  RectGrid(Eigen::VectorXd lo, Eigen::VectorXd hi, std::vector<int> counts);
  /// Grid with `count` nodes per axis spanning center +- half_width.
  static RectGrid centered(const Eigen::VectorXd& center, double half_width, int count);

  std::size_t dim() const { return counts_.size(); }
  std::size_t size() const { return size_; }
  const std::vector<int>& counts() const { return counts_; }
  const Eigen::VectorXd& lo() const { return lo_; }
  const Eigen::VectorXd& hi() const { return hi_; }
  double spacing(std::size_t axis) const { return spacing_[axis]; }

  Eigen::VectorXd point(std::size_t flat) const;
  std::vector<int> multi_index(std::size_t flat) const;
  std::size_t flat_index(const std::vector<int>& multi) const;
  /// Flat index of the node equal to p (within tol per coordinate), or -1.
  long find_node(const Eigen::VectorXd& p, double tol = 1e-12) const;

 private:
  Eigen::VectorXd lo_, hi_;
  std::vector<int> counts_;
  std::vector<double> spacing_;
  std::size_t size_ = 0;
};

/// First derivative along `axis` of a grid function at node `flat`. Uses
/// five-point fourth-order stencils, centered when possible and shifted
/// toward the interior next to the edge of the valid region; falls back to
/// three-point second-order stencils when fewer than five valid nodes line up.
/// Returns false if no stencil fits. `centered` reports whether the centered
/// five-point stencil was used.
bool grid_derivative(const RectGrid& grid, const std::vector<Eigen::VectorXd>& values,
                     const std::vector<char>& valid, std::size_t flat, std::size_t axis,
                     Eigen::VectorXd& out, bool& centered);

struct VectorField {
  std::vector<std::string> coords;
  std::vector<Expr> comps;

  std::size_t dim() const { return comps.size(); }
};

/// [V,W]^a = sum_b V^b d_b W^a - W^b d_b V^a.
VectorField lie_bracket(const VectorField& v, const VectorField& w);

/// Compiled evaluator for a vector field; throws OutOfDomain outside `domain`.
class FieldEvaluator {
 public:
  FieldEvaluator(const VectorField& field, Box domain);
  explicit FieldEvaluator(const VectorField& field);
  Eigen::VectorXd operator()(const Eigen::VectorXd& p) const;

 private:
  Tape tape_;
  Box domain_;
};

/// Dense ODE output: breakpoints, states and derivatives with cubic Hermite
/// interpolation per step. Exact at breakpoints.
class CurveSolution {
 public:
  CurveSolution() = default;
  CurveSolution(std::vector<double> times, std::vector<Eigen::VectorXd> states,
                std::vector<Eigen::VectorXd> derivatives);

  bool empty() const { return times_.empty(); }
  std::size_t size() const { return times_.size(); }
  std::size_t dim() const { return empty() ? 0 : static_cast<std::size_t>(states_[0].size()); }
  double t0() const { return times_.front(); }
  double t1() const { return times_.back(); }
  const std::vector<double>& times() const { return times_; }
  const std::vector<Eigen::VectorXd>& states() const { return states_; }
  const std::vector<Eigen::VectorXd>& derivatives() const { return derivatives_; }
  const Eigen::VectorXd& front() const { return states_.front(); }
  const Eigen::VectorXd& back() const { return states_.back(); }

  /// State at t in [t0, t1]; throws DimensionError outside.
  Eigen::VectorXd operator()(double t) const;
  Eigen::VectorXd derivative(double t) const;

  /// Appends `other`, whose first time must equal t1(). The shared knot is
  /// kept from both sides; at the knot itself `other`'s state is returned.
  void append(const CurveSolution& other);

 private:
  std::size_t segment(double t) const;
  std::vector<double> times_;
  std::vector<Eigen::VectorXd> states_;
  std::vector<Eigen::VectorXd> derivatives_;
};

/// dy/dt = rhs(t, y). The rhs may throw leafsolve::Error (for example
/// OutOfDomain or EvalError) to signal that the trajectory left its chart.
using OdeRhs = std::function<void(double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy)>;

struct OdeRun {
  CurveSolution curve;  // accepted breakpoints, possibly ending early
  bool completed = true;
  double exit_time = 0.0;  // last valid t when !completed
  std::string reason;
};

/// Classical fixed-step RK4 from t0 to t1 >= t0; the last step is shortened
/// to land on t1. Never throws on chart exit; inspect `completed`.
OdeRun integrate_ode_partial(const OdeRhs& rhs, const Eigen::VectorXd& y0, double t0, double t1,
                             double step);

/// As integrate_ode_partial but throws ChartExit if the run stops early.
CurveSolution integrate_ode(const OdeRhs& rhs, const Eigen::VectorXd& y0, double t0, double t1,
                            double step);

using VectorMap = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Central-difference Jacobian (q x p).
Eigen::MatrixXd finite_diff_jacobian(const VectorMap& map, const Eigen::VectorXd& point, double h = 1e-5);

/// Time-t flow of a field by RK4 with `substeps` steps; negative t flows
/// backwards. Throws ChartExit when the flow leaves `domain`.
Eigen::VectorXd flow(const FieldEvaluator& field, const Eigen::VectorXd& p, double t, int substeps = 8);

/// (Phi^W_-t o Phi^V_-t o Phi^W_t o Phi^V_t (p) - p) / t^2, which tends to
/// [V,W](p) as t -> 0.
Eigen::VectorXd flow_commutator_oracle(const VectorField& v, const VectorField& w, const Eigen::VectorXd& point,
                                       double t = 1e-3);
Eigen::VectorXd flow_commutator_oracle(const VectorField& v, const VectorField& w, const Eigen::VectorXd& point,
                                       double t, const Box& domain);

/// Evaluates expressions at a point given in the order of `vars`.
Eigen::VectorXd evaluate(std::span<const Expr> exprs, std::span<const std::string> vars,
                         const Eigen::VectorXd& point);

}  // namespace leafsolve
