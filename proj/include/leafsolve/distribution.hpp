#pragma once

// Graph distributions D = Gr(F) on a box in R^k x R^m, their Levi form,
// horizontal lifts along rays, the single-leaf solver for total differential
// equations df = F(x, f) dx, and iterated-bracket obstructions.
//
// Levi form convention: for horizontal extensions X~ = (X, F X) the bracket
// [X~, Y~] = (v, w) is sent to w - F(v). In coordinates, with constant X, Y,
//   L(X, Y) = dF_x(X)(Y) + dF_y(F X)(Y) - dF_x(Y)(X) - dF_y(F Y)(X),
// so F(x, y)(X) = x2 X1 gives L(e1, e2) = -1.

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "leafsolve/expr_matrix.hpp"
#include "leafsolve/geometry.hpp"

namespace leafsolve {

class GraphDistribution {
 public:
  /// F is m x k over base_vars (k names) followed by fiber_vars (m names);
  /// domain is a box in R^(k+m).
  GraphDistribution(std::vector<std::string> base_vars, std::vector<std::string> fiber_vars, ExprMatrix F,
                    Box domain);

  std::size_t k() const { return base_vars_.size(); }
  std::size_t m() const { return fiber_vars_.size(); }
  const std::vector<std::string>& base_vars() const { return base_vars_; }
  const std::vector<std::string>& fiber_vars() const { return fiber_vars_; }
  /// base_vars followed by fiber_vars.
  const std::vector<std::string>& coords() const { return coords_; }
  const ExprMatrix& F() const { return F_; }
  const Box& domain() const { return domain_; }

  /// F at (x, y), m x k. Throws OutOfDomain outside the domain.
  Eigen::MatrixXd F_at(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const;

  /// Horizontal extension of the constant base direction e_i.
  VectorField frame_field(std::size_t i) const;

  /// Symbolic Levi tensor L_ij = L(e_i, e_j) for i < j, in lexicographic pair
  /// order; each entry is an m-vector of expressions. Computed on first use.
  const std::vector<std::vector<Expr>>& levi_tensor() const;

  /// L(X, Y) at p = (x, y).
  Eigen::VectorXd levi_form(const Eigen::VectorXd& p, const Eigen::VectorXd& X, const Eigen::VectorXd& Y) const;
  /// max_{i<j} |L(e_i, e_j)|_inf at p.
  double levi_residual(const Eigen::VectorXd& p) const;

 private:
  struct Cache;
  std::vector<std::string> base_vars_;
  std::vector<std::string> fiber_vars_;
  std::vector<std::string> coords_;
  ExprMatrix F_;
  Box domain_;
  std::shared_ptr<Cache> cache_;
};

/// Free-function form of GraphDistribution::levi_form.
Eigen::VectorXd levi_form(const GraphDistribution& d, const Eigen::VectorXd& p, const Eigen::VectorXd& X,
                          const Eigen::VectorXd& Y);

/// Psi solving dPsi/dt = F(x0 + t lambda, Psi) lambda, Psi(0) = y0, on
/// [0, t_end]. Throws ChartExit if the lifted curve leaves the domain.
CurveSolution horizontal_lift_ray(const GraphDistribution& d, const Eigen::VectorXd& x0, const Eigen::VectorXd& y0,
                                  const Eigen::VectorXd& lambda, double t_end, double step);

/// Sampled leaf over a rectangular base grid.
struct LeafGrid {
  RectGrid grid;
  Eigen::VectorXd x0;
  Eigen::VectorXd y0;
  std::vector<Eigen::VectorXd> values;  // f at each node
  std::vector<char> reachable;          // lift along the ray reached t = 1
  std::vector<std::string> failure;     // reason when not reachable
  std::vector<double> leaf_residual;    // |J(f) - F(x, f)|_inf, NaN if unavailable
  std::vector<char> boundary;           // residual used a non-centered stencil
  std::vector<double> levi_residual;    // max Levi residual along the ray

  /// Leaf with values given directly (for checking candidate solutions).
  static LeafGrid from_values(RectGrid grid, Eigen::VectorXd x0, Eigen::VectorXd y0,
                              std::vector<Eigen::VectorXd> values);
};

/// Solves the total differential equation by lifting the ray from x0 to
/// each grid node. x0 must be a grid node; the node at x0 is set to y0
/// exactly. Nodes whose lift leaves the domain are marked unreachable.
LeafGrid solve_tde(const GraphDistribution& d, const Eigen::VectorXd& x0, const Eigen::VectorXd& y0,
                   const RectGrid& grid, double step);

struct LeafReport {
  double max_leaf_residual = 0;           // over nodes with centered stencils
  double max_leaf_residual_boundary = 0;  // over all nodes with a stencil
  double max_levi_residual = 0;           // at the leaf points
  std::size_t unreachable = 0;
  bool pass = false;
};

/// Recomputes leaf and Levi residuals from the leaf's values. Passes iff both
/// interior maxima are below tol and every node is reachable.
LeafReport check_leaf(const GraphDistribution& d, const LeafGrid& leaf, double tol);

struct BracketDefect {
  int order = 0;             // number of nested brackets
  std::vector<int> indices;  // 1-based frame indices i_1..i_{order+1}
  Eigen::VectorXd defect;    // w - F(v), entries below 1e-9 set to 0
};

struct BracketObstructions {
  std::vector<BracketDefect> defects;
  int completed_order = 0;
  /// Largest |defect|_inf at the given order (0 if none).
  double max_defect(int order) const;
};

/// All iterated brackets [X~_{i1}, [..., [X~_{is}, X~_{is+1}]]] of the frame
/// fields for s = 1..max_order, evaluated at e0. Innermost pairs are taken
/// with i_s < i_{s+1}. Throws BudgetExceeded when the symbolic brackets of
/// one order exceed `node_budget` distinct nodes.
BracketObstructions iterated_bracket_obstructions(const GraphDistribution& d, const Eigen::VectorXd& e0,
                                                  int max_order, std::size_t node_budget = 2'000'000);

}  // namespace leafsolve
