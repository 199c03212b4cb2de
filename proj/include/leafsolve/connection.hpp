#pragma once

// Connections on trivial bundles U x R^r over a chart U in R^n, given by
// coefficient matrices omega_i (r x r) so that
//   nabla_{d_i} s = d_i s + omega_i s.
// For a tangent connection (r = n) the Christoffel symbols are
//   Gamma^a_{ij} = (omega_i)[a][j],  nabla_{d_i} d_j = Gamma^a_{ij} d_a,
// and arrays of Christoffel symbols are laid out as [a][i][j].
//
// Curvature: R_ij = d_i omega_j - d_j omega_i + [omega_i, omega_j], which is
// R(d_i, d_j) = nabla_i nabla_j - nabla_j nabla_i.
// Torsion: T^a_{ij} = Gamma^a_{ij} - Gamma^a_{ji}.

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "leafsolve/distribution.hpp"
#include "leafsolve/expr_matrix.hpp"
#include "leafsolve/geometry.hpp"

namespace leafsolve {

class BundleConnection {
 public:
  BundleConnection(std::vector<std::string> base_vars, std::vector<ExprMatrix> omega, Box domain,
                   bool tangent = false);
  /// Tangent connection from Christoffel symbols, gamma[(a*n + i)*n + j] = Gamma^a_{ij}.
  static BundleConnection from_christoffel(std::vector<std::string> base_vars, const std::vector<Expr>& gamma,
                                           Box domain);

  std::size_t n() const { return base_vars_.size(); }
  std::size_t r() const { return r_; }
  bool tangent() const { return tangent_; }
  const std::vector<std::string>& base_vars() const { return base_vars_; }
  const std::vector<ExprMatrix>& omega() const { return omega_; }
  const ExprMatrix& omega(std::size_t i) const { return omega_[i]; }
  const Box& domain() const { return domain_; }

  /// Gamma^a_{ij}; requires a tangent connection.
  Expr christoffel(std::size_t a, std::size_t i, std::size_t j) const;

  /// omega_i(x) for all i. Throws OutOfDomain outside the domain.
  std::vector<Eigen::MatrixXd> omega_at(const Eigen::VectorXd& x) const;
  /// sum_i v^i omega_i(x).
  Eigen::MatrixXd omega_along(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const;

 private:
  std::vector<std::string> base_vars_;
  std::size_t r_ = 0;
  std::vector<ExprMatrix> omega_;
  Box domain_;
  bool tangent_ = false;
  std::shared_ptr<const Tape> tape_;
};

enum class FiberKind { Scalar, Vector, Endomorphism };

/// Tensor field with `arity` covariant slots (each of size n) followed by a
/// fiber part: nothing, a vector index a < r, or an endomorphism [a][b].
/// Components are stored densely, row-major over (slots..., fiber...).
struct TensorFieldExpr {
  std::vector<std::string> vars;
  std::size_t n = 0;
  std::size_t r = 0;
  int arity = 0;
  FiberKind fiber = FiberKind::Scalar;
  std::vector<Expr> comps;

  TensorFieldExpr() = default;
  TensorFieldExpr(std::vector<std::string> vars, std::size_t r, int arity, FiberKind fiber);

  std::size_t fiber_size() const;
  std::size_t slot_count() const;  // n^arity
  std::size_t size() const { return slot_count() * fiber_size(); }
  /// Flat index of (slots, fiber a, fiber b).
  std::size_t index(std::span<const int> slots, int a = 0, int b = 0) const;

  /// Component values at x, same layout as comps.
  std::vector<double> evaluate(const Eigen::VectorXd& x) const;
};

/// nabla_{d_i} s = d_i s + omega_i s.
std::vector<Expr> covariant_derivative(const BundleConnection& conn, const std::vector<Expr>& section, std::size_t i);

/// R[i][j][a][b] = (R_ij)_{ab}.
TensorFieldExpr curvature(const BundleConnection& conn);

/// T[i][j][a] = Gamma^a_{ij} - Gamma^a_{ji}; requires a tangent connection.
TensorFieldExpr torsion(const BundleConnection& conn);

/// k-fold covariant derivative. Each application prepends one covariant slot:
///   (nabla tau)[z][c...][f] = d_z tau[c...][f] + (fiber correction)
///                             - sum_p Gamma^d_{z c_p} tau[... d ...][f],
/// where the fiber correction is omega_z tau for vector fibers and
/// omega_z A - A omega_z for endomorphism fibers, with omega taken from
/// `fiber_conn` (ignored for scalar fibers). Throws BudgetExceeded when the
/// components exceed `node_budget` distinct nodes.
TensorFieldExpr covariant_derivative_tensor(const BundleConnection& tangent_conn, const BundleConnection* fiber_conn,
                                            const TensorFieldExpr& tensor, int k,
                                            std::size_t node_budget = 2'000'000);

/// Curve t -> (x(t), x'(t)).
using CurveFn = std::function<void(double t, Eigen::VectorXd& x, Eigen::VectorXd& xdot)>;

/// Solves s' = -(sum_i x'^i omega_i(x)) s along the curve. The state may be
/// an r x c matrix (c sections at once); the CurveSolution stores it
/// flattened column-major. Throws ChartExit if the curve leaves the domain.
CurveSolution parallel_transport(const BundleConnection& conn, const CurveFn& curve, const Eigen::MatrixXd& s0,
                                 double t0, double t1, double step);

/// Straight segment from a to b over [0, 1].
CurveFn segment_curve(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Joint integration of the geodesic x'' = -Gamma(x', x') and the parallel
/// transport P' = -omega_{x'} P of the identity frame, over [0, t_end].
struct GeodesicTransport {
  CurveSolution curve;  // state (x, v, P column-major)
  Eigen::VectorXd x;    // at the last accepted time
  Eigen::VectorXd v;
  Eigen::MatrixXd P;
  bool completed = true;
  double exit_time = 0;
  std::string reason;
};
GeodesicTransport geodesic_with_transport(const BundleConnection& conn, const Eigen::VectorXd& x0,
                                          const Eigen::VectorXd& v0, double t_end, double step);

/// omega*_i = -omega_i^T on the dual bundle.
BundleConnection dual_connection(const BundleConnection& conn);

/// Induced connection on bilinear forms, fiber rank r^2 with G row-major:
///   nabla_i G = d_i G - omega_i^T G - G omega_i.
BundleConnection bilinear_connection(const BundleConnection& conn);

/// Connection on Lin(TM, TN) over M x N (M variables first), fiber rank m*n
/// with sigma (m x n) row-major:
///   nabla_{(v,w)} sigma = d sigma + omega^N_w sigma - sigma omega^M_v.
BundleConnection hom_connection(const BundleConnection& connM, const BundleConnection& connN);

/// (f* omega)_j = sum_i (d_j f^i) omega_i o f over new coordinates.
BundleConnection pullback_connection(const BundleConnection& conn, const std::vector<Expr>& f,
                                     std::vector<std::string> new_vars, Box new_domain);

/// Horizontal distribution of the connection as a graph over the base with
/// fiber coordinates xi: F(x, xi)(v) = -(sum_i v^i omega_i(x)) xi. Its Levi
/// form is L(v, w) = -R(v, w) xi.
GraphDistribution horizontal_distribution(const BundleConnection& conn, std::vector<std::string> fiber_vars,
                                          const Box& fiber_box);

}  // namespace leafsolve
