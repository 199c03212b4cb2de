#pragma once

// Local Cartan-Ambrose-Hicks construction. Given tangent connections on M
// (dim n) and N (dim m), points x0, y0 and sigma0: T_x0 M -> T_y0 N, each x
// near x0 is reached by the geodesic gamma_x(t) = exp_x0(t v), v = log_x0(x);
// the induced target geodesic is mu_x(t) = exp_y0(t sigma0 v), and
//   f(x) = mu_x(1),  sigma_x = Q sigma0 P^-1,
// with P, Q the parallel transports of the coordinate frames along gamma_x
// and mu_x. f is affine with df = sigma when sigma relates the torsion and
// curvature tensors along the way.
//
// Levi form of the distribution Gr(sigma) on Lin(TM, TN), identified in the
// quotient by (v, w, tau) -> (w - sigma v, tau) with tau the vertical part
// for the induced connection:
//   L(v1, v2) = (sigma T^M(v1, v2) - T^N(sigma v1, sigma v2),
//                sigma R^M(v1, v2) - R^N(sigma v1, sigma v2) sigma).

#include <Eigen/Dense>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "leafsolve/connection.hpp"
#include "leafsolve/geometry.hpp"
#include "leafsolve/spray.hpp"

namespace leafsolve {

class CahProblem {
 public:
  /// Both connections must be tangent; x0 and y0 interior to their domains;
  /// sigma0 is m x n with finite entries.
  CahProblem(BundleConnection source, BundleConnection target, Eigen::VectorXd x0, Eigen::VectorXd y0,
             Eigen::MatrixXd sigma0);

  std::size_t n() const { return source_.n(); }
  std::size_t m() const { return target_.n(); }
  const BundleConnection& source() const { return source_; }
  const BundleConnection& target() const { return target_; }
  const Eigen::VectorXd& x0() const { return x0_; }
  const Eigen::VectorXd& y0() const { return y0_; }
  const Eigen::MatrixXd& sigma0() const { return sigma0_; }
  const Spray& source_spray() const;

  /// Torsion [i][j][a] and curvature [i][j][a][b] values at a point.
  std::vector<double> source_torsion(const Eigen::VectorXd& x) const;
  std::vector<double> source_curvature(const Eigen::VectorXd& x) const;
  std::vector<double> target_torsion(const Eigen::VectorXd& y) const;
  std::vector<double> target_curvature(const Eigen::VectorXd& y) const;

 private:
  struct Cache;
  BundleConnection source_;
  BundleConnection target_;
  Eigen::VectorXd x0_;
  Eigen::VectorXd y0_;
  Eigen::MatrixXd sigma0_;
  std::shared_ptr<const Cache> cache_;
};

struct CahOptions {
  double step = 1e-3;
  LogOptions log;
};

struct InducedSolution {
  Eigen::VectorXd v;       // log_x0(x)
  CurveSolution gamma;     // state (x, x', P column-major)
  CurveSolution mu;        // state (y, y', Q column-major)
  Eigen::VectorXd f;       // mu(1)
  Eigen::MatrixXd sigma;   // Q(1) sigma0 P(1)^-1
};

/// Throws ConvergenceError if the logarithm fails and ChartExit if either
/// geodesic leaves its chart. At x = x0 the curves are constant and sigma is
/// sigma0 exactly.
InducedSolution induced_geodesic_and_sigma(const CahProblem& prob, const Eigen::VectorXd& x,
                                           const CahOptions& options = {});

struct RelatesResidual {
  double torsion = 0;
  double curvature = 0;
};

/// max over basis vectors of |sigma T^M(u, v) - T^N(sigma u, sigma v)| and
/// |sigma R^M(u, v) w - R^N(sigma u, sigma v) sigma w|. With `normalize`,
/// each residual is divided by max(1, largest entry of the two tensors).
RelatesResidual check_relates(const Eigen::MatrixXd& sigma, std::span<const double> TM, std::span<const double> TN,
                              std::span<const double> RM, std::span<const double> RN, bool normalize = true);

struct HomLevi {
  Eigen::VectorXd torsion_part;    // m
  Eigen::MatrixXd curvature_part;  // m x n
};

HomLevi levi_form_hom(const CahProblem& prob, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      const Eigen::MatrixXd& sigma, const Eigen::VectorXd& v1, const Eigen::VectorXd& v2);

struct AffineMapGrid {
  RectGrid grid;
  std::vector<Eigen::VectorXd> f;      // NaN where unreachable
  std::vector<Eigen::MatrixXd> sigma;
  std::vector<char> reachable;
  std::vector<std::string> failure;
  std::vector<RelatesResidual> relates;   // at (x, f(x), sigma_x)
  std::vector<double> jacobian_residual;  // |grid Jacobian of f - sigma_x|_inf, NaN if unavailable
  std::vector<char> boundary;             // a non-centered stencil was used

  std::size_t unreachable() const;
  double max_torsion_relates() const;
  double max_curvature_relates() const;
  /// Max over centered nodes (all_nodes: every node with a stencil).
  double max_jacobian_residual(bool all_nodes = false) const;
};

/// Runs the construction at every grid node; x0 must be a node.
AffineMapGrid cah_map(const CahProblem& prob, const RectGrid& grid, const CahOptions& options = {});

struct AffineReport {
  double max_nabla_sigma = 0;           // centered interior nodes
  double max_nabla_sigma_boundary = 0;  // every node with a stencil
  double max_jacobian_residual = 0;     // centered interior nodes
  bool pass = false;
};

/// Covariant derivative of x -> sigma_x for the induced connection on
/// Lin(TM, TN) along x -> (x, f(x)):
///   d_k sigma + omega^N_{sigma e_k}(f(x)) sigma - sigma omega^M_k(x),
/// with grid derivatives. Passes iff the interior maximum is below tol.
AffineReport affine_residual(const CahProblem& prob, const AffineMapGrid& map, double tol);

struct CahOrder {
  int order = 0;
  double torsion = 0;
  double curvature = 0;
};

struct HigherOrderCahReport {
  std::vector<CahOrder> orders;
  bool budget_exceeded = false;
  double tol = 0;
  bool pass = false;
};

/// For r = 0..K, normalized residuals of
///   sigma0 (nabla^r T^M)(u_1..u_{r+2}) - (nabla^r T^N)(sigma0 u_1..sigma0 u_{r+2})
///   sigma0 (nabla^r R^M)(u_1..u_{r+2}) - (nabla^r R^N)(sigma0 u_1..) sigma0
/// at (x0, y0), maxed over basis tuples.
HigherOrderCahReport higher_order_cah_check(const CahProblem& prob, int K, double tol = 1e-8,
                                            std::size_t node_budget = 2'000'000);

struct SymmetryOrder {
  int order = 0;
  char tensor = 'T';        // 'T' for nabla^order T, 'R' for nabla^order R
  double max_abs = 0;
  std::vector<int> witness;  // slots then fiber indices of the largest entry
};

struct AffineSymmetryReport {
  std::vector<SymmetryOrder> orders;
  bool budget_exceeded = false;
  double tol = 0;
  bool pass = false;
  std::optional<AffineMapGrid> map;  // sigma0 = -I map when the orders pass and a grid is given
  std::optional<AffineReport> affine;
};

/// Evaluates nabla^(2r) T and nabla^(2r+1) R at x0 for orders up to K. If all
/// vanish below tol and a grid is given, builds the candidate symmetry with
/// sigma0 = -I and reports its affine residual (against affine_tol).
AffineSymmetryReport affine_symmetry_check(const BundleConnection& conn, const Eigen::VectorXd& x0, int K,
                                           double tol = 1e-8, const std::optional<RectGrid>& grid = std::nullopt,
                                           double affine_tol = 1e-5, const CahOptions& options = {},
                                           std::size_t node_budget = 2'000'000);

}  // namespace leafsolve
