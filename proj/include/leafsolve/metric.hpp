#pragma once

// Recovery of a metric compatible with a symmetric connection: g0 at m0 is
// carried along radial geodesics by parallel transport,
//   g_m = P^-T g0 P^-1,  P the transport of the coordinate frame from m0,
// which works when the transported curvature operators stay g0-antisymmetric.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "leafsolve/connection.hpp"
#include "leafsolve/geometry.hpp"
#include "leafsolve/spray.hpp"

namespace leafsolve {

struct Signature {
  int positive = 0;
  int negative = 0;
  friend bool operator==(const Signature&, const Signature&) = default;
};

/// Counts eigenvalue signs of a symmetric matrix; zero eigenvalues (relative
/// to the largest) are counted in neither.
Signature signature_of(const Eigen::MatrixXd& g);

struct MetricSeed {
  Eigen::VectorXd m0;
  Eigen::MatrixXd g0;
  Signature signature;

  /// Validates symmetry (1e-12) and nondegeneracy (|det| > 1e-10 after
  /// scaling the largest entry to 1). Throws DimensionError.
  static MetricSeed make(Eigen::VectorXd m0, Eigen::MatrixXd g0);
};

/// |g0 A + A^T g0|_inf
double antisymmetry_residual(const Eigen::MatrixXd& g0, const Eigen::MatrixXd& A);

struct HypothesisOptions {
  double radius = 0.2;     // length of the sampled rays
  int points_per_ray = 4;  // samples at t = radius k / points_per_ray, k = 0..points_per_ray
  double step = 1e-3;
  double tol = 1e-7;
};

struct HypothesisReport {
  double max_torsion = 0;
  double residual = 0;  // max over samples and i < j of the antisymmetry residual
  std::size_t samples = 0;
  bool pass = false;
};

/// Samples geodesic rays from m0 in the directions +-e_i and
/// (+-e_i +- e_j)/sqrt 2 and, at each sample, the pulled-back curvature
/// operators A_ij = P^-1 R(P e_i, P e_j) P. Throws PreconditionError if the
/// connection has torsion and ChartExit if a ray leaves the chart.
HypothesisReport check_antisymmetry_hypothesis(const BundleConnection& conn, const MetricSeed& seed,
                                               const HypothesisOptions& options = {});

struct MetricOptions {
  double step = 1e-3;
  LogOptions log;
  double hypothesis_tol = 1e-7;
  /// Recover even when the hypothesis fails (for demonstrating the failure).
  bool override_hypothesis = false;
};

struct MetricGrid {
  RectGrid grid;
  MetricSeed seed;
  std::vector<Eigen::MatrixXd> g;            // NaN-filled where unreachable
  std::vector<char> reachable;
  std::vector<std::string> failure;
  std::vector<double> hypothesis_residual;   // pulled-back curvature at the node
  std::vector<double> nabla_g_residual;      // |nabla g|_inf, NaN if unavailable
  std::vector<char> boundary;                // residual used a non-centered stencil
  std::size_t signature_mismatches = 0;
  std::size_t ill_conditioned = 0;           // nodes with cond(P) > 1e6

  double max_hypothesis_residual() const;
  /// Max over nodes with centered stencils (all_nodes: over every node with a stencil).
  double max_nabla_g(bool all_nodes = false) const;
  std::size_t unreachable() const;
};

/// Recovers g on the grid. The node at m0 (which must be a grid node) gets g0
/// exactly; nodes whose logarithm fails are marked unreachable. Throws
/// PreconditionError if the connection has torsion, or if the pulled-back
/// curvature at a node fails antisymmetry and the override is off.
MetricGrid recover_metric(const BundleConnection& conn, const MetricSeed& seed, const RectGrid& grid,
                          const MetricOptions& options = {});

/// |nabla_k g_ij|_inf = |d_k g_ij - Gamma^l_ki g_lj - Gamma^l_kj g_il|_inf
/// at every node, with grid derivatives of g. Fills nabla_g_residual and boundary.
void compute_nabla_g(const BundleConnection& conn, MetricGrid& metric);

struct LeviCivitaReport {
  double max_torsion = 0;
  double max_nabla_g = 0;           // centered interior nodes
  double max_nabla_g_boundary = 0;  // every node with a stencil
  bool pass = false;
};

/// Torsion and metric compatibility of conn against a sampled metric.
LeviCivitaReport verify_levi_civita(const BundleConnection& conn, const MetricGrid& metric, double tol);

struct OrderResidual {
  int order = 0;
  double residual = 0;
};

struct HigherOrderReport {
  std::vector<OrderResidual> orders;  // k = 0..completed
  bool budget_exceeded = false;
  double tol = 0;
  bool pass = false;  // all computed orders below tol and no budget failure
};

/// For k = 0..K, the largest antisymmetry residual of (nabla^k R)(z_1..z_k; e_i, e_j)
/// at m0 over all index combinations.
HigherOrderReport higher_order_metric_check(const BundleConnection& conn, const MetricSeed& seed, int K,
                                            double tol = 1e-8, std::size_t node_budget = 2'000'000);

}  // namespace leafsolve
