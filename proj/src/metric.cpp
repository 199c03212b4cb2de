#include "leafsolve/metric.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "leafsolve/parallel.hpp"

namespace leafsolve {

Signature signature_of(const Eigen::MatrixXd& g) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (g + g.transpose()), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double scale = ev.cwiseAbs().maxCoeff();
  Signature s;
  for (long i = 0; i < ev.size(); ++i) {
    if (ev[i] > 1e-12 * scale) ++s.positive;
    if (ev[i] < -1e-12 * scale) ++s.negative;
  }
  return s;
}

MetricSeed MetricSeed::make(Eigen::VectorXd m0, Eigen::MatrixXd g0) {
  if (g0.rows() != g0.cols() || g0.rows() != m0.size()) throw DimensionError("g0 must be n x n with n = dim m0");
  if ((g0 - g0.transpose()).lpNorm<Eigen::Infinity>() > 1e-12) throw DimensionError("g0 is not symmetric");
  const double scale = g0.lpNorm<Eigen::Infinity>();
  if (!(scale > 0) || std::abs((g0 / scale).determinant()) <= 1e-10) throw DimensionError("g0 is degenerate");
  MetricSeed s{std::move(m0), std::move(g0), {}};
  s.signature = signature_of(s.g0);
  return s;
}

double antisymmetry_residual(const Eigen::MatrixXd& g0, const Eigen::MatrixXd& A) {
  return (g0 * A + A.transpose() * g0).lpNorm<Eigen::Infinity>();
}

namespace {

struct CurvatureTape {
  std::size_t n;
  Tape tape;

  explicit CurvatureTape(const BundleConnection& conn) : n(conn.n()) {
    TensorFieldExpr R = curvature(conn);
    tape = Tape(R.comps, conn.base_vars());
  }

  // R_ij at x, R[i * n + j].
  std::vector<Eigen::MatrixXd> at(const Eigen::VectorXd& x) const {
    auto vals = tape.eval(std::span<const double>(x.data(), x.size()));
    std::vector<Eigen::MatrixXd> out;
    for (std::size_t k = 0; k < n * n; ++k) out.push_back(reshape(vals.data() + k * n * n, n, n));
    return out;
  }
};

// max_{i<j} residual of A_ij = P^-1 R(P e_i, P e_j) P.
double pulled_back_residual(const CurvatureTape& ct, const Eigen::VectorXd& x, const Eigen::MatrixXd& P,
                            const Eigen::MatrixXd& g0) {
  const long n = static_cast<long>(ct.n);
  auto R = ct.at(x);
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(P);
  double worst = 0;
  for (long i = 0; i < n; ++i) {
    for (long j = i + 1; j < n; ++j) {
      Eigen::MatrixXd Rv = Eigen::MatrixXd::Zero(n, n);
      for (long k = 0; k < n; ++k) {
        for (long l = 0; l < n; ++l) Rv += P(k, i) * P(l, j) * R[static_cast<std::size_t>(k * n + l)];
      }
      worst = std::max(worst, antisymmetry_residual(g0, lu.solve(Rv * P)));
    }
  }
  return worst;
}

double max_torsion_at(const Tape& torsion_tape, const Eigen::VectorXd& x) {
  double worst = 0;
  for (double v : torsion_tape.eval(std::span<const double>(x.data(), x.size()))) worst = std::max(worst, std::abs(v));
  return worst;
}

void require_symmetric(double max_torsion) {
  if (max_torsion > 1e-10) {
    throw PreconditionError("connection has torsion (max |T| = " + std::to_string(max_torsion) +
                            "); a symmetric connection is required");
  }
}

std::vector<Eigen::VectorXd> ray_directions(long n) {
  std::vector<Eigen::VectorXd> dirs;
  for (long i = 0; i < n; ++i) {
    dirs.push_back(Eigen::VectorXd::Unit(n, i));
    dirs.push_back(-Eigen::VectorXd::Unit(n, i));
  }
  const double s = 1 / std::numbers::sqrt2;
  for (long i = 0; i < n; ++i) {
    for (long j = i + 1; j < n; ++j) {
      for (double a : {1.0, -1.0}) {
        for (double b : {1.0, -1.0}) dirs.push_back(s * (a * Eigen::VectorXd::Unit(n, i) + b * Eigen::VectorXd::Unit(n, j)));
      }
    }
  }
  return dirs;
}

}  // namespace

HypothesisReport check_antisymmetry_hypothesis(const BundleConnection& conn, const MetricSeed& seed,
                                               const HypothesisOptions& options) {
  if (!conn.tangent()) throw DimensionError("metric recovery needs a tangent connection");
  if (seed.m0.size() != static_cast<long>(conn.n())) throw DimensionError("seed dimension does not match");
  const long n = static_cast<long>(conn.n());
  const Tape ttape(torsion(conn).comps, conn.base_vars());
  HypothesisReport rep;
  rep.max_torsion = max_torsion_at(ttape, seed.m0);
  require_symmetric(rep.max_torsion);
  const CurvatureTape ct(conn);
  const int k_max = std::max(1, options.points_per_ray);
  for (const auto& d : ray_directions(n)) {
    auto gt = geodesic_with_transport(conn, seed.m0, options.radius * d, 1.0, options.step / options.radius);
    if (!gt.completed) throw ChartExit(gt.exit_time * options.radius, "hypothesis ray left the chart: " + gt.reason);
    for (int k = 0; k <= k_max; ++k) {
      const Eigen::VectorXd y = gt.curve(static_cast<double>(k) / k_max);
      const Eigen::VectorXd x = y.head(n);
      Eigen::MatrixXd P = Eigen::Map<const Eigen::MatrixXd>(y.data() + 2 * n, n, n);
      rep.max_torsion = std::max(rep.max_torsion, max_torsion_at(ttape, x));
      rep.residual = std::max(rep.residual, pulled_back_residual(ct, x, P, seed.g0));
      ++rep.samples;
    }
  }
  require_symmetric(rep.max_torsion);
  rep.pass = rep.residual < options.tol;
  return rep;
}

double MetricGrid::max_hypothesis_residual() const {
  double m = 0;
  for (std::size_t i = 0; i < hypothesis_residual.size(); ++i) {
    if (reachable[i]) m = std::max(m, hypothesis_residual[i]);
  }
  return m;
}

double MetricGrid::max_nabla_g(bool all_nodes) const {
  double m = 0;
  for (std::size_t i = 0; i < nabla_g_residual.size(); ++i) {
    if (std::isnan(nabla_g_residual[i])) continue;
    if (all_nodes || !boundary[i]) m = std::max(m, nabla_g_residual[i]);
  }
  return m;
}

std::size_t MetricGrid::unreachable() const {
  std::size_t c = 0;
  for (char r : reachable) c += r ? 0 : 1;
  return c;
}

MetricGrid recover_metric(const BundleConnection& conn, const MetricSeed& seed, const RectGrid& grid,
                          const MetricOptions& options) {
  if (!conn.tangent()) throw DimensionError("metric recovery needs a tangent connection");
  const long n = static_cast<long>(conn.n());
  if (seed.m0.size() != n || grid.dim() != conn.n()) throw DimensionError("seed and grid must match the connection");
  const long anchor = grid.find_node(seed.m0);
  if (anchor < 0) throw DimensionError("m0 must be a grid node");
  const Tape ttape(torsion(conn).comps, conn.base_vars());
  require_symmetric(max_torsion_at(ttape, seed.m0));

  const Spray spray = geodesic_spray(conn);
  const CurvatureTape ct(conn);
  const std::size_t N = grid.size();
  MetricGrid mg;
  mg.grid = grid;
  mg.seed = seed;
  mg.g.assign(N, Eigen::MatrixXd::Constant(n, n, std::numeric_limits<double>::quiet_NaN()));
  mg.reachable.assign(N, 0);
  mg.failure.assign(N, "");
  mg.hypothesis_residual.assign(N, std::numeric_limits<double>::quiet_NaN());
  std::vector<char> mismatch(N, 0), ill(N, 0);
  std::vector<double> torsion_at(N, 0.0);

  parallel_for(N, [&](std::size_t i) {
    const Eigen::VectorXd m = grid.point(i);
    if (static_cast<long>(i) == anchor) {
      mg.g[i] = seed.g0;
      mg.reachable[i] = 1;
      mg.hypothesis_residual[i] = pulled_back_residual(ct, seed.m0, Eigen::MatrixXd::Identity(n, n), seed.g0);
      return;
    }
    try {
      const Eigen::VectorXd v = log_map(spray, seed.m0, m, options.log);
      auto gt = geodesic_with_transport(conn, seed.m0, v, 1.0, options.step);
      if (!gt.completed) throw ChartExit(gt.exit_time, gt.reason);
      Eigen::FullPivLU<Eigen::MatrixXd> lu(gt.P);
      if (!lu.isInvertible()) throw ConvergenceError("transported frame is singular");
      const Eigen::MatrixXd Pinv = lu.solve(Eigen::MatrixXd::Identity(n, n));
      mg.g[i] = Pinv.transpose() * seed.g0 * Pinv;
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(gt.P);
      const auto& sv = svd.singularValues();
      ill[i] = sv[0] > 1e6 * sv[sv.size() - 1];
      mismatch[i] = !(signature_of(mg.g[i]) == seed.signature);
      mg.hypothesis_residual[i] = pulled_back_residual(ct, gt.x, gt.P, seed.g0);
      torsion_at[i] = max_torsion_at(ttape, m);
      mg.reachable[i] = 1;
    } catch (const Error& e) {
      mg.failure[i] = e.what();
    }
  });

  double max_t = 0;
  for (std::size_t i = 0; i < N; ++i) {
    mg.signature_mismatches += mismatch[i] ? 1 : 0;
    mg.ill_conditioned += ill[i] ? 1 : 0;
    max_t = std::max(max_t, torsion_at[i]);
  }
  require_symmetric(max_t);
  const double h = mg.max_hypothesis_residual();
  if (!options.override_hypothesis && h >= options.hypothesis_tol) {
    throw PreconditionError("pulled-back curvature is not g0-antisymmetric (residual " + std::to_string(h) +
                            "); no compatible metric exists");
  }
  compute_nabla_g(conn, mg);
  return mg;
}

void compute_nabla_g(const BundleConnection& conn, MetricGrid& mg) {
  const std::size_t n = conn.n(), N = mg.grid.size();
  std::vector<Eigen::VectorXd> values(N);
  for (std::size_t i = 0; i < N; ++i) values[i] = Eigen::Map<const Eigen::VectorXd>(mg.g[i].data(), static_cast<long>(n * n));
  mg.nabla_g_residual.assign(N, std::numeric_limits<double>::quiet_NaN());
  mg.boundary.assign(N, 0);
  parallel_for(N, [&](std::size_t i) {
    if (!mg.reachable[i]) return;
    const Eigen::VectorXd x = mg.grid.point(i);
    std::vector<Eigen::MatrixXd> w;
    try {
      w = conn.omega_at(x);
    } catch (const Error&) {
      return;
    }
    const Eigen::MatrixXd& g = mg.g[i];
    double worst = 0;
    bool all_centered = true;
    for (std::size_t k = 0; k < n; ++k) {
      Eigen::VectorXd d;
      bool centered = false;
      if (!grid_derivative(mg.grid, values, mg.reachable, i, k, d, centered)) return;
      all_centered = all_centered && centered;
      Eigen::Map<const Eigen::MatrixXd> dg(d.data(), static_cast<long>(n), static_cast<long>(n));
      // (w_k)(l, i) = Gamma^l_{k i}:  nabla_k g = d_k g - w_k^T g - g w_k.
      const Eigen::MatrixXd r = dg - w[k].transpose() * g - g * w[k];
      worst = std::max(worst, r.lpNorm<Eigen::Infinity>());
    }
    mg.nabla_g_residual[i] = worst;
    mg.boundary[i] = !all_centered;
  });
}

LeviCivitaReport verify_levi_civita(const BundleConnection& conn, const MetricGrid& metric_in, double tol) {
  MetricGrid metric = metric_in;
  compute_nabla_g(conn, metric);
  const Tape ttape(torsion(conn).comps, conn.base_vars());
  LeviCivitaReport rep;
  for (std::size_t i = 0; i < metric.grid.size(); ++i) {
    try {
      rep.max_torsion = std::max(rep.max_torsion, max_torsion_at(ttape, metric.grid.point(i)));
    } catch (const Error&) {
    }
  }
  rep.max_nabla_g = metric.max_nabla_g(false);
  rep.max_nabla_g_boundary = metric.max_nabla_g(true);
  rep.pass = rep.max_torsion < tol && rep.max_nabla_g < tol;
  return rep;
}

HigherOrderReport higher_order_metric_check(const BundleConnection& conn, const MetricSeed& seed, int K, double tol,
                                            std::size_t node_budget) {
  if (!conn.tangent()) throw DimensionError("metric check needs a tangent connection");
  const Tape ttape(torsion(conn).comps, conn.base_vars());
  require_symmetric(max_torsion_at(ttape, seed.m0));
  const std::size_t n = conn.n();
  HigherOrderReport rep;
  rep.tol = tol;
  TensorFieldExpr cur = curvature(conn);
  for (int k = 0; k <= K; ++k) {
    if (k > 0) {
      try {
        cur = covariant_derivative_tensor(conn, &conn, cur, 1, node_budget);
      } catch (const BudgetExceeded&) {
        rep.budget_exceeded = true;
        break;
      }
    }
    const auto vals = cur.evaluate(seed.m0);
    double worst = 0;
    for (std::size_t s = 0; s < cur.slot_count(); ++s) {
      worst = std::max(worst, antisymmetry_residual(seed.g0, reshape(vals.data() + s * n * n, n, n)));
    }
    rep.orders.push_back({k, worst});
  }
  rep.pass = !rep.budget_exceeded;
  for (const auto& o : rep.orders) rep.pass = rep.pass && o.residual < tol;
  return rep;
}

}  // namespace leafsolve
