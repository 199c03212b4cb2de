#include "leafsolve/cah.hpp"

#include <cmath>
#include <limits>

#include "leafsolve/parallel.hpp"

namespace leafsolve {

struct CahProblem::Cache {
  Spray source_spray;
  Tape source_torsion;
  Tape source_curvature;
  Tape target_torsion;
  Tape target_curvature;
};

CahProblem::CahProblem(BundleConnection source, BundleConnection target, Eigen::VectorXd x0, Eigen::VectorXd y0,
                       Eigen::MatrixXd sigma0)
    : source_(std::move(source)),
      target_(std::move(target)),
      x0_(std::move(x0)),
      y0_(std::move(y0)),
      sigma0_(std::move(sigma0)) {
  if (!source_.tangent() || !target_.tangent()) throw DimensionError("both connections must be tangent");
  if (x0_.size() != static_cast<long>(n()) || y0_.size() != static_cast<long>(m())) {
    throw DimensionError("x0 and y0 must match the connection dimensions");
  }
  if (sigma0_.rows() != static_cast<long>(m()) || sigma0_.cols() != static_cast<long>(n())) {
    throw DimensionError("sigma0 must be m x n");
  }
  if (!sigma0_.allFinite()) throw DimensionError("sigma0 has non-finite entries");
  if (!source_.domain().contains(x0_)) throw OutOfDomain("x0 outside the source chart");
  if (!target_.domain().contains(y0_)) throw OutOfDomain("y0 outside the target chart");
  cache_ = std::make_shared<const Cache>(Cache{
      geodesic_spray(source_),
      Tape(torsion(source_).comps, source_.base_vars()),
      Tape(curvature(source_).comps, source_.base_vars()),
      Tape(torsion(target_).comps, target_.base_vars()),
      Tape(curvature(target_).comps, target_.base_vars()),
  });
}

const Spray& CahProblem::source_spray() const { return cache_->source_spray; }

namespace {

std::vector<double> eval_at(const Tape& tape, const Box& box, const Eigen::VectorXd& x) {
  if (!box.contains(x)) throw OutOfDomain("point outside the chart");
  return tape.eval(std::span<const double>(x.data(), x.size()));
}

}  // namespace

std::vector<double> CahProblem::source_torsion(const Eigen::VectorXd& x) const {
  return eval_at(cache_->source_torsion, source_.domain(), x);
}
std::vector<double> CahProblem::source_curvature(const Eigen::VectorXd& x) const {
  return eval_at(cache_->source_curvature, source_.domain(), x);
}
std::vector<double> CahProblem::target_torsion(const Eigen::VectorXd& y) const {
  return eval_at(cache_->target_torsion, target_.domain(), y);
}
std::vector<double> CahProblem::target_curvature(const Eigen::VectorXd& y) const {
  return eval_at(cache_->target_curvature, target_.domain(), y);
}

InducedSolution induced_geodesic_and_sigma(const CahProblem& prob, const Eigen::VectorXd& x,
                                           const CahOptions& options) {
  if (x.size() != static_cast<long>(prob.n())) throw DimensionError("point must have n components");
  InducedSolution out;
  out.v = log_map(prob.source_spray(), prob.x0(), x, options.log);
  auto gm = geodesic_with_transport(prob.source(), prob.x0(), out.v, 1.0, options.step);
  if (!gm.completed) throw ChartExit(gm.exit_time, "source geodesic left the chart: " + gm.reason);
  auto gn = geodesic_with_transport(prob.target(), prob.y0(), prob.sigma0() * out.v, 1.0, options.step);
  if (!gn.completed) throw ChartExit(gn.exit_time, "target geodesic left the chart: " + gn.reason);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(gm.P);
  if (!lu.isInvertible()) throw ConvergenceError("transported source frame is singular");
  out.sigma = gn.P * prob.sigma0() * lu.solve(Eigen::MatrixXd::Identity(gm.P.rows(), gm.P.cols()));
  out.f = gn.x;
  out.gamma = std::move(gm.curve);
  out.mu = std::move(gn.curve);
  return out;
}

namespace {

// Contracts every slot (dimension m) of a dense tensor with sigma (m x n),
// giving slots of dimension n: out[..i..] = sum_a sigma(a, i) in[..a..].
std::vector<double> contract_slots(std::vector<double> vals, int arity, long m, long n, std::size_t fiber,
                                   const Eigen::MatrixXd& sigma) {
  std::vector<long> dims(static_cast<std::size_t>(arity), m);
  for (int p = 0; p < arity; ++p) {
    std::size_t outer = 1, inner = fiber;
    for (int q = 0; q < p; ++q) outer *= static_cast<std::size_t>(dims[q]);
    for (int q = p + 1; q < arity; ++q) inner *= static_cast<std::size_t>(dims[q]);
    std::vector<double> next(outer * static_cast<std::size_t>(n) * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o) {
      for (long i = 0; i < n; ++i) {
        double* dst = next.data() + (o * n + i) * inner;
        for (long a = 0; a < m; ++a) {
          const double s = sigma(a, i);
          if (s == 0) continue;
          const double* src = vals.data() + (o * m + a) * inner;
          for (std::size_t k = 0; k < inner; ++k) dst[k] += s * src[k];
        }
      }
    }
    vals = std::move(next);
    dims[static_cast<std::size_t>(p)] = n;
  }
  return vals;
}

double max_abs(std::span<const double> v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Residual of sigma tauM(u...) - tauN(sigma u...) for a vector-valued tensor
// (fiber n on M, m on N).
double vector_relates(const Eigen::MatrixXd& sigma, std::span<const double> tM, std::span<const double> tN, int arity,
                      bool normalize) {
  const long m = sigma.rows(), n = sigma.cols();
  const auto pulled = contract_slots(std::vector<double>(tN.begin(), tN.end()), arity, m, n, static_cast<std::size_t>(m), sigma);
  const std::size_t slots = pulled.size() / static_cast<std::size_t>(m);
  if (tM.size() != slots * static_cast<std::size_t>(n)) throw DimensionError("tensor sizes do not match");
  double worst = 0;
  for (std::size_t s = 0; s < slots; ++s) {
    Eigen::Map<const Eigen::VectorXd> a(tM.data() + s * n, n);
    Eigen::Map<const Eigen::VectorXd> b(pulled.data() + s * m, m);
    worst = std::max(worst, (sigma * a - b).lpNorm<Eigen::Infinity>());
  }
  if (normalize) worst /= std::max({1.0, max_abs(tM), max_abs(tN)});
  return worst;
}

// Residual of sigma A^M(u...) - A^N(sigma u...) sigma for an
// endomorphism-valued tensor.
double endo_relates(const Eigen::MatrixXd& sigma, std::span<const double> tM, std::span<const double> tN, int arity,
                    bool normalize) {
  const long m = sigma.rows(), n = sigma.cols();
  const auto pulled =
      contract_slots(std::vector<double>(tN.begin(), tN.end()), arity, m, n, static_cast<std::size_t>(m * m), sigma);
  const std::size_t slots = pulled.size() / static_cast<std::size_t>(m * m);
  if (tM.size() != slots * static_cast<std::size_t>(n * n)) throw DimensionError("tensor sizes do not match");
  double worst = 0;
  for (std::size_t s = 0; s < slots; ++s) {
    const Eigen::MatrixXd A = reshape(tM.data() + s * n * n, static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    const Eigen::MatrixXd B = reshape(pulled.data() + s * m * m, static_cast<std::size_t>(m), static_cast<std::size_t>(m));
    worst = std::max(worst, (sigma * A - B * sigma).lpNorm<Eigen::Infinity>());
  }
  if (normalize) worst /= std::max({1.0, max_abs(tM), max_abs(tN)});
  return worst;
}

}  // namespace

RelatesResidual check_relates(const Eigen::MatrixXd& sigma, std::span<const double> TM, std::span<const double> TN,
                              std::span<const double> RM, std::span<const double> RN, bool normalize) {
  return {vector_relates(sigma, TM, TN, 2, normalize), endo_relates(sigma, RM, RN, 2, normalize)};
}

HomLevi levi_form_hom(const CahProblem& prob, const Eigen::VectorXd& x, const Eigen::VectorXd& y,
                      const Eigen::MatrixXd& sigma, const Eigen::VectorXd& v1, const Eigen::VectorXd& v2) {
  const long n = static_cast<long>(prob.n()), m = static_cast<long>(prob.m());
  if (sigma.rows() != m || sigma.cols() != n || v1.size() != n || v2.size() != n) {
    throw DimensionError("levi form arguments have the wrong shape");
  }
  const auto TM = prob.source_torsion(x), RM = prob.source_curvature(x);
  const auto TN = prob.target_torsion(y), RN = prob.target_curvature(y);
  const Eigen::VectorXd w1 = sigma * v1, w2 = sigma * v2;
  Eigen::VectorXd tM = Eigen::VectorXd::Zero(n), tN = Eigen::VectorXd::Zero(m);
  Eigen::MatrixXd rM = Eigen::MatrixXd::Zero(n, n), rN = Eigen::MatrixXd::Zero(m, m);
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      const double c = v1[i] * v2[j];
      if (c == 0) continue;
      tM += c * Eigen::Map<const Eigen::VectorXd>(TM.data() + (i * n + j) * n, n);
      rM += c * reshape(RM.data() + (i * n + j) * n * n, prob.n(), prob.n());
    }
  }
  for (long i = 0; i < m; ++i) {
    for (long j = 0; j < m; ++j) {
      const double c = w1[i] * w2[j];
      if (c == 0) continue;
      tN += c * Eigen::Map<const Eigen::VectorXd>(TN.data() + (i * m + j) * m, m);
      rN += c * reshape(RN.data() + (i * m + j) * m * m, prob.m(), prob.m());
    }
  }
  return {sigma * tM - tN, sigma * rM - rN * sigma};
}

std::size_t AffineMapGrid::unreachable() const {
  std::size_t c = 0;
  for (char r : reachable) c += r ? 0 : 1;
  return c;
}

double AffineMapGrid::max_torsion_relates() const {
  double m = 0;
  for (std::size_t i = 0; i < relates.size(); ++i) {
    if (reachable[i]) m = std::max(m, relates[i].torsion);
  }
  return m;
}

double AffineMapGrid::max_curvature_relates() const {
  double m = 0;
  for (std::size_t i = 0; i < relates.size(); ++i) {
    if (reachable[i]) m = std::max(m, relates[i].curvature);
  }
  return m;
}

double AffineMapGrid::max_jacobian_residual(bool all_nodes) const {
  double m = 0;
  for (std::size_t i = 0; i < jacobian_residual.size(); ++i) {
    if (std::isnan(jacobian_residual[i])) continue;
    if (all_nodes || !boundary[i]) m = std::max(m, jacobian_residual[i]);
  }
  return m;
}

AffineMapGrid cah_map(const CahProblem& prob, const RectGrid& grid, const CahOptions& options) {
  const long n = static_cast<long>(prob.n()), m = static_cast<long>(prob.m());
  if (grid.dim() != prob.n()) throw DimensionError("grid must live on the source");
  const long anchor = grid.find_node(prob.x0());
  if (anchor < 0) throw DimensionError("x0 must be a grid node");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const std::size_t N = grid.size();
  AffineMapGrid out;
  out.grid = grid;
  out.f.assign(N, Eigen::VectorXd::Constant(m, nan));
  out.sigma.assign(N, Eigen::MatrixXd::Constant(m, n, nan));
  out.reachable.assign(N, 0);
  out.failure.assign(N, "");
  out.relates.assign(N, {nan, nan});
  out.jacobian_residual.assign(N, nan);
  out.boundary.assign(N, 0);

  parallel_for(N, [&](std::size_t i) {
    const Eigen::VectorXd x = grid.point(i);
    try {
      if (static_cast<long>(i) == anchor) {
        out.f[i] = prob.y0();
        out.sigma[i] = prob.sigma0();
      } else {
        InducedSolution s = induced_geodesic_and_sigma(prob, x, options);
        out.f[i] = s.f;
        out.sigma[i] = s.sigma;
      }
      out.relates[i] = check_relates(out.sigma[i], prob.source_torsion(x), prob.target_torsion(out.f[i]),
                                     prob.source_curvature(x), prob.target_curvature(out.f[i]));
      out.reachable[i] = 1;
    } catch (const Error& e) {
      out.f[i].setConstant(nan);
      out.sigma[i].setConstant(nan);
      out.relates[i] = {nan, nan};
      out.failure[i] = e.what();
    }
  });

  parallel_for(N, [&](std::size_t i) {
    if (!out.reachable[i]) return;
    double worst = 0;
    bool all_centered = true;
    for (long k = 0; k < n; ++k) {
      Eigen::VectorXd d;
      bool centered = false;
      if (!grid_derivative(grid, out.f, out.reachable, i, static_cast<std::size_t>(k), d, centered)) return;
      all_centered = all_centered && centered;
      worst = std::max(worst, (d - out.sigma[i].col(k)).lpNorm<Eigen::Infinity>());
    }
    out.jacobian_residual[i] = worst;
    out.boundary[i] = !all_centered;
  });
  return out;
}

AffineReport affine_residual(const CahProblem& prob, const AffineMapGrid& map, double tol) {
  const long n = static_cast<long>(prob.n()), m = static_cast<long>(prob.m());
  const std::size_t N = map.grid.size();
  std::vector<Eigen::VectorXd> values(N);
  for (std::size_t i = 0; i < N; ++i) values[i] = Eigen::Map<const Eigen::VectorXd>(map.sigma[i].data(), m * n);
  std::vector<double> resid(N, std::numeric_limits<double>::quiet_NaN());
  std::vector<char> boundary(N, 0);
  parallel_for(N, [&](std::size_t i) {
    if (!map.reachable[i]) return;
    const Eigen::VectorXd x = map.grid.point(i);
    std::vector<Eigen::MatrixXd> wM;
    try {
      wM = prob.source().omega_at(x);
    } catch (const Error&) {
      return;
    }
    const Eigen::MatrixXd& s = map.sigma[i];
    double worst = 0;
    bool all_centered = true;
    for (long k = 0; k < n; ++k) {
      Eigen::VectorXd d;
      bool centered = false;
      if (!grid_derivative(map.grid, values, map.reachable, i, static_cast<std::size_t>(k), d, centered)) return;
      all_centered = all_centered && centered;
      Eigen::Map<const Eigen::MatrixXd> ds(d.data(), m, n);
      Eigen::MatrixXd wN;
      try {
        wN = prob.target().omega_along(map.f[i], s.col(k));
      } catch (const Error&) {
        return;
      }
      worst = std::max(worst, (ds + wN * s - s * wM[static_cast<std::size_t>(k)]).lpNorm<Eigen::Infinity>());
    }
    resid[i] = worst;
    boundary[i] = !all_centered;
  });
  AffineReport rep;
  for (std::size_t i = 0; i < N; ++i) {
    if (std::isnan(resid[i])) continue;
    rep.max_nabla_sigma_boundary = std::max(rep.max_nabla_sigma_boundary, resid[i]);
    if (!boundary[i]) rep.max_nabla_sigma = std::max(rep.max_nabla_sigma, resid[i]);
  }
  rep.max_jacobian_residual = map.max_jacobian_residual(false);
  rep.pass = rep.max_nabla_sigma < tol;
  return rep;
}

HigherOrderCahReport higher_order_cah_check(const CahProblem& prob, int K, double tol, std::size_t node_budget) {
  HigherOrderCahReport rep;
  rep.tol = tol;
  const auto& M = prob.source();
  const auto& N = prob.target();
  TensorFieldExpr tM = torsion(M), tN = torsion(N), rM = curvature(M), rN = curvature(N);
  for (int r = 0; r <= K; ++r) {
    if (r > 0) {
      try {
        tM = covariant_derivative_tensor(M, &M, tM, 1, node_budget);
        tN = covariant_derivative_tensor(N, &N, tN, 1, node_budget);
        rM = covariant_derivative_tensor(M, &M, rM, 1, node_budget);
        rN = covariant_derivative_tensor(N, &N, rN, 1, node_budget);
      } catch (const BudgetExceeded&) {
        rep.budget_exceeded = true;
        break;
      }
    }
    const int arity = r + 2;
    CahOrder o;
    o.order = r;
    o.torsion = vector_relates(prob.sigma0(), tM.evaluate(prob.x0()), tN.evaluate(prob.y0()), arity, true);
    o.curvature = endo_relates(prob.sigma0(), rM.evaluate(prob.x0()), rN.evaluate(prob.y0()), arity, true);
    rep.orders.push_back(o);
  }
  rep.pass = !rep.budget_exceeded;
  for (const auto& o : rep.orders) rep.pass = rep.pass && o.torsion < tol && o.curvature < tol;
  return rep;
}

namespace {

SymmetryOrder largest_entry(const TensorFieldExpr& t, const Eigen::VectorXd& x, int order, char tensor) {
  const auto vals = t.evaluate(x);
  SymmetryOrder o;
  o.order = order;
  o.tensor = tensor;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < vals.size(); ++i) {
    if (std::abs(vals[i]) > o.max_abs) {
      o.max_abs = std::abs(vals[i]);
      arg = i;
    }
  }
  // Decode the row-major index: slots of size n, then the fiber.
  std::vector<std::size_t> dims(static_cast<std::size_t>(t.arity), t.n);
  if (t.fiber == FiberKind::Vector) dims.push_back(t.r);
  if (t.fiber == FiberKind::Endomorphism) {
    dims.push_back(t.r);
    dims.push_back(t.r);
  }
  o.witness.assign(dims.size(), 0);
  for (std::size_t k = dims.size(); k-- > 0;) {
    o.witness[k] = static_cast<int>(arg % dims[k]);
    arg /= dims[k];
  }
  return o;
}

}  // namespace

AffineSymmetryReport affine_symmetry_check(const BundleConnection& conn, const Eigen::VectorXd& x0, int K, double tol,
                                           const std::optional<RectGrid>& grid, double affine_tol,
                                           const CahOptions& options, std::size_t node_budget) {
  if (!conn.tangent()) throw DimensionError("affine symmetry check needs a tangent connection");
  if (x0.size() != static_cast<long>(conn.n())) throw DimensionError("x0 must have n components");
  AffineSymmetryReport rep;
  rep.tol = tol;
  TensorFieldExpr t = torsion(conn), R = curvature(conn);
  // Orders alternate: even derivatives of T, odd derivatives of R.
  for (int k = 0; k <= K; ++k) {
    try {
      if (k % 2 == 0) {
        if (k > 0) t = covariant_derivative_tensor(conn, &conn, t, 2, node_budget);
        rep.orders.push_back(largest_entry(t, x0, k, 'T'));
      } else {
        R = covariant_derivative_tensor(conn, &conn, R, k == 1 ? 1 : 2, node_budget);
        rep.orders.push_back(largest_entry(R, x0, k, 'R'));
      }
    } catch (const BudgetExceeded&) {
      rep.budget_exceeded = true;
      break;
    }
  }
  rep.pass = !rep.budget_exceeded;
  for (const auto& o : rep.orders) rep.pass = rep.pass && o.max_abs < tol;
  if (rep.pass && grid) {
    const long n = x0.size();
    CahProblem prob(conn, conn, x0, x0, -Eigen::MatrixXd::Identity(n, n));
    rep.map = cah_map(prob, *grid, options);
    rep.affine = affine_residual(prob, *rep.map, affine_tol);
    rep.pass = rep.affine->pass;
  }
  return rep;
}

}  // namespace leafsolve
