#include "leafsolve/connection.hpp"

#include <algorithm>
#include <map>

namespace leafsolve {

BundleConnection::BundleConnection(std::vector<std::string> base_vars, std::vector<ExprMatrix> omega, Box domain,
                                   bool tangent)
    : base_vars_(std::move(base_vars)), omega_(std::move(omega)), domain_(std::move(domain)), tangent_(tangent) {
  if (omega_.size() != base_vars_.size()) throw DimensionError("need one connection matrix per base coordinate");
  if (domain_.dim() != base_vars_.size()) throw DimensionError("domain dimension must match the base");
  r_ = omega_.empty() ? 0 : omega_[0].rows();
  std::vector<Expr> flat;
  for (const auto& w : omega_) {
    if (w.rows() != r_ || w.cols() != r_) throw DimensionError("connection matrices must all be r x r");
    for (Expr e : w.data()) {
      for (const auto& v : free_variables(e)) {
        if (std::find(base_vars_.begin(), base_vars_.end(), v) == base_vars_.end()) {
          throw DimensionError("connection uses unknown variable '" + v + "'");
        }
      }
    }
    flat.insert(flat.end(), w.data().begin(), w.data().end());
  }
  if (tangent_ && r_ != n()) throw DimensionError("a tangent connection needs rank equal to the base dimension");
  tape_ = std::make_shared<const Tape>(flat, base_vars_);
}

BundleConnection BundleConnection::from_christoffel(std::vector<std::string> base_vars, const std::vector<Expr>& gamma,
                                                    Box domain) {
  const std::size_t n = base_vars.size();
  if (gamma.size() != n * n * n) throw DimensionError("Christoffel array must have n^3 entries");
  std::vector<ExprMatrix> omega(n, ExprMatrix(n, n));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) omega[i](a, j) = gamma[(a * n + i) * n + j];
    }
  }
  return BundleConnection(std::move(base_vars), std::move(omega), std::move(domain), true);
}

Expr BundleConnection::christoffel(std::size_t a, std::size_t i, std::size_t j) const {
  if (!tangent_) throw DimensionError("Christoffel symbols need a tangent connection");
  return omega_[i](a, j);
}

std::vector<Eigen::MatrixXd> BundleConnection::omega_at(const Eigen::VectorXd& x) const {
  if (!domain_.contains(x)) throw OutOfDomain("point outside the connection's domain");
  std::vector<double> out(tape_->num_outputs());
  tape_->eval(std::span<const double>(x.data(), x.size()), out);
  std::vector<Eigen::MatrixXd> result;
  result.reserve(n());
  for (std::size_t i = 0; i < n(); ++i) result.push_back(reshape(out.data() + i * r_ * r_, r_, r_));
  return result;
}

Eigen::MatrixXd BundleConnection::omega_along(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const {
  auto w = omega_at(x);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<long>(r_), static_cast<long>(r_));
  for (std::size_t i = 0; i < n(); ++i) m += v[static_cast<long>(i)] * w[i];
  return m;
}

TensorFieldExpr::TensorFieldExpr(std::vector<std::string> vars_, std::size_t r_, int arity_, FiberKind fiber_)
    : vars(std::move(vars_)), n(vars.size()), r(r_), arity(arity_), fiber(fiber_) {
  comps.assign(size(), Expr(0.0));
}

std::size_t TensorFieldExpr::fiber_size() const {
  switch (fiber) {
    case FiberKind::Scalar: return 1;
    case FiberKind::Vector: return r;
    case FiberKind::Endomorphism: return r * r;
  }
  return 1;
}

std::size_t TensorFieldExpr::slot_count() const {
  std::size_t s = 1;
  for (int i = 0; i < arity; ++i) s *= n;
  return s;
}

std::size_t TensorFieldExpr::index(std::span<const int> slots, int a, int b) const {
  if (static_cast<int>(slots.size()) != arity) throw DimensionError("wrong number of tensor slots");
  std::size_t idx = 0;
  for (int s : slots) idx = idx * n + static_cast<std::size_t>(s);
  switch (fiber) {
    case FiberKind::Scalar: return idx;
    case FiberKind::Vector: return idx * r + static_cast<std::size_t>(a);
    case FiberKind::Endomorphism: return (idx * r + static_cast<std::size_t>(a)) * r + static_cast<std::size_t>(b);
  }
  return idx;
}

std::vector<double> TensorFieldExpr::evaluate(const Eigen::VectorXd& x) const {
  Tape tape(comps, vars);
  return tape.eval(std::span<const double>(x.data(), x.size()));
}

std::vector<Expr> covariant_derivative(const BundleConnection& conn, const std::vector<Expr>& section,
                                       std::size_t i) {
  if (section.size() != conn.r()) throw DimensionError("section must have r components");
  std::vector<Expr> out = conn.omega(i) * section;
  for (std::size_t a = 0; a < conn.r(); ++a) out[a] = differentiate(section[a], conn.base_vars()[i]) + out[a];
  return out;
}

TensorFieldExpr curvature(const BundleConnection& conn) {
  const std::size_t n = conn.n(), r = conn.r();
  TensorFieldExpr R(conn.base_vars(), r, 2, FiberKind::Endomorphism);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      ExprMatrix m = differentiate(conn.omega(j), conn.base_vars()[i]) -
                     differentiate(conn.omega(i), conn.base_vars()[j]) + commutator(conn.omega(i), conn.omega(j));
      for (std::size_t a = 0; a < r; ++a) {
        for (std::size_t b = 0; b < r; ++b) {
          R.comps[((i * n + j) * r + a) * r + b] = m(a, b);
          R.comps[((j * n + i) * r + a) * r + b] = -m(a, b);
        }
      }
    }
  }
  return R;
}

TensorFieldExpr torsion(const BundleConnection& conn) {
  if (!conn.tangent()) throw DimensionError("torsion needs a tangent connection");
  const std::size_t n = conn.n();
  TensorFieldExpr T(conn.base_vars(), n, 2, FiberKind::Vector);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t a = 0; a < n; ++a) {
        T.comps[(i * n + j) * n + a] = conn.christoffel(a, i, j) - conn.christoffel(a, j, i);
      }
    }
  }
  return T;
}

namespace {

TensorFieldExpr nabla_once(const BundleConnection& tc, const BundleConnection* fc, const TensorFieldExpr& t) {
  const std::size_t n = t.n, r = t.r, fs = t.fiber_size(), sc = t.slot_count();
  TensorFieldExpr out(t.vars, r, t.arity + 1, t.fiber);
  std::vector<int> slots(static_cast<std::size_t>(t.arity));
  std::vector<Expr> terms;
  for (std::size_t z = 0; z < n; ++z) {
    const std::string& zv = t.vars[z];
    for (std::size_t s = 0; s < sc; ++s) {
      std::size_t rem = s;
      for (int p = t.arity - 1; p >= 0; --p) {
        slots[static_cast<std::size_t>(p)] = static_cast<int>(rem % n);
        rem /= n;
      }
      for (std::size_t f = 0; f < fs; ++f) {
        terms.clear();
        terms.push_back(differentiate(t.comps[s * fs + f], zv));
        if (t.fiber == FiberKind::Vector) {
          const ExprMatrix& w = fc->omega(z);
          for (std::size_t e = 0; e < r; ++e) terms.push_back(w(f, e) * t.comps[s * fs + e]);
        } else if (t.fiber == FiberKind::Endomorphism) {
          const ExprMatrix& w = fc->omega(z);
          const std::size_t a = f / r, b = f % r;
          for (std::size_t e = 0; e < r; ++e) {
            terms.push_back(w(a, e) * t.comps[s * fs + e * r + b]);
            terms.push_back(-(t.comps[s * fs + a * r + e] * w(e, b)));
          }
        }
        // Covariant slots: - Gamma^d_{z c_p} tau[..d..].
        std::size_t stride = 1;
        for (int p = t.arity - 1; p >= 0; --p) {
          const auto cp = static_cast<std::size_t>(slots[static_cast<std::size_t>(p)]);
          const std::size_t base = s - cp * stride;
          for (std::size_t d = 0; d < n; ++d) {
            Expr g = tc.christoffel(d, z, cp);
            if (g.is_const(0.0)) continue;
            terms.push_back(-(g * t.comps[(base + d * stride) * fs + f]));
          }
          stride *= n;
        }
        out.comps[(z * sc + s) * fs + f] = sum(terms);
      }
    }
  }
  return out;
}

}  // namespace

TensorFieldExpr covariant_derivative_tensor(const BundleConnection& tangent_conn, const BundleConnection* fiber_conn,
                                            const TensorFieldExpr& tensor, int k, std::size_t node_budget) {
  if (!tangent_conn.tangent()) throw DimensionError("covariant derivative of tensors needs a tangent connection");
  if (tensor.vars != tangent_conn.base_vars()) throw DimensionError("tensor and connection use different coordinates");
  if (tensor.fiber != FiberKind::Scalar) {
    if (fiber_conn == nullptr) throw DimensionError("fiber connection required for non-scalar fibers");
    if (fiber_conn->r() != tensor.r || fiber_conn->base_vars() != tensor.vars) {
      throw DimensionError("fiber connection does not match the tensor");
    }
  }
  TensorFieldExpr cur = tensor;
  for (int order = 1; order <= k; ++order) {
    cur = nabla_once(tangent_conn, fiber_conn, cur);
    if (dag_size(cur.comps) > node_budget) throw BudgetExceeded(order - 1, "covariant derivative of order " + std::to_string(order) + " exceeds the node budget");
  }
  return cur;
}

CurveSolution parallel_transport(const BundleConnection& conn, const CurveFn& curve, const Eigen::MatrixXd& s0,
                                 double t0, double t1, double step) {
  if (static_cast<std::size_t>(s0.rows()) != conn.r()) throw DimensionError("transported state must have r rows");
  const long r = s0.rows(), c = s0.cols();
  OdeRhs rhs = [&](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    Eigen::VectorXd x(static_cast<long>(conn.n())), xd(static_cast<long>(conn.n()));
    curve(t, x, xd);
    Eigen::Map<const Eigen::MatrixXd> S(y.data(), r, c);
    Eigen::MatrixXd D = -conn.omega_along(x, xd) * S;
    dy = Eigen::Map<const Eigen::VectorXd>(D.data(), r * c);
  };
  Eigen::VectorXd y0 = Eigen::Map<const Eigen::VectorXd>(s0.data(), r * c);
  return integrate_ode(rhs, y0, t0, t1, step);
}

CurveFn segment_curve(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return [a, b](double t, Eigen::VectorXd& x, Eigen::VectorXd& xd) {
    x = a + t * (b - a);
    xd = b - a;
  };
}

GeodesicTransport geodesic_with_transport(const BundleConnection& conn, const Eigen::VectorXd& x0,
                                          const Eigen::VectorXd& v0, double t_end, double step) {
  if (!conn.tangent()) throw DimensionError("geodesics need a tangent connection");
  const long n = static_cast<long>(conn.n());
  if (x0.size() != n || v0.size() != n) throw DimensionError("geodesic data must have n components");
  OdeRhs rhs = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    const Eigen::VectorXd x = y.head(n), v = y.segment(n, n);
    Eigen::Map<const Eigen::MatrixXd> P(y.data() + 2 * n, n, n);
    const Eigen::MatrixXd w = conn.omega_along(x, v);
    dy.resize(y.size());
    dy.head(n) = v;
    dy.segment(n, n) = -w * v;
    Eigen::Map<Eigen::MatrixXd>(dy.data() + 2 * n, n, n) = -w * P;
  };
  Eigen::VectorXd y0(2 * n + n * n);
  y0 << x0, v0, Eigen::Map<const Eigen::VectorXd>(Eigen::MatrixXd::Identity(n, n).eval().data(), n * n);
  OdeRun run = integrate_ode_partial(rhs, y0, 0.0, t_end, step);
  GeodesicTransport g;
  const Eigen::VectorXd& last = run.curve.back();
  g.x = last.head(n);
  g.v = last.segment(n, n);
  g.P = Eigen::Map<const Eigen::MatrixXd>(last.data() + 2 * n, n, n);
  g.completed = run.completed;
  g.exit_time = run.exit_time;
  g.reason = std::move(run.reason);
  g.curve = std::move(run.curve);
  return g;
}

BundleConnection dual_connection(const BundleConnection& conn) {
  std::vector<ExprMatrix> omega;
  for (const auto& w : conn.omega()) omega.push_back(-w.transpose());
  return BundleConnection(conn.base_vars(), std::move(omega), conn.domain(), false);
}

BundleConnection bilinear_connection(const BundleConnection& conn) {
  const std::size_t r = conn.r();
  std::vector<ExprMatrix> omega;
  for (const auto& w : conn.omega()) {
    ExprMatrix m(r * r, r * r);
    for (std::size_t a = 0; a < r; ++a) {
      for (std::size_t b = 0; b < r; ++b) {
        for (std::size_t c = 0; c < r; ++c) {
          for (std::size_t d = 0; d < r; ++d) {
            Expr e = 0.0;
            if (b == d) e = e - w(c, a);
            if (a == c) e = e - w(d, b);
            m(a * r + b, c * r + d) = e;
          }
        }
      }
    }
    omega.push_back(std::move(m));
  }
  return BundleConnection(conn.base_vars(), std::move(omega), conn.domain(), false);
}

BundleConnection hom_connection(const BundleConnection& connM, const BundleConnection& connN) {
  const std::size_t n = connM.r(), m = connN.r();
  std::vector<std::string> vars = connM.base_vars();
  for (const auto& v : connN.base_vars()) {
    if (std::find(vars.begin(), vars.end(), v) != vars.end()) {
      throw DimensionError("source and target coordinates must have distinct names ('" + v + "')");
    }
    vars.push_back(v);
  }
  Eigen::VectorXd lo(connM.n() + connN.n()), hi(connM.n() + connN.n());
  lo << connM.domain().lo, connN.domain().lo;
  hi << connM.domain().hi, connN.domain().hi;
  std::vector<ExprMatrix> omega;
  for (const auto& w : connM.omega()) {
    ExprMatrix M(m * n, m * n);
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t d = 0; d < n; ++d) M(a * n + b, a * n + d) = -w(d, b);
      }
    }
    omega.push_back(std::move(M));
  }
  for (const auto& w : connN.omega()) {
    ExprMatrix M(m * n, m * n);
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t c = 0; c < m; ++c) M(a * n + b, c * n + b) = w(a, c);
      }
    }
    omega.push_back(std::move(M));
  }
  return BundleConnection(std::move(vars), std::move(omega), Box(lo, hi), false);
}

BundleConnection pullback_connection(const BundleConnection& conn, const std::vector<Expr>& f,
                                     std::vector<std::string> new_vars, Box new_domain) {
  if (f.size() != conn.n()) throw DimensionError("map must have one component per base coordinate");
  std::map<std::string, Expr, std::less<>> sub;
  for (std::size_t i = 0; i < conn.n(); ++i) sub.emplace(conn.base_vars()[i], f[i]);
  std::vector<ExprMatrix> composed;
  for (const auto& w : conn.omega()) composed.push_back(substitute(w, sub));
  std::vector<ExprMatrix> omega;
  for (const auto& v : new_vars) {
    ExprMatrix m(conn.r(), conn.r());
    for (std::size_t i = 0; i < conn.n(); ++i) {
      Expr df = differentiate(f[i], v);
      if (df.is_const(0.0)) continue;
      m = m + df * composed[i];
    }
    omega.push_back(std::move(m));
  }
  return BundleConnection(std::move(new_vars), std::move(omega), std::move(new_domain), false);
}

GraphDistribution horizontal_distribution(const BundleConnection& conn, std::vector<std::string> fiber_vars,
                                          const Box& fiber_box) {
  const std::size_t n = conn.n(), r = conn.r();
  if (fiber_vars.size() != r || fiber_box.dim() != r) throw DimensionError("need r fiber coordinates");
  std::vector<Expr> xi;
  for (const auto& v : fiber_vars) xi.push_back(Expr::variable(v));
  ExprMatrix F(r, n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Expr> col = conn.omega(i) * xi;
    for (std::size_t a = 0; a < r; ++a) F(a, i) = -col[a];
  }
  Eigen::VectorXd lo(n + r), hi(n + r);
  lo << conn.domain().lo, fiber_box.lo;
  hi << conn.domain().hi, fiber_box.hi;
  return GraphDistribution(conn.base_vars(), std::move(fiber_vars), std::move(F), Box(lo, hi));
}

}  // namespace leafsolve
