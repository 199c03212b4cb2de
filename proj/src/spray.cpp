#include "leafsolve/spray.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>

namespace leafsolve {

Spray::Spray(std::vector<std::string> x_vars, std::vector<std::string> v_vars, std::vector<Expr> acceleration,
             Box domain)
    : x_vars_(std::move(x_vars)), v_vars_(std::move(v_vars)), accel_(std::move(acceleration)), domain_(std::move(domain)) {
  if (v_vars_.size() != n() || accel_.size() != n()) throw DimensionError("spray needs n velocities and n accelerations");
  if (domain_.dim() != n()) throw DimensionError("spray domain must be a box over x");
  std::vector<std::string> all = x_vars_;
  all.insert(all.end(), v_vars_.begin(), v_vars_.end());
  auto sorted = all;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw DimensionError("position and velocity names must be distinct");
  }
  for (Expr e : accel_) {
    for (const auto& v : free_variables(e)) {
      if (std::find(all.begin(), all.end(), v) == all.end()) {
        throw DimensionError("acceleration uses unknown variable '" + v + "'");
      }
    }
  }
  tape_ = std::make_shared<const Tape>(accel_, all);
}

Eigen::VectorXd Spray::acceleration_at(const Eigen::VectorXd& x, const Eigen::VectorXd& v) const {
  if (!domain_.contains(x)) throw OutOfDomain("point outside the spray's domain");
  Eigen::VectorXd in(2 * x.size());
  in << x, v;
  Eigen::VectorXd out(static_cast<long>(n()));
  tape_->eval(std::span<const double>(in.data(), in.size()), std::span<double>(out.data(), n()));
  return out;
}

double homogeneity_defect(const Spray& s, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const long n = static_cast<long>(s.n());
  double worst = 0;
  for (int k = 0; k < samples; ++k) {
    Eigen::VectorXd x(n), v(n);
    for (long i = 0; i < n; ++i) {
      double lo = std::max(s.domain().lo[i], -1.0), hi = std::min(s.domain().hi[i], 1.0);
      if (lo > hi) lo = hi = 0.5 * (s.domain().lo[i] + s.domain().hi[i]);
      x[i] = lo + (hi - lo) * unit(rng);
      v[i] = 2 * unit(rng) - 1;
    }
    const Eigen::VectorXd a1 = s.acceleration_at(x, v);
    for (double a : {-2.0, -1.0, 0.5, 3.0}) {
      worst = std::max(worst, (s.acceleration_at(x, a * v) - a * a * a1).lpNorm<Eigen::Infinity>());
    }
  }
  return worst;
}

std::vector<std::string> default_velocity_names(const std::vector<std::string>& x_vars) {
  std::string prefix = "v";
  for (;;) {
    std::vector<std::string> out;
    bool clash = false;
    for (std::size_t i = 1; i <= x_vars.size(); ++i) {
      out.push_back(prefix + std::to_string(i));
      clash = clash || std::find(x_vars.begin(), x_vars.end(), out.back()) != x_vars.end();
    }
    if (!clash) return out;
    prefix = "_" + prefix;
  }
}

Spray geodesic_spray(const BundleConnection& conn, std::vector<std::string> v_vars) {
  if (!conn.tangent()) throw DimensionError("geodesic spray needs a tangent connection");
  const std::size_t n = conn.n();
  if (v_vars.empty()) v_vars = default_velocity_names(conn.base_vars());
  if (v_vars.size() != n) throw DimensionError("need n velocity names");
  std::vector<Expr> v;
  for (const auto& name : v_vars) v.push_back(Expr::variable(name));
  std::vector<Expr> accel;
  std::vector<Expr> terms;
  for (std::size_t a = 0; a < n; ++a) {
    terms.clear();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        Expr g = conn.christoffel(a, i, j);
        if (!g.is_const(0.0)) terms.push_back(-(g * v[i] * v[j]));
      }
    }
    accel.push_back(sum(terms));
  }
  return Spray(conn.base_vars(), std::move(v_vars), std::move(accel), conn.domain());
}

SprayRun solve_spray(const Spray& s, const Eigen::VectorXd& x, const Eigen::VectorXd& v, double t_end, double step) {
  const long n = static_cast<long>(s.n());
  if (x.size() != n || v.size() != n) throw DimensionError("spray initial data must have n components");
  if (!s.domain().contains(x)) throw OutOfDomain("initial point outside the spray's domain");
  OdeRhs rhs = [&](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    dy.resize(2 * n);
    dy.head(n) = y.tail(n);
    dy.tail(n) = s.acceleration_at(y.head(n), y.tail(n));
  };
  Eigen::VectorXd y0(2 * n);
  y0 << x, v;
  OdeRun run = integrate_ode_partial(rhs, y0, 0.0, t_end, step);
  return {std::move(run.curve), run.completed, run.exit_time, std::move(run.reason)};
}

Eigen::VectorXd exp_map(const Spray& s, const Eigen::VectorXd& x, const Eigen::VectorXd& v, double step) {
  SprayRun run = solve_spray(s, x, v, 1.0, step);
  if (!run.completed) throw ChartExit(run.exit_time, "exponential map left the chart: " + run.reason);
  return run.curve.back().head(static_cast<long>(s.n()));
}

namespace {

// Central differences, falling back to one-sided ones for columns whose
// central stencil leaves the chart.
Eigen::MatrixXd exp_jacobian(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& v,
                             const Eigen::VectorXd& fv, double h) {
  Eigen::MatrixXd J(fv.size(), v.size());
  for (long j = 0; j < v.size(); ++j) {
    Eigen::VectorXd p = v, m = v;
    p[j] += h;
    m[j] -= h;
    std::optional<Eigen::VectorXd> fp, fm;
    try {
      fp = f(p);
    } catch (const ChartExit&) {
    }
    try {
      fm = f(m);
    } catch (const ChartExit&) {
    }
    if (fp && fm) {
      J.col(j) = (*fp - *fm) / (2 * h);
    } else if (fp) {
      J.col(j) = (*fp - fv) / h;
    } else if (fm) {
      J.col(j) = (fv - *fm) / h;
    } else {
      throw ChartExit(0.0, "Jacobian stencil left the chart");
    }
  }
  return J;
}

}  // namespace

Eigen::VectorXd log_map(const Spray& s, const Eigen::VectorXd& x, const Eigen::VectorXd& target,
                        const LogOptions& options) {
  if (target.size() != x.size()) throw DimensionError("target must have n components");
  Eigen::VectorXd v = target - x;
  auto residual = [&](const Eigen::VectorXd& w) { return Eigen::VectorXd(exp_map(s, x, w, options.step) - target); };
  Eigen::VectorXd r;
  try {
    r = residual(v);
  } catch (const ChartExit&) {
    v.setZero();
    r = x - target;
  }
  for (int iter = 0; iter < options.max_iter; ++iter) {
    const double norm = r.norm();
    if (norm < options.tol) return v;
    Eigen::MatrixXd J;
    try {
      J = exp_jacobian(residual, v, r, 1e-6);
    } catch (const ChartExit&) {
      throw ConvergenceError("log map: Jacobian stencil left the chart");
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
    if (qr.rank() < J.cols()) throw ConvergenceError("log map: singular Jacobian");
    Eigen::VectorXd delta = qr.solve(-r);
    double alpha = 1.0;
    bool improved = false;
    for (int k = 0; k < 30; ++k, alpha *= 0.5) {
      Eigen::VectorXd w = v + alpha * delta;
      try {
        Eigen::VectorXd rw = residual(w);
        if (rw.norm() < norm) {
          v = w;
          r = rw;
          improved = true;
          break;
        }
      } catch (const ChartExit&) {
      }
    }
    if (!improved) throw ConvergenceError("log map: line search failed");
  }
  if (r.norm() < options.tol) return v;
  throw ConvergenceError("log map: no convergence in " + std::to_string(options.max_iter) + " iterations");
}

namespace {

bool radius_usable(const Spray& s, const Eigen::VectorXd& x, double rho, const std::vector<Eigen::VectorXd>& dirs,
                   double step) {
  LogOptions opts;
  opts.step = step;
  for (const auto& d : dirs) {
    const Eigen::VectorXd v = rho * d;
    try {
      const Eigen::VectorXd target = exp_map(s, x, v, step);
      const Eigen::VectorXd back = log_map(s, x, target, opts);
      if ((back - v).norm() > 1e-6 * std::max(1.0, rho)) return false;
      Eigen::MatrixXd J = exp_jacobian([&](const Eigen::VectorXd& w) { return exp_map(s, x, w, step); }, v, target, 1e-6);
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
      const auto& sv = svd.singularValues();
      if (!(sv[sv.size() - 1] > 0) || sv[0] / sv[sv.size() - 1] >= 1e6) return false;
    } catch (const Error&) {
      return false;
    }
  }
  return true;
}

}  // namespace

NormalRadius estimate_normal_radius(const Spray& s, const Eigen::VectorXd& x, double step, double max_radius,
                                    int max_halvings, std::uint64_t seed) {
  const long n = static_cast<long>(s.n());
  if (x.size() != n) throw DimensionError("point must have n components");
  std::vector<Eigen::VectorXd> dirs;
  for (long i = 0; i < n; ++i) {
    dirs.push_back(Eigen::VectorXd::Unit(n, i));
    dirs.push_back(-Eigen::VectorXd::Unit(n, i));
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 8; ++k) {
    Eigen::VectorXd d(n);
    for (long i = 0; i < n; ++i) d[i] = normal(rng);
    dirs.push_back(d.normalized());
  }
  double rho = std::min(max_radius, (1 - 1e-6) * s.domain().distance_to_boundary(x));
  NormalRadius out;
  if (!(rho > 0)) {
    out.warning = "point is on or outside the chart boundary";
    return out;
  }
  for (int j = 0; j <= max_halvings; ++j, rho *= 0.5) {
    if (radius_usable(s, x, rho, dirs, step)) {
      out.radius = rho;
      out.certified = true;
      return out;
    }
  }
  out.radius = 2 * rho;
  out.warning = "no tested radius passed; returning the smallest";
  return out;
}

CurveSolution piecewise_solve(const Spray& s, const PiecewisePath& path, double step) {
  const long n = static_cast<long>(s.n());
  CurveSolution out;
  Eigen::VectorXd x = path.start;
  double t = 0;
  for (std::size_t k = 0; k < path.legs.size(); ++k) {
    const Leg& leg = path.legs[k];
    if (!(leg.duration > 0)) throw DimensionError("leg durations must be positive");
    if (leg.point.size() > 0) {
      if (x.size() > 0 && (leg.point - x).lpNorm<Eigen::Infinity>() > 1e-12) {
        throw DimensionError("leg " + std::to_string(k) + " does not start where the previous leg ended");
      }
      x = leg.point;
    }
    if (x.size() != n || leg.velocity.size() != n) throw DimensionError("legs need n-component points and velocities");
    SprayRun run = solve_spray(s, x, leg.velocity, leg.duration, step);
    if (!run.completed) throw ChartExit(t + run.exit_time, "leg " + std::to_string(k) + " left the chart: " + run.reason);
    std::vector<double> times = run.curve.times();
    for (double& tt : times) tt += t;
    CurveSolution shifted(std::move(times), run.curve.states(), run.curve.derivatives());
    out.append(shifted);
    t = out.t1();
    x = run.curve.back().head(n);
  }
  return out;
}

}  // namespace leafsolve
