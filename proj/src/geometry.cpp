#include "leafsolve/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace leafsolve {

// ---------------------------------------------------------------------------
// Box

Box::Box(Eigen::VectorXd lo_in, Eigen::VectorXd hi_in) : lo(std::move(lo_in)), hi(std::move(hi_in)) {
  if (lo.size() != hi.size()) throw DimensionError("box bounds differ in dimension");
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (!(lo[i] < hi[i])) throw DimensionError("box needs lo < hi in coordinate " + std::to_string(i + 1));
  }
}

Box Box::unbounded(std::size_t dim) {
  double inf = std::numeric_limits<double>::infinity();
  return Box(Eigen::VectorXd::Constant(dim, -inf), Eigen::VectorXd::Constant(dim, inf));
}

bool Box::contains(const Eigen::VectorXd& p, double pad) const {
  if (p.size() != lo.size()) return false;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (!(p[i] >= lo[i] - pad && p[i] <= hi[i] + pad)) return false;
  }
  return true;
}

double Box::distance_to_boundary(const Eigen::VectorXd& p) const {
  double d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < p.size(); ++i) d = std::min({d, p[i] - lo[i], hi[i] - p[i]});
  return std::max(d, 0.0);
}

Box Box::head(std::size_t k) const {
  return Box(lo.head(static_cast<Eigen::Index>(k)), hi.head(static_cast<Eigen::Index>(k)));
}

// ---------------------------------------------------------------------------
// RectGrid

RectGrid::RectGrid(Eigen::VectorXd lo, Eigen::VectorXd hi, std::vector<int> counts)
    : lo_(std::move(lo)), hi_(std::move(hi)), counts_(std::move(counts)) {
  if (lo_.size() != hi_.size() || static_cast<std::size_t>(lo_.size()) != counts_.size()) {
    throw DimensionError("grid bounds and counts differ in dimension");
  }
  size_ = 1;
  for (std::size_t a = 0; a < counts_.size(); ++a) {
    if (counts_[a] < 1) throw DimensionError("grid axis needs at least one node");
    if (counts_[a] == 1) {
      if (lo_[a] != hi_[a]) throw DimensionError("single-node grid axis needs lo == hi");
      spacing_.push_back(0.0);
    } else {
      if (!(lo_[a] < hi_[a])) throw DimensionError("grid axis needs lo < hi");
      spacing_.push_back((hi_[a] - lo_[a]) / (counts_[a] - 1));
    }
    size_ *= static_cast<std::size_t>(counts_[a]);
  }
}

RectGrid RectGrid::centered(const Eigen::VectorXd& center, double half_width, int count) {
  auto n = center.size();
  double hw = count == 1 ? 0.0 : half_width;
  return RectGrid(center.array() - hw, center.array() + hw, std::vector<int>(n, count));
}

std::vector<int> RectGrid::multi_index(std::size_t flat) const {
  std::vector<int> m(counts_.size());
  for (std::size_t a = counts_.size(); a-- > 0;) {
    m[a] = static_cast<int>(flat % counts_[a]);
    flat /= counts_[a];
  }
  return m;
}

std::size_t RectGrid::flat_index(const std::vector<int>& multi) const {
  std::size_t f = 0;
  for (std::size_t a = 0; a < counts_.size(); ++a) f = f * counts_[a] + multi[a];
  return f;
}

Eigen::VectorXd RectGrid::point(std::size_t flat) const {
  auto m = multi_index(flat);
  Eigen::VectorXd p(static_cast<Eigen::Index>(counts_.size()));
  for (std::size_t a = 0; a < counts_.size(); ++a) {
    p[a] = counts_[a] == 1 ? lo_[a] : lo_[a] + (hi_[a] - lo_[a]) * m[a] / (counts_[a] - 1);
  }
  return p;
}

long RectGrid::find_node(const Eigen::VectorXd& p, double tol) const {
  if (static_cast<std::size_t>(p.size()) != counts_.size()) return -1;
  std::vector<int> m(counts_.size());
  for (std::size_t a = 0; a < counts_.size(); ++a) {
    double r = counts_[a] == 1 ? 0.0 : (p[a] - lo_[a]) / spacing_[a];
    long i = std::lround(r);
    if (i < 0 || i >= counts_[a]) return -1;
    m[a] = static_cast<int>(i);
  }
  std::size_t f = flat_index(m);
  if (((point(f) - p).array().abs() > tol).any()) return -1;
  return static_cast<long>(f);
}

bool grid_derivative(const RectGrid& grid, const std::vector<Eigen::VectorXd>& values,
                     const std::vector<char>& valid, std::size_t flat, std::size_t axis,
                     Eigen::VectorXd& out, bool& centered) {
  static const double w5[5][5] = {{-25, 48, -36, 16, -3},
                                  {-3, -10, 18, -6, 1},
                                  {1, -8, 0, 8, -1},
                                  {-1, 6, -18, 10, 3},
                                  {3, -16, 36, -48, 25}};
  static const double w3[3][3] = {{-3, 4, -1}, {-1, 0, 1}, {1, -4, 3}};
  const int c = grid.counts()[axis];
  const double h = grid.spacing(axis);
  auto multi = grid.multi_index(flat);
  const int i = multi[axis];
  auto node = [&](int j) {
    auto m = multi;
    m[axis] = j;
    return grid.flat_index(m);
  };
  auto usable = [&](int start, int len) {
    if (start < 0 || start + len > c) return false;
    if (valid.empty()) return true;
    for (int j = start; j < start + len; ++j) {
      if (!valid[node(j)]) return false;
    }
    return true;
  };
  for (int start : {i - 2, i - 1, i - 3, i, i - 4}) {
    if (!usable(start, 5)) continue;
    int p = i - start;
    out = Eigen::VectorXd::Zero(values[flat].size());
    for (int q = 0; q < 5; ++q) out += w5[p][q] * values[node(start + q)];
    out /= 12.0 * h;
    centered = p == 2;
    return true;
  }
  for (int start : {i - 1, i, i - 2}) {
    if (!usable(start, 3)) continue;
    int p = i - start;
    out = Eigen::VectorXd::Zero(values[flat].size());
    for (int q = 0; q < 3; ++q) out += w3[p][q] * values[node(start + q)];
    out /= 2.0 * h;
    centered = false;
    return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Vector fields

VectorField lie_bracket(const VectorField& v, const VectorField& w) {
  if (v.dim() != w.dim() || v.coords != w.coords || v.coords.size() != v.dim()) {
    throw DimensionError("lie_bracket: fields live on different coordinates");
  }
  VectorField out{v.coords, std::vector<Expr>(v.dim())};
  std::vector<Expr> terms;
  for (std::size_t a = 0; a < v.dim(); ++a) {
    terms.clear();
    for (std::size_t b = 0; b < v.dim(); ++b) {
      if (!v.comps[b].is_const(0.0)) terms.push_back(v.comps[b] * differentiate(w.comps[a], v.coords[b]));
      if (!w.comps[b].is_const(0.0)) terms.push_back(-(w.comps[b] * differentiate(v.comps[a], v.coords[b])));
    }
    out.comps[a] = sum(terms);
  }
  return out;
}

FieldEvaluator::FieldEvaluator(const VectorField& field, Box domain)
    : tape_(field.comps, field.coords), domain_(std::move(domain)) {
  if (domain_.dim() != field.coords.size()) throw DimensionError("field and domain dimensions differ");
}

FieldEvaluator::FieldEvaluator(const VectorField& field)
    : FieldEvaluator(field, Box::unbounded(field.coords.size())) {}

Eigen::VectorXd FieldEvaluator::operator()(const Eigen::VectorXd& p) const {
  if (!domain_.contains(p)) throw OutOfDomain("point outside the field's domain");
  Eigen::VectorXd out(static_cast<Eigen::Index>(tape_.num_outputs()));
  tape_.eval(std::span<const double>(p.data(), p.size()), std::span<double>(out.data(), out.size()));
  return out;
}

// ---------------------------------------------------------------------------
// CurveSolution

CurveSolution::CurveSolution(std::vector<double> times, std::vector<Eigen::VectorXd> states,
                             std::vector<Eigen::VectorXd> derivatives)
    : times_(std::move(times)), states_(std::move(states)), derivatives_(std::move(derivatives)) {
  if (times_.empty() || states_.size() != times_.size() || derivatives_.size() != times_.size()) {
    throw DimensionError("curve needs matching, non-empty breakpoint data");
  }
}

std::size_t CurveSolution::segment(double t) const {
  if (empty() || t < times_.front() || t > times_.back()) {
    throw DimensionError("curve queried outside its time domain");
  }
  auto it = std::upper_bound(times_.begin(), times_.end(), t);
  std::size_t i = static_cast<std::size_t>(it - times_.begin());
  return i == 0 ? 0 : std::min(i - 1, times_.size() - 2);
}

Eigen::VectorXd CurveSolution::operator()(double t) const {
  if (times_.size() == 1) {
    segment(t);
    return states_[0];
  }
  std::size_t i = segment(t);
  if (t == times_[i]) return states_[i];
  if (t == times_[i + 1]) return states_[i + 1];
  double h = times_[i + 1] - times_[i];
  double s = (t - times_[i]) / h;
  double s2 = s * s, s3 = s2 * s;
  return (2 * s3 - 3 * s2 + 1) * states_[i] + (s3 - 2 * s2 + s) * h * derivatives_[i] +
         (-2 * s3 + 3 * s2) * states_[i + 1] + (s3 - s2) * h * derivatives_[i + 1];
}

Eigen::VectorXd CurveSolution::derivative(double t) const {
  if (times_.size() == 1) {
    segment(t);
    return derivatives_[0];
  }
  std::size_t i = segment(t);
  double h = times_[i + 1] - times_[i];
  double s = (t - times_[i]) / h;
  double s2 = s * s;
  return ((6 * s2 - 6 * s) * states_[i] + (-6 * s2 + 6 * s) * states_[i + 1]) / h +
         (3 * s2 - 4 * s + 1) * derivatives_[i] + (3 * s2 - 2 * s) * derivatives_[i + 1];
}

void CurveSolution::append(const CurveSolution& other) {
  if (other.empty()) return;
  if (empty()) {
    *this = other;
    return;
  }
  if (other.t0() != t1()) throw DimensionError("appended curve must start at this curve's end time");
  // The knot is stored twice so the state derivative (and any state
  // component such as a velocity) may jump there.
  for (std::size_t i = 0; i < other.size(); ++i) {
    times_.push_back(other.times_[i]);
    states_.push_back(other.states_[i]);
    derivatives_.push_back(other.derivatives_[i]);
  }
}

// ---------------------------------------------------------------------------
// ODE integration

OdeRun integrate_ode_partial(const OdeRhs& rhs, const Eigen::VectorXd& y0, double t0, double t1,
                             double step) {
  if (!(step > 0)) throw DimensionError("ODE step must be positive");
  if (!(t1 >= t0)) throw DimensionError("ODE interval must satisfy t1 >= t0");
  std::vector<double> times{t0};
  std::vector<Eigen::VectorXd> states{y0};
  std::vector<Eigen::VectorXd> derivs;
  OdeRun run;
  auto finish = [&](bool completed, const std::string& reason) {
    if (derivs.size() < states.size()) derivs.push_back(Eigen::VectorXd::Zero(y0.size()));
    run.curve = CurveSolution(std::move(times), std::move(states), std::move(derivs));
    run.completed = completed;
    run.exit_time = run.curve.t1();
    run.reason = reason;
    return run;
  };
  auto call = [&](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    if (!y.allFinite()) throw OutOfDomain("non-finite state");
    dy.resize(y.size());
    rhs(t, y, dy);
    if (!dy.allFinite()) throw OutOfDomain("non-finite derivative");
  };

  Eigen::VectorXd d0;
  try {
    call(t0, y0, d0);
  } catch (const Error& e) {
    return finish(false, e.what());
  }
  derivs.push_back(d0);

  const double span = t1 - t0;
  long n = span == 0 ? 0 : std::max(1L, static_cast<long>(std::ceil(span / step * (1 - 1e-12))));
  Eigen::VectorXd k2, k3, k4, y, dnew;
  for (long k = 0; k < n; ++k) {
    double t = times.back();
    double tn = k + 1 == n ? t1 : t0 + static_cast<double>(k + 1) * step;
    double h = tn - t;
    const Eigen::VectorXd& yc = states.back();
    const Eigen::VectorXd& k1 = derivs.back();
    try {
      call(t + 0.5 * h, yc + 0.5 * h * k1, k2);
      call(t + 0.5 * h, yc + 0.5 * h * k2, k3);
      call(tn, yc + h * k3, k4);
      y = yc + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      call(tn, y, dnew);
    } catch (const Error& e) {
      return finish(false, e.what());
    }
    times.push_back(tn);
    states.push_back(y);
    derivs.push_back(dnew);
  }
  return finish(true, "");
}

CurveSolution integrate_ode(const OdeRhs& rhs, const Eigen::VectorXd& y0, double t0, double t1,
                            double step) {
  OdeRun run = integrate_ode_partial(rhs, y0, t0, t1, step);
  if (!run.completed) {
    throw ChartExit(run.exit_time, "integration stopped at t = " + std::to_string(run.exit_time) + ": " + run.reason);
  }
  return std::move(run.curve);
}

Eigen::MatrixXd finite_diff_jacobian(const VectorMap& map, const Eigen::VectorXd& point, double h) {
  if (!(h > 0)) throw DimensionError("finite difference step must be positive");
  Eigen::MatrixXd jac;
  Eigen::VectorXd p = point;
  for (Eigen::Index j = 0; j < point.size(); ++j) {
    p[j] = point[j] + h;
    Eigen::VectorXd up = map(p);
    p[j] = point[j] - h;
    Eigen::VectorXd dn = map(p);
    p[j] = point[j];
    if (j == 0) jac.resize(up.size(), point.size());
    jac.col(j) = (up - dn) / (2 * h);
  }
  return jac;
}

Eigen::VectorXd flow(const FieldEvaluator& field, const Eigen::VectorXd& p, double t, int substeps) {
  double h = t / substeps;
  Eigen::VectorXd y = p;
  try {
    for (int s = 0; s < substeps; ++s) {
      Eigen::VectorXd k1 = field(y);
      Eigen::VectorXd k2 = field(y + 0.5 * h * k1);
      Eigen::VectorXd k3 = field(y + 0.5 * h * k2);
      Eigen::VectorXd k4 = field(y + h * k3);
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
  } catch (const ChartExit&) {
    throw;
  } catch (const Error& e) {
    throw ChartExit(0.0, std::string("flow left the chart: ") + e.what());
  }
  return y;
}

Eigen::VectorXd flow_commutator_oracle(const VectorField& v, const VectorField& w, const Eigen::VectorXd& point,
                                       double t, const Box& domain) {
  FieldEvaluator fv(v, domain);
  FieldEvaluator fw(w, domain);
  Eigen::VectorXd q = flow(fv, point, t);
  q = flow(fw, q, t);
  q = flow(fv, q, -t);
  q = flow(fw, q, -t);
  return (q - point) / (t * t);
}

Eigen::VectorXd flow_commutator_oracle(const VectorField& v, const VectorField& w, const Eigen::VectorXd& point,
                                       double t) {
  return flow_commutator_oracle(v, w, point, t, Box::unbounded(v.coords.size()));
}

Eigen::VectorXd evaluate(std::span<const Expr> exprs, std::span<const std::string> vars,
                         const Eigen::VectorXd& point) {
  if (static_cast<std::size_t>(point.size()) != vars.size()) throw DimensionError("point and variable list differ");
  Tape tape(exprs, vars);
  Eigen::VectorXd out(static_cast<Eigen::Index>(exprs.size()));
  tape.eval(std::span<const double>(point.data(), point.size()), std::span<double>(out.data(), out.size()));
  return out;
}

}  // namespace leafsolve
