#include "leafsolve/distribution.hpp"

#include <cmath>
#include <limits>
#include <mutex>

#include "leafsolve/parallel.hpp"

namespace leafsolve {

struct GraphDistribution::Cache {
  Tape F_tape;
  std::once_flag levi_once;
  std::vector<std::vector<Expr>> levi;
  Tape levi_tape;
};

GraphDistribution::GraphDistribution(std::vector<std::string> base_vars, std::vector<std::string> fiber_vars,
                                     ExprMatrix F, Box domain)
    : base_vars_(std::move(base_vars)),
      fiber_vars_(std::move(fiber_vars)),
      F_(std::move(F)),
      domain_(std::move(domain)),
      cache_(std::make_shared<Cache>()) {
  if (base_vars_.empty()) throw DimensionError("distribution needs at least one base coordinate");
  if (F_.rows() != m() || F_.cols() != k()) {
    throw DimensionError("F must be " + std::to_string(m()) + " x " + std::to_string(k()));
  }
  if (domain_.dim() != k() + m()) throw DimensionError("domain dimension must be k + m");
  coords_ = base_vars_;
  coords_.insert(coords_.end(), fiber_vars_.begin(), fiber_vars_.end());
  for (Expr e : F_.data()) {
    for (const auto& v : free_variables(e)) {
      if (std::find(coords_.begin(), coords_.end(), v) == coords_.end()) {
        throw DimensionError("F uses unknown variable '" + v + "'");
      }
    }
  }
  cache_->F_tape = Tape(F_.data(), coords_);
}

Eigen::MatrixXd GraphDistribution::F_at(const Eigen::VectorXd& x, const Eigen::VectorXd& y) const {
  Eigen::VectorXd p(x.size() + y.size());
  p << x, y;
  if (!domain_.contains(p)) throw OutOfDomain("point outside the distribution's domain");
  std::vector<double> out(F_.rows() * F_.cols());
  cache_->F_tape.eval(std::span<const double>(p.data(), p.size()), out);
  return reshape(out.data(), F_.rows(), F_.cols());
}

VectorField GraphDistribution::frame_field(std::size_t i) const {
  VectorField f{coords_, std::vector<Expr>(k() + m())};
  f.comps[i] = 1.0;
  for (std::size_t b = 0; b < m(); ++b) f.comps[k() + b] = F_(b, i);
  return f;
}

const std::vector<std::vector<Expr>>& GraphDistribution::levi_tensor() const {
  std::call_once(cache_->levi_once, [this] {
    std::vector<Expr> flat;
    for (std::size_t i = 0; i < k(); ++i) {
      for (std::size_t j = i + 1; j < k(); ++j) {
        // Vertical part of [X~_i, X~_j]; base parts are constant.
        VectorField b = lie_bracket(frame_field(i), frame_field(j));
        std::vector<Expr> w(b.comps.begin() + static_cast<long>(k()), b.comps.end());
        flat.insert(flat.end(), w.begin(), w.end());
        cache_->levi.push_back(std::move(w));
      }
    }
    cache_->levi_tape = Tape(flat, coords_);
  });
  return cache_->levi;
}

namespace {
std::vector<double> levi_values(const Tape& tape, const Eigen::VectorXd& p) {
  std::vector<double> out(tape.num_outputs());
  tape.eval(std::span<const double>(p.data(), p.size()), out);
  return out;
}
}  // namespace

Eigen::VectorXd GraphDistribution::levi_form(const Eigen::VectorXd& p, const Eigen::VectorXd& X,
                                             const Eigen::VectorXd& Y) const {
  if (static_cast<std::size_t>(p.size()) != k() + m() || static_cast<std::size_t>(X.size()) != k() ||
      static_cast<std::size_t>(Y.size()) != k()) {
    throw DimensionError("levi_form: argument dimensions");
  }
  if (!domain_.contains(p)) throw OutOfDomain("levi_form: point outside the domain");
  levi_tensor();
  auto vals = levi_values(cache_->levi_tape, p);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m()));
  std::size_t pair = 0;
  for (std::size_t i = 0; i < k(); ++i) {
    for (std::size_t j = i + 1; j < k(); ++j, ++pair) {
      double c = X[i] * Y[j] - X[j] * Y[i];
      for (std::size_t a = 0; a < m(); ++a) out[a] += c * vals[pair * m() + a];
    }
  }
  return out;
}

double GraphDistribution::levi_residual(const Eigen::VectorXd& p) const {
  if (!domain_.contains(p)) throw OutOfDomain("levi_residual: point outside the domain");
  levi_tensor();
  double r = 0;
  for (double v : levi_values(cache_->levi_tape, p)) r = std::max(r, std::fabs(v));
  return r;
}

Eigen::VectorXd levi_form(const GraphDistribution& d, const Eigen::VectorXd& p, const Eigen::VectorXd& X,
                          const Eigen::VectorXd& Y) {
  return d.levi_form(p, X, Y);
}

namespace {

OdeRhs lift_rhs(const GraphDistribution& d, const Eigen::VectorXd& x0, const Eigen::VectorXd& lambda) {
  return [&d, x0, lambda](double t, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
    dy = d.F_at(x0 + t * lambda, y) * lambda;
  };
}

void check_lift_args(const GraphDistribution& d, const Eigen::VectorXd& x0, const Eigen::VectorXd& y0,
                     const Eigen::VectorXd& lambda) {
  if (static_cast<std::size_t>(x0.size()) != d.k() || static_cast<std::size_t>(lambda.size()) != d.k() ||
      static_cast<std::size_t>(y0.size()) != d.m()) {
    throw DimensionError("lift: argument dimensions");
  }
  Eigen::VectorXd p(x0.size() + y0.size());
  p << x0, y0;
  if (!d.domain().contains(p)) throw OutOfDomain("lift: starting point outside the domain");
}

}  // namespace

CurveSolution horizontal_lift_ray(const GraphDistribution& d, const Eigen::VectorXd& x0, const Eigen::VectorXd& y0,
                                  const Eigen::VectorXd& lambda, double t_end, double step) {
  check_lift_args(d, x0, y0, lambda);
  return integrate_ode(lift_rhs(d, x0, lambda), y0, 0.0, t_end, step);
}

LeafGrid LeafGrid::from_values(RectGrid grid, Eigen::VectorXd x0, Eigen::VectorXd y0,
                               std::vector<Eigen::VectorXd> values) {
  if (values.size() != grid.size()) throw DimensionError("one value per grid node required");
  LeafGrid leaf;
  std::size_t n = grid.size();
  leaf.grid = std::move(grid);
  leaf.x0 = std::move(x0);
  leaf.y0 = std::move(y0);
  leaf.values = std::move(values);
  leaf.reachable.assign(n, 1);
  leaf.failure.assign(n, "");
  leaf.leaf_residual.assign(n, std::numeric_limits<double>::quiet_NaN());
  leaf.boundary.assign(n, 0);
  leaf.levi_residual.assign(n, 0.0);
  return leaf;
}

namespace {

// Fills leaf_residual and boundary from the current values.
void compute_leaf_residuals(const GraphDistribution& d, LeafGrid& leaf) {
  const RectGrid& g = leaf.grid;
  parallel_for(g.size(), [&](std::size_t i) {
    leaf.leaf_residual[i] = std::numeric_limits<double>::quiet_NaN();
    leaf.boundary[i] = 0;
    if (!leaf.reachable[i]) return;
    Eigen::VectorXd x = g.point(i);
    Eigen::MatrixXd F;
    try {
      F = d.F_at(x, leaf.values[i]);
    } catch (const Error&) {
      return;
    }
    double r = 0;
    bool flagged = false;
    for (std::size_t a = 0; a < g.dim(); ++a) {
      Eigen::VectorXd col;
      bool centered = false;
      if (!grid_derivative(g, leaf.values, leaf.reachable, i, a, col, centered)) return;
      flagged |= !centered;
      r = std::max(r, (col - F.col(static_cast<Eigen::Index>(a))).cwiseAbs().maxCoeff());
    }
    leaf.leaf_residual[i] = r;
    leaf.boundary[i] = flagged;
  });
}

}  // namespace

LeafGrid solve_tde(const GraphDistribution& d, const Eigen::VectorXd& x0, const Eigen::VectorXd& y0,
                   const RectGrid& grid, double step) {
  if (grid.dim() != d.k()) throw DimensionError("grid dimension must equal k");
  long anchor = grid.find_node(x0);
  if (anchor < 0) throw DimensionError("x0 must be a node of the grid (use odd counts centred on x0)");
  check_lift_args(d, x0, y0, Eigen::VectorXd::Zero(x0.size()));
  LeafGrid leaf = LeafGrid::from_values(grid, x0, y0, std::vector<Eigen::VectorXd>(grid.size(), y0));
  d.levi_tensor();

  parallel_for(grid.size(), [&](std::size_t i) {
    Eigen::VectorXd lambda = grid.point(i) - x0;
    if (static_cast<long>(i) == anchor) {
      leaf.values[i] = y0;
      Eigen::VectorXd p(x0.size() + y0.size());
      p << x0, y0;
      leaf.levi_residual[i] = d.levi_residual(p);
      return;
    }
    OdeRun run = integrate_ode_partial(lift_rhs(d, x0, lambda), y0, 0.0, 1.0, step);
    double levi = 0;
    for (std::size_t s = 0; s < run.curve.size(); ++s) {
      Eigen::VectorXd p(x0.size() + y0.size());
      p << x0 + run.curve.times()[s] * lambda, run.curve.states()[s];
      try {
        levi = std::max(levi, d.levi_residual(p));
      } catch (const Error&) {
      }
    }
    leaf.levi_residual[i] = levi;
    if (run.completed) {
      leaf.values[i] = run.curve.back();
    } else {
      leaf.reachable[i] = 0;
      leaf.values[i] = Eigen::VectorXd::Constant(y0.size(), std::numeric_limits<double>::quiet_NaN());
      leaf.failure[i] = "lift left the domain at t = " + std::to_string(run.exit_time) + ": " + run.reason;
    }
  });
  compute_leaf_residuals(d, leaf);
  return leaf;
}

LeafReport check_leaf(const GraphDistribution& d, const LeafGrid& leaf_in, double tol) {
  LeafGrid leaf = leaf_in;
  if (leaf.values.size() != leaf.grid.size()) throw DimensionError("leaf values do not match its grid");
  if (leaf.reachable.size() != leaf.grid.size()) leaf.reachable.assign(leaf.grid.size(), 1);
  leaf.leaf_residual.assign(leaf.grid.size(), 0.0);
  leaf.boundary.assign(leaf.grid.size(), 0);
  compute_leaf_residuals(d, leaf);
  LeafReport rep;
  for (std::size_t i = 0; i < leaf.grid.size(); ++i) {
    if (!leaf.reachable[i]) {
      ++rep.unreachable;
      continue;
    }
    double r = leaf.leaf_residual[i];
    if (!std::isnan(r)) {
      rep.max_leaf_residual_boundary = std::max(rep.max_leaf_residual_boundary, r);
      if (!leaf.boundary[i]) rep.max_leaf_residual = std::max(rep.max_leaf_residual, r);
    }
    Eigen::VectorXd p(leaf.grid.dim() + leaf.values[i].size());
    p << leaf.grid.point(i), leaf.values[i];
    try {
      rep.max_levi_residual = std::max(rep.max_levi_residual, d.levi_residual(p));
    } catch (const Error&) {
      ++rep.unreachable;
    }
  }
  rep.pass = rep.unreachable == 0 && rep.max_leaf_residual < tol && rep.max_levi_residual < tol;
  return rep;
}

double BracketObstructions::max_defect(int order) const {
  double m = 0;
  for (const auto& d : defects) {
    if (d.order == order && d.defect.size() > 0) m = std::max(m, d.defect.cwiseAbs().maxCoeff());
  }
  return m;
}

BracketObstructions iterated_bracket_obstructions(const GraphDistribution& d, const Eigen::VectorXd& e0,
                                                  int max_order, std::size_t node_budget) {
  if (max_order < 1) throw DimensionError("max_order must be at least 1");
  if (static_cast<std::size_t>(e0.size()) != d.k() + d.m()) throw DimensionError("e0 dimension must be k + m");
  if (!d.domain().contains(e0)) throw OutOfDomain("e0 outside the domain");
  const std::size_t k = d.k();
  const std::size_t m = d.m();
  std::vector<VectorField> frame;
  for (std::size_t i = 0; i < k; ++i) frame.push_back(d.frame_field(i));
  Eigen::MatrixXd F0 = d.F_at(e0.head(static_cast<Eigen::Index>(k)), e0.tail(static_cast<Eigen::Index>(m)));

  struct Entry {
    std::vector<int> indices;
    VectorField field;
  };
  BracketObstructions out;
  std::vector<Entry> level;
  for (int order = 1; order <= max_order; ++order) {
    std::vector<Entry> next;
    if (order == 1) {
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
          next.push_back({{static_cast<int>(i + 1), static_cast<int>(j + 1)}, lie_bracket(frame[i], frame[j])});
        }
      }
    } else {
      for (std::size_t i = 0; i < k; ++i) {
        for (const auto& e : level) {
          std::vector<int> idx{static_cast<int>(i + 1)};
          idx.insert(idx.end(), e.indices.begin(), e.indices.end());
          next.push_back({std::move(idx), lie_bracket(frame[i], e.field)});
        }
      }
    }
    std::vector<Expr> all;
    for (const auto& e : next) all.insert(all.end(), e.field.comps.begin(), e.field.comps.end());
    if (dag_size(all) > node_budget) {
      throw BudgetExceeded(order - 1, "iterated brackets of order " + std::to_string(order) +
                                          " exceed the expression budget");
    }
    Eigen::VectorXd vals = all.empty() ? Eigen::VectorXd() : evaluate(all, d.coords(), e0);
    for (std::size_t n = 0; n < next.size(); ++n) {
      Eigen::VectorXd comp = vals.segment(static_cast<Eigen::Index>(n * (k + m)), static_cast<Eigen::Index>(k + m));
      Eigen::VectorXd defect = comp.tail(static_cast<Eigen::Index>(m)) - F0 * comp.head(static_cast<Eigen::Index>(k));
      for (Eigen::Index a = 0; a < defect.size(); ++a) {
        if (std::fabs(defect[a]) < 1e-9) defect[a] = 0.0;
      }
      out.defects.push_back({order, next[n].indices, defect});
    }
    out.completed_order = order;
    level = std::move(next);
  }
  return out;
}

}  // namespace leafsolve
