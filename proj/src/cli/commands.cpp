#include "commands.hpp"

#include <cmath>
#include <limits>

#include "leafsolve/parallel.hpp"

namespace leafsolve::cli {

void Outcome::check(std::string name, double value, const std::string& relation, double bound) {
  bool pass = false;
  if (relation == "<") pass = value < bound;
  if (relation == "<=") pass = value <= bound;
  if (relation == ">") pass = value > bound;
  checks.push_back({std::move(name), value, relation, bound, pass});
}

void Outcome::fail(json where, const std::string& reason) {
  failures.push_back(json{{"where", std::move(where)}, {"reason", reason}});
}

const json& Context::job() const {
  static const json empty = json::object();
  auto it = manifest.jobs.find(command);
  return it == manifest.jobs.end() ? empty : *it;
}

std::string Context::job_ptr(const std::string& key) const {
  return pointer_child(pointer_child("/jobs", command), key);
}

double Context::step() const {
  if (overrides.step) return *overrides.step;
  if (job().contains("step") && job()["step"].is_number()) return job()["step"].get<double>();
  return manifest.settings.step.value_or(1e-3);
}

int Context::order(int fallback) const {
  if (overrides.order) return *overrides.order;
  if (job().contains("order") && job()["order"].is_number_integer()) return job()["order"].get<int>();
  return manifest.settings.order.value_or(fallback);
}

double Context::tol(double fallback) const {
  if (overrides.tol) return *overrides.tol;
  if (job().contains("tol") && job()["tol"].is_number()) return job()["tol"].get<double>();
  return manifest.settings.tol.value_or(fallback);
}

std::optional<int> Context::grid_count() const {
  if (overrides.grid) return overrides.grid;
  return manifest.settings.grid;
}

json convention_table() {
  return json{
      {"christoffel_layout", "christoffel[a][i][j] = Gamma^a_ij, nabla_{d_i} d_j = Gamma^a_ij d_a"},
      {"connection_form", "nabla_i s = d_i s + omega_i s, (omega_i)[a][b] = Gamma^a_ib"},
      {"curvature", "R_ij = d_i omega_j - d_j omega_i + [omega_i, omega_j]; R[i][j][a][b] = (R_ij)_ab"},
      {"torsion", "T^a_ij = Gamma^a_ij - Gamma^a_ji"},
      {"levi_form_distribution", "L(X, Y) = w - F(v) where [X~, Y~] = (v, w) and X~ = (X, F X)"},
      {"levi_form_horizontal", "L(v, w) = -R(v, w) xi"},
      {"levi_form_hom", "(sigma T^M(v, w) - T^N(sigma v, sigma w), sigma R^M(v, w) - R^N(sigma v, sigma w) sigma)"},
      {"transport", "s' = -omega_{x'} s; holonomy H = s(1) s(0)^-1"},
      {"metric_transport", "g = P^-T g0 P^-1 along radial geodesics"},
      {"sigma_layout", "sigma0[a][i]: row a indexes target coordinates, column i source coordinates"},
      {"grid_order", "row-major, last axis fastest"},
  };
}

namespace {

json to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (long i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

json to_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (long i = 0; i < m.rows(); ++i) a.push_back(to_json(Eigen::VectorXd(m.row(i).transpose())));
  return a;
}

// Field of the job, or a diagnostic when it is required and absent.
const json* field(const Context& ctx, const std::string& key, Diagnostics& diag, bool required = true) {
  const json& job = ctx.job();
  if (job.contains(key)) return &job[key];
  if (required) diag.add(pointer_child("/jobs", ctx.command), "missing '" + key + "'");
  return nullptr;
}

template <class Map>
const typename Map::mapped_type* named(const Context& ctx, const Map& map, const char* section, const std::string& key,
                                       const char* what, Diagnostics& diag) {
  const json* j = field(ctx, key, diag);
  if (!j) return nullptr;
  const std::string ptr = ctx.job_ptr(key);
  auto name = read_string(*j, ptr, diag);
  if (!name) return nullptr;
  auto it = map.find(*name);
  if (it == map.end()) {
    if (!ctx.manifest.declared(section, *name)) diag.add(ptr, std::string("unknown ") + what + " '" + *name + "'");
    return nullptr;
  }
  return &it->second;
}

std::optional<Eigen::VectorXd> vector_field(const Context& ctx, const std::string& key, long dim, Diagnostics& diag) {
  const json* j = field(ctx, key, diag);
  if (!j) return std::nullopt;
  return read_vector(*j, ctx.job_ptr(key), diag, dim);
}

std::optional<std::vector<Eigen::VectorXd>> points_field(const Context& ctx, const std::string& key, long dim,
                                                         Diagnostics& diag) {
  const json* j = field(ctx, key, diag);
  if (!j) return std::nullopt;
  const std::string ptr = ctx.job_ptr(key);
  if (!j->is_array() || j->empty()) {
    diag.add(ptr, "expected a non-empty array of points");
    return std::nullopt;
  }
  std::vector<Eigen::VectorXd> out;
  bool ok = true;
  for (std::size_t i = 0; i < j->size(); ++i) {
    auto p = read_vector((*j)[i], pointer_child(ptr, i), diag, dim);
    if (p) {
      out.push_back(*p);
    } else {
      ok = false;
    }
  }
  if (!ok) return std::nullopt;
  return out;
}

std::optional<RectGrid> grid_field(const Context& ctx, std::size_t dim, Diagnostics& diag, bool required = true) {
  const json* j = field(ctx, "grid", diag, required);
  if (!j) return std::nullopt;
  return read_grid(*j, ctx.job_ptr("grid"), dim, ctx.grid_count(), diag);
}

std::optional<bool> bool_field(const Context& ctx, const std::string& key, bool fallback, Diagnostics& diag) {
  const json* j = field(ctx, key, diag, false);
  if (!j) return fallback;
  if (!j->is_boolean()) {
    diag.add(ctx.job_ptr(key), "expected true or false");
    return std::nullopt;
  }
  return j->get<bool>();
}

std::optional<double> number_field(const Context& ctx, const std::string& key, double fallback, Diagnostics& diag) {
  const json* j = field(ctx, key, diag, false);
  if (!j) return fallback;
  return read_number(*j, ctx.job_ptr(key), diag);
}

// Optional list of expressions over `vars` (one per output component).
std::optional<std::vector<Expr>> exprs_field(const Context& ctx, const std::string& key,
                                             const std::vector<std::string>& vars, std::size_t count, bool required,
                                             Diagnostics& diag, bool& present) {
  const json* j = field(ctx, key, diag, required);
  present = j != nullptr;
  if (!j) return std::vector<Expr>{};
  const std::string ptr = ctx.job_ptr(key);
  if (!j->is_array() || j->size() != count) {
    diag.add(ptr, "expected " + std::to_string(count) + " expressions");
    return std::nullopt;
  }
  std::vector<Expr> out;
  bool ok = true;
  for (std::size_t i = 0; i < count; ++i) {
    auto e = read_expr((*j)[i], pointer_child(ptr, i), vars, diag);
    if (e) {
      out.push_back(*e);
    } else {
      ok = false;
    }
  }
  if (!ok) return std::nullopt;
  return out;
}

// Spray named by "spray", or the geodesic spray of "connection".
std::optional<Spray> spray_field(const Context& ctx, Diagnostics& diag) {
  if (ctx.job().contains("spray")) {
    const Spray* s = named(ctx, ctx.manifest.sprays, "sprays", "spray", "spray", diag);
    if (!s) return std::nullopt;
    return *s;
  }
  if (ctx.job().contains("connection")) {
    const BundleConnection* c = named(ctx, ctx.manifest.connections, "connections", "connection", "connection", diag);
    if (!c) return std::nullopt;
    if (!c->tangent()) {
      diag.add(ctx.job_ptr("connection"), "a geodesic spray needs a tangent connection");
      return std::nullopt;
    }
    return geodesic_spray(*c);
  }
  diag.add(pointer_child("/jobs", ctx.command), "missing 'spray' or 'connection'");
  return std::nullopt;
}

std::vector<json> node_cells(const Eigen::VectorXd& x) {
  std::vector<json> row;
  for (long i = 0; i < x.size(); ++i) row.push_back(x[i]);
  return row;
}

std::vector<std::string> indexed(const std::string& prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

double finite_or_nan(double x) { return std::isfinite(x) ? x : std::numeric_limits<double>::quiet_NaN(); }

// ---------------------------------------------------------------- levi

bool cmd_levi(const Context& ctx, Diagnostics& diag, bool dry, Outcome& out) {
  const GraphDistribution* d = named(ctx, ctx.manifest.distributions, "distributions", "distribution", "distribution", diag);
  if (!d) return false;
  auto pts = points_field(ctx, "points", static_cast<long>(d->k() + d->m()), diag);
  if (!pts) return false;
  if (dry) return true;
  const double tol = ctx.tol(1e-10);
  const long k = static_cast<long>(d->k());
  json per = json::array();
  double worst = 0;
  for (std::size_t p = 0; p < pts->size(); ++p) {
    const Eigen::VectorXd& pt = (*pts)[p];
    try {
      json pairs = json::array();
      for (long i = 0; i < k; ++i) {
        for (long j = i + 1; j < k; ++j) {
          auto L = d->levi_form(pt, Eigen::VectorXd::Unit(k, i), Eigen::VectorXd::Unit(k, j));
          pairs.push_back(json{{"i", i + 1}, {"j", j + 1}, {"value", to_json(L)}});
        }
      }
      const double r = d->levi_residual(pt);
      worst = std::max(worst, r);
      per.push_back(json{{"point", to_json(pt)}, {"levi", pairs}, {"residual", r}});
    } catch (const Error& e) {
      out.fail(json{{"point", p}}, e.what());
    }
  }
  out.results["points"] = per;
  out.results["max_levi_residual"] = worst;
  out.check("max_levi_residual", worst, "<", tol);
  return true;
}

// ---------------------------------------------------------------- integrability

bool cmd_integrability(const Context& ctx, Diagnostics& diag, bool dry, Outcome& out) {
  const GraphDistribution* d = named(ctx, ctx.manifest.distributions, "distributions", "distribution", "distribution", diag);
  if (!d) return false;
  auto pt = vector_field(ctx, "point", static_cast<long>(d->k() + d->m()), diag);
  if (!pt) return false;
  const int K = ctx.order(2);
  if (K < 1) {
    diag.add(ctx.job_ptr("order"), "order must be at least 1");
    return false;
  }
  if (dry) return true;
  const double tol = ctx.tol(1e-9);
  BracketObstructions obs;
  try {
    obs = iterated_bracket_obstructions(*d, *pt, K);
  } catch (const BudgetExceeded& e) {
    out.fail(json{{"order", e.completed_order() + 1}}, e.what());
    return true;
  } catch (const Error& e) {
    out.fail(json{{"point", to_json(*pt)}}, e.what());
    return true;
  }
  json orders = json::array();
  for (int s = 1; s <= obs.completed_order; ++s) {
    json defects = json::array();
    for (const auto& b : obs.defects) {
      if (b.order != s) continue;
      defects.push_back(json{{"indices", b.indices}, {"defect", to_json(b.defect)}});
    }
    orders.push_back(json{{"order", s}, {"max_defect", obs.max_defect(s)}, {"defects", defects}});
    out.check("max_defect_order_" + std::to_string(s), obs.max_defect(s), "<", tol);
  }
  int first = 0;
  for (int s = 1; s <= obs.completed_order && first == 0; ++s) {
    if (obs.max_defect(s) >= tol) first = s;
  }
  out.results["orders"] = orders;
  out.results["completed_order"] = obs.completed_order;
  out.results["first_obstructed_order"] = first == 0 ? json(nullptr) : json(first);
  return true;
}

// ---------------------------------------------------------------- solve-tde

bool cmd_solve_tde(const Context& ctx, Diagnostics& diag, bool dry, Outcome& out) {
  const GraphDistribution* d = named(ctx, ctx.manifest.distributions, "distributions", "distribution", "distribution", diag);
  if (!d) return false;
  const long k = static_cast<long>(d->k()), m = static_cast<long>(d->m());
  auto x0 = vector_field(ctx, "x0", k, diag);
  auto y0 = vector_field(ctx, "y0", m, diag);
  auto grid = grid_field(ctx, d->k(), diag);
  bool has_exact = false;
  auto exact = exprs_field(ctx, "exact", d->base_vars(), d->m(), false, diag, has_exact);
  if (!x0 || !y0 || !grid || !exact) return false;
  if (grid->find_node(*x0) < 0) {
    diag.add(ctx.job_ptr("x0"), "x0 must be a grid node");
    return false;
  }
  if (dry) return true;
  const double tol = ctx.tol(1e-5);
  LeafGrid leaf;
  try {
    leaf = solve_tde(*d, *x0, *y0, *grid, ctx.step());
  } catch (const Error& e) {
    out.fail(json{{"x0", to_json(*x0)}}, e.what());
    return true;
  }
  const LeafReport rep = check_leaf(*d, leaf, tol);
  out.results["nodes"] = grid->size();
  out.results["unreachable"] = rep.unreachable;
  out.results["max_leaf_residual"] = rep.max_leaf_residual;
  out.results["max_leaf_residual_boundary"] = rep.max_leaf_residual_boundary;
  out.results["max_levi_residual"] = rep.max_levi_residual;
  out.check("max_leaf_residual", rep.max_leaf_residual, "<", tol);
  out.check("max_levi_residual", rep.max_levi_residual, "<", tol);
  out.check("unreachable", static_cast<double>(rep.unreachable), "<=", 0);
  std::optional<Tape> exact_tape;
  if (has_exact) exact_tape.emplace(*exact, d->base_vars());
  double exact_err = 0;
  DataFile file{"leaf", indexed("x", d->k()), {}};
  for (const auto& n : indexed("y", d->m())) file.header.push_back(n);
  for (const char* h : {"reachable", "leaf_residual", "levi_residual", "failure"}) file.header.push_back(h);
  for (std::size_t i = 0; i < grid->size(); ++i) {
    const Eigen::VectorXd x = grid->point(i);
    auto row = node_cells(x);
    for (long a = 0; a < m; ++a) row.push_back(finite_or_nan(leaf.values[i][a]));
    row.push_back(static_cast<bool>(leaf.reachable[i]));
    row.push_back(finite_or_nan(leaf.leaf_residual[i]));
    row.push_back(finite_or_nan(leaf.levi_residual[i]));
    row.push_back(leaf.failure[i]);
    file.rows.push_back(std::move(row));
    if (exact_tape && leaf.reachable[i]) {
      auto want = exact_tape->eval(std::span<const double>(x.data(), x.size()));
      for (long a = 0; a < m; ++a) exact_err = std::max(exact_err, std::abs(leaf.values[i][a] - want[a]));
    }
    if (!leaf.reachable[i]) out.fail(json{{"node", i}, {"x", to_json(x)}}, leaf.failure[i]);
  }
  if (has_exact) {
    out.results["max_error_vs_exact"] = exact_err;
    out.check("max_error_vs_exact", exact_err, "<", tol);
  }
  out.files.push_back(std::move(file));
  return true;
}

// ---------------------------------------------------------------- curvature

bool cmd_curvature(const Context& ctx, Diagnostics& diag, bool dry, Outcome& out) {
  const BundleConnection* c = named(ctx, ctx.manifest.connections, "connections", "connection", "connection", diag);
  if (!c) return false;
  auto pts = points_field(ctx, "points", static_cast<long>(c->n()), diag);
  if (!pts) return false;
  if (dry) return true;
  const TensorFieldExpr R = curvature(*c);
  std::optional<TensorFieldExpr> T;
  if (c->tangent()) T = torsion(*c);
  const int n = static_cast<int>(c->n());
  json per = json::array();
  for (std::size_t p = 0; p < pts->size(); ++p) {
    const Eigen::VectorXd& x = (*pts)[p];
    if (!c->domain().contains(x)) {
      out.fail(json{{"point", p}}, "point outside the chart");
      continue;
    }
    try {
      const auto rv = R.evaluate(x);
      json rj = json::array(), tj = json::array();
      std::vector<double> tv;
      if (T) tv = T->evaluate(x);
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          const int s[2] = {i, j};
          rj.push_back(json{{"i", i + 1}, {"j", j + 1}, {"R", to_json(reshape(rv.data() + R.index(s), c->r(), c->r()))}});
          if (T) {
            Eigen::VectorXd t(n);
            for (int a = 0; a < n; ++a) t[a] = tv[T->index(s, a)];
            tj.push_back(json{{"i", i + 1}, {"j", j + 1}, {"T", to_json(t)}});
          }
        }
      }
      json entry{{"point", to_json(x)}, {"curvature", rj}};
      if (T) entry["torsion"] = tj;
      per.push_back(entry);
    } catch (const Error& e) {
      out.fail(json{{"point", p}}, e.what());
    }
  }
  out.results["points"] = per;
  return true;
}

// ---------------------------------------------------------------- transport

bool cmd_transport(const Context& ctx, Diagnostics& diag, bool dry, Outcome& out) {
  const BundleConnection* c = named(ctx, ctx.manifest.connections, "connections", "connection", "connection", diag);
  if (!c) return false;
  const long n = static_cast<long>(c->n()), r = static_cast<long>(c->r());
  const bool has_path = ctx.job().contains("path"), has_curve = ctx.job().contains("curve");
  if (has_path == has_curve) {
    diag.add(pointer_child("/jobs", ctx.command), "give exactly one of 'path' and 'curve'");
    return false;
  }
  std::vector<Eigen::VectorXd> path;
  std::vector<Expr> curve, curve_dot;
  if (has_path) {
    auto p = points_field(ctx, "path", n, diag);
    if (!p) return false;
    if (p->size() < 2) {
      diag.add(ctx.job_ptr("path"), "a path needs at least two vertices");
      return false;
    }
    path = *p;
  } else {
    bool present = false;
    const std::vector<std::string> tvar{"t"};
    auto e = exprs_field(ctx, "curve", tvar, c->n(), true, diag, present);
    if (!e) return false;
    curve = *e;
    for (Expr x : curve) curve_dot.push_back(differentiate(x, "t"));
  }
  Eigen::MatrixXd s0 = Eigen::MatrixXd::Identity(r, r);
  if (const json* j = field(ctx, "s0", diag, false)) {
    if (j->is_array() && !j->empty() && !(*j)[0].is_array()) {
      auto v = read_vector(*j, ctx.job_ptr("s0"), diag, r);
      if (!v) return false;
      s0 = *v;
    } else {
      auto mtx = read_matrix(*j, ctx.job_ptr("s0"), diag, r);
      if (!mtx) return false;
      s0 = *mtx;
    }
  }
  auto samples = number_field(ctx, "samples", 100, diag);
  if (!samples) return false;
  if (dry) return true;
  const double step = ctx.step();
  CurveSolution sol;
  Eigen::VectorXd start, end;
  try {
    if (has_path) {
      const double legs = static_cast<double>(path.size() - 1);
      Eigen::MatrixXd s = s0;
      for (std::size_t k = 0; k + 1 < path.size(); ++k) {
        CurveSolution leg = parallel_transport(*c, segment_curve(path[k], path[k + 1]), s, 0.0, 1.0, step);
        std::vector<double> times = leg.times();
        for (double& t : times) t = (static_cast<double>(k) + t) / legs;
        std::vector<Eigen::VectorXd> ders = leg.derivatives();
        for (auto& dv : ders) dv *= legs;
        CurveSolution shifted(std::move(times), leg.states(), std::move(ders));
        if (sol.empty()) {
          sol = shifted;
        } else {
          sol.append(shifted);
        }
        s = Eigen::Map<const Eigen::MatrixXd>(leg.back().data(), r, s0.cols());
      }
      start = path.front();
      end = path.back();
    } else {
      const Tape xt(curve, std::vector<std::string>{"t"}), dt(curve_dot, std::vector<std::string>{"t"});
      CurveFn fn = [&](double t, Eigen::VectorXd& x, Eigen::VectorXd& xd) {
        x.resize(n);
        xd.resize(n);
        const double in[1] = {t};
        xt.eval(in, std::span<double>(x.data(), static_cast<std::size_t>(n)));
        dt.eval(in, std::span<double>(xd.data(), static_cast<std::size_t>(n)));
      };
      sol = parallel_transport(*c, fn, s0, 0.0, 1.0, step);
      Eigen::VectorXd xd;
      fn(0.0, start, xd);
      fn(1.0, end, xd);
    }
  } catch (const ChartExit& e) {
    out.fail(json{{"t", e.last_valid_t()}}, e.what());
    return true;
  } catch (const Error& e) {
    out.fail(json{{"t", 0.0}}, e.what());
    return true;
  }
  const Eigen::MatrixXd s1 = Eigen::Map<const Eigen::MatrixXd>(sol.back().data(), r, s0.cols());
  out.results["s0"] = to_json(s0);
  out.results["s1"] = to_json(s1);
  const bool closed = (start - end).lpNorm<Eigen::Infinity>() <= 1e-12;
  out.results["closed"] = closed;
  if (closed && s0.rows() == s0.cols()) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(s0);
    if (lu.isInvertible()) out.results["holonomy"] = to_json(Eigen::MatrixXd(s1 * lu.inverse()));
  }
  const int ns = std::max(1, static_cast<int>(*samples));
  DataFile file{"transport", {"t"}, {}};
  for (long a = 0; a < r; ++a) {
    for (long b = 0; b < s0.cols(); ++b) file.header.push_back("s" + std::to_string(a + 1) + "_" + std::to_string(b + 1));
  }
  for (int k = 0; k <= ns; ++k) {
    const double t = static_cast<double>(k) / ns;
    const Eigen::VectorXd y = sol(t);
    const Eigen::MatrixXd s = Eigen::Map<const Eigen::MatrixXd>(y.data(), r, s0.cols());
    std::vector<json> row{t};
    for (long a = 0; a < r; ++a) {
      for (long b = 0; b < s0.cols(); ++b) row.push_back(s(a, b));
    }
    file.rows.push_back(std::move(row));
  }
  out.files.push_back(std::move(file));
  return true;
}

// ---------------------------------------------------------------- geodesic

bool cmd_geodesic(const Context& ctx, Diagnostics& diag, bool dry, Outcome& out) {
  auto s = spray_field(ctx, diag);
  if (!s) return false;
  const long n = static_cast<long>(s->n());
  auto x0 = vector_field(ctx, "x0", n, diag);
  auto v0 = vector_field(ctx, "v0", n, diag);
  auto t_end = number_field(ctx, "t_end", 1.0, diag);
  auto samples = number_field(ctx, "samples", 100, diag);
  if (!x0 || !v0 || !t_end || !samples) return false;
  if (!(*t_end > 0)) {
    diag.add(ctx.job_ptr("t_end"), "t_end must be positive");
    return false;
  }
  if (dry) return true;
  SprayRun run;
  try {
    run = solve_spray(*s, *x0, *v0, *t_end, ctx.step());
  } catch (const Error& e) {
    out.fail(json{{"t", 0.0}}, e.what());
    return true;
  }
  out.results["completed"] = run.completed;
  out.results["end_time"] = run.completed ? *t_end : run.exit_time;
  out.results["x_end"] = to_json(Eigen::VectorXd(run.curve.back().head(n)));
  out.results["v_end"] = to_json(Eigen::VectorXd(run.curve.back().tail(n)));
  if (!run.completed) out.fail(json{{"t", run.exit_time}}, "geodesic left the chart: " + run.reason);
  const int ns = std::max(1, static_cast<int>(*samples));
  DataFile file{"geodesic", {"t"}, {}};
  for (const auto& h : indexed("x", s->n())) file.header.push_back(h);
  for (const auto& h : indexed("v", s->n())) file.header.push_back(h);
  const double t1 = run.curve.t1();
  for (int k = 0; k <= ns; ++k) {
    const double t = t1 * k / ns;
    std::vector<json> row{t};
    for (double v : node_cells(run.curve(t))) row.push_back(v);
    file.rows.push_back(std::move(row));
  }
  out.files.push_back(std::move(file));
  return true;
}

// ---------------------------------------------------------------- exp / log

bool cmd_exp(const Context& ctx, Diagnostics& diag, bool dry, Outcome& out) {
  auto s = spray_field(ctx, diag);
  if (!s) return false;
  const long n = static_cast<long>(s->n());
  auto x = vector_field(ctx, "x", n, diag);
  auto v = vector_field(ctx, "v", n, diag);
  if (!x || !v) return false;
  if (dry) return true;
  try {
    out.results["exp"] = to_json(exp_map(*s, *x, *v, ctx.step()));
  } catch (const ChartExit& e) {
    out.fail(json{{"t", e.last_valid_t()}}, e.what());
  } catch (const Error& e) {
    out.fail(json{{"t", 0.0}}, e.what());
  }
  return true;
}

bool cmd_log(const Context& ctx, Diagnostics& diag, bool dry, Outcome& out) {
  auto s = spray_field(ctx, diag);
  if (!s) return false;
  const long n = static_cast<long>(s->n());
  auto x = vector_field(ctx, "x", n, diag);
  auto target = vector_field(ctx, "target", n, diag);
  if (!x || !target) return false;
  if (dry) return true;
  const double tol = ctx.tol(1e-8);
  LogOptions opts;
  opts.step = ctx.step();
  opts.tol = std::min(opts.tol, tol);
  try {
    const Eigen::VectorXd v = log_map(*s, *x, *target, opts);
    const double resid = (exp_map(*s, *x, v, opts.step) - *target).norm();
    out.results["log"] = to_json(v);
    out.results["residual"] = resid;
    out.check("exp_of_log_residual", resid, "<", tol);
  } catch (const Error& e) {
    out.fail(json{{"target", to_json(*target)}}, e.what());
  }
  return true;
}

// ---------------------------------------------------------------- metric

void metric_file(const MetricGrid& mg, DataFile& file) {
  const std::size_t n = mg.grid.dim();
  file.header = indexed("x", n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) file.header.push_back("g" + std::to_string(i + 1) + "_" + std::to_string(j + 1));
  }
  for (const char* h : {"reachable", "hypothesis_residual", "nabla_g_residual", "failure"}) file.header.push_back(h);
  for (std::size_t k = 0; k < mg.grid.size(); ++k) {
    auto row = node_cells(mg.grid.point(k));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) row.push_back(finite_or_nan(mg.g[k](static_cast<long>(i), static_cast<long>(j))));
    }
    row.push_back(static_cast<bool>(mg.reachable[k]));
    row.push_back(k < mg.hypothesis_residual.size() ? json(finite_or_nan(mg.hypothesis_residual[k])) : json(nullptr));
    row.push_back(k < mg.nabla_g_residual.size() ? json(finite_or_nan(mg.nabla_g_residual[k])) : json(nullptr));
    row.push_back(mg.failure.empty() ? "" : mg.failure[k]);
    file.rows.push_back(std::move(row));
  }
}

std::optional<std::vector<Expr>> metric_exprs(const Context& ctx, const std::string& key,
                                              const std::vector<std::string>& vars, bool required, Diagnostics& diag,
                                              bool& present) {
  const json* j = field(ctx, key, diag, required);
  present = j != nullptr;
  if (!j) return std::vector<Expr>{};
  const std::size_t n = vars.size();
  const std::string ptr = ctx.job_ptr(key);
  if (!j->is_array() || j->size() != n) {
    diag.add(ptr, "expected " + std::to_string(n) + " rows");
    return std::nullopt;
  }
  std::vector<Expr> out;
  bool ok = true;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string rp = pointer_child(ptr, i);
    if (!(*j)[i].is_array() || (*j)[i].size() != n) {
      diag.add(rp, "expected " + std::to_string(n) + " entries");
      ok = false;
      continue;
    }
    for (std::size_t k = 0; k < n; ++k) {
      auto e = read_expr((*j)[i][k], pointer_child(rp, k), vars, diag);
      if (e) {
        out.push_back(*e);
      } else {
        ok = false;
      }
    }
  }
  if (!ok) return std::nullopt;
  return out;
}

bool cmd_recover_metric(const Context& ctx, Diagnostics& diag, bool dry, Outcome& out) {
  const SeedSpec* seed = named(ctx, ctx.manifest.metric_seeds, "metric_seeds", "seed", "metric seed", diag);
  if (!seed) return false;
  const BundleConnection& conn = ctx.manifest.connections.at(seed->connection);
  auto grid = grid_field(ctx, conn.n(), diag);
  auto override_h = bool_field(ctx, "override_hypothesis", false, diag);
  bool has_exact = false;
  auto exact = metric_exprs(ctx, "exact", conn.base_vars(), false, diag, has_exact);
  if (!grid || !override_h || !exact) return false;
  if (grid->find_node(seed->seed.m0) < 0) {
    diag.add(ctx.job_ptr("grid"), "the seed point m0 must be a grid node");
    return false;
  }
  if (dry) return true;
  const double tol = ctx.tol(1e-5);
  MetricOptions opts;
  opts.step = ctx.step();
  opts.override_hypothesis = *override_h;
  MetricGrid mg;
  try {
    mg = recover_metric(conn, seed->seed, *grid, opts);
  } catch (const PreconditionError& e) {
    out.results["precondition"] = e.what();
    out.fail(json{{"m0", to_json(seed->seed.m0)}}, e.what());
    return true;
  } catch (const Error& e) {
    out.fail(json{{"m0", to_json(seed->seed.m0)}}, e.what());
    return true;
  }
  const LeviCivitaReport lc = verify_levi_civita(conn, mg, tol);
  out.results["nodes"] = grid->size();
  out.results["unreachable"] = mg.unreachable();
  out.results["max_hypothesis_residual"] = mg.max_hypothesis_residual();
  out.results["max_nabla_g"] = lc.max_nabla_g;
  out.results["max_nabla_g_boundary"] = lc.max_nabla_g_boundary;
  out.results["max_torsion"] = lc.max_torsion;
  out.results["signature"] = json{{"positive", mg.seed.signature.positive}, {"negative", mg.seed.signature.negative}};
  out.results["signature_mismatches"] = mg.signature_mismatches;
  out.results["ill_conditioned"] = mg.ill_conditioned;
  if (!*override_h) out.check("max_hypothesis_residual", mg.max_hypothesis_residual(), "<", opts.hypothesis_tol);
  out.check("max_nabla_g", lc.max_nabla_g, "<", tol);
  out.check("unreachable", static_cast<double>(mg.unreachable()), "<=", 0);
  out.check("signature_mismatches", static_cast<double>(mg.signature_mismatches), "<=", 0);
  if (has_exact) {
    const std::size_t n = conn.n();
    const Tape tape(*exact, conn.base_vars());
    double err = 0;
    for (std::size_t i = 0; i < grid->size(); ++i) {
      if (!mg.reachable[i]) continue;
      const Eigen::VectorXd x = grid->point(i);
      auto want = tape.eval(std::span<const double>(x.data(), x.size()));
      err = std::max(err, (mg.g[i] - reshape(want.data(), n, n)).lpNorm<Eigen::Infinity>());
    }
    out.results["max_error_vs_exact"] = err;
    out.check("max_error_vs_exact", err, "<", tol);
  }
  for (std::size_t i = 0; i < grid->size(); ++i) {
    if (!mg.reachable[i]) out.fail(json{{"node", i}, {"x", to_json(grid->point(i))}}, mg.failure[i]);
  }
  DataFile file{"metric", {}, {}};
  metric_file(mg, file);
  out.files.push_back(std::move(file));
  return true;
}

bool cmd_verify_metric(const Context& ctx, Diagnostics& diag, bool dry, Outcome& out) {
  const BundleConnection* c = named(ctx, ctx.manifest.connections, "connections", "connection", "connection", diag);
  if (!c) return false;
  if (!c->tangent()) {
    diag.add(ctx.job_ptr("connection"), "metric checks need a tangent connection");
    return false;
  }
  bool present = false;
  auto g = metric_exprs(ctx, "metric", c->base_vars(), true, diag, present);
  auto grid = grid_field(ctx, c->n(), diag);
  if (!g || !grid) return false;
  if (dry) return true;
  const double tol = ctx.tol(1e-5);
  const int K = ctx.order(2);
  const std::size_t n = c->n(), N = grid->size();
  const Tape tape(*g, c->base_vars());
  MetricGrid mg;
  mg.grid = *grid;
  mg.g.resize(N);
  mg.reachable.assign(N, 0);
  mg.failure.assign(N, "");
  for (std::size_t i = 0; i < N; ++i) {
    const Eigen::VectorXd x = grid->point(i);
    try {
      if (!c->domain().contains(x)) throw OutOfDomain("node outside the chart");
      auto vals = tape.eval(std::span<const double>(x.data(), x.size()));
      mg.g[i] = reshape(vals.data(), n, n);
      mg.reachable[i] = mg.g[i].allFinite();
      if (!mg.reachable[i]) mg.failure[i] = "metric is not finite";
    } catch (const Error& e) {
      mg.g[i] = Eigen::MatrixXd::Constant(static_cast<long>(n), static_cast<long>(n),
                                          std::numeric_limits<double>::quiet_NaN());
      mg.failure[i] = e.what();
    }
  }
  const LeviCivitaReport lc = verify_levi_civita(*c, mg, tol);
  out.results["max_torsion"] = lc.max_torsion;
  out.results["max_nabla_g"] = lc.max_nabla_g;
  out.results["max_nabla_g_boundary"] = lc.max_nabla_g_boundary;
  out.check("max_torsion", lc.max_torsion, "<", tol);
  out.check("max_nabla_g", lc.max_nabla_g, "<", tol);
  // Higher-order curvature antisymmetry at the grid center.
  const Eigen::VectorXd center = 0.5 * (grid->lo() + grid->hi());
  try {
    auto vals = tape.eval(std::span<const double>(center.data(), center.size()));
    const MetricSeed seed = MetricSeed::make(center, reshape(vals.data(), n, n));
    const double htol = 1e-8;
    const HigherOrderReport ho = higher_order_metric_check(*c, seed, K, htol);
    json orders = json::array();
    for (const auto& o : ho.orders) {
      orders.push_back(json{{"order", o.order}, {"residual", o.residual}});
      out.check("curvature_antisymmetry_order_" + std::to_string(o.order), o.residual, "<", htol);
    }
    out.results["higher_order"] = json{{"point", to_json(center)}, {"orders", orders}, {"budget_exceeded", ho.budget_exceeded}};
    if (ho.budget_exceeded) out.fail(json{{"order", ho.orders.size()}}, "expression budget exceeded");
  } catch (const Error& e) {
    out.fail(json{{"point", to_json(center)}}, e.what());
  }
  for (std::size_t i = 0; i < N; ++i) {
    if (!mg.reachable[i]) out.fail(json{{"node", i}}, mg.failure[i]);
  }
  DataFile file{"metric", {}, {}};
  MetricGrid copy = mg;
  compute_nabla_g(*c, copy);
  metric_file(copy, file);
  out.files.push_back(std::move(file));
  return true;
}

// ---------------------------------------------------------------- CAH

std::optional<CahProblem> problem_field(const Context& ctx, Diagnostics& diag) {
  const CahSpec* spec = named(ctx, ctx.manifest.cah_problems, "cah_problems", "problem", "CAH problem", diag);
  if (!spec) return std::nullopt;
  try {
    return CahProblem(ctx.manifest.connections.at(spec->source), ctx.manifest.connections.at(spec->target), spec->x0,
                      spec->y0, spec->sigma0);
  } catch (const Error& e) {
    diag.add(ctx.job_ptr("problem"), e.what());
    return std::nullopt;
  }
}

void map_file(const AffineMapGrid& map, std::size_t n, std::size_t m, DataFile& file) {
  file.header = indexed("x", n);
  for (const auto& h : indexed("f", m)) file.header.push_back(h);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t i = 0; i < n; ++i) file.header.push_back("sigma" + std::to_string(a + 1) + "_" + std::to_string(i + 1));
  }
  for (const char* h : {"reachable", "torsion_relates", "curvature_relates", "jacobian_residual", "failure"}) {
    file.header.push_back(h);
  }
  for (std::size_t k = 0; k < map.grid.size(); ++k) {
    auto row = node_cells(map.grid.point(k));
    for (std::size_t a = 0; a < m; ++a) row.push_back(finite_or_nan(map.f[k][static_cast<long>(a)]));
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t i = 0; i < n; ++i) row.push_back(finite_or_nan(map.sigma[k](static_cast<long>(a), static_cast<long>(i))));
    }
    row.push_back(static_cast<bool>(map.reachable[k]));
    row.push_back(finite_or_nan(map.relates[k].torsion));
    row.push_back(finite_or_nan(map.relates[k].curvature));
    row.push_back(finite_or_nan(map.jacobian_residual[k]));
    row.push_back(map.failure[k]);
    file.rows.push_back(std::move(row));
  }
}

bool cmd_cah_map(const Context& ctx, Diagnostics& diag, bool dry, Outcome& out) {
  auto prob = problem_field(ctx, diag);
  if (!prob) return false;
  auto grid = grid_field(ctx, prob->n(), diag);
  auto relates_tol = number_field(ctx, "relates_tol", 1e-7, diag);
  bool has_exact = false;
  auto exact = exprs_field(ctx, "exact", prob->source().base_vars(), prob->m(), false, diag, has_exact);
  if (!grid || !relates_tol || !exact) return false;
  if (grid->find_node(prob->x0()) < 0) {
    diag.add(ctx.job_ptr("grid"), "x0 must be a grid node");
    return false;
  }
  if (dry) return true;
  const double tol = ctx.tol(1e-5);
  CahOptions opts;
  opts.step = ctx.step();
  const AffineMapGrid map = cah_map(*prob, *grid, opts);
  const AffineReport rep = affine_residual(*prob, map, tol);
  out.results["nodes"] = grid->size();
  out.results["unreachable"] = map.unreachable();
  out.results["max_torsion_relates"] = map.max_torsion_relates();
  out.results["max_curvature_relates"] = map.max_curvature_relates();
  out.results["max_nabla_sigma"] = rep.max_nabla_sigma;
  out.results["max_nabla_sigma_boundary"] = rep.max_nabla_sigma_boundary;
  out.results["max_jacobian_residual"] = rep.max_jacobian_residual;
  out.check("max_torsion_relates", map.max_torsion_relates(), "<", *relates_tol);
  out.check("max_curvature_relates", map.max_curvature_relates(), "<", *relates_tol);
  out.check("max_nabla_sigma", rep.max_nabla_sigma, "<", tol);
  out.check("max_jacobian_residual", rep.max_jacobian_residual, "<", tol);
  out.check("unreachable", static_cast<double>(map.unreachable()), "<=", 0);
  if (has_exact) {
    const Tape tape(*exact, prob->source().base_vars());
    double err = 0;
    for (std::size_t i = 0; i < grid->size(); ++i) {
      if (!map.reachable[i]) continue;
      const Eigen::VectorXd x = grid->point(i);
      auto want = tape.eval(std::span<const double>(x.data(), x.size()));
      for (std::size_t a = 0; a < prob->m(); ++a) err = std::max(err, std::abs(map.f[i][static_cast<long>(a)] - want[a]));
    }
    out.results["max_error_vs_exact"] = err;
    out.check("max_error_vs_exact", err, "<", tol);
  }
  for (std::size_t i = 0; i < grid->size(); ++i) {
    if (!map.reachable[i]) out.fail(json{{"node", i}, {"x", to_json(grid->point(i))}}, map.failure[i]);
  }
  DataFile file{"cah_map", {}, {}};
  map_file(map, prob->n(), prob->m(), file);
  out.files.push_back(std::move(file));
  return true;
}

bool cmd_cah_check(const Context& ctx, Diagnostics& diag, bool dry, Outcome& out) {
  auto prob = problem_field(ctx, diag);
  if (!prob) return false;
  const int K = ctx.order(4);
  if (dry) return true;
  const double tol = ctx.tol(1e-8);
  const HigherOrderCahReport rep = higher_order_cah_check(*prob, K, tol);
  json orders = json::array();
  int first = -1;
  for (const auto& o : rep.orders) {
    orders.push_back(json{{"order", o.order}, {"torsion", o.torsion}, {"curvature", o.curvature}});
    out.check("torsion_order_" + std::to_string(o.order), o.torsion, "<", tol);
    out.check("curvature_order_" + std::to_string(o.order), o.curvature, "<", tol);
    if (first < 0 && (o.torsion >= tol || o.curvature >= tol)) first = o.order;
  }
  out.results["orders"] = orders;
  out.results["first_failing_order"] = first < 0 ? json(nullptr) : json(first);
  out.results["budget_exceeded"] = rep.budget_exceeded;
  if (rep.budget_exceeded) out.fail(json{{"order", rep.orders.size()}}, "expression budget exceeded");
  return true;
}

bool cmd_affine_symmetry(const Context& ctx, Diagnostics& diag, bool dry, Outcome& out) {
  const BundleConnection* c = named(ctx, ctx.manifest.connections, "connections", "connection", "connection", diag);
  if (!c) return false;
  if (!c->tangent()) {
    diag.add(ctx.job_ptr("connection"), "affine symmetries need a tangent connection");
    return false;
  }
  auto x0 = vector_field(ctx, "x0", static_cast<long>(c->n()), diag);
  auto grid = grid_field(ctx, c->n(), diag, false);
  auto affine_tol = number_field(ctx, "affine_tol", 1e-5, diag);
  if (!x0 || !affine_tol) return false;
  if (ctx.job().contains("grid") && !grid) return false;
  if (!c->domain().contains(*x0)) {
    diag.add(ctx.job_ptr("x0"), "x0 is outside the chart");
    return false;
  }
  if (grid && grid->find_node(*x0) < 0) {
    diag.add(ctx.job_ptr("grid"), "x0 must be a grid node");
    return false;
  }
  if (dry) return true;
  const int K = ctx.order(4);
  const double tol = ctx.tol(1e-8);
  CahOptions opts;
  opts.step = ctx.step();
  const AffineSymmetryReport rep = affine_symmetry_check(*c, *x0, K, tol, grid, *affine_tol, opts);
  json orders = json::array();
  for (const auto& o : rep.orders) {
    json w = nullptr;
    if (o.max_abs > 0) {
      w = json::array();
      for (int i : o.witness) w.push_back(i + 1);
    }
    orders.push_back(json{{"order", o.order}, {"tensor", std::string(1, o.tensor)}, {"max_abs", o.max_abs}, {"witness", w}});
    out.check(std::string("nabla^") + std::to_string(o.order) + " " + o.tensor, o.max_abs, "<", tol);
  }
  out.results["orders"] = orders;
  out.results["budget_exceeded"] = rep.budget_exceeded;
  if (rep.budget_exceeded) out.fail(json{{"order", rep.orders.size()}}, "expression budget exceeded");
  if (rep.map) {
    const AffineMapGrid& map = *rep.map;
    out.results["max_nabla_sigma"] = rep.affine->max_nabla_sigma;
    out.results["unreachable"] = map.unreachable();
    out.check("max_nabla_sigma", rep.affine->max_nabla_sigma, "<", *affine_tol);
    // The symmetry is an involution: f(f(x)) = x.
    const long n = static_cast<long>(c->n());
    CahProblem prob(*c, *c, *x0, *x0, -Eigen::MatrixXd::Identity(n, n));
    std::vector<double> err(map.grid.size(), 0.0);
    std::vector<std::string> why(map.grid.size());
    parallel_for(map.grid.size(), [&](std::size_t i) {
      if (!map.reachable[i]) return;
      try {
        err[i] = (induced_geodesic_and_sigma(prob, map.f[i], opts).f - map.grid.point(i)).lpNorm<Eigen::Infinity>();
      } catch (const Error& e) {
        why[i] = e.what();
      }
    });
    double worst = 0;
    for (std::size_t i = 0; i < map.grid.size(); ++i) {
      worst = std::max(worst, err[i]);
      if (!why[i].empty()) out.fail(json{{"node", i}}, "f(f(x)): " + why[i]);
      if (!map.reachable[i]) out.fail(json{{"node", i}}, map.failure[i]);
    }
    out.results["max_involution_error"] = worst;
    out.check("max_involution_error", worst, "<", *affine_tol);
    DataFile file{"symmetry_map", {}, {}};
    map_file(map, c->n(), c->n(), file);
    out.files.push_back(std::move(file));
  }
  return true;
}

}  // namespace

bool cmd_selftest(const Context& ctx, Diagnostics& diag, bool dry, Outcome& out);

const std::map<std::string, Command>& commands() {
  static const std::map<std::string, Command> table = {
      {"levi", cmd_levi},
      {"integrability", cmd_integrability},
      {"solve-tde", cmd_solve_tde},
      {"curvature", cmd_curvature},
      {"transport", cmd_transport},
      {"geodesic", cmd_geodesic},
      {"exp", cmd_exp},
      {"log", cmd_log},
      {"recover-metric", cmd_recover_metric},
      {"verify-metric", cmd_verify_metric},
      {"cah-map", cmd_cah_map},
      {"cah-check", cmd_cah_check},
      {"affine-symmetry", cmd_affine_symmetry},
      {"selftest", cmd_selftest},
  };
  return table;
}

}  // namespace leafsolve::cli
