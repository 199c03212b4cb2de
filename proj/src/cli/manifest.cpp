#include "manifest.hpp"

#include <set>

namespace leafsolve::cli {

std::string pointer_child(const std::string& ptr, const std::string& key) {
  std::string out = ptr + "/";
  for (char c : key) {
    if (c == '~') {
      out += "~0";
    } else if (c == '/') {
      out += "~1";
    } else {
      out += c;
    }
  }
  return out;
}

std::string pointer_child(const std::string& ptr, std::size_t index) { return ptr + "/" + std::to_string(index); }

std::optional<double> read_number(const json& j, const std::string& ptr, Diagnostics& diag) {
  if (!j.is_number()) {
    diag.add(ptr, "expected a number");
    return std::nullopt;
  }
  return j.get<double>();
}

std::optional<int> read_int(const json& j, const std::string& ptr, Diagnostics& diag) {
  if (!j.is_number_integer()) {
    diag.add(ptr, "expected an integer");
    return std::nullopt;
  }
  return j.get<int>();
}

std::optional<std::string> read_string(const json& j, const std::string& ptr, Diagnostics& diag) {
  if (!j.is_string()) {
    diag.add(ptr, "expected a string");
    return std::nullopt;
  }
  return j.get<std::string>();
}

std::optional<Eigen::VectorXd> read_vector(const json& j, const std::string& ptr, Diagnostics& diag, long expected) {
  if (!j.is_array()) {
    diag.add(ptr, "expected an array of numbers");
    return std::nullopt;
  }
  if (expected >= 0 && static_cast<long>(j.size()) != expected) {
    diag.add(ptr, "expected " + std::to_string(expected) + " entries, got " + std::to_string(j.size()));
    return std::nullopt;
  }
  Eigen::VectorXd v(static_cast<long>(j.size()));
  bool ok = true;
  for (std::size_t i = 0; i < j.size(); ++i) {
    auto x = read_number(j[i], pointer_child(ptr, i), diag);
    if (x) {
      v[static_cast<long>(i)] = *x;
    } else {
      ok = false;
    }
  }
  if (!ok) return std::nullopt;
  return v;
}

std::optional<Eigen::MatrixXd> read_matrix(const json& j, const std::string& ptr, Diagnostics& diag, long rows,
                                           long cols) {
  if (!j.is_array() || j.empty()) {
    diag.add(ptr, "expected a non-empty array of rows");
    return std::nullopt;
  }
  if (rows >= 0 && static_cast<long>(j.size()) != rows) {
    diag.add(ptr, "expected " + std::to_string(rows) + " rows, got " + std::to_string(j.size()));
    return std::nullopt;
  }
  const long c = cols >= 0 ? cols : (j[0].is_array() ? static_cast<long>(j[0].size()) : 0);
  Eigen::MatrixXd m(static_cast<long>(j.size()), c);
  bool ok = true;
  for (std::size_t i = 0; i < j.size(); ++i) {
    auto row = read_vector(j[i], pointer_child(ptr, i), diag, c);
    if (row) {
      m.row(static_cast<long>(i)) = row->transpose();
    } else {
      ok = false;
    }
  }
  if (!ok) return std::nullopt;
  return m;
}

std::optional<Expr> read_expr(const json& j, const std::string& ptr, const std::vector<std::string>& vars,
                              Diagnostics& diag) {
  if (j.is_number()) return Expr(j.get<double>());
  if (!j.is_string()) {
    diag.add(ptr, "expected an expression string or a number");
    return std::nullopt;
  }
  try {
    return parse_expr(j.get<std::string>(), vars);
  } catch (const ParseError& e) {
    diag.add(ptr, e.reason(), e.offset());
    return std::nullopt;
  }
}

std::optional<RectGrid> read_grid(const json& j, const std::string& ptr, std::size_t dim,
                                  std::optional<int> count_override, Diagnostics& diag) {
  if (!j.is_object()) {
    diag.add(ptr, "expected a grid object");
    return std::nullopt;
  }
  const long n = static_cast<long>(dim);
  auto check_count = [&](int c, const std::string& p) {
    if (c < 1) {
      diag.add(p, "node counts must be positive");
      return false;
    }
    return true;
  };
  if (j.contains("center")) {
    auto center = read_vector(j["center"], pointer_child(ptr, "center"), diag, n);
    double hw = 0;
    bool ok = center.has_value();
    if (!j.contains("half_width")) {
      diag.add(ptr, "missing 'half_width'");
      ok = false;
    } else if (auto h = read_number(j["half_width"], pointer_child(ptr, "half_width"), diag); !h) {
      ok = false;
    } else if (!(*h > 0)) {
      diag.add(pointer_child(ptr, "half_width"), "half_width must be positive");
      ok = false;
    } else {
      hw = *h;
    }
    int count = 0;
    if (count_override) {
      count = *count_override;
    } else if (!j.contains("count")) {
      diag.add(ptr, "missing 'count'");
      ok = false;
    } else if (auto c = read_int(j["count"], pointer_child(ptr, "count"), diag); c) {
      count = *c;
    } else {
      ok = false;
    }
    if (ok && !check_count(count, pointer_child(ptr, "count"))) ok = false;
    if (!ok) return std::nullopt;
    return RectGrid::centered(*center, hw, count);
  }
  for (const char* key : {"lo", "hi"}) {
    if (!j.contains(key)) {
      diag.add(ptr, std::string("missing '") + key + "' (or use 'center')");
      return std::nullopt;
    }
  }
  auto lo = read_vector(j["lo"], pointer_child(ptr, "lo"), diag, n);
  auto hi = read_vector(j["hi"], pointer_child(ptr, "hi"), diag, n);
  std::vector<int> counts(dim, 0);
  bool ok = lo && hi;
  if (count_override) {
    counts.assign(dim, *count_override);
    ok = ok && check_count(*count_override, ptr);
  } else if (!j.contains("counts") || !j["counts"].is_array() || j["counts"].size() != dim) {
    diag.add(pointer_child(ptr, "counts"), "expected " + std::to_string(dim) + " integer node counts");
    ok = false;
  } else {
    for (std::size_t i = 0; i < dim; ++i) {
      auto c = read_int(j["counts"][i], pointer_child(pointer_child(ptr, "counts"), i), diag);
      if (c && check_count(*c, pointer_child(pointer_child(ptr, "counts"), i))) {
        counts[i] = *c;
      } else {
        ok = false;
      }
    }
  }
  if (!ok) return std::nullopt;
  if (((*hi - *lo).array() < 0).any()) {
    diag.add(ptr, "grid has hi < lo");
    return std::nullopt;
  }
  return RectGrid(*lo, *hi, counts);
}

namespace {

const std::set<std::string> kTopLevel = {"description", "charts",       "connections", "distributions", "sprays",
                                         "metric_seeds", "cah_problems", "settings",    "jobs"};

const std::set<std::string> kReserved = {"pi", "sin", "cos", "exp", "log", "sqrt", "tanh"};

bool check_keys(const json& j, const std::string& ptr, const std::set<std::string>& allowed, Diagnostics& diag) {
  bool ok = true;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      diag.add(pointer_child(ptr, it.key()), "unknown field");
      ok = false;
    }
  }
  return ok;
}

bool require(const json& j, const std::string& ptr, const char* key, Diagnostics& diag) {
  if (!j.contains(key)) {
    diag.add(ptr, std::string("missing '") + key + "'");
    return false;
  }
  return true;
}

// Looks up a named entry of `section`, recording a diagnostic if it does not
// resolve. Entries that are declared but failed to load were already reported.
template <class Map>
const typename Map::mapped_type* resolve(const Manifest& m, const Map& map, const char* section, const json& ref,
                                         const std::string& ptr, const char* what, Diagnostics& diag) {
  auto name = read_string(ref, ptr, diag);
  if (!name) return nullptr;
  auto it = map.find(*name);
  if (it == map.end()) {
    if (!m.declared(section, *name)) diag.add(ptr, std::string("unknown ") + what + " '" + *name + "'");
    return nullptr;
  }
  return &it->second;
}

void load_charts(const json& section, Manifest& m, Diagnostics& diag) {
  const std::string base = "/charts";
  for (auto it = section.begin(); it != section.end(); ++it) {
    const std::string ptr = pointer_child(base, it.key());
    const json& c = it.value();
    if (!c.is_object()) {
      diag.add(ptr, "expected an object");
      continue;
    }
    check_keys(c, ptr, {"vars", "lo", "hi"}, diag);
    if (!require(c, ptr, "vars", diag)) continue;
    const json& vars = c["vars"];
    if (!vars.is_array() || vars.empty()) {
      diag.add(pointer_child(ptr, "vars"), "expected a non-empty array of names");
      continue;
    }
    Chart chart;
    bool ok = true;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const std::string vp = pointer_child(pointer_child(ptr, "vars"), i);
      auto name = read_string(vars[i], vp, diag);
      if (!name) {
        ok = false;
        continue;
      }
      try {
        // A name is valid if it parses as a single variable.
        const std::vector<std::string> one{*name};
        Expr e = parse_expr(*name, one);
        if (free_variables(e) != one || kReserved.count(*name)) throw ParseError(0, "not an identifier");
      } catch (const ParseError&) {
        diag.add(vp, "'" + *name + "' is not a valid variable name");
        ok = false;
      }
      if (!seen.insert(*name).second) {
        diag.add(vp, "duplicate variable '" + *name + "'");
        ok = false;
      }
      chart.vars.push_back(*name);
    }
    const long n = static_cast<long>(vars.size());
    chart.box = Box::unbounded(static_cast<std::size_t>(n));
    if (c.contains("lo") || c.contains("hi")) {
      if (!require(c, ptr, "lo", diag) || !require(c, ptr, "hi", diag)) continue;
      auto lo = read_vector(c["lo"], pointer_child(ptr, "lo"), diag, n);
      auto hi = read_vector(c["hi"], pointer_child(ptr, "hi"), diag, n);
      if (!lo || !hi) continue;
      if (((*hi - *lo).array() <= 0).any()) {
        diag.add(ptr, "chart box needs lo < hi in every coordinate");
        continue;
      }
      chart.box = Box(*lo, *hi);
    }
    if (ok) m.charts.emplace(it.key(), std::move(chart));
  }
}

void load_connections(const json& section, Manifest& m, Diagnostics& diag) {
  const std::string base = "/connections";
  for (auto it = section.begin(); it != section.end(); ++it) {
    const std::string ptr = pointer_child(base, it.key());
    const json& c = it.value();
    if (!c.is_object()) {
      diag.add(ptr, "expected an object");
      continue;
    }
    check_keys(c, ptr, {"chart", "christoffel", "omega"}, diag);
    if (!require(c, ptr, "chart", diag)) continue;
    const Chart* chart = resolve(m, m.charts, "charts", c["chart"], pointer_child(ptr, "chart"), "chart", diag);
    if (!chart) continue;
    const std::size_t n = chart->vars.size();
    const bool has_gamma = c.contains("christoffel"), has_omega = c.contains("omega");
    if (has_gamma == has_omega) {
      diag.add(ptr, "give exactly one of 'christoffel' and 'omega'");
      continue;
    }
    if (has_gamma) {
      // christoffel[a][i][j] = Gamma^a_{ij}
      const std::string gp = pointer_child(ptr, "christoffel");
      const json& g = c["christoffel"];
      std::vector<Expr> gamma;
      bool ok = true;
      auto shape_error = [&](const std::string& p, const json& arr, std::size_t want) {
        if (!arr.is_array() || arr.size() != want) {
          diag.add(p, "expected an array of " + std::to_string(want) + " entries" +
                          (arr.is_array() ? ", got " + std::to_string(arr.size()) : ""));
          return true;
        }
        return false;
      };
      if (shape_error(gp, g, n)) continue;
      for (std::size_t a = 0; a < n; ++a) {
        const std::string ap = pointer_child(gp, a);
        if (shape_error(ap, g[a], n)) {
          ok = false;
          continue;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const std::string ip = pointer_child(ap, i);
          if (shape_error(ip, g[a][i], n)) {
            ok = false;
            continue;
          }
          for (std::size_t j = 0; j < n; ++j) {
            auto e = read_expr(g[a][i][j], pointer_child(ip, j), chart->vars, diag);
            if (e) {
              gamma.push_back(*e);
            } else {
              ok = false;
            }
          }
        }
      }
      if (!ok) continue;
      try {
        m.connections.emplace(it.key(), BundleConnection::from_christoffel(chart->vars, gamma, chart->box));
      } catch (const Error& e) {
        diag.add(gp, e.what());
      }
    } else {
      const std::string op = pointer_child(ptr, "omega");
      const json& w = c["omega"];
      if (!w.is_array() || w.size() != n) {
        diag.add(op, "expected one matrix per chart variable (" + std::to_string(n) + ")");
        continue;
      }
      std::vector<ExprMatrix> omega;
      bool ok = true;
      std::size_t r = w[0].is_array() ? w[0].size() : 0;
      if (r == 0) {
        diag.add(pointer_child(op, 0), "expected a non-empty square matrix");
        continue;
      }
      for (std::size_t i = 0; i < n && ok; ++i) {
        const std::string ip = pointer_child(op, i);
        if (!w[i].is_array() || w[i].size() != r) {
          diag.add(ip, "expected " + std::to_string(r) + " rows");
          ok = false;
          break;
        }
        ExprMatrix mat(r, r);
        for (std::size_t a = 0; a < r; ++a) {
          const std::string rp = pointer_child(ip, a);
          if (!w[i][a].is_array() || w[i][a].size() != r) {
            diag.add(rp, "expected " + std::to_string(r) + " entries");
            ok = false;
            continue;
          }
          for (std::size_t b = 0; b < r; ++b) {
            auto e = read_expr(w[i][a][b], pointer_child(rp, b), chart->vars, diag);
            if (e) {
              mat(a, b) = *e;
            } else {
              ok = false;
            }
          }
        }
        omega.push_back(std::move(mat));
      }
      if (!ok) continue;
      try {
        m.connections.emplace(it.key(), BundleConnection(chart->vars, std::move(omega), chart->box, r == n));
      } catch (const Error& e) {
        diag.add(op, e.what());
      }
    }
  }
}

void load_distributions(const json& section, Manifest& m, Diagnostics& diag) {
  const std::string base = "/distributions";
  for (auto it = section.begin(); it != section.end(); ++it) {
    const std::string ptr = pointer_child(base, it.key());
    const json& d = it.value();
    if (!d.is_object()) {
      diag.add(ptr, "expected an object");
      continue;
    }
    check_keys(d, ptr, {"chart", "base_dim", "F"}, diag);
    if (!require(d, ptr, "chart", diag) || !require(d, ptr, "base_dim", diag) || !require(d, ptr, "F", diag)) continue;
    const Chart* chart = resolve(m, m.charts, "charts", d["chart"], pointer_child(ptr, "chart"), "chart", diag);
    auto k = read_int(d["base_dim"], pointer_child(ptr, "base_dim"), diag);
    if (!chart || !k) continue;
    const int total = static_cast<int>(chart->vars.size());
    if (*k < 1 || *k >= total) {
      diag.add(pointer_child(ptr, "base_dim"), "base_dim must be between 1 and " + std::to_string(total - 1));
      continue;
    }
    const std::size_t ku = static_cast<std::size_t>(*k), mu = static_cast<std::size_t>(total - *k);
    const std::string fp = pointer_child(ptr, "F");
    const json& F = d["F"];
    if (!F.is_array() || F.size() != mu) {
      diag.add(fp, "expected " + std::to_string(mu) + " rows (one per fiber variable)");
      continue;
    }
    ExprMatrix mat(mu, ku);
    bool ok = true;
    for (std::size_t a = 0; a < mu; ++a) {
      const std::string rp = pointer_child(fp, a);
      if (!F[a].is_array() || F[a].size() != ku) {
        diag.add(rp, "expected " + std::to_string(ku) + " entries (one per base variable)");
        ok = false;
        continue;
      }
      for (std::size_t i = 0; i < ku; ++i) {
        auto e = read_expr(F[a][i], pointer_child(rp, i), chart->vars, diag);
        if (e) {
          mat(a, i) = *e;
        } else {
          ok = false;
        }
      }
    }
    if (!ok) continue;
    std::vector<std::string> bv(chart->vars.begin(), chart->vars.begin() + *k);
    std::vector<std::string> fv(chart->vars.begin() + *k, chart->vars.end());
    try {
      m.distributions.emplace(it.key(), GraphDistribution(bv, fv, std::move(mat), chart->box));
    } catch (const Error& e) {
      diag.add(ptr, e.what());
    }
  }
}

void load_sprays(const json& section, Manifest& m, Diagnostics& diag) {
  const std::string base = "/sprays";
  for (auto it = section.begin(); it != section.end(); ++it) {
    const std::string ptr = pointer_child(base, it.key());
    const json& s = it.value();
    if (!s.is_object()) {
      diag.add(ptr, "expected an object");
      continue;
    }
    check_keys(s, ptr, {"connection", "chart", "velocity", "acceleration"}, diag);
    if (s.contains("connection")) {
      const BundleConnection* conn =
          resolve(m, m.connections, "connections", s["connection"], pointer_child(ptr, "connection"), "connection", diag);
      if (!conn) continue;
      try {
        m.sprays.emplace(it.key(), geodesic_spray(*conn));
      } catch (const Error& e) {
        diag.add(pointer_child(ptr, "connection"), e.what());
      }
      continue;
    }
    if (!require(s, ptr, "chart", diag) || !require(s, ptr, "velocity", diag) ||
        !require(s, ptr, "acceleration", diag)) {
      continue;
    }
    const Chart* chart = resolve(m, m.charts, "charts", s["chart"], pointer_child(ptr, "chart"), "chart", diag);
    if (!chart) continue;
    const std::size_t n = chart->vars.size();
    const json& vel = s["velocity"];
    const json& acc = s["acceleration"];
    if (!vel.is_array() || vel.size() != n) {
      diag.add(pointer_child(ptr, "velocity"), "expected " + std::to_string(n) + " velocity names");
      continue;
    }
    if (!acc.is_array() || acc.size() != n) {
      diag.add(pointer_child(ptr, "acceleration"), "expected " + std::to_string(n) + " expressions");
      continue;
    }
    std::vector<std::string> vnames;
    bool ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      auto v = read_string(vel[i], pointer_child(pointer_child(ptr, "velocity"), i), diag);
      if (v) {
        vnames.push_back(*v);
      } else {
        ok = false;
      }
    }
    if (!ok) continue;
    std::vector<std::string> all = chart->vars;
    all.insert(all.end(), vnames.begin(), vnames.end());
    std::vector<Expr> accel;
    for (std::size_t i = 0; i < n; ++i) {
      auto e = read_expr(acc[i], pointer_child(pointer_child(ptr, "acceleration"), i), all, diag);
      if (e) {
        accel.push_back(*e);
      } else {
        ok = false;
      }
    }
    if (!ok) continue;
    try {
      m.sprays.emplace(it.key(), Spray(chart->vars, vnames, std::move(accel), chart->box));
    } catch (const Error& e) {
      diag.add(ptr, e.what());
    }
  }
}

void load_seeds(const json& section, Manifest& m, Diagnostics& diag) {
  const std::string base = "/metric_seeds";
  for (auto it = section.begin(); it != section.end(); ++it) {
    const std::string ptr = pointer_child(base, it.key());
    const json& s = it.value();
    if (!s.is_object()) {
      diag.add(ptr, "expected an object");
      continue;
    }
    check_keys(s, ptr, {"connection", "m0", "g0"}, diag);
    if (!require(s, ptr, "connection", diag) || !require(s, ptr, "m0", diag) || !require(s, ptr, "g0", diag)) continue;
    const BundleConnection* conn =
        resolve(m, m.connections, "connections", s["connection"], pointer_child(ptr, "connection"), "connection", diag);
    if (!conn) continue;
    if (!conn->tangent()) {
      diag.add(pointer_child(ptr, "connection"), "metric seeds need a tangent connection");
      continue;
    }
    const long n = static_cast<long>(conn->n());
    auto m0 = read_vector(s["m0"], pointer_child(ptr, "m0"), diag, n);
    auto g0 = read_matrix(s["g0"], pointer_child(ptr, "g0"), diag, n, n);
    if (!m0 || !g0) continue;
    try {
      m.metric_seeds.emplace(it.key(), SeedSpec{s["connection"].get<std::string>(), MetricSeed::make(*m0, *g0)});
    } catch (const Error& e) {
      diag.add(pointer_child(ptr, "g0"), e.what());
    }
  }
}

void load_cah(const json& section, Manifest& m, Diagnostics& diag) {
  const std::string base = "/cah_problems";
  for (auto it = section.begin(); it != section.end(); ++it) {
    const std::string ptr = pointer_child(base, it.key());
    const json& p = it.value();
    if (!p.is_object()) {
      diag.add(ptr, "expected an object");
      continue;
    }
    check_keys(p, ptr, {"source", "target", "x0", "y0", "sigma0"}, diag);
    bool present = true;
    for (const char* key : {"source", "target", "x0", "y0", "sigma0"}) present = require(p, ptr, key, diag) && present;
    if (!present) continue;
    const BundleConnection* src =
        resolve(m, m.connections, "connections", p["source"], pointer_child(ptr, "source"), "connection", diag);
    const BundleConnection* dst =
        resolve(m, m.connections, "connections", p["target"], pointer_child(ptr, "target"), "connection", diag);
    if (!src || !dst) continue;
    bool ok = true;
    for (auto [conn, key] : {std::pair{src, "source"}, std::pair{dst, "target"}}) {
      if (!conn->tangent()) {
        diag.add(pointer_child(ptr, key), "CAH problems need tangent connections");
        ok = false;
      }
    }
    if (!ok) continue;
    const long n = static_cast<long>(src->n()), mm = static_cast<long>(dst->n());
    auto x0 = read_vector(p["x0"], pointer_child(ptr, "x0"), diag, n);
    auto y0 = read_vector(p["y0"], pointer_child(ptr, "y0"), diag, mm);
    std::optional<Eigen::MatrixXd> sigma;
    const json& sj = p["sigma0"];
    if (!sj.is_array() || static_cast<long>(sj.size()) != mm ||
        (sj.size() > 0 && (!sj[0].is_array() || static_cast<long>(sj[0].size()) != n))) {
      diag.add(pointer_child(ptr, "sigma0"), "sigma0 must be " + std::to_string(mm) + " x " + std::to_string(n) +
                                                 " (target dimension x source dimension)");
    } else {
      sigma = read_matrix(sj, pointer_child(ptr, "sigma0"), diag, mm, n);
    }
    if (!x0 || !y0 || !sigma) continue;
    if (!src->domain().contains(*x0)) {
      diag.add(pointer_child(ptr, "x0"), "x0 is outside the source chart");
      continue;
    }
    if (!dst->domain().contains(*y0)) {
      diag.add(pointer_child(ptr, "y0"), "y0 is outside the target chart");
      continue;
    }
    m.cah_problems.emplace(it.key(), CahSpec{p["source"].get<std::string>(), p["target"].get<std::string>(), *x0, *y0,
                                             *sigma});
  }
}

void load_settings(const json& s, Manifest& m, Diagnostics& diag) {
  const std::string ptr = "/settings";
  check_keys(s, ptr, {"step", "grid", "order", "tol"}, diag);
  if (s.contains("step")) {
    m.settings.step = read_number(s["step"], pointer_child(ptr, "step"), diag);
    if (m.settings.step && !(*m.settings.step > 0)) diag.add(pointer_child(ptr, "step"), "step must be positive");
  }
  if (s.contains("grid")) {
    m.settings.grid = read_int(s["grid"], pointer_child(ptr, "grid"), diag);
    if (m.settings.grid && *m.settings.grid < 1) diag.add(pointer_child(ptr, "grid"), "grid must be positive");
  }
  if (s.contains("order")) {
    m.settings.order = read_int(s["order"], pointer_child(ptr, "order"), diag);
    if (m.settings.order && *m.settings.order < 0) diag.add(pointer_child(ptr, "order"), "order must be >= 0");
  }
  if (s.contains("tol")) {
    m.settings.tol = read_number(s["tol"], pointer_child(ptr, "tol"), diag);
    if (m.settings.tol && !(*m.settings.tol > 0)) diag.add(pointer_child(ptr, "tol"), "tol must be positive");
  }
}

}  // namespace

std::optional<Manifest> load_manifest_partial(const std::string& text, Diagnostics& diag) {
  Manifest m;
  try {
    m.raw = json::parse(text);
  } catch (const json::parse_error& e) {
    diag.add("", std::string("invalid JSON: ") + e.what(), e.byte > 0 ? e.byte - 1 : 0);
    return std::nullopt;
  }
  if (!m.raw.is_object()) {
    diag.add("", "manifest must be a JSON object");
    return std::nullopt;
  }
  check_keys(m.raw, "", kTopLevel, diag);
  auto section = [&](const char* key, auto loader) {
    if (!m.raw.contains(key)) return;
    const json& s = m.raw[key];
    if (!s.is_object()) {
      diag.add(pointer_child("", key), "expected an object keyed by name");
      return;
    }
    loader(s, m, diag);
  };
  section("charts", load_charts);
  section("connections", load_connections);
  section("distributions", load_distributions);
  section("sprays", load_sprays);
  section("metric_seeds", load_seeds);
  section("cah_problems", load_cah);
  section("settings", load_settings);
  if (m.raw.contains("jobs")) {
    if (!m.raw["jobs"].is_object()) {
      diag.add("/jobs", "expected an object keyed by subcommand");
    } else {
      m.jobs = m.raw["jobs"];
    }
  }
  return m;
}

std::optional<Manifest> load_manifest(const std::string& text, Diagnostics& diag) {
  const bool clean = diag.empty();
  auto m = load_manifest_partial(text, diag);
  if (!clean || !diag.empty()) return std::nullopt;
  return m;
}

}  // namespace leafsolve::cli
