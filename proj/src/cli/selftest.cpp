// Invariant suite over every object in a manifest. Sample points come from
// a Halton sequence, so runs are reproducible without a seed.

#include <cmath>

#include "commands.hpp"

namespace leafsolve::cli {

namespace {

constexpr int kSamples = 5;

double halton(int index, int base) {
  double f = 1, r = 0;
  for (int i = index; i > 0; i /= base) {
    f /= base;
    r += f * (i % base);
  }
  return r;
}

// Sample points inside the box, restricted to [-1, 1] where they overlap.
std::vector<Eigen::VectorXd> sample_points(const Box& box) {
  static const int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  const long n = static_cast<long>(box.dim());
  std::vector<Eigen::VectorXd> out;
  for (int k = 1; k <= kSamples; ++k) {
    Eigen::VectorXd p(n);
    for (long i = 0; i < n; ++i) {
      double lo = std::max(box.lo[i], -1.0), hi = std::min(box.hi[i], 1.0);
      if (lo > hi) lo = hi = 0.5 * (box.lo[i] + box.hi[i]);
      // Stay clear of the chart edge.
      const double pad = 0.05 * (hi - lo);
      p[i] = lo + pad + (hi - lo - 2 * pad) * halton(k, primes[i % 16]);
    }
    out.push_back(p);
  }
  return out;
}

double rel(double residual, double scale) { return residual / std::max(1.0, scale); }

ExprMatrix curvature_matrix(const TensorFieldExpr& R, int i, int j) {
  ExprMatrix m(R.r, R.r);
  const int s[2] = {i, j};
  for (std::size_t a = 0; a < R.r; ++a) {
    for (std::size_t b = 0; b < R.r; ++b) m(a, b) = R.comps[R.index(s, static_cast<int>(a), static_cast<int>(b))];
  }
  return m;
}

Eigen::MatrixXd eval_matrix(const ExprMatrix& m, const std::vector<std::string>& vars, const Eigen::VectorXd& x) {
  const Eigen::VectorXd v = evaluate(m.data(), vars, x);
  return reshape(v.data(), m.rows(), m.cols());
}

struct Suite {
  Outcome& out;
  double tol;
  json rows = json::array();

  void record(const std::string& object, const std::string& invariant, double residual) {
    rows.push_back(json{{"object", object}, {"invariant", invariant}, {"residual", residual}});
    out.check(object + ":" + invariant, residual, "<", tol);
  }
  template <class F>
  void run(const std::string& object, const std::string& invariant, F&& f) {
    try {
      record(object, invariant, f());
    } catch (const Error& e) {
      out.fail(json{{"object", object}, {"invariant", invariant}}, e.what());
    }
  }
};

void connection_invariants(Suite& suite, const std::string& name, const BundleConnection& c) {
  const std::string obj = "connections/" + name;
  const auto pts = sample_points(c.domain());
  const int n = static_cast<int>(c.n());
  const auto& vars = c.base_vars();
  const TensorFieldExpr R = curvature(c);

  suite.run(obj, "curvature_antisymmetry", [&] {
    double worst = 0;
    for (const auto& x : pts) {
      const auto v = R.evaluate(x);
      double scale = 0;
      for (double e : v) scale = std::max(scale, std::abs(e));
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
          const int ij[2] = {i, j}, ji[2] = {j, i};
          for (std::size_t a = 0; a < R.fiber_size(); ++a) {
            worst = std::max(worst, rel(std::abs(v[R.index(ij) + a] + v[R.index(ji) + a]), scale));
          }
        }
      }
    }
    return worst;
  });

  // d^nabla R = 0: cyclic sum of d_k R_ij + [omega_k, R_ij].
  suite.run(obj, "bianchi", [&] {
    double worst = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        for (int k = j + 1; k < n; ++k) {
          ExprMatrix total = ExprMatrix::constant(Eigen::MatrixXd::Zero(static_cast<long>(c.r()), static_cast<long>(c.r())));
          const int cyc[3][3] = {{i, j, k}, {j, k, i}, {k, i, j}};
          for (const auto& t : cyc) {
            const ExprMatrix Rab = curvature_matrix(R, t[0], t[1]);
            total = total + differentiate(Rab, vars[static_cast<std::size_t>(t[2])]) +
                    commutator(c.omega(static_cast<std::size_t>(t[2])), Rab);
          }
          for (const auto& x : pts) {
            const double scale = eval_matrix(curvature_matrix(R, i, j), vars, x).lpNorm<Eigen::Infinity>();
            worst = std::max(worst, rel(eval_matrix(total, vars, x).lpNorm<Eigen::Infinity>(), scale));
          }
        }
      }
    }
    return worst;
  });

  suite.run(obj, "curvature_commutator", [&] {
    // s_a = 1 + sum_k 0.1 (a+1)(k+1) x_k + 0.05 x_k^2
    std::vector<Expr> s;
    for (std::size_t a = 0; a < c.r(); ++a) {
      Expr e = 1.0;
      for (std::size_t k = 0; k < c.n(); ++k) {
        const Expr x = Expr::variable(vars[k]);
        e = e + 0.1 * static_cast<double>((a + 1) * (k + 1)) * x + 0.05 * x * x;
      }
      s.push_back(e);
    }
    double worst = 0;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const auto ij = covariant_derivative(c, covariant_derivative(c, s, static_cast<std::size_t>(j)), static_cast<std::size_t>(i));
        const auto ji = covariant_derivative(c, covariant_derivative(c, s, static_cast<std::size_t>(i)), static_cast<std::size_t>(j));
        const auto Rs = curvature_matrix(R, i, j) * s;
        for (const auto& x : pts) {
          const Eigen::VectorXd a = evaluate(ij, vars, x), b = evaluate(ji, vars, x), r = evaluate(Rs, vars, x);
          const double scale = std::max({a.lpNorm<Eigen::Infinity>(), b.lpNorm<Eigen::Infinity>(), r.lpNorm<Eigen::Infinity>()});
          worst = std::max(worst, rel((a - b - r).lpNorm<Eigen::Infinity>(), scale));
        }
      }
    }
    return worst;
  });

  if (c.tangent()) {
    suite.run(obj, "torsion_antisymmetry", [&] {
      const TensorFieldExpr T = torsion(c);
      double worst = 0;
      for (const auto& x : pts) {
        const auto v = T.evaluate(x);
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            const int ij[2] = {i, j}, ji[2] = {j, i};
            for (int a = 0; a < n; ++a) worst = std::max(worst, std::abs(v[T.index(ij, a)] + v[T.index(ji, a)]));
          }
        }
      }
      return worst;
    });
  }

  suite.run(obj, "print_parse_roundtrip", [&] {
    double worst = 0;
    for (std::size_t i = 0; i < c.n(); ++i) {
      const auto& entries = c.omega(i).data();
      std::vector<Expr> back;
      for (Expr e : entries) back.push_back(parse_expr(to_string(e), vars));
      for (const auto& x : pts) {
        const Eigen::VectorXd a = evaluate(entries, vars, x), b = evaluate(back, vars, x);
        worst = std::max(worst, rel((a - b).lpNorm<Eigen::Infinity>(), a.lpNorm<Eigen::Infinity>()));
      }
    }
    return worst;
  });
}

void distribution_invariants(Suite& suite, const std::string& name, const GraphDistribution& d) {
  const std::string obj = "distributions/" + name;
  const auto pts = sample_points(d.domain());
  const long k = static_cast<long>(d.k()), m = static_cast<long>(d.m());
  suite.run(obj, "levi_antisymmetry", [&] {
    double worst = 0;
    for (const auto& p : pts) {
      for (long i = 0; i < k; ++i) {
        for (long j = 0; j < k; ++j) {
          const Eigen::VectorXd a = d.levi_form(p, Eigen::VectorXd::Unit(k, i), Eigen::VectorXd::Unit(k, j));
          const Eigen::VectorXd b = d.levi_form(p, Eigen::VectorXd::Unit(k, j), Eigen::VectorXd::Unit(k, i));
          worst = std::max(worst, rel((a + b).lpNorm<Eigen::Infinity>(), a.lpNorm<Eigen::Infinity>()));
        }
      }
    }
    return worst;
  });
  suite.run(obj, "levi_vs_bracket", [&] {
    double worst = 0;
    for (long i = 0; i < k; ++i) {
      for (long j = i + 1; j < k; ++j) {
        const VectorField br = lie_bracket(d.frame_field(static_cast<std::size_t>(i)), d.frame_field(static_cast<std::size_t>(j)));
        for (const auto& p : pts) {
          const Eigen::VectorXd b = evaluate(br.comps, br.coords, p);
          const Eigen::MatrixXd F = d.F_at(p.head(k), p.tail(m));
          const Eigen::VectorXd want = b.tail(m) - F * b.head(k);
          const Eigen::VectorXd got = d.levi_form(p, Eigen::VectorXd::Unit(k, i), Eigen::VectorXd::Unit(k, j));
          worst = std::max(worst, rel((got - want).lpNorm<Eigen::Infinity>(), want.lpNorm<Eigen::Infinity>()));
        }
      }
    }
    return worst;
  });
}

void cah_invariants(Suite& suite, const std::string& name, const CahSpec& spec, const Manifest& m) {
  const std::string obj = "cah_problems/" + name;
  try {
    CahProblem prob(m.connections.at(spec.source), m.connections.at(spec.target), spec.x0, spec.y0, spec.sigma0);
    suite.run(obj, "anchor_exact", [&] {
      const InducedSolution s = induced_geodesic_and_sigma(prob, spec.x0);
      return std::max((s.f - spec.y0).lpNorm<Eigen::Infinity>(), (s.sigma - spec.sigma0).lpNorm<Eigen::Infinity>());
    });
    suite.run(obj, "levi_antisymmetry", [&] {
      const long n = static_cast<long>(prob.n());
      double worst = 0;
      for (long i = 0; i < n; ++i) {
        for (long j = 0; j < n; ++j) {
          const Eigen::VectorXd ei = Eigen::VectorXd::Unit(n, i), ej = Eigen::VectorXd::Unit(n, j);
          const HomLevi a = levi_form_hom(prob, spec.x0, spec.y0, spec.sigma0, ei, ej);
          const HomLevi b = levi_form_hom(prob, spec.x0, spec.y0, spec.sigma0, ej, ei);
          worst = std::max({worst, (a.torsion_part + b.torsion_part).lpNorm<Eigen::Infinity>(),
                            (a.curvature_part + b.curvature_part).lpNorm<Eigen::Infinity>()});
        }
      }
      return worst;
    });
  } catch (const Error& e) {
    suite.out.fail(json{{"object", obj}}, e.what());
  }
}

}  // namespace

bool cmd_selftest(const Context& ctx, Diagnostics&, bool dry, Outcome& out) {
  if (dry) return true;
  Suite suite{out, ctx.tol(1e-10)};
  const Manifest& m = ctx.manifest;
  for (const auto& [name, c] : m.connections) connection_invariants(suite, name, c);
  for (const auto& [name, d] : m.distributions) distribution_invariants(suite, name, d);
  for (const auto& [name, s] : m.sprays) {
    suite.run("sprays/" + name, "homogeneity", [&] { return homogeneity_defect(s, 10, 7); });
  }
  for (const auto& [name, spec] : m.cah_problems) cah_invariants(suite, name, spec, m);
  out.results["invariants"] = suite.rows;
  return true;
}

}  // namespace leafsolve::cli
