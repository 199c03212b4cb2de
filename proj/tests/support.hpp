#pragma once

// Random fixtures shared by the unit and acceptance tests.

#include <random>
#include <string>
#include <vector>

#include "leafsolve/expr.hpp"

namespace leafsolve::testing {

inline std::vector<std::string> names(const std::string& prefix, int n) {
  std::vector<std::string> out;
  for (int i = 1; i <= n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

inline std::vector<Expr> vars(const std::vector<std::string>& ns) {
  std::vector<Expr> out;
  for (const auto& n : ns) out.push_back(Expr::variable(n));
  return out;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Sum of `terms` random monomials of total degree <= max_degree with
// coefficients in [-1, 1].
inline Expr random_polynomial(std::mt19937_64& rng, const std::vector<Expr>& xs, int max_degree,
                              int terms) {
  Expr p = uniform(rng, -1.0, 1.0);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(xs.size()) - 1);
  std::uniform_int_distribution<int> deg(1, max_degree);
  for (int t = 0; t < terms; ++t) {
    Expr m = uniform(rng, -1.0, 1.0);
    int d = deg(rng);
    for (int j = 0; j < d; ++j) m = m * xs[pick(rng)];
    p = p + m;
  }
  return p;
}

// Random composition of polynomials with sin/cos/exp/tanh; smooth everywhere.
inline Expr random_transcendental(std::mt19937_64& rng, const std::vector<Expr>& xs) {
  Expr a = random_polynomial(rng, xs, 2, 3);
  Expr b = random_polynomial(rng, xs, 2, 3);
  Expr c = random_polynomial(rng, xs, 1, 2);
  return sin(a) * b + exp(0.3 * c) - tanh(b) * cos(a * c);
}

inline std::vector<double> random_point(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::vector<double> p(n);
  for (auto& v : p) v = uniform(rng, lo, hi);
  return p;
}

inline Environment env_of(const std::vector<std::string>& ns, const std::vector<double>& p) {
  Environment env;
  for (std::size_t i = 0; i < ns.size(); ++i) env[ns[i]] = p[i];
  return env;
}

}  // namespace leafsolve::testing
