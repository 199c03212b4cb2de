#pragma once

// Scalar expressions over named real variables.
//
// Nodes are hash-consed: two structurally identical expressions share one
// node, so `operator==` is a pointer comparison and common subtrees produced
// by repeated differentiation are stored once. Nodes are immutable and live
// for the lifetime of the process; Expr is a trivially copyable handle and may
// be shared freely between threads.
//
// Two layers of constructors exist. The arithmetic operators and math
// functions below simplify eagerly (constant folding, 0/1 elimination,
// flattening of sums and products, collection of like terms and of equal
// factors into integer powers). A canonical sum is `c0 + sum_i c_i * t_i`
// with the coefficients stored inline, and a canonical product is
// `c * prod_i f_i^k_i` with the coefficient and exponents stored inline, so
// canonicalization never grows the tree.
//
// The `raw` namespace builds nodes verbatim. The parser uses it, so printing
// a parsed expression reproduces its shape and `simplify` has work to do.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "leafsolve/errors.hpp"

namespace leafsolve {

enum class Op : std::uint8_t {
  Const,
  Var,
  Add,  // n-ary
  Sub,  // binary, raw only
  Mul,  // n-ary
  Div,  // binary, raw only
  Neg,  // raw only
  Pow,  // integer exponent
  Sin,
  Cos,
  Exp,
  Log,
  Sqrt,
  Tanh,
};

namespace detail {
struct Node;
}

class Expr {
 public:
  /// The constant 0.
  Expr();
  /// A constant. Implicit so that `2.0 * x` and `x + 1` read naturally.
  Expr(double value);  // NOLINT(google-explicit-constructor)

  static Expr variable(std::string_view name);

  Op op() const;
  /// Const: the value. Add: the constant term. Mul: the coefficient.
  double value() const;
  const std::string& name() const;  // Var only
  int exponent() const;             // Pow only
  std::span<const Expr> args() const;
  /// Add: per-term coefficients, parallel to args().
  std::span<const double> coefficients() const;
  /// Mul: per-factor integer exponents, parallel to args().
  std::span<const int> exponents() const;

  bool is_const() const { return op() == Op::Const; }
  bool is_const(double v) const { return is_const() && value() == v; }

  /// Structural hash, stable across runs.
  std::uint64_t hash() const;
  /// Number of nodes of the expression viewed as a tree (saturates at 2^63).
  std::uint64_t tree_size() const;

  const detail::Node* node() const { return node_; }

  friend bool operator==(Expr a, Expr b) { return a.node_ == b.node_; }
  friend bool operator!=(Expr a, Expr b) { return a.node_ != b.node_; }

 private:
  explicit Expr(const detail::Node* n) : node_(n) {}
  friend Expr detail_wrap(const detail::Node* n);
  const detail::Node* node_;
};

Expr detail_wrap(const detail::Node* n);

namespace detail {
struct Node {
  Op op;
  int exponent = 0;
  double value = 0.0;
  std::uint32_t var_id = 0;
  std::uint64_t hash = 0;
  std::uint64_t size = 1;
  std::vector<Expr> args;
  std::vector<double> coeffs;
  std::vector<int> exps;
};
}  // namespace detail

// Simplifying constructors.
Expr operator+(Expr a, Expr b);
Expr operator-(Expr a, Expr b);
Expr operator*(Expr a, Expr b);
Expr operator/(Expr a, Expr b);
Expr operator-(Expr a);
inline Expr& operator+=(Expr& a, Expr b) { return a = a + b; }
inline Expr& operator-=(Expr& a, Expr b) { return a = a - b; }
inline Expr& operator*=(Expr& a, Expr b) { return a = a * b; }

Expr sum(std::span<const Expr> terms);
Expr product(std::span<const Expr> factors);
Expr pow(Expr base, int exponent);
Expr sin(Expr a);
Expr cos(Expr a);
Expr exp(Expr a);
Expr log(Expr a);
Expr sqrt(Expr a);
Expr tanh(Expr a);
Expr apply(Op function, Expr a);

/// Verbatim constructors, no simplification.
namespace raw {
Expr add(Expr a, Expr b);
Expr sub(Expr a, Expr b);
Expr mul(Expr a, Expr b);
Expr div(Expr a, Expr b);
Expr neg(Expr a);
Expr pow(Expr base, int exponent);
Expr apply(Op function, Expr a);
}  // namespace raw

/// Parses infix text; every identifier must appear in `vars` (or be `pi`).
/// Grammar:
///   expr   := term (('+'|'-') term)*
///   term   := unary (('*'|'/') unary)*
///   unary  := ('-'|'+') unary | factor
///   factor := base ('^' ['-'|'+'] integer)?
///   base   := number | ident | func '(' expr ')' | '(' expr ')'
///   func   := sin | cos | exp | log | sqrt | tanh
Expr parse_expr(std::string_view text, std::span<const std::string> vars);

/// Pretty-printer whose output parses back to the same tree.
std::string to_string(Expr e);

using Environment = std::map<std::string, double, std::less<>>;

/// Evaluates `e`; throws EvalError on unbound variables and on domain
/// violations (division by zero, log/sqrt out of domain, overflow).
double eval(Expr e, const Environment& env);

Expr simplify(Expr e);

/// Exact partial derivative with respect to `var`, simplified.
Expr differentiate(Expr e, std::string_view var);

/// Replaces variables by expressions, simplifying the result.
Expr substitute(Expr e, const std::map<std::string, Expr, std::less<>>& replacements);

/// Sorted, de-duplicated names of the variables occurring in `e`.
std::vector<std::string> free_variables(Expr e);

/// Number of distinct nodes reachable from `roots` (shared subtrees counted
/// once). Used for expression budgets.
std::size_t dag_size(std::span<const Expr> roots);

/// Straight-line program evaluating several expressions at once over an
/// ordered list of input variables. Shared subexpressions are computed once.
class Tape {
 public:
  Tape() = default;
  Tape(std::span<const Expr> outputs, std::span<const std::string> inputs);

  std::size_t num_inputs() const { return num_inputs_; }
  std::size_t num_outputs() const { return outputs_.size(); }

  void eval(std::span<const double> in, std::span<double> out) const;
  std::vector<double> eval(std::span<const double> in) const;

 private:
  struct Instr {
    Op op;
    int exponent;
    double value;
    std::uint32_t first;  // offset into operands_
    std::uint32_t count;
  };
  std::size_t num_inputs_ = 0;
  std::vector<Instr> code_;
  std::vector<std::uint32_t> operands_;
  std::vector<double> coeffs_;  // parallel to operands_ (Add)
  std::vector<int> exps_;       // parallel to operands_ (Mul)
  std::vector<std::uint32_t> outputs_;
};

}  // namespace leafsolve
