#include "leafsolve/expr.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <limits>
#include <mutex>
#include <numeric>
#include <unordered_map>
#include <unordered_set>
#include <utility>

namespace leafsolve {

using detail::Node;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) { return splitmix(h ^ splitmix(v)); }

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t double_bits(double v) { return std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v); }

std::uint64_t saturating_add(std::uint64_t a, std::uint64_t b) {
  constexpr std::uint64_t cap = std::uint64_t{1} << 63;
  return (a >= cap || b >= cap || a + b >= cap) ? cap : a + b;
}

// Process-wide intern table. Nodes are never freed.
class Pool {
 public:
  const Node* intern(Node proto) {
    if (proto.value == 0.0) proto.value = 0.0;  // fold -0 into +0
    proto.hash = compute_hash(proto);
    proto.size = 1;
    for (Expr a : proto.args) proto.size = saturating_add(proto.size, a.tree_size());

    std::lock_guard lock(mu_);
    auto [first, last] = index_.equal_range(proto.hash);
    for (auto it = first; it != last; ++it) {
      if (same(*it->second, proto)) return it->second;
    }
    nodes_.push_back(std::move(proto));
    const Node* n = &nodes_.back();
    index_.emplace(n->hash, n);
    return n;
  }

  std::uint32_t var_id(std::string_view name) {
    std::lock_guard lock(mu_);
    auto it = var_ids_.find(std::string(name));
    if (it != var_ids_.end()) return it->second;
    auto id = static_cast<std::uint32_t>(names_.size());
    names_.emplace_back(name);
    var_ids_.emplace(std::string(name), id);
    return id;
  }

  const std::string& var_name(std::uint32_t id) {
    std::lock_guard lock(mu_);
    return names_[id];
  }

 private:
  std::uint64_t compute_hash(const Node& n) {
    std::uint64_t h = splitmix(static_cast<std::uint64_t>(n.op) + 1);
    h = mix(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(n.exponent)));
    h = mix(h, double_bits(n.value));
    if (n.op == Op::Var) h = mix(h, fnv1a(var_name(n.var_id)));
    for (Expr a : n.args) h = mix(h, a.hash());
    for (double c : n.coeffs) h = mix(h, double_bits(c));
    for (int k : n.exps) h = mix(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(k)));
    return h;
  }

  static bool same(const Node& a, const Node& b) {
    return a.op == b.op && a.exponent == b.exponent &&
           double_bits(a.value) == double_bits(b.value) && a.var_id == b.var_id &&
           a.args == b.args && a.exps == b.exps &&
           std::equal(a.coeffs.begin(), a.coeffs.end(), b.coeffs.begin(), b.coeffs.end(),
                      [](double x, double y) { return double_bits(x) == double_bits(y); });
  }

  std::mutex mu_;
  std::deque<Node> nodes_;
  std::unordered_multimap<std::uint64_t, const Node*> index_;
  std::deque<std::string> names_;
  std::unordered_map<std::string, std::uint32_t> var_ids_;
};

Pool& pool() {
  static Pool* p = new Pool;
  return *p;
}

Expr make(Node proto) { return detail_wrap(pool().intern(std::move(proto))); }

Expr make_const(double v) {
  Node n;
  n.op = Op::Const;
  n.value = v;
  return make(std::move(n));
}

// Total order used to sort the operands of sums and products.
bool canon_less(Expr a, Expr b) {
  if (a == b) return false;
  if (a.hash() != b.hash()) return a.hash() < b.hash();
  if (a.op() != b.op()) return a.op() < b.op();
  if (a.value() != b.value()) return a.value() < b.value();
  if (a.op() == Op::Var) return a.name() < b.name();
  if (a.exponent() != b.exponent()) return a.exponent() < b.exponent();
  auto aa = a.args();
  auto ba = b.args();
  if (aa.size() != ba.size()) return aa.size() < ba.size();
  for (std::size_t i = 0; i < aa.size(); ++i) {
    if (aa[i] != ba[i]) return canon_less(aa[i], ba[i]);
  }
  auto ac = a.coefficients();
  auto bc = b.coefficients();
  if (!std::equal(ac.begin(), ac.end(), bc.begin(), bc.end())) {
    return std::lexicographical_compare(ac.begin(), ac.end(), bc.begin(), bc.end());
  }
  auto ae = a.exponents();
  auto be = b.exponents();
  return std::lexicographical_compare(ae.begin(), ae.end(), be.begin(), be.end());
}

bool is_function(Op op) {
  switch (op) {
    case Op::Sin:
    case Op::Cos:
    case Op::Exp:
    case Op::Log:
    case Op::Sqrt:
    case Op::Tanh:
      return true;
    default:
      return false;
  }
}

// Applies a unary function; returns false when `x` is outside its domain or
// the result is not finite.
bool apply_function(Op op, double x, double& out) {
  switch (op) {
    case Op::Sin:
      out = std::sin(x);
      break;
    case Op::Cos:
      out = std::cos(x);
      break;
    case Op::Exp:
      out = std::exp(x);
      break;
    case Op::Log:
      if (!(x > 0.0)) return false;
      out = std::log(x);
      break;
    case Op::Sqrt:
      if (!(x >= 0.0)) return false;
      out = std::sqrt(x);
      break;
    case Op::Tanh:
      out = std::tanh(x);
      break;
    default:
      return false;
  }
  return std::isfinite(out);
}

double ipow(double base, int k) {
  bool invert = k < 0;
  unsigned e = invert ? static_cast<unsigned>(-(k + 1)) + 1u : static_cast<unsigned>(k);
  double result = 1.0;
  double b = base;
  while (e) {
    if (e & 1u) result *= b;
    b *= b;
    e >>= 1u;
  }
  return invert ? 1.0 / result : result;
}

// c * prod f_i^k_i with the invariants of a canonical product already met.
Expr build_mul(double coef, std::vector<std::pair<Expr, int>> factors) {
  if (coef == 0.0) return make_const(0.0);
  std::sort(factors.begin(), factors.end(),
            [](const auto& a, const auto& b) { return canon_less(a.first, b.first); });
  if (factors.empty()) return make_const(coef);
  if (factors.size() == 1 && factors[0].second == 1 && coef == 1.0) return factors[0].first;
  Node n;
  n.op = Op::Mul;
  n.value = coef;
  for (auto& [f, k] : factors) {
    n.args.push_back(f);
    n.exps.push_back(k);
  }
  return make(std::move(n));
}

// Splits a canonical term into coefficient and coefficient-free remainder.
std::pair<double, Expr> split_coefficient(Expr t) {
  if (t.op() == Op::Mul && t.value() != 1.0) {
    std::vector<std::pair<Expr, int>> fs;
    for (std::size_t i = 0; i < t.args().size(); ++i) fs.emplace_back(t.args()[i], t.exponents()[i]);
    return {t.value(), build_mul(1.0, std::move(fs))};
  }
  return {1.0, t};
}

Expr scale(Expr t, double c) {
  if (c == 1.0) return t;
  if (c == 0.0) return make_const(0.0);
  if (t.is_const()) return make_const(c * t.value());
  if (t.op() == Op::Mul) {
    std::vector<std::pair<Expr, int>> fs;
    for (std::size_t i = 0; i < t.args().size(); ++i) fs.emplace_back(t.args()[i], t.exponents()[i]);
    return build_mul(c * t.value(), std::move(fs));
  }
  return build_mul(c, {{t, 1}});
}

struct SumBuilder {
  double constant = 0.0;
  std::vector<std::pair<Expr, double>> terms;
  std::unordered_map<const Node*, std::size_t> slot;

  void add(Expr t, double c) {
    if (c == 0.0) return;
    if (t.is_const()) {
      constant += c * t.value();
      return;
    }
    if (t.op() == Op::Add && t.coefficients().size() == t.args().size() &&
        t.exponents().empty()) {
      constant += c * t.value();
      for (std::size_t i = 0; i < t.args().size(); ++i) add(t.args()[i], c * t.coefficients()[i]);
      return;
    }
    auto [k, rest] = split_coefficient(t);
    auto [it, inserted] = slot.emplace(rest.node(), terms.size());
    if (inserted) {
      terms.emplace_back(rest, c * k);
    } else {
      terms[it->second].second += c * k;
    }
  }

  Expr build() {
    std::vector<std::pair<Expr, double>> kept;
    for (auto& [t, c] : terms) {
      if (c != 0.0) kept.emplace_back(t, c);
    }
    if (kept.empty()) return make_const(constant);
    if (kept.size() == 1 && constant == 0.0) return scale(kept[0].first, kept[0].second);
    std::sort(kept.begin(), kept.end(),
              [](const auto& a, const auto& b) { return canon_less(a.first, b.first); });
    Node n;
    n.op = Op::Add;
    n.value = constant;
    for (auto& [t, c] : kept) {
      n.args.push_back(t);
      n.coeffs.push_back(c);
    }
    return make(std::move(n));
  }
};

struct ProductBuilder {
  double coef = 1.0;
  std::vector<std::pair<Expr, int>> factors;
  std::unordered_map<const Node*, std::size_t> slot;
  // Pending bases whose accumulated exponent still needs smart pow().
  void add(Expr f, int k) {
    if (k == 0) return;
    if (f.is_const()) {
      double v = f.value();
      if (v == 0.0 && k < 0) {
        push(f, k);
        return;
      }
      double p = ipow(v, k);
      if (std::isfinite(p)) {
        coef *= p;
      } else {
        push(f, k);
      }
      return;
    }
    if (f.op() == Op::Mul && f.exponents().size() == f.args().size()) {
      add(make_const(f.value()), k);
      for (std::size_t i = 0; i < f.args().size(); ++i) add(f.args()[i], f.exponents()[i] * k);
      return;
    }
    if (f.op() == Op::Pow) {
      add(f.args()[0], f.exponent() * k);
      return;
    }
    if (f.op() == Op::Add && f.args().size() == 1 && f.value() == 0.0) {
      // c * t as a single-term sum
      add(make_const(f.coefficients()[0]), k);
      add(f.args()[0], k);
      return;
    }
    push(f, k);
  }

  void push(Expr f, int k) {
    auto [it, inserted] = slot.emplace(f.node(), factors.size());
    if (inserted) {
      factors.emplace_back(f, k);
    } else {
      factors[it->second].second += k;
    }
  }

  Expr build() {
    if (coef == 0.0) return make_const(0.0);
    std::vector<std::pair<Expr, int>> kept;
    for (auto& [f, k] : factors) {
      if (k != 0) kept.emplace_back(f, k);
    }
    return build_mul(coef, std::move(kept));
  }
};

template <class Key, class Value, class Hash = std::hash<Key>>
class Memo {
 public:
  bool find(const Key& k, Value& out) {
    std::lock_guard lock(mu_);
    auto it = map_.find(k);
    if (it == map_.end()) return false;
    out = it->second;
    return true;
  }
  void store(const Key& k, const Value& v) {
    std::lock_guard lock(mu_);
    map_.emplace(k, v);
  }

 private:
  std::mutex mu_;
  std::unordered_map<Key, Value, Hash> map_;
};

struct PairHash {
  std::size_t operator()(const std::pair<const Node*, std::uint32_t>& p) const {
    return std::hash<const void*>()(p.first) ^ (std::size_t{p.second} * 0x9e3779b97f4a7c15ULL);
  }
};

Memo<const Node*, Expr>& simplify_memo() {
  static auto* m = new Memo<const Node*, Expr>;
  return *m;
}

Memo<std::pair<const Node*, std::uint32_t>, Expr, PairHash>& derivative_memo() {
  static auto* m = new Memo<std::pair<const Node*, std::uint32_t>, Expr, PairHash>;
  return *m;
}

// Derivative of an already-canonical expression.
Expr derive(Expr e, std::uint32_t var) {
  switch (e.op()) {
    case Op::Const:
      return Expr(0.0);
    case Op::Var:
      return Expr(e.node()->var_id == var ? 1.0 : 0.0);
    default:
      break;
  }
  Expr cached;
  std::pair<const Node*, std::uint32_t> key{e.node(), var};
  if (derivative_memo().find(key, cached)) return cached;

  Expr result;
  auto args = e.args();
  switch (e.op()) {
    case Op::Add: {
      SumBuilder sb;
      for (std::size_t i = 0; i < args.size(); ++i) sb.add(derive(args[i], var), e.coefficients()[i]);
      result = sb.build();
      break;
    }
    case Op::Mul: {
      SumBuilder sb;
      auto ks = e.exponents();
      for (std::size_t i = 0; i < args.size(); ++i) {
        Expr d = derive(args[i], var);
        if (d.is_const(0.0)) continue;
        ProductBuilder pb;
        pb.coef = e.value() * ks[i];
        for (std::size_t j = 0; j < args.size(); ++j) pb.add(args[j], j == i ? ks[j] - 1 : ks[j]);
        pb.add(d, 1);
        sb.add(pb.build(), 1.0);
      }
      result = sb.build();
      break;
    }
    case Op::Sin:
      result = cos(args[0]) * derive(args[0], var);
      break;
    case Op::Cos:
      result = -sin(args[0]) * derive(args[0], var);
      break;
    case Op::Exp:
      result = e * derive(args[0], var);
      break;
    case Op::Log:
      result = derive(args[0], var) * pow(args[0], -1);
      break;
    case Op::Sqrt:
      result = 0.5 * derive(args[0], var) * pow(e, -1);
      break;
    case Op::Tanh:
      result = (1.0 - pow(e, 2)) * derive(args[0], var);
      break;
    default:
      // Non-canonical nodes never reach here; simplify() removes them.
      result = derive(simplify(e), var);
      break;
  }
  derivative_memo().store(key, result);
  return result;
}

}  // namespace

Expr detail_wrap(const Node* n) { return Expr(n); }

Expr::Expr() : node_(make_const(0.0).node_) {}
Expr::Expr(double value) : node_(make_const(value).node_) {}

Expr Expr::variable(std::string_view name) {
  Node n;
  n.op = Op::Var;
  n.var_id = pool().var_id(name);
  return make(std::move(n));
}

Op Expr::op() const { return node_->op; }
double Expr::value() const { return node_->value; }
const std::string& Expr::name() const { return pool().var_name(node_->var_id); }
int Expr::exponent() const { return node_->exponent; }
std::span<const Expr> Expr::args() const { return node_->args; }
std::span<const double> Expr::coefficients() const { return node_->coeffs; }
std::span<const int> Expr::exponents() const { return node_->exps; }
std::uint64_t Expr::hash() const { return node_->hash; }
std::uint64_t Expr::tree_size() const { return node_->size; }

Expr sum(std::span<const Expr> terms) {
  SumBuilder sb;
  for (Expr t : terms) sb.add(t, 1.0);
  return sb.build();
}

Expr product(std::span<const Expr> factors) {
  ProductBuilder pb;
  for (Expr f : factors) pb.add(f, 1);
  return pb.build();
}

Expr operator+(Expr a, Expr b) {
  SumBuilder sb;
  sb.add(a, 1.0);
  sb.add(b, 1.0);
  return sb.build();
}

Expr operator-(Expr a, Expr b) {
  SumBuilder sb;
  sb.add(a, 1.0);
  sb.add(b, -1.0);
  return sb.build();
}

Expr operator-(Expr a) {
  SumBuilder sb;
  sb.add(a, -1.0);
  return sb.build();
}

Expr operator*(Expr a, Expr b) {
  ProductBuilder pb;
  pb.add(a, 1);
  pb.add(b, 1);
  return pb.build();
}

Expr operator/(Expr a, Expr b) {
  ProductBuilder pb;
  pb.add(a, 1);
  pb.add(b, -1);
  return pb.build();
}

Expr pow(Expr base, int exponent) {
  ProductBuilder pb;
  pb.add(base, exponent);
  if (exponent == 0) return Expr(1.0);
  return pb.build();
}

Expr apply(Op function, Expr a) {
  if (!is_function(function)) throw Error("apply: not a unary function");
  if (a.is_const()) {
    double out = 0.0;
    if (apply_function(function, a.value(), out)) return make_const(out);
  }
  Node n;
  n.op = function;
  n.args = {a};
  return make(std::move(n));
}

Expr sin(Expr a) { return apply(Op::Sin, a); }
Expr cos(Expr a) { return apply(Op::Cos, a); }
Expr exp(Expr a) { return apply(Op::Exp, a); }
Expr log(Expr a) { return apply(Op::Log, a); }
Expr sqrt(Expr a) { return apply(Op::Sqrt, a); }
Expr tanh(Expr a) { return apply(Op::Tanh, a); }

namespace raw {

Expr add(Expr a, Expr b) {
  Node n;
  n.op = Op::Add;
  n.args = {a, b};
  n.coeffs = {1.0, 1.0};
  return make(std::move(n));
}

Expr sub(Expr a, Expr b) {
  Node n;
  n.op = Op::Sub;
  n.args = {a, b};
  return make(std::move(n));
}

Expr mul(Expr a, Expr b) {
  Node n;
  n.op = Op::Mul;
  n.value = 1.0;
  n.args = {a, b};
  n.exps = {1, 1};
  return make(std::move(n));
}

Expr div(Expr a, Expr b) {
  Node n;
  n.op = Op::Div;
  n.args = {a, b};
  return make(std::move(n));
}

Expr neg(Expr a) {
  Node n;
  n.op = Op::Neg;
  n.args = {a};
  return make(std::move(n));
}

Expr pow(Expr base, int exponent) {
  Node n;
  n.op = Op::Pow;
  n.exponent = exponent;
  n.args = {base};
  return make(std::move(n));
}

Expr apply(Op function, Expr a) {
  if (!is_function(function)) throw Error("raw::apply: not a unary function");
  Node n;
  n.op = function;
  n.args = {a};
  return make(std::move(n));
}

}  // namespace raw

Expr simplify(Expr e) {
  if (e.op() == Op::Const || e.op() == Op::Var) return e;
  Expr cached;
  if (simplify_memo().find(e.node(), cached)) return cached;
  auto args = e.args();
  Expr result;
  switch (e.op()) {
    case Op::Add: {
      SumBuilder sb;
      sb.constant = e.value();
      for (std::size_t i = 0; i < args.size(); ++i) sb.add(simplify(args[i]), e.coefficients()[i]);
      result = sb.build();
      break;
    }
    case Op::Mul: {
      ProductBuilder pb;
      pb.coef = e.value();
      for (std::size_t i = 0; i < args.size(); ++i) pb.add(simplify(args[i]), e.exponents()[i]);
      result = pb.build();
      break;
    }
    case Op::Sub:
      result = simplify(args[0]) - simplify(args[1]);
      break;
    case Op::Div:
      result = simplify(args[0]) / simplify(args[1]);
      break;
    case Op::Neg:
      result = -simplify(args[0]);
      break;
    case Op::Pow:
      result = pow(simplify(args[0]), e.exponent());
      break;
    default:
      result = apply(e.op(), simplify(args[0]));
      break;
  }
  simplify_memo().store(e.node(), result);
  return result;
}

Expr differentiate(Expr e, std::string_view var) {
  return derive(simplify(e), pool().var_id(var));
}

Expr substitute(Expr e, const std::map<std::string, Expr, std::less<>>& replacements) {
  std::unordered_map<const Node*, Expr> memo;
  auto rec = [&](auto&& self, Expr x) -> Expr {
    if (x.op() == Op::Const) return x;
    if (x.op() == Op::Var) {
      auto it = replacements.find(x.name());
      return it == replacements.end() ? x : it->second;
    }
    if (auto it = memo.find(x.node()); it != memo.end()) return it->second;
    auto args = x.args();
    Expr r;
    switch (x.op()) {
      case Op::Add: {
        SumBuilder sb;
        sb.constant = x.value();
        for (std::size_t i = 0; i < args.size(); ++i) sb.add(self(self, args[i]), x.coefficients()[i]);
        r = sb.build();
        break;
      }
      case Op::Mul: {
        ProductBuilder pb;
        pb.coef = x.value();
        for (std::size_t i = 0; i < args.size(); ++i) pb.add(self(self, args[i]), x.exponents()[i]);
        r = pb.build();
        break;
      }
      case Op::Sub:
        r = self(self, args[0]) - self(self, args[1]);
        break;
      case Op::Div:
        r = self(self, args[0]) / self(self, args[1]);
        break;
      case Op::Neg:
        r = -self(self, args[0]);
        break;
      case Op::Pow:
        r = pow(self(self, args[0]), x.exponent());
        break;
      default:
        r = apply(x.op(), self(self, args[0]));
        break;
    }
    memo.emplace(x.node(), r);
    return r;
  };
  return rec(rec, e);
}

std::vector<std::string> free_variables(Expr e) {
  std::unordered_set<const Node*> seen;
  std::vector<std::string> names;
  std::vector<Expr> stack{e};
  while (!stack.empty()) {
    Expr x = stack.back();
    stack.pop_back();
    if (!seen.insert(x.node()).second) continue;
    if (x.op() == Op::Var) names.push_back(x.name());
    for (Expr a : x.args()) stack.push_back(a);
  }
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  return names;
}

std::size_t dag_size(std::span<const Expr> roots) {
  std::unordered_set<const Node*> seen;
  std::vector<Expr> stack(roots.begin(), roots.end());
  while (!stack.empty()) {
    Expr x = stack.back();
    stack.pop_back();
    if (!seen.insert(x.node()).second) continue;
    for (Expr a : x.args()) stack.push_back(a);
  }
  return seen.size();
}

double eval(Expr e, const Environment& env) {
  std::vector<std::string> names;
  std::vector<double> values;
  for (const auto& name : free_variables(e)) {
    auto it = env.find(name);
    if (it == env.end()) {
      throw EvalError(EvalError::Kind::UnboundVariable, "unbound variable '" + name + "'");
    }
    names.push_back(name);
    values.push_back(it->second);
  }
  Tape tape(std::span<const Expr>(&e, 1), names);
  double out = 0.0;
  tape.eval(values, std::span<double>(&out, 1));
  return out;
}

// ---------------------------------------------------------------------------
// Tape

Tape::Tape(std::span<const Expr> outputs, std::span<const std::string> inputs)
    : num_inputs_(inputs.size()) {
  std::unordered_map<std::string_view, std::uint32_t> input_slot;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    input_slot.emplace(inputs[i], static_cast<std::uint32_t>(i));
  }
  std::unordered_map<const Node*, std::uint32_t> slot_of;

  // Iterative post-order so deep expressions do not exhaust the stack.
  auto emit = [&](Expr root) -> std::uint32_t {
    std::vector<std::pair<Expr, bool>> stack{{root, false}};
    while (!stack.empty()) {
      auto [x, expanded] = stack.back();
      stack.pop_back();
      if (slot_of.count(x.node())) continue;
      if (x.op() == Op::Var) {
        auto it = input_slot.find(x.name());
        if (it == input_slot.end()) {
          throw EvalError(EvalError::Kind::UnboundVariable, "unbound variable '" + x.name() + "'");
        }
        slot_of.emplace(x.node(), it->second);
        continue;
      }
      if (!expanded) {
        stack.emplace_back(x, true);
        for (Expr a : x.args()) {
          if (!slot_of.count(a.node())) stack.emplace_back(a, false);
        }
        continue;
      }
      Instr ins{x.op(), x.exponent(), x.value(), static_cast<std::uint32_t>(operands_.size()),
                static_cast<std::uint32_t>(x.args().size())};
      for (std::size_t i = 0; i < x.args().size(); ++i) {
        operands_.push_back(slot_of.at(x.args()[i].node()));
        coeffs_.push_back(i < x.coefficients().size() ? x.coefficients()[i] : 0.0);
        exps_.push_back(i < x.exponents().size() ? x.exponents()[i] : 0);
      }
      code_.push_back(ins);
      slot_of.emplace(x.node(), static_cast<std::uint32_t>(num_inputs_ + code_.size() - 1));
    }
    return slot_of.at(root.node());
  };
  for (Expr out : outputs) outputs_.push_back(emit(out));
}

namespace {
[[noreturn]] void domain_error(const char* what) {
  throw EvalError(EvalError::Kind::DomainViolation, what);
}
}  // namespace

void Tape::eval(std::span<const double> in, std::span<double> out) const {
  if (in.size() != num_inputs_) throw DimensionError("Tape::eval: wrong number of inputs");
  if (out.size() != outputs_.size()) throw DimensionError("Tape::eval: wrong number of outputs");
  thread_local std::vector<double> slots;
  slots.resize(num_inputs_ + code_.size());
  std::copy(in.begin(), in.end(), slots.begin());
  double* s = slots.data();
  for (std::size_t pc = 0; pc < code_.size(); ++pc) {
    const Instr& ins = code_[pc];
    const std::uint32_t* ops = operands_.data() + ins.first;
    double r = 0.0;
    switch (ins.op) {
      case Op::Const:
        r = ins.value;
        break;
      case Op::Add: {
        const double* cs = coeffs_.data() + ins.first;
        r = ins.value;
        for (std::uint32_t i = 0; i < ins.count; ++i) r += cs[i] * s[ops[i]];
        break;
      }
      case Op::Mul: {
        const int* ks = exps_.data() + ins.first;
        r = ins.value;
        for (std::uint32_t i = 0; i < ins.count; ++i) {
          double v = s[ops[i]];
          if (ks[i] < 0 && v == 0.0) domain_error("division by zero");
          r *= ks[i] == 1 ? v : ipow(v, ks[i]);
        }
        break;
      }
      case Op::Sub:
        r = s[ops[0]] - s[ops[1]];
        break;
      case Op::Div:
        if (s[ops[1]] == 0.0) domain_error("division by zero");
        r = s[ops[0]] / s[ops[1]];
        break;
      case Op::Neg:
        r = -s[ops[0]];
        break;
      case Op::Pow:
        if (ins.exponent < 0 && s[ops[0]] == 0.0) domain_error("division by zero");
        r = ipow(s[ops[0]], ins.exponent);
        break;
      case Op::Log:
        if (!(s[ops[0]] > 0.0)) domain_error("log of non-positive value");
        r = std::log(s[ops[0]]);
        break;
      case Op::Sqrt:
        if (!(s[ops[0]] >= 0.0)) domain_error("sqrt of negative value");
        r = std::sqrt(s[ops[0]]);
        break;
      case Op::Sin:
        r = std::sin(s[ops[0]]);
        break;
      case Op::Cos:
        r = std::cos(s[ops[0]]);
        break;
      case Op::Exp:
        r = std::exp(s[ops[0]]);
        break;
      case Op::Tanh:
        r = std::tanh(s[ops[0]]);
        break;
      case Op::Var:
        break;
    }
    if (!std::isfinite(r)) domain_error("non-finite value");
    s[num_inputs_ + pc] = r;
  }
  for (std::size_t i = 0; i < outputs_.size(); ++i) out[i] = s[outputs_[i]];
}

std::vector<double> Tape::eval(std::span<const double> in) const {
  std::vector<double> out(outputs_.size());
  eval(in, out);
  return out;
}

}  // namespace leafsolve
