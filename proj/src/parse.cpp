#include <array>
#include <charconv>
#include <cmath>
#include <numbers>
#include <string>

#include "leafsolve/expr.hpp"

namespace leafsolve {

namespace {

struct FunctionName {
  std::string_view name;
  Op op;
};

constexpr std::array<FunctionName, 6> kFunctions{{
    {"sin", Op::Sin},
    {"cos", Op::Cos},
    {"exp", Op::Exp},
    {"log", Op::Log},
    {"sqrt", Op::Sqrt},
    {"tanh", Op::Tanh},
}};

bool is_ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_ident_char(char c) { return is_ident_start(c) || is_digit(c); }

class Parser {
 public:
  Parser(std::string_view text, std::span<const std::string> vars) : s_(text), vars_(vars) {}

  Expr parse() {
    Expr e = expr();
    skip();
    if (pos_ < s_.size()) fail(pos_, std::string("unexpected '") + s_[pos_] + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(std::size_t at, const std::string& what) { throw ParseError(at, what); }

  void skip() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' || s_[pos_] == '\r')) {
      ++pos_;
    }
  }

  bool accept(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr expr() {
    Expr lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = raw::add(lhs, term());
      } else if (accept('-')) {
        lhs = raw::sub(lhs, term());
      } else {
        return lhs;
      }
    }
  }

  Expr term() {
    Expr lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = raw::mul(lhs, unary());
      } else if (accept('/')) {
        lhs = raw::div(lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  Expr unary() {
    if (accept('-')) {
      Expr a = unary();
      return a.is_const() ? Expr(-a.value()) : raw::neg(a);
    }
    if (accept('+')) return unary();
    return factor();
  }

  Expr factor() {
    Expr b = base();
    if (!accept('^')) return b;
    skip();
    std::size_t start = pos_;
    bool negative = false;
    if (accept('-')) {
      negative = true;
    } else {
      accept('+');
    }
    skip();
    if (pos_ >= s_.size() || !(is_digit(s_[pos_]) || s_[pos_] == '.')) {
      fail(pos_ < s_.size() ? pos_ : s_.size(), "non-integer exponent");
    }
    double v = number(start);
    if (v != std::floor(v) || std::fabs(v) > 1e6) fail(start, "non-integer exponent");
    int k = static_cast<int>(v);
    return raw::pow(b, negative ? -k : k);
  }

  double number(std::size_t err_at) {
    std::size_t start = pos_;
    while (pos_ < s_.size() && is_digit(s_[pos_])) ++pos_;
    if (pos_ < s_.size() && s_[pos_] == '.') {
      ++pos_;
      while (pos_ < s_.size() && is_digit(s_[pos_])) ++pos_;
    }
    if (pos_ == start + 1 && s_[start] == '.') fail(start, "malformed number");
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t save = pos_;
      ++pos_;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (pos_ < s_.size() && is_digit(s_[pos_])) {
        while (pos_ < s_.size() && is_digit(s_[pos_])) ++pos_;
      } else {
        pos_ = save;
        fail(save, "malformed exponent in number");
      }
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s_.data() + start, s_.data() + pos_, v);
    if (ec != std::errc() || ptr != s_.data() + pos_ || !std::isfinite(v)) {
      fail(err_at, "number out of range");
    }
    return v;
  }

  Expr base() {
    skip();
    if (pos_ >= s_.size()) fail(s_.size(), "unexpected end of input");
    char c = s_[pos_];
    if (is_digit(c) || c == '.') return Expr(number(pos_));
    if (c == '(') {
      std::size_t open = pos_;
      ++pos_;
      Expr e = expr();
      if (!accept(')')) {
        skip();
        fail(pos_, "expected ')' to close '(' at offset " + std::to_string(open));
      }
      return e;
    }
    if (is_ident_start(c)) {
      std::size_t start = pos_;
      while (pos_ < s_.size() && is_ident_char(s_[pos_])) ++pos_;
      std::string_view id = s_.substr(start, pos_ - start);
      std::size_t after = pos_;
      skip();
      bool call = pos_ < s_.size() && s_[pos_] == '(';
      pos_ = after;
      if (call) {
        for (const auto& f : kFunctions) {
          if (f.name == id) {
            accept('(');
            Expr a = expr();
            if (!accept(')')) {
              skip();
              fail(pos_, "expected ')' after argument of " + std::string(id));
            }
            return raw::apply(f.op, a);
          }
        }
        fail(start, "unknown function '" + std::string(id) + "'");
      }
      for (const auto& v : vars_) {
        if (v == id) return Expr::variable(id);
      }
      if (id == "pi") return Expr(std::numbers::pi);
      fail(start, "unknown identifier '" + std::string(id) + "'");
    }
    fail(pos_, std::string("unexpected '") + c + "'");
  }

  std::string_view s_;
  std::span<const std::string> vars_;
  std::size_t pos_ = 0;
};

// Printing. Precedence levels: 1 sum/difference, 2 product/quotient,
// 3 negation (and negative literals), 4 power, 5 atoms.

void put_number(std::string& out, double v) {
  std::array<char, 32> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.append(buf.data(), ptr);
}

int precedence(Expr e) {
  switch (e.op()) {
    case Op::Const:
      return e.value() < 0 ? 3 : 5;
    case Op::Var:
      return 5;
    case Op::Add:
    case Op::Sub:
      return 1;
    case Op::Mul:
      if (e.value() != 1.0 && e.args().empty()) return e.value() < 0 ? 3 : 5;
      return 2;
    case Op::Div:
      return 2;
    case Op::Neg:
      return 3;
    case Op::Pow:
      return 4;
    default:
      return 5;
  }
}

void print(std::string& out, Expr e, int min_prec);

void print_factor(std::string& out, Expr f, int k, int min_prec) {
  if (k == 1) {
    print(out, f, min_prec);
    return;
  }
  print(out, f, 5);
  out += '^';
  out += std::to_string(k);
}

void print_node(std::string& out, Expr e) {
  auto args = e.args();
  switch (e.op()) {
    case Op::Const:
      put_number(out, e.value());
      return;
    case Op::Var:
      out += e.name();
      return;
    case Op::Add: {
      auto cs = e.coefficients();
      for (std::size_t i = 0; i < args.size(); ++i) {
        double c = cs[i];
        bool first = i == 0;
        if (!first) out += c < 0 ? " - " : " + ";
        double mag = first ? c : std::fabs(c);
        if (mag == 1.0) {
          print(out, args[i], first ? 1 : 2);
        } else if (mag == -1.0) {
          out += '-';
          print(out, args[i], 3);
        } else {
          put_number(out, mag);
          out += " * ";
          print(out, args[i], 3);
        }
      }
      if (e.value() != 0.0) {
        out += e.value() < 0 ? " - " : " + ";
        put_number(out, std::fabs(e.value()));
      }
      return;
    }
    case Op::Mul: {
      auto ks = e.exponents();
      bool first = true;
      if (e.value() == -1.0 && !args.empty()) {
        out += '-';
        print_factor(out, args[0], ks[0], 3);
        first = false;
        for (std::size_t i = 1; i < args.size(); ++i) {
          out += " * ";
          print_factor(out, args[i], ks[i], 3);
        }
        return;
      }
      if (e.value() != 1.0 || args.empty()) {
        put_number(out, e.value());
        first = false;
      }
      for (std::size_t i = 0; i < args.size(); ++i) {
        if (!first) out += " * ";
        print_factor(out, args[i], ks[i], first ? 2 : 3);
        first = false;
      }
      return;
    }
    case Op::Sub:
      print(out, args[0], 1);
      out += " - ";
      print(out, args[1], 2);
      return;
    case Op::Div:
      print(out, args[0], 2);
      out += " / ";
      print(out, args[1], 3);
      return;
    case Op::Neg:
      out += '-';
      print(out, args[0], 3);
      return;
    case Op::Pow:
      print(out, args[0], 5);
      out += '^';
      out += std::to_string(e.exponent());
      return;
    default:
      for (const auto& f : kFunctions) {
        if (f.op == e.op()) out += f.name;
      }
      out += '(';
      print(out, args[0], 0);
      out += ')';
      return;
  }
}

void print(std::string& out, Expr e, int min_prec) {
  if (precedence(e) < min_prec) {
    out += '(';
    print_node(out, e);
    out += ')';
  } else {
    print_node(out, e);
  }
}

}  // namespace

Expr parse_expr(std::string_view text, std::span<const std::string> vars) {
  return Parser(text, vars).parse();
}

std::string to_string(Expr e) {
  std::string out;
  print(out, e, 0);
  return out;
}

}  // namespace leafsolve
