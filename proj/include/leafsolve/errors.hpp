#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace leafsolve {

/// Base class of every error thrown by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed expression text. `offset` is the 0-based byte offset of the
/// offending token.
class ParseError : public Error {
 public:
  ParseError(std::size_t offset, const std::string& what)
      : Error("parse error at offset " + std::to_string(offset) + ": " + what),
        offset_(offset),
        reason_(what) {}

  std::size_t offset() const { return offset_; }
  const std::string& reason() const { return reason_; }

 private:
  std::size_t offset_;
  std::string reason_;
};

class EvalError : public Error {
 public:
  enum class Kind { UnboundVariable, DomainViolation };

  EvalError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

/// Shapes or dimensions of the inputs do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A point lies outside the chart domain of the object it is evaluated on.
class OutOfDomain : public Error {
 public:
  using Error::Error;
};

/// A trajectory left its chart (or the right-hand side failed) before the
/// requested end time. `last_valid_t` is the last accepted breakpoint.
class ChartExit : public Error {
 public:
  ChartExit(double last_valid_t, const std::string& what)
      : Error(what), last_valid_t_(last_valid_t) {}
  double last_valid_t() const { return last_valid_t_; }

 private:
  double last_valid_t_;
};

/// Symbolic expression growth crossed the configured node budget.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(int completed_order, const std::string& what)
      : Error(what), completed_order_(completed_order) {}
  int completed_order() const { return completed_order_; }

 private:
  int completed_order_;
};

/// Newton-type iteration failed (no convergence or singular Jacobian).
class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// A mathematical precondition of an operation does not hold (for example a
/// connection with torsion where a symmetric one is required).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

}  // namespace leafsolve
