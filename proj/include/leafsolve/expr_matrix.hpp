#pragma once

// Dense matrices of expressions, row-major.

#include <Eigen/Dense>
#include <string_view>
#include <vector>

#include "leafsolve/expr.hpp"

namespace leafsolve {

class ExprMatrix {
 public:
  ExprMatrix() = default;
  ExprMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  static ExprMatrix identity(std::size_t n);
  static ExprMatrix constant(const Eigen::MatrixXd& m);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Expr& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  Expr operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  const std::vector<Expr>& data() const { return data_; }

  ExprMatrix transpose() const;
  std::vector<Expr> column(std::size_t j) const;
  bool is_zero() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Expr> data_;
};

ExprMatrix operator+(const ExprMatrix& a, const ExprMatrix& b);
ExprMatrix operator-(const ExprMatrix& a, const ExprMatrix& b);
ExprMatrix operator-(const ExprMatrix& a);
ExprMatrix operator*(const ExprMatrix& a, const ExprMatrix& b);
ExprMatrix operator*(Expr s, const ExprMatrix& a);
std::vector<Expr> operator*(const ExprMatrix& a, const std::vector<Expr>& v);

/// a*b - b*a
ExprMatrix commutator(const ExprMatrix& a, const ExprMatrix& b);
ExprMatrix differentiate(const ExprMatrix& a, std::string_view var);
ExprMatrix substitute(const ExprMatrix& a, const std::map<std::string, Expr, std::less<>>& replacements);

/// Reshapes tape output (row-major) into a matrix.
Eigen::MatrixXd reshape(const double* data, std::size_t rows, std::size_t cols);

}  // namespace leafsolve
