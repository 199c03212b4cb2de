#include "leafsolve/expr_matrix.hpp"

#include <algorithm>

namespace leafsolve {

namespace {
void require_same_shape(const ExprMatrix& a, const ExprMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("matrix shapes differ");
}
}  // namespace

ExprMatrix ExprMatrix::identity(std::size_t n) {
  ExprMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

ExprMatrix ExprMatrix::constant(const Eigen::MatrixXd& c) {
  ExprMatrix m(c.rows(), c.cols());
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) m(i, j) = c(i, j);
  }
  return m;
}

ExprMatrix ExprMatrix::transpose() const {
  ExprMatrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  }
  return t;
}

std::vector<Expr> ExprMatrix::column(std::size_t j) const {
  std::vector<Expr> c(rows_);
  for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
  return c;
}

bool ExprMatrix::is_zero() const {
  return std::all_of(data_.begin(), data_.end(), [](Expr e) { return e.is_const(0.0); });
}

ExprMatrix operator+(const ExprMatrix& a, const ExprMatrix& b) {
  require_same_shape(a, b);
  ExprMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) + b(i, j);
  }
  return c;
}

ExprMatrix operator-(const ExprMatrix& a, const ExprMatrix& b) {
  require_same_shape(a, b);
  ExprMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = a(i, j) - b(i, j);
  }
  return c;
}

ExprMatrix operator-(const ExprMatrix& a) {
  ExprMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = -a(i, j);
  }
  return c;
}

ExprMatrix operator*(const ExprMatrix& a, const ExprMatrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("matrix product shapes differ");
  ExprMatrix c(a.rows(), b.cols());
  std::vector<Expr> terms;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      terms.clear();
      for (std::size_t k = 0; k < a.cols(); ++k) {
        if (a(i, k).is_const(0.0) || b(k, j).is_const(0.0)) continue;
        terms.push_back(a(i, k) * b(k, j));
      }
      c(i, j) = sum(terms);
    }
  }
  return c;
}

ExprMatrix operator*(Expr s, const ExprMatrix& a) {
  ExprMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = s * a(i, j);
  }
  return c;
}

std::vector<Expr> operator*(const ExprMatrix& a, const std::vector<Expr>& v) {
  if (a.cols() != v.size()) throw DimensionError("matrix-vector shapes differ");
  std::vector<Expr> out(a.rows());
  std::vector<Expr> terms;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    terms.clear();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      if (a(i, k).is_const(0.0) || v[k].is_const(0.0)) continue;
      terms.push_back(a(i, k) * v[k]);
    }
    out[i] = sum(terms);
  }
  return out;
}

ExprMatrix commutator(const ExprMatrix& a, const ExprMatrix& b) { return a * b - b * a; }

ExprMatrix differentiate(const ExprMatrix& a, std::string_view var) {
  ExprMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = differentiate(a(i, j), var);
  }
  return c;
}

ExprMatrix substitute(const ExprMatrix& a, const std::map<std::string, Expr, std::less<>>& replacements) {
  ExprMatrix c(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) c(i, j) = substitute(a(i, j), replacements);
  }
  return c;
}

Eigen::MatrixXd reshape(const double* data, std::size_t rows, std::size_t cols) {
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = data[i * cols + j];
  }
  return m;
}

}  // namespace leafsolve
