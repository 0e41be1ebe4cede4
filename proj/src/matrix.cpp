#include "bora/matrix.hpp"

#include <cmath>
#include <cstdlib>

#include "bora/errors.hpp"

namespace bora {

const char* to_string(Dim d) { return d == Dim::row ? "row" : "col"; }

Matrix::Matrix(int r, int c, double fill)
    : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, fill) {
  if (r < 0 || c < 0) throw ShapeError("matrix dimensions must be non-negative");
}

Matrix::Matrix(int r, int c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  if (r < 0 || c < 0) throw ShapeError("matrix dimensions must be non-negative");
  if (data.size() != static_cast<std::size_t>(r) * c) {
    throw ShapeError("matrix " + shape_str() + " requires " +
                     std::to_string(static_cast<std::size_t>(r) * c) +
                     " values, got " + std::to_string(data.size()));
  }
}

std::string Matrix::shape_str() const {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

Vector::Vector(int n, double fill)
    : len(n), data(static_cast<std::size_t>(n), fill) {
  if (n < 0) throw ShapeError("vector length must be non-negative");
}

Vector::Vector(std::vector<double> values)
    : len(static_cast<int>(values.size())), data(std::move(values)) {}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw ShapeError("matmul: inner dimensions disagree: " + a.shape_str() +
                     " vs " + b.shape_str());
  }
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix transposed(const Matrix& m) {
  Matrix out(m.cols, m.rows);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) out(j, i) = m(i, j);
  return out;
}

Vector dim_norms(const Matrix& m, Dim d) {
  if (m.empty()) throw ShapeError("dim_norms: matrix is empty");
  const int n = d == Dim::row ? m.rows : m.cols;
  Vector out(n);
  for (int i = 0; i < m.rows; ++i) {
    for (int j = 0; j < m.cols; ++j) {
      const double v = m(i, j);
      out[d == Dim::row ? i : j] += v * v;
    }
  }
  for (int i = 0; i < n; ++i) out[i] = std::sqrt(out[i]);
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw ShapeError("max_abs_diff: shapes disagree: " + a.shape_str() +
                     " vs " + b.shape_str());
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

}  // namespace bora
