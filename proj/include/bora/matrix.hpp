#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace bora {

// Norms below this value are treated as degenerate by strict-mode consumers.
inline constexpr double kNormFloor = 1e-12;

enum class Dim { row, col };

const char* to_string(Dim d);

// Dense row-major 2-D array of doubles. Weight matrices are stored as
// out_features x in_features; a layer maps X (batch x in) to Y = X * W^T.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0);
  Matrix(int r, int c, std::vector<double> values);

  double& operator()(int i, int j) {
    return data[static_cast<std::size_t>(i) * cols + j];
  }
  double operator()(int i, int j) const {
    return data[static_cast<std::size_t>(i) * cols + j];
  }

  bool empty() const { return rows == 0 || cols == 0; }
  std::string shape_str() const;
};

struct Vector {
  int len = 0;
  std::vector<double> data;

  Vector() = default;
  explicit Vector(int n, double fill = 0.0);
  explicit Vector(std::vector<double> values);

  double& operator[](int i) { return data[static_cast<std::size_t>(i)]; }
  double operator[](int i) const { return data[static_cast<std::size_t>(i)]; }
  bool empty() const { return len == 0; }
};

// Plain value-level helpers (no differentiation).
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transposed(const Matrix& m);
Vector dim_norms(const Matrix& m, Dim d);
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace bora
