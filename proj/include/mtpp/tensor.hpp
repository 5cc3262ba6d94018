#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mtpp/errors.hpp"

namespace mtpp::ad {

// Dense, double-only, rank <= 2. A vector is rows x 1, a scalar is 1 x 1.
// Row-major storage.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

  static Tensor zeros(int r, int c = 1) { return Tensor(r, c); }

  static Tensor scalar(double x) {
    Tensor t(1, 1);
    t.v[0] = x;
    return t;
  }

  static Tensor vec(std::vector<double> xs) {
    Tensor t;
    t.rows = static_cast<int>(xs.size());
    t.cols = 1;
    t.v = std::move(xs);
    return t;
  }

  int size() const { return rows * cols; }
  bool is_scalar() const { return rows == 1 && cols == 1; }
  bool is_vector() const { return cols == 1; }

  double& operator()(int i, int j = 0) { return v[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j = 0) const { return v[static_cast<size_t>(i) * cols + j]; }

  double& operator[](int i) { return v[static_cast<size_t>(i)]; }
  double operator[](int i) const { return v[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }

  bool all_finite() const {
    for (double x : v) {
      if (!std::isfinite(x)) return false;
    }
    return true;
  }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }
};

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += a.v[i] * b.v[i];
  return s;
}

inline double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

}  // namespace mtpp::ad
