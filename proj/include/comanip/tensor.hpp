#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "comanip/error.hpp"
#include "comanip/rng.hpp"

namespace comanip {

using Shape = std::vector<int>;

inline size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) {
    if (d < 0) throw ShapeError("negative dimension in shape");
    n *= static_cast<size_t>(d);
  }
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

// Dense row-major double tensor. Rank is whatever the shape says; graph ops
// accept rank 1 or 2, higher ranks appear only in stacked wavelet blocks.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), 0.0) {}
  Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_numel(shape))
      throw ShapeError("tensor data size " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  static Tensor full(Shape s, double v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor randn(Shape s, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = stddev * rng.normal();
    return t;
  }

  static Tensor eye(int n) {
    Tensor t({n, n});
    for (int i = 0; i < n; ++i) t.data[static_cast<size_t>(i) * n + i] = 1.0;
    return t;
  }

  size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }

  // Row/col view of rank-1 and rank-2 tensors; rank-1 counts as a single row.
  int rows() const {
    if (rank() == 1) return 1;
    if (rank() == 2) return shape[0];
    throw ShapeError("rows() on rank-" + std::to_string(rank()) + " tensor");
  }
  int cols() const {
    if (rank() == 1) return shape[0];
    if (rank() == 2) return shape[1];
    throw ShapeError("cols() on rank-" + std::to_string(rank()) + " tensor");
  }

  double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
  double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }
  double& operator[](size_t i) { return data[i]; }
  double operator[](size_t i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

inline bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape && a.data == b.data;
}

}  // namespace comanip
