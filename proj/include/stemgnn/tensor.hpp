#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace stemgnn {

// Dense row-major tensor of doubles. Rank 1 or 2 everywhere in practice.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int64_t> s, double fill = 0.0) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), fill);
  }
  Tensor(std::vector<int64_t> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw std::invalid_argument("tensor: data length does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t e : s) {
      if (e <= 0) throw std::invalid_argument("tensor: extents must be positive");
      n *= e;
    }
    return n;
  }

  static Tensor zeros(int64_t r, int64_t c) { return Tensor({r, c}); }
  static Tensor zeros(int64_t n) { return Tensor({n}); }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor row(std::initializer_list<double> v) {
    return Tensor({1, static_cast<int64_t>(v.size())}, std::vector<double>(v));
  }
  static Tensor vec(std::vector<double> v) {
    int64_t n = static_cast<int64_t>(v.size());
    return Tensor({n}, std::move(v));
  }
  static Tensor from_rows(int64_t r, int64_t c, std::vector<double> d) {
    return Tensor({r, c}, std::move(d));
  }
  static Tensor identity(int64_t n) {
    Tensor t({n, n});
    for (int64_t i = 0; i < n; ++i) t.data[static_cast<size_t>(i * n + i)] = 1.0;
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return rank() >= 2 ? shape[1] : 1; }
  bool is_scalar() const { return numel() == 1; }

  double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  double& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols() + j)]; }
  double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols() + j)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += "x";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

}  // namespace stemgnn
