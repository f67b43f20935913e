#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <vector>

#include "icevit/common.hpp"

namespace icevit {

// Dense row-major float tensor. `node` is the handle of the tape node that
// produced this value, or -1 when the value is not tracked.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;
  int node = -1;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel_of(shape) != static_cast<int64_t>(data.size()))
      throw ShapeError("Tensor: data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_string(shape));
  }

  static int64_t numel_of(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      if (d <= 0) throw ShapeError("Tensor: non-positive dimension in " + shape_string(s));
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    int64_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<float>(static_cast<size_t>(n), 0.0f));
  }

  static Tensor full(std::vector<int> s, float v) {
    int64_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<float>(static_cast<size_t>(n), v));
  }

  static Tensor scalar(float v) { return Tensor({1}, {v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }

  int rows() const {
    require_2d();
    return shape[0];
  }
  int cols() const {
    require_2d();
    return shape[1];
  }

  float& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  float at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void require_2d() const {
    if (shape.size() != 2) throw ShapeError("expected 2-d tensor, got " + shape_string(shape));
  }

  static std::string shape_string(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
      if (i) os << "x";
      os << s[i];
    }
    os << "]";
    return os.str();
  }
};

inline Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data) v = static_cast<float>(rng.normal() * scale);
  return t;
}

}  // namespace icevit
