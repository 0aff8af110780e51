#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tride/errors.hpp"
#include "tride/rng.hpp"

namespace tride {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int e : shape) {
    if (e <= 0) throw DimError("non-positive extent in shape");
    n *= static_cast<std::size_t>(e);
  }
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// Dense row-major n-d array. Plain value type; tape bookkeeping lives in
// Tape, which refers to tensors by node id.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(shape_numel(shape), T(0)) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shape_numel(shape)) {
      throw DimError("tensor data size " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
    }
  }

  std::size_t numel() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  bool is_scalar() const { return numel() == 1; }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  // 2-d accessors (rows x cols).
  T& at2(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
  const T& at2(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }

  // 3-d accessors (channels x rows x cols).
  T& at3(int ch, int r, int c) {
    return data[(static_cast<std::size_t>(ch) * shape[1] + r) * shape[2] + c];
  }
  const T& at3(int ch, int r, int c) const {
    return data[(static_cast<std::size_t>(ch) * shape[1] + r) * shape[2] + c];
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  static Tensor full(Shape s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor from(Shape s, std::initializer_list<T> vals) {
    return Tensor(std::move(s), std::vector<T>(vals));
  }

  static Tensor uniform(Shape s, Rng& rng, double lo, double hi) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  static Tensor normal(Shape s, Rng& rng, double mean = 0.0, double stddev = 1.0) {
    Tensor t(std::move(s));
    for (auto& v : t.data) v = static_cast<T>(rng.normal(mean, stddev));
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape == b.shape;
}

}  // namespace tride
