// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "mgm/core/errors.hpp"

namespace mgm {

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return s.empty() ? 0 : n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    out += std::to_string(s[i]);
    if (i + 1 < s.size()) out += ",";
  }
  return out + ")";
}

// Dense row-major tensor. Rank-4 data is laid out (B, C, H, W); rasters
// loaded from disk are converted from channel-last at the I/O boundary.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(numel_of(shape), T(0)) {}
  Tensor(Shape s, T fill) : shape(std::move(s)), data(numel_of(shape), fill) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    MGM_CHECK_T(static_cast<int64_t>(data.size()) == numel_of(shape), ShapeError,
                "data size " << data.size() << " != numel of " << shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, T v) { return Tensor(std::move(s), v); }
  static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  size_t rank() const { return shape.size(); }
  int64_t dim(size_t i) const { return shape.at(i); }
  bool empty() const { return data.empty(); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  // (B,C,H,W) accessor
  T& at4(int64_t b, int64_t c, int64_t h, int64_t w) {
    return data[((b * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const T& at4(int64_t b, int64_t c, int64_t h, int64_t w) const {
    return data[((b * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  // (R,C) accessor
  T& at2(int64_t r, int64_t c) { return data[r * shape[1] + c]; }
  const T& at2(int64_t r, int64_t c) const { return data[r * shape[1] + c]; }
  // (B,H,W) accessor
  T& at3(int64_t b, int64_t h, int64_t w) {
    return data[(b * shape[1] + h) * shape[2] + w];
  }
  const T& at3(int64_t b, int64_t h, int64_t w) const {
    return data[(b * shape[1] + h) * shape[2] + w];
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  Tensor reshaped(Shape s) const {
    MGM_CHECK_T(numel_of(s) == numel(), ShapeError,
                "reshape " << shape_str(shape) << " -> " << shape_str(s));
    Tensor out;
    out.shape = std::move(s);
    out.data = data;
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape == b.shape;
}

// Named trainable parameter; the gradient buffer is persistent and
// accumulated into by Graph::backward.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Tensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

  void zero_grad() { grad.fill(T(0)); }
};

}  // namespace mgm
