// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mgm/core/tensor.hpp"

namespace mgm {

// Adaptive-moment optimizer. State is keyed by parameter name so optimizer
// moments survive checkpointing; the per-parameter step counter advances only
// when that parameter is stepped, which keeps bias correction right for
// parameters touched by a subset of the training events.
template <typename T>
class Adam {
 public:
  struct State {
    Tensor<T> m, v;
    int64_t t = 0;
  };

  Adam() = default;
  Adam(T lr, T beta1, T beta2, T eps = T(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  T lr() const { return lr_; }

  void step(const std::vector<Param<T>*>& params) {
    for (Param<T>* p : params) step_one(*p);
  }

  void step_one(Param<T>& p) {
    State& s = states_[p.name];
    if (s.m.numel() != p.value.numel()) {
      s.m = Tensor<T>(p.value.shape);
      s.v = Tensor<T>(p.value.shape);
      s.t = 0;
    }
    s.t += 1;
    const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(s.t));
    const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(s.t));
    const int64_t n = p.value.numel();
    T* m = s.m.ptr();
    T* v = s.v.ptr();
    T* w = p.value.ptr();
    const T* g = p.grad.ptr();
    for (int64_t i = 0; i < n; ++i) {
      m[i] = beta1_ * m[i] + (T(1) - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (T(1) - beta2_) * g[i] * g[i];
      const T mhat = m[i] / bc1;
      const T vhat = v[i] / bc2;
      w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }

  std::map<std::string, State>& states() { return states_; }
  const std::map<std::string, State>& states() const { return states_; }

 private:
  T lr_ = T(1e-3);
  T beta1_ = T(0.9);
  T beta2_ = T(0.999);
  T eps_ = T(1e-8);
  std::map<std::string, State> states_;
};

template <typename T>
void zero_grads(const std::vector<Param<T>*>& params) {
  for (Param<T>* p : params) p->zero_grad();
}

}  // namespace mgm
