// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mgm/core/graph.hpp"
#include "mgm/core/rng.hpp"
#include "mgm/core/tensor.hpp"

namespace mgm {

template <typename T>
using ParamList = std::vector<Param<T>*>;
template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor;
};
template <typename T>
using BufferList = std::vector<NamedBuffer<T>>;

template <typename T>
Tensor<T> he_normal(RandomEngine& eng, Shape shape, int64_t fan_in) {
  Tensor<T> t(shape);
  const T stddev = std::sqrt(T(2) / static_cast<T>(fan_in));
  eng.fill_normal(t, T(0), stddev);
  return t;
}

template <typename T>
struct Conv2d {
  Param<T> w, b;
  int stride = 1, pad = 0;
  bool bias = true;

  void init(uint64_t seed, const std::string& name, int64_t cin, int64_t cout,
            int64_t k, int s, int p, bool with_bias = true) {
    stride = s;
    pad = p;
    bias = with_bias;
    RandomEngine eng(mix_seed(seed, name));
    w = Param<T>(name + ".w", he_normal<T>(eng, {cout, cin, k, k}, cin * k * k));
    if (bias) b = Param<T>(name + ".b", Tensor<T>({cout}));
  }

  typename Graph<T>::Id forward(Graph<T>& g, typename Graph<T>::Id x) {
    return g.conv2d(x, g.param(w), bias ? g.param(b) : Graph<T>::kNone, stride, pad);
  }
  typename Graph<T>::Id forward_with_weight(Graph<T>& g, typename Graph<T>::Id x,
                                            typename Graph<T>::Id wn) {
    return g.conv2d(x, wn, bias ? g.param(b) : Graph<T>::kNone, stride, pad);
  }
  void collect(ParamList<T>& out) {
    out.push_back(&w);
    if (bias) out.push_back(&b);
  }
};

template <typename T>
struct ConvT2d {
  Param<T> w, b;  // w: (Cin, Cout, k, k)
  int stride = 2, pad = 0;

  void init(uint64_t seed, const std::string& name, int64_t cin, int64_t cout,
            int64_t k, int s, int p) {
    stride = s;
    pad = p;
    RandomEngine eng(mix_seed(seed, name));
    w = Param<T>(name + ".w", he_normal<T>(eng, {cin, cout, k, k}, cin * k * k));
    b = Param<T>(name + ".b", Tensor<T>({cout}));
  }

  typename Graph<T>::Id forward(Graph<T>& g, typename Graph<T>::Id x) {
    return g.conv_transpose2d(x, g.param(w), g.param(b), stride, pad);
  }
  void collect(ParamList<T>& out) {
    out.push_back(&w);
    out.push_back(&b);
  }
};

template <typename T>
struct Linear {
  Param<T> w, b;
  bool bias = true;

  void init(uint64_t seed, const std::string& name, int64_t din, int64_t dout,
            bool with_bias = true) {
    bias = with_bias;
    RandomEngine eng(mix_seed(seed, name));
    w = Param<T>(name + ".w", he_normal<T>(eng, {dout, din}, din));
    if (bias) b = Param<T>(name + ".b", Tensor<T>({dout}));
  }

  typename Graph<T>::Id forward(Graph<T>& g, typename Graph<T>::Id x) {
    return g.linear(x, g.param(w), bias ? g.param(b) : Graph<T>::kNone);
  }
  typename Graph<T>::Id forward_with_weight(Graph<T>& g, typename Graph<T>::Id x,
                                            typename Graph<T>::Id wn) {
    return g.linear(x, wn, bias ? g.param(b) : Graph<T>::kNone);
  }
  void collect(ParamList<T>& out) {
    out.push_back(&w);
    if (bias) out.push_back(&b);
  }
};

// Class-conditional batch normalization. K = 1 with all-zero class ids is
// plain batch norm; K > 1 selects per-class affine rows. Gamma rows are
// drawn from N(1, 0.02^2) when K > 1 so classes are distinguishable from
// the first step.
template <typename T>
struct CondBatchNorm {
  Param<T> gamma, beta;  // (K, C)
  Tensor<T> run_mean, run_var;
  std::string name;
  T momentum = T(0.1);
  T eps = T(1e-5);
  int64_t num_classes = 1;

  void init(uint64_t seed, const std::string& n, int64_t k, int64_t c) {
    name = n;
    num_classes = k;
    Tensor<T> g({k, c}, T(1));
    if (k > 1) {
      RandomEngine eng(mix_seed(seed, n));
      eng.fill_normal(g, T(1), T(0.02));
    }
    gamma = Param<T>(n + ".gamma", std::move(g));
    beta = Param<T>(n + ".beta", Tensor<T>({k, c}));
    run_mean = Tensor<T>({c});
    run_var = Tensor<T>({c}, T(1));
  }

  typename Graph<T>::Id forward(Graph<T>& g, typename Graph<T>::Id x,
                                const std::vector<int>& classes, Mode mode) {
    return g.cbn(x, g.param(gamma), g.param(beta), classes, &run_mean, &run_var,
                 mode, momentum, eps);
  }
  typename Graph<T>::Id forward(Graph<T>& g, typename Graph<T>::Id x, Mode mode) {
    std::vector<int> zeros(g.value(x).dim(0), 0);
    return forward(g, x, zeros, mode);
  }
  void collect(ParamList<T>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
  void buffers(BufferList<T>& out) {
    out.push_back({name + ".run_mean", &run_mean});
    out.push_back({name + ".run_var", &run_var});
  }
};

// Spectral normalization of a weight matrix via one power-iteration step per
// training forward. sigma is recomputed inside the graph from the fixed
// u/v vectors so gradients include the 1/sigma quotient term.
template <typename T>
struct SpectralNorm {
  Tensor<T> u;
  std::string name;

  void init(uint64_t seed, const std::string& n, int64_t rows) {
    name = n;
    u = Tensor<T>({rows, 1});
    RandomEngine eng(mix_seed(seed, n + ".u"));
    eng.fill_normal(u, T(0), T(1));
    normalize(u);
  }

  typename Graph<T>::Id weight_node(Graph<T>& g, Param<T>& w, bool update) {
    const int64_t rows = w.value.dim(0);
    const int64_t cols = w.value.numel() / rows;
    // power iteration on raw values
    Tensor<T> v({cols, 1});
    gemm<T>(true, false, cols, 1, rows, T(1), w.value.ptr(), u.ptr(), T(0), v.ptr());
    normalize(v);
    Tensor<T> u_new({rows, 1});
    gemm<T>(false, false, rows, 1, cols, T(1), w.value.ptr(), v.ptr(), T(0),
            u_new.ptr());
    normalize(u_new);
    if (update) u = u_new;
    // sigma = u^T W v inside the graph
    auto wn = g.param(w);
    auto w2d = g.reshape(wn, {rows, cols});
    auto vc = g.constant(v);
    auto wv = g.matmul(w2d, vc);                       // (rows,1)
    auto sigma = g.weighted_sum(wv, u_new, T(1));      // scalar
    auto inv = g.recip(g.affine(sigma, T(1), T(1e-12)));
    auto wsn = g.scalar_mul(w2d, inv);
    return g.reshape(wsn, w.value.shape);
  }

  void buffers(BufferList<T>& out) { out.push_back({name + ".u", &u}); }

 private:
  static void normalize(Tensor<T>& t) {
    T s = T(0);
    for (const auto& x : t.data) s += x * x;
    s = std::sqrt(s) + T(1e-12);
    for (auto& x : t.data) x /= s;
  }
};

// SAGAN-style self-attention: out = x + lambda * (softmax(q^T k) aggregated v).
// lambda starts at zero so the block is the identity at initialization.
template <typename T>
struct SelfAttention {
  Conv2d<T> q, k, v;
  Param<T> lambda;
  bool spectral = false;
  SpectralNorm<T> sn_q, sn_k, sn_v;

  void init(uint64_t seed, const std::string& name, int64_t channels,
            bool use_spectral = false) {
    spectral = use_spectral;
    const int64_t cq = std::max<int64_t>(1, channels / 8);
    q.init(seed, name + ".q", channels, cq, 1, 1, 0, false);
    k.init(seed, name + ".k", channels, cq, 1, 1, 0, false);
    v.init(seed, name + ".v", channels, channels, 1, 1, 0, false);
    lambda = Param<T>(name + ".lambda", Tensor<T>({1}));
    if (spectral) {
      sn_q.init(seed, name + ".q", cq);
      sn_k.init(seed, name + ".k", cq);
      sn_v.init(seed, name + ".v", channels);
    }
  }

  typename Graph<T>::Id forward(Graph<T>& g, typename Graph<T>::Id x, Mode mode) {
    const auto& vx = g.value(x);
    const int64_t B = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    MGM_CHECK_T(H == W, ShapeError, "self_attention: feature map must be square");
    const bool train = mode == Mode::kTrain;
    auto conv = [&](Conv2d<T>& layer, SpectralNorm<T>& sn, typename Graph<T>::Id in) {
      if (!spectral) return layer.forward(g, in);
      return layer.forward_with_weight(g, in, sn.weight_node(g, layer.w, train));
    };
    const int64_t cq = std::max<int64_t>(1, C / 8);
    auto qm = g.reshape(conv(q, sn_q, x), {B, cq, H * W});
    auto km = g.reshape(conv(k, sn_k, x), {B, cq, H * W});
    auto vm = g.reshape(conv(v, sn_v, x), {B, C, H * W});
    auto scores = g.bmm(g.btranspose(qm), km);   // (B, HW, HW), row = query
    auto attn = g.softmax_lastdim(scores);
    auto o = g.bmm(vm, g.btranspose(attn));      // (B, C, HW)
    auto o4 = g.reshape(o, {B, C, H, W});
    return g.add(x, g.scalar_mul(o4, g.param(lambda)));
  }

  // attention map alone, for tests
  typename Graph<T>::Id attention_rows(Graph<T>& g, typename Graph<T>::Id x) {
    const auto& vx = g.value(x);
    const int64_t B = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    auto qm = g.reshape(q.forward(g, x), {B, std::max<int64_t>(1, C / 8), H * W});
    auto km = g.reshape(k.forward(g, x), {B, std::max<int64_t>(1, C / 8), H * W});
    return g.softmax_lastdim(g.bmm(g.btranspose(qm), km));
  }

  void collect(ParamList<T>& out) {
    q.collect(out);
    k.collect(out);
    v.collect(out);
    out.push_back(&lambda);
  }
  void buffers(BufferList<T>& out) {
    if (spectral) {
      sn_q.buffers(out);
      sn_k.buffers(out);
      sn_v.buffers(out);
    }
  }
};

// Post-activation residual block: relu(x + bn2(conv2(relu(bn1(conv1(x)))))).
template <typename T>
struct ResBlock {
  Conv2d<T> c1, c2;
  CondBatchNorm<T> n1, n2;

  void init(uint64_t seed, const std::string& name, int64_t channels) {
    c1.init(seed, name + ".c1", channels, channels, 3, 1, 1);
    c2.init(seed, name + ".c2", channels, channels, 3, 1, 1);
    n1.init(seed, name + ".n1", 1, channels);
    n2.init(seed, name + ".n2", 1, channels);
  }

  typename Graph<T>::Id forward(Graph<T>& g, typename Graph<T>::Id x, Mode mode) {
    auto h = g.relu(n1.forward(g, c1.forward(g, x), mode));
    h = n2.forward(g, c2.forward(g, h), mode);
    return g.relu(g.add(x, h));
  }
  void collect(ParamList<T>& out) {
    c1.collect(out);
    c2.collect(out);
    n1.collect(out);
    n2.collect(out);
  }
  void buffers(BufferList<T>& out) {
    n1.buffers(out);
    n2.buffers(out);
  }
};

}  // namespace mgm
