// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
//
// Define-by-run reverse-mode autodiff on dense tensors. Values are computed
// eagerly when an op is recorded; backward() walks the tape in reverse
// creation order. Parameters are external (Param<T>) and receive gradient
// accumulation on every backward pass that reaches them.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "mgm/core/convops.hpp"
#include "mgm/core/gemm.hpp"
#include "mgm/core/parallel.hpp"
#include "mgm/core/tensor.hpp"

namespace mgm {

enum class Mode { kTrain, kEval };

template <typename T>
class Graph {
 public:
  using Id = int;
  static constexpr Id kNone = -1;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // ---- leaves ----

  Id constant(Tensor<T> v) { return make(std::move(v), {}, nullptr, false); }

  // Differentiable free variable (no parameter binding); grad readable via
  // grad() after backward.
  Id leaf(Tensor<T> v) { return make(std::move(v), {}, nullptr, true); }

  Id param(Param<T>& p) {
    Id id = make(Tensor<T>(p.value), {}, nullptr, true);
    nodes_[id].bound = &p;
    return id;
  }

  const Tensor<T>& value(Id id) const { return nodes_.at(id).value; }
  const Tensor<T>& grad(Id id) const { return nodes_.at(id).grad; }
  T scalar(Id id) const {
    MGM_CHECK(nodes_.at(id).value.numel() == 1, "scalar() on non-scalar node");
    return nodes_.at(id).value[0];
  }
  size_t size() const { return nodes_.size(); }

  // ---- elementwise ----

  Id affine(Id x, T mul, T add) {
    Tensor<T> y = val(x);
    for (auto& v : y.data) v = mul * v + add;
    return make(std::move(y), {x}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(x)) {
        const Tensor<T>& go = g.node_grad_of_child();
        for (int64_t i = 0; i < go.numel(); ++i) gx[i] += mul * go[i];
      }
    });
  }

  Id add(Id a, Id b) {
    MGM_CHECK_T(same_shape(val(a), val(b)), ShapeError,
                "add: " << shape_str(val(a).shape) << " vs " << shape_str(val(b).shape));
    Tensor<T> y = val(a);
    const Tensor<T>& vb = val(b);
    for (int64_t i = 0; i < y.numel(); ++i) y[i] += vb[i];
    return make(std::move(y), {a, b}, [=](Graph& g) {
      const Tensor<T>& go = g.node_grad_of_child();
      if (T* ga = g.gptr_parent(a))
        for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i];
      if (T* gb = g.gptr_parent(b))
        for (int64_t i = 0; i < go.numel(); ++i) gb[i] += go[i];
    });
  }

  Id add_tensor(Id x, const Tensor<T>& t, T sign = T(1)) {
    MGM_CHECK_T(same_shape(val(x), t), ShapeError, "add_tensor shape mismatch");
    Tensor<T> y = val(x);
    for (int64_t i = 0; i < y.numel(); ++i) y[i] += sign * t[i];
    return make(std::move(y), {x}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(x)) {
        const Tensor<T>& go = g.node_grad_of_child();
        for (int64_t i = 0; i < go.numel(); ++i) gx[i] += go[i];
      }
    });
  }

  Id mul(Id a, Id b) {
    MGM_CHECK_T(same_shape(val(a), val(b)), ShapeError, "mul shape mismatch");
    Tensor<T> y = val(a);
    const Tensor<T>& vb = val(b);
    for (int64_t i = 0; i < y.numel(); ++i) y[i] *= vb[i];
    return make(std::move(y), {a, b}, [=](Graph& g) {
      const Tensor<T>& go = g.node_grad_of_child();
      const Tensor<T>& va = g.val(a);
      const Tensor<T>& vb2 = g.val(b);
      if (T* ga = g.gptr_parent(a))
        for (int64_t i = 0; i < go.numel(); ++i) ga[i] += go[i] * vb2[i];
      if (T* gb = g.gptr_parent(b))
        for (int64_t i = 0; i < go.numel(); ++i) gb[i] += go[i] * va[i];
    });
  }

  Id relu(Id x) {
    Tensor<T> y = val(x);
    for (auto& v : y.data) v = v > T(0) ? v : T(0);
    return make(std::move(y), {x}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(x)) {
        const Tensor<T>& go = g.node_grad_of_child();
        const Tensor<T>& vx = g.val(x);
        for (int64_t i = 0; i < go.numel(); ++i)
          if (vx[i] > T(0)) gx[i] += go[i];
      }
    });
  }

  Id leaky_relu(Id x, T slope) {
    Tensor<T> y = val(x);
    for (auto& v : y.data) v = v > T(0) ? v : slope * v;
    return make(std::move(y), {x}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(x)) {
        const Tensor<T>& go = g.node_grad_of_child();
        const Tensor<T>& vx = g.val(x);
        for (int64_t i = 0; i < go.numel(); ++i)
          gx[i] += (vx[i] > T(0) ? go[i] : slope * go[i]);
      }
    });
  }

  Id tanh_op(Id x) {
    Tensor<T> y = val(x);
    for (auto& v : y.data) v = std::tanh(v);
    return make(std::move(y), {x}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(x)) {
        const Tensor<T>& go = g.node_grad_of_child();
        const Tensor<T>& vy = g.node_value_of_child();
        for (int64_t i = 0; i < go.numel(); ++i)
          gx[i] += go[i] * (T(1) - vy[i] * vy[i]);
      }
    });
  }

  Id sigmoid(Id x) {
    Tensor<T> y = val(x);
    for (auto& v : y.data) v = T(1) / (T(1) + std::exp(-v));
    return make(std::move(y), {x}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(x)) {
        const Tensor<T>& go = g.node_grad_of_child();
        const Tensor<T>& vy = g.node_value_of_child();
        for (int64_t i = 0; i < go.numel(); ++i)
          gx[i] += go[i] * vy[i] * (T(1) - vy[i]);
      }
    });
  }

  Id recip(Id x) {
    Tensor<T> y = val(x);
    for (auto& v : y.data) v = T(1) / v;
    return make(std::move(y), {x}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(x)) {
        const Tensor<T>& go = g.node_grad_of_child();
        const Tensor<T>& vy = g.node_value_of_child();
        for (int64_t i = 0; i < go.numel(); ++i) gx[i] -= go[i] * vy[i] * vy[i];
      }
    });
  }

  Id rsqrt(Id x, T eps) {
    Tensor<T> y = val(x);
    for (auto& v : y.data) v = T(1) / std::sqrt(v + eps);
    return make(std::move(y), {x}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(x)) {
        const Tensor<T>& go = g.node_grad_of_child();
        const Tensor<T>& vy = g.node_value_of_child();
        for (int64_t i = 0; i < go.numel(); ++i)
          gx[i] += go[i] * T(-0.5) * vy[i] * vy[i] * vy[i];
      }
    });
  }

  // ---- shape ----

  Id reshape(Id x, Shape shape) {
    Tensor<T> y = val(x).reshaped(shape);
    return make(std::move(y), {x}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(x)) {
        const Tensor<T>& go = g.node_grad_of_child();
        for (int64_t i = 0; i < go.numel(); ++i) gx[i] += go[i];
      }
    });
  }

  // Concatenate along axis 1 for rank-2 (B,D) or rank-4 (B,C,H,W) tensors.
  Id concat_axis1(const std::vector<Id>& xs) {
    MGM_CHECK(!xs.empty(), "concat_axis1: empty list");
    const Tensor<T>& first = val(xs[0]);
    const size_t rank = first.rank();
    MGM_CHECK_T(rank == 2 || rank == 4, ShapeError, "concat_axis1: rank " << rank);
    const int64_t B = first.dim(0);
    const int64_t inner = rank == 4 ? first.dim(2) * first.dim(3) : 1;
    int64_t ctotal = 0;
    std::vector<int64_t> coffsets;
    for (Id x : xs) {
      const Tensor<T>& v = val(x);
      MGM_CHECK_T(v.rank() == rank && v.dim(0) == B, ShapeError, "concat_axis1 dims");
      if (rank == 4)
        MGM_CHECK_T(v.dim(2) == first.dim(2) && v.dim(3) == first.dim(3), ShapeError,
                    "concat_axis1 spatial dims");
      coffsets.push_back(ctotal);
      ctotal += v.dim(1);
    }
    Shape oshape = rank == 4 ? Shape{B, ctotal, first.dim(2), first.dim(3)}
                             : Shape{B, ctotal};
    Tensor<T> y(oshape);
    for (size_t k = 0; k < xs.size(); ++k) {
      const Tensor<T>& v = val(xs[k]);
      const int64_t c = v.dim(1);
      for (int64_t b = 0; b < B; ++b)
        std::copy(v.ptr() + b * c * inner, v.ptr() + (b + 1) * c * inner,
                  y.ptr() + (b * ctotal + coffsets[k]) * inner);
    }
    std::vector<Id> parents = xs;
    auto offs = coffsets;
    return make(std::move(y), parents, [=](Graph& g) {
      const Tensor<T>& go = g.node_grad_of_child();
      for (size_t k = 0; k < parents.size(); ++k) {
        T* gx = g.gptr_parent(parents[k]);
        if (!gx) continue;
        const int64_t c = g.val(parents[k]).dim(1);
        for (int64_t b = 0; b < B; ++b) {
          const T* src = go.ptr() + (b * ctotal + offs[k]) * inner;
          T* dst = gx + b * c * inner;
          for (int64_t i = 0; i < c * inner; ++i) dst[i] += src[i];
        }
      }
    });
  }

  // ---- linear algebra ----

  Id matmul(Id a, Id b) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    MGM_CHECK_T(va.rank() == 2 && vb.rank() == 2 && va.dim(1) == vb.dim(0),
                ShapeError, "matmul " << shape_str(va.shape) << " x " << shape_str(vb.shape));
    const int64_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    Tensor<T> y({m, n});
    gemm<T>(false, false, m, n, k, T(1), va.ptr(), vb.ptr(), T(0), y.ptr());
    return make(std::move(y), {a, b}, [=](Graph& g) {
      const Tensor<T>& go = g.node_grad_of_child();
      if (T* ga = g.gptr_parent(a))
        gemm<T>(false, true, m, k, n, T(1), go.ptr(), g.val(b).ptr(), T(1), ga);
      if (T* gb = g.gptr_parent(b))
        gemm<T>(true, false, k, n, m, T(1), g.val(a).ptr(), go.ptr(), T(1), gb);
    });
  }

  Id transpose(Id a) {
    const Tensor<T>& va = val(a);
    MGM_CHECK_T(va.rank() == 2, ShapeError, "transpose: rank != 2");
    const int64_t m = va.dim(0), n = va.dim(1);
    Tensor<T> y({n, m});
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) y.at2(j, i) = va.at2(i, j);
    return make(std::move(y), {a}, [=](Graph& g) {
      if (T* ga = g.gptr_parent(a)) {
        const Tensor<T>& go = g.node_grad_of_child();
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
      }
    });
  }

  Id bmm(Id a, Id b) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    MGM_CHECK_T(va.rank() == 3 && vb.rank() == 3 && va.dim(0) == vb.dim(0) &&
                    va.dim(2) == vb.dim(1),
                ShapeError, "bmm " << shape_str(va.shape) << " x " << shape_str(vb.shape));
    const int64_t B = va.dim(0), m = va.dim(1), k = va.dim(2), n = vb.dim(2);
    Tensor<T> y({B, m, n});
    parallel_for(B, [&](int64_t bi) {
      gemm<T>(false, false, m, n, k, T(1), va.ptr() + bi * m * k,
              vb.ptr() + bi * k * n, T(0), y.ptr() + bi * m * n);
    });
    return make(std::move(y), {a, b}, [=](Graph& g) {
      const Tensor<T>& go = g.node_grad_of_child();
      const Tensor<T>& va2 = g.val(a);
      const Tensor<T>& vb2 = g.val(b);
      T* ga = g.gptr_parent(a);
      T* gb = g.gptr_parent(b);
      parallel_for(B, [&](int64_t bi) {
        if (ga)
          gemm<T>(false, true, m, k, n, T(1), go.ptr() + bi * m * n,
                  vb2.ptr() + bi * k * n, T(1), ga + bi * m * k);
        if (gb)
          gemm<T>(true, false, k, n, m, T(1), va2.ptr() + bi * m * k,
                  go.ptr() + bi * m * n, T(1), gb + bi * k * n);
      });
    });
  }

  Id btranspose(Id a) {
    const Tensor<T>& va = val(a);
    MGM_CHECK_T(va.rank() == 3, ShapeError, "btranspose: rank != 3");
    const int64_t B = va.dim(0), m = va.dim(1), n = va.dim(2);
    Tensor<T> y({B, n, m});
    for (int64_t bi = 0; bi < B; ++bi)
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
          y[(bi * n + j) * m + i] = va[(bi * m + i) * n + j];
    return make(std::move(y), {a}, [=](Graph& g) {
      if (T* ga = g.gptr_parent(a)) {
        const Tensor<T>& go = g.node_grad_of_child();
        for (int64_t bi = 0; bi < B; ++bi)
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j)
              ga[(bi * m + i) * n + j] += go[(bi * n + j) * m + i];
      }
    });
  }

  // y (B,dout) = x (B,din) * w^T (din,dout) + b
  Id linear(Id x, Id w, Id b = kNone) {
    const Tensor<T>& vx = val(x);
    const Tensor<T>& vw = val(w);
    MGM_CHECK_T(vx.rank() == 2 && vw.rank() == 2 && vx.dim(1) == vw.dim(1),
                ShapeError, "linear " << shape_str(vx.shape) << " x " << shape_str(vw.shape));
    const int64_t B = vx.dim(0), din = vx.dim(1), dout = vw.dim(0);
    Tensor<T> y({B, dout});
    gemm<T>(false, true, B, dout, din, T(1), vx.ptr(), vw.ptr(), T(0), y.ptr());
    if (b != kNone) {
      const Tensor<T>& vb = val(b);
      for (int64_t i = 0; i < B; ++i)
        for (int64_t j = 0; j < dout; ++j) y.at2(i, j) += vb[j];
    }
    std::vector<Id> parents = b == kNone ? std::vector<Id>{x, w} : std::vector<Id>{x, w, b};
    return make(std::move(y), parents, [=](Graph& g) {
      const Tensor<T>& go = g.node_grad_of_child();
      if (T* gx = g.gptr_parent(x))
        gemm<T>(false, false, B, din, dout, T(1), go.ptr(), g.val(w).ptr(), T(1), gx);
      if (T* gw = g.gptr_parent(w))
        gemm<T>(true, false, dout, din, B, T(1), go.ptr(), g.val(x).ptr(), T(1), gw);
      if (b != kNone) {
        if (T* gb = g.gptr_parent(b))
          for (int64_t i = 0; i < B; ++i)
            for (int64_t j = 0; j < dout; ++j) gb[j] += go.at2(i, j);
      }
    });
  }

  Id embed_rows(Id table, std::vector<int> ids) {
    const Tensor<T>& vt = val(table);
    MGM_CHECK_T(vt.rank() == 2, ShapeError, "embed_rows: table rank != 2");
    const int64_t K = vt.dim(0), D = vt.dim(1);
    const int64_t B = static_cast<int64_t>(ids.size());
    for (int id : ids)
      MGM_CHECK(id >= 0 && id < K, "embed_rows: class id " << id << " out of range [0," << K << ")");
    Tensor<T> y({B, D});
    for (int64_t b = 0; b < B; ++b)
      std::copy(vt.ptr() + ids[b] * D, vt.ptr() + (ids[b] + 1) * D, y.ptr() + b * D);
    return make(std::move(y), {table}, [=](Graph& g) {
      if (T* gt = g.gptr_parent(table)) {
        const Tensor<T>& go = g.node_grad_of_child();
        for (int64_t b = 0; b < B; ++b)
          for (int64_t d = 0; d < D; ++d) gt[ids[b] * D + d] += go[b * D + d];
      }
    });
  }

  // ---- broadcast / reduce ----

  // (B,C,H,W) -> (B,1,H,W) or (B,D) -> (B,1)
  Id sum_axis1_keep(Id x) {
    const Tensor<T>& vx = val(x);
    const size_t rank = vx.rank();
    MGM_CHECK_T(rank == 2 || rank == 4, ShapeError, "sum_axis1_keep rank");
    const int64_t B = vx.dim(0), C = vx.dim(1);
    const int64_t inner = rank == 4 ? vx.dim(2) * vx.dim(3) : 1;
    Shape oshape = rank == 4 ? Shape{B, 1, vx.dim(2), vx.dim(3)} : Shape{B, 1};
    Tensor<T> y(oshape);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < inner; ++i)
          y[b * inner + i] += vx[(b * C + c) * inner + i];
    return make(std::move(y), {x}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(x)) {
        const Tensor<T>& go = g.node_grad_of_child();
        for (int64_t b = 0; b < B; ++b)
          for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < inner; ++i)
              gx[(b * C + c) * inner + i] += go[b * inner + i];
      }
    });
  }

  // a (B,1,H,W) or (B,1) broadcast-multiplied over x's axis 1
  Id bcast_axis1_mul(Id a, Id x) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vx = val(x);
    MGM_CHECK_T(va.rank() == vx.rank() && va.dim(1) == 1 && va.dim(0) == vx.dim(0),
                ShapeError, "bcast_axis1_mul shapes");
    const int64_t B = vx.dim(0), C = vx.dim(1);
    const int64_t inner = vx.rank() == 4 ? vx.dim(2) * vx.dim(3) : 1;
    if (vx.rank() == 4)
      MGM_CHECK_T(va.dim(2) == vx.dim(2) && va.dim(3) == vx.dim(3), ShapeError,
                  "bcast_axis1_mul spatial");
    Tensor<T> y = vx;
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < inner; ++i)
          y[(b * C + c) * inner + i] *= va[b * inner + i];
    return make(std::move(y), {a, x}, [=](Graph& g) {
      const Tensor<T>& go = g.node_grad_of_child();
      const Tensor<T>& va2 = g.val(a);
      const Tensor<T>& vx2 = g.val(x);
      if (T* ga = g.gptr_parent(a)) {
        for (int64_t b = 0; b < B; ++b)
          for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < inner; ++i)
              ga[b * inner + i] +=
                  go[(b * C + c) * inner + i] * vx2[(b * C + c) * inner + i];
      }
      if (T* gx = g.gptr_parent(x)) {
        for (int64_t b = 0; b < B; ++b)
          for (int64_t c = 0; c < C; ++c)
            for (int64_t i = 0; i < inner; ++i)
              gx[(b * C + c) * inner + i] += go[(b * C + c) * inner + i] * va2[b * inner + i];
      }
    });
  }

  // multiply by a 1-element node
  Id scalar_mul(Id x, Id s) {
    MGM_CHECK(val(s).numel() == 1, "scalar_mul: scale not scalar");
    const T sv = val(s)[0];
    Tensor<T> y = val(x);
    for (auto& v : y.data) v *= sv;
    return make(std::move(y), {x, s}, [=](Graph& g) {
      const Tensor<T>& go = g.node_grad_of_child();
      const Tensor<T>& vx = g.val(x);
      const T sv2 = g.val(s)[0];
      if (T* gx = g.gptr_parent(x))
        for (int64_t i = 0; i < go.numel(); ++i) gx[i] += go[i] * sv2;
      if (T* gs = g.gptr_parent(s)) {
        T acc = T(0);
        for (int64_t i = 0; i < go.numel(); ++i) acc += go[i] * vx[i];
        gs[0] += acc;
      }
    });
  }

  Id global_avg_pool(Id x) { return global_pool(x, true); }
  Id global_sum_pool(Id x) { return global_pool(x, false); }

  Id sum_all(Id x) {
    const Tensor<T>& vx = val(x);
    T s = T(0);
    for (const auto& v : vx.data) s += v;
    return make(Tensor<T>::scalar(s), {x}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(x)) {
        const T go = g.node_grad_of_child()[0];
        const int64_t n = g.val(x).numel();
        for (int64_t i = 0; i < n; ++i) gx[i] += go;
      }
    });
  }

  Id mean_all(Id x) {
    const int64_t n = val(x).numel();
    return affine(sum_all(x), T(1) / static_cast<T>(n), T(0));
  }

  Id weighted_sum(Id x, const Tensor<T>& w, T scale) {
    const Tensor<T>& vx = val(x);
    MGM_CHECK_T(w.numel() == vx.numel(), ShapeError, "weighted_sum sizes");
    T s = T(0);
    for (int64_t i = 0; i < vx.numel(); ++i) s += w[i] * vx[i];
    Tensor<T> wcopy = w;
    return make(Tensor<T>::scalar(scale * s), {x}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(x)) {
        const T go = g.node_grad_of_child()[0];
        for (int64_t i = 0; i < wcopy.numel(); ++i) gx[i] += go * scale * wcopy[i];
      }
    });
  }

  // ---- softmax family (over the last axis) ----

  Id softmax_lastdim(Id x) {
    Tensor<T> y = val(x);
    const int64_t n = y.shape.back();
    const int64_t rows = y.numel() / n;
    softmax_rows_inplace(y.ptr(), rows, n, false);
    return make(std::move(y), {x}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(x)) {
        const Tensor<T>& go = g.node_grad_of_child();
        const Tensor<T>& vy = g.node_value_of_child();
        for (int64_t r = 0; r < rows; ++r) {
          const T* yr = vy.ptr() + r * n;
          const T* gr = go.ptr() + r * n;
          T dot = T(0);
          for (int64_t i = 0; i < n; ++i) dot += gr[i] * yr[i];
          T* gxr = gx + r * n;
          for (int64_t i = 0; i < n; ++i) gxr[i] += yr[i] * (gr[i] - dot);
        }
      }
    });
  }

  Id log_softmax_lastdim(Id x) {
    Tensor<T> y = val(x);
    const int64_t n = y.shape.back();
    const int64_t rows = y.numel() / n;
    softmax_rows_inplace(y.ptr(), rows, n, true);
    return make(std::move(y), {x}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(x)) {
        const Tensor<T>& go = g.node_grad_of_child();
        const Tensor<T>& vy = g.node_value_of_child();
        for (int64_t r = 0; r < rows; ++r) {
          const T* yr = vy.ptr() + r * n;
          const T* gr = go.ptr() + r * n;
          T gsum = T(0);
          for (int64_t i = 0; i < n; ++i) gsum += gr[i];
          T* gxr = gx + r * n;
          for (int64_t i = 0; i < n; ++i) gxr[i] += gr[i] - std::exp(yr[i]) * gsum;
        }
      }
    });
  }

  // ---- convolution ----

  Id conv2d(Id x, Id w, Id b, int stride, int pad) {
    Tensor<T> y;
    conv2d_forward(val(x), val(w), b == kNone ? nullptr : &val(b), stride, pad, y);
    std::vector<Id> parents = b == kNone ? std::vector<Id>{x, w} : std::vector<Id>{x, w, b};
    return make(std::move(y), parents, [=](Graph& g) {
      const Tensor<T>& go = g.node_grad_of_child();
      Tensor<T>* gx = g.gtensor_parent(x);
      Tensor<T>* gw = g.gtensor_parent(w);
      Tensor<T>* gb = b == kNone ? nullptr : g.gtensor_parent(b);
      if (gx || gw || gb)
        conv2d_backward(g.val(x), g.val(w), go, stride, pad, gx, gw, gb);
    });
  }

  Id conv_transpose2d(Id x, Id w, Id b, int stride, int pad) {
    Tensor<T> y;
    convt2d_forward(val(x), val(w), b == kNone ? nullptr : &val(b), stride, pad, y);
    std::vector<Id> parents = b == kNone ? std::vector<Id>{x, w} : std::vector<Id>{x, w, b};
    return make(std::move(y), parents, [=](Graph& g) {
      const Tensor<T>& go = g.node_grad_of_child();
      Tensor<T>* gx = g.gtensor_parent(x);
      Tensor<T>* gw = g.gtensor_parent(w);
      Tensor<T>* gb = b == kNone ? nullptr : g.gtensor_parent(b);
      if (gx || gw || gb)
        convt2d_backward(g.val(x), g.val(w), go, stride, pad, gx, gw, gb);
    });
  }

  // ---- class-conditional batch normalization ----
  //
  // Per-channel standardization by batch statistics over (B,H,W), then a
  // per-sample affine with (gamma, beta) rows selected by class label.
  // Plain batch norm is the single-class case. Running statistics use the
  // biased batch variance and are updated as a side effect in training mode.
  Id cbn(Id x, Id gamma, Id beta, std::vector<int> classes, Tensor<T>* run_mean,
         Tensor<T>* run_var, Mode mode, T momentum, T eps) {
    const Tensor<T>& vx = val(x);
    MGM_CHECK_T(vx.rank() == 4, ShapeError, "cbn: rank != 4");
    const int64_t B = vx.dim(0), C = vx.dim(1), HW = vx.dim(2) * vx.dim(3);
    const Tensor<T>& vg = val(gamma);
    const Tensor<T>& vb = val(beta);
    const int64_t K = vg.dim(0);
    MGM_CHECK_T(vg.dim(1) == C && vb.dim(0) == K && vb.dim(1) == C, ShapeError,
                "cbn: affine table shapes");
    MGM_CHECK(static_cast<int64_t>(classes.size()) == B, "cbn: class batch size");
    for (int c : classes)
      MGM_CHECK(c >= 0 && c < K, "cbn: class id " << c << " out of range [0," << K << ")");
    const bool training = mode == Mode::kTrain;
    MGM_CHECK(!training || B >= 2, "cbn: training mode needs batch size >= 2");

    std::vector<T> mu(C), istd(C);
    if (training) {
      const T m = static_cast<T>(B * HW);
      parallel_for(C, [&](int64_t c) {
        T s = T(0), s2 = T(0);
        for (int64_t b = 0; b < B; ++b) {
          const T* p = vx.ptr() + (b * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) {
            s += p[i];
            s2 += p[i] * p[i];
          }
        }
        const T mean = s / m;
        T var = s2 / m - mean * mean;
        if (var < T(0)) var = T(0);
        mu[c] = mean;
        istd[c] = T(1) / std::sqrt(var + eps);
        if (run_mean && run_var) {
          (*run_mean)[c] = (T(1) - momentum) * (*run_mean)[c] + momentum * mean;
          (*run_var)[c] = (T(1) - momentum) * (*run_var)[c] + momentum * var;
        }
      });
    } else {
      MGM_CHECK(run_mean && run_var, "cbn: eval mode needs running stats");
      for (int64_t c = 0; c < C; ++c) {
        mu[c] = (*run_mean)[c];
        istd[c] = T(1) / std::sqrt((*run_var)[c] + eps);
      }
    }

    Tensor<T> y(vx.shape);
    parallel_for(B, [&](int64_t b) {
      const int cls = classes[b];
      for (int64_t c = 0; c < C; ++c) {
        const T ga = vg.at2(cls, c), be = vb.at2(cls, c);
        const T* p = vx.ptr() + (b * C + c) * HW;
        T* q = y.ptr() + (b * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) q[i] = ga * (p[i] - mu[c]) * istd[c] + be;
      }
    });

    return make(std::move(y), {x, gamma, beta}, [=](Graph& g) {
      const Tensor<T>& go = g.node_grad_of_child();
      const Tensor<T>& vx2 = g.val(x);
      const Tensor<T>& vg2 = g.val(gamma);
      T* gx = g.gptr_parent(x);
      T* gg = g.gptr_parent(gamma);
      T* gb = g.gptr_parent(beta);
      const T m = static_cast<T>(B * HW);
      parallel_for(C, [&](int64_t c) {
        // xhat recomputed from cached mu/istd
        T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
        for (int64_t b = 0; b < B; ++b) {
          const int cls = classes[b];
          const T ga = vg2.at2(cls, c);
          const T* p = vx2.ptr() + (b * C + c) * HW;
          const T* gop = go.ptr() + (b * C + c) * HW;
          T dg = T(0), db = T(0);
          for (int64_t i = 0; i < HW; ++i) {
            const T xhat = (p[i] - mu[c]) * istd[c];
            const T dxhat = gop[i] * ga;
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            dg += gop[i] * xhat;
            db += gop[i];
          }
          if (gg) gg[cls * C + c] += dg;
          if (gb) gb[cls * C + c] += db;
        }
        if (gx) {
          if (training) {
            for (int64_t b = 0; b < B; ++b) {
              const int cls = classes[b];
              const T ga = vg2.at2(cls, c);
              const T* p = vx2.ptr() + (b * C + c) * HW;
              const T* gop = go.ptr() + (b * C + c) * HW;
              T* gxp = gx + (b * C + c) * HW;
              for (int64_t i = 0; i < HW; ++i) {
                const T xhat = (p[i] - mu[c]) * istd[c];
                const T dxhat = gop[i] * ga;
                gxp[i] += istd[c] * (dxhat - sum_dxhat / m - xhat * sum_dxhat_xhat / m);
              }
            }
          } else {
            for (int64_t b = 0; b < B; ++b) {
              const int cls = classes[b];
              const T ga = vg2.at2(cls, c);
              const T* gop = go.ptr() + (b * C + c) * HW;
              T* gxp = gx + (b * C + c) * HW;
              for (int64_t i = 0; i < HW; ++i) gxp[i] += gop[i] * ga * istd[c];
            }
          }
        }
      });
    });
  }

  // ---- losses ----

  Id ce_rows(Id logits, std::vector<int> labels) {
    const Tensor<T>& vx = val(logits);
    MGM_CHECK_T(vx.rank() == 2, ShapeError, "ce_rows: rank != 2");
    const int64_t B = vx.dim(0), K = vx.dim(1);
    MGM_CHECK(static_cast<int64_t>(labels.size()) == B, "ce_rows: label count");
    T loss = T(0);
    for (int64_t b = 0; b < B; ++b) {
      MGM_CHECK(labels[b] >= 0 && labels[b] < K, "ce_rows: label out of range");
      loss += row_logsumexp(vx.ptr() + b * K, K) - vx.at2(b, labels[b]);
    }
    loss /= static_cast<T>(B);
    return make(Tensor<T>::scalar(loss), {logits}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(logits)) {
        const T go = g.node_grad_of_child()[0];
        const Tensor<T>& vx2 = g.val(logits);
        std::vector<T> sm(K);
        for (int64_t b = 0; b < B; ++b) {
          row_softmax(vx2.ptr() + b * K, K, sm.data());
          for (int64_t k = 0; k < K; ++k)
            gx[b * K + k] += go * (sm[k] - (k == labels[b] ? T(1) : T(0))) / static_cast<T>(B);
        }
      }
    });
  }

  // Mean per-pixel cross entropy over valid pixels. logits (B,C,H,W),
  // labels (B,H,W), mask (B,H,W) in {0,1} or empty for all-valid.
  Id softmax_ce_map(Id logits, const Tensor<int32_t>& labels, const Tensor<T>& mask) {
    const Tensor<T>& vx = val(logits);
    MGM_CHECK_T(vx.rank() == 4, ShapeError, "softmax_ce_map: rank != 4");
    const int64_t B = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    MGM_CHECK_T(labels.numel() == B * H * W, ShapeError, "softmax_ce_map: labels size");
    const T count = mask_count(mask, B * H * W);
    const int64_t HW = H * W;
    T loss = T(0);
    std::vector<T> col(C);
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t p = 0; p < HW; ++p) {
        if (!mask.empty() && mask[b * HW + p] == T(0)) continue;
        const int32_t lab = labels[b * HW + p];
        MGM_CHECK(lab >= 0 && lab < C, "softmax_ce_map: label out of range");
        for (int64_t c = 0; c < C; ++c) col[c] = vx[(b * C + c) * HW + p];
        loss += row_logsumexp(col.data(), C) - col[lab];
      }
    }
    loss /= count;
    Tensor<int32_t> labs = labels;
    Tensor<T> msk = mask;
    return make(Tensor<T>::scalar(loss), {logits}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(logits)) {
        const T go = g.node_grad_of_child()[0];
        const Tensor<T>& vx2 = g.val(logits);
        std::vector<T> colv(C), sm(C);
        for (int64_t b = 0; b < B; ++b) {
          for (int64_t p = 0; p < HW; ++p) {
            if (!msk.empty() && msk[b * HW + p] == T(0)) continue;
            const int32_t lab = labs[b * HW + p];
            for (int64_t c = 0; c < C; ++c) colv[c] = vx2[(b * C + c) * HW + p];
            row_softmax(colv.data(), C, sm.data());
            for (int64_t c = 0; c < C; ++c)
              gx[(b * C + c) * HW + p] +=
                  go * (sm[c] - (c == lab ? T(1) : T(0))) / count;
          }
        }
      }
    });
  }

  // Cross entropy against a dense soft distribution q over channels.
  Id soft_ce_map(Id logits, const Tensor<T>& q, const Tensor<T>& mask) {
    const Tensor<T>& vx = val(logits);
    MGM_CHECK_T(vx.rank() == 4 && same_shape(vx, q), ShapeError, "soft_ce_map shapes");
    const int64_t B = vx.dim(0), C = vx.dim(1), HW = vx.dim(2) * vx.dim(3);
    const T count = mask_count(mask, B * HW);
    T loss = T(0);
    std::vector<T> col(C);
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t p = 0; p < HW; ++p) {
        if (!mask.empty() && mask[b * HW + p] == T(0)) continue;
        for (int64_t c = 0; c < C; ++c) col[c] = vx[(b * C + c) * HW + p];
        const T lse = row_logsumexp(col.data(), C);
        for (int64_t c = 0; c < C; ++c)
          loss += q[(b * C + c) * HW + p] * (lse - col[c]);
      }
    }
    loss /= count;
    Tensor<T> qc = q, msk = mask;
    return make(Tensor<T>::scalar(loss), {logits}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(logits)) {
        const T go = g.node_grad_of_child()[0];
        const Tensor<T>& vx2 = g.val(logits);
        std::vector<T> colv(C), sm(C);
        for (int64_t b = 0; b < B; ++b) {
          for (int64_t p = 0; p < HW; ++p) {
            if (!msk.empty() && msk[b * HW + p] == T(0)) continue;
            T qs = T(0);
            for (int64_t c = 0; c < C; ++c) {
              colv[c] = vx2[(b * C + c) * HW + p];
              qs += qc[(b * C + c) * HW + p];
            }
            row_softmax(colv.data(), C, sm.data());
            for (int64_t c = 0; c < C; ++c)
              gx[(b * C + c) * HW + p] +=
                  go * (sm[c] * qs - qc[(b * C + c) * HW + p]) / count;
          }
        }
      }
    });
  }

  // scale * mean_{valid} |pred - target|; sign(0) = 0.
  Id l1_map(Id pred, const Tensor<T>& target, const Tensor<T>& mask, T scale) {
    const Tensor<T>& vp = val(pred);
    MGM_CHECK_T(same_shape(vp, target), ShapeError, "l1_map shapes");
    const int64_t B = vp.dim(0);
    const int64_t CHW = vp.numel() / B;
    const int64_t C = vp.rank() == 4 ? vp.dim(1) : 1;
    const int64_t HW = CHW / C;
    const T count = mask_count(mask, B * HW) * static_cast<T>(C);
    T loss = T(0);
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t p = 0; p < HW; ++p) {
          if (!mask.empty() && mask[b * HW + p] == T(0)) continue;
          loss += std::abs(vp[(b * C + c) * HW + p] - target[(b * C + c) * HW + p]);
        }
    loss = scale * loss / count;
    Tensor<T> tc = target, msk = mask;
    return make(Tensor<T>::scalar(loss), {pred}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(pred)) {
        const T go = g.node_grad_of_child()[0];
        const Tensor<T>& vp2 = g.val(pred);
        for (int64_t b = 0; b < B; ++b)
          for (int64_t c = 0; c < C; ++c)
            for (int64_t p = 0; p < HW; ++p) {
              if (!msk.empty() && msk[b * HW + p] == T(0)) continue;
              const T d = vp2[(b * C + c) * HW + p] - tc[(b * C + c) * HW + p];
              const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
              gx[(b * C + c) * HW + p] += go * scale * s / count;
            }
      }
    });
  }

  // Mean binary cross entropy with logits over valid pixels; target may be soft.
  Id bce_logits_map(Id pred, const Tensor<T>& target, const Tensor<T>& mask) {
    const Tensor<T>& vp = val(pred);
    MGM_CHECK_T(same_shape(vp, target), ShapeError, "bce_logits_map shapes");
    const int64_t B = vp.dim(0);
    const int64_t HW = vp.numel() / B;
    MGM_CHECK_T(mask.empty() || mask.numel() == B * HW, ShapeError,
                "bce_logits_map: mask size");
    const T count = mask_count(mask, vp.numel());
    T loss = T(0);
    for (int64_t i = 0; i < vp.numel(); ++i) {
      const T m = mask.empty() ? T(1) : mask[i];
      if (m == T(0)) continue;
      const T x = vp[i], t = target[i];
      loss += std::max(x, T(0)) - x * t + std::log1p(std::exp(-std::abs(x)));
    }
    loss /= count;
    Tensor<T> tc = target, msk = mask;
    return make(Tensor<T>::scalar(loss), {pred}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(pred)) {
        const T go = g.node_grad_of_child()[0];
        const Tensor<T>& vp2 = g.val(pred);
        for (int64_t i = 0; i < vp2.numel(); ++i) {
          const T m = msk.empty() ? T(1) : msk[i];
          if (m == T(0)) continue;
          const T sg = T(1) / (T(1) + std::exp(-vp2[i]));
          gx[i] += go * (sg - tc[i]) / count;
        }
      }
    });
  }

  Id mse_all(Id pred, const Tensor<T>& target) {
    const Tensor<T>& vp = val(pred);
    MGM_CHECK_T(same_shape(vp, target), ShapeError, "mse_all shapes");
    const int64_t n = vp.numel();
    T loss = T(0);
    for (int64_t i = 0; i < n; ++i) {
      const T d = vp[i] - target[i];
      loss += d * d;
    }
    loss /= static_cast<T>(n);
    Tensor<T> tc = target;
    return make(Tensor<T>::scalar(loss), {pred}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(pred)) {
        const T go = g.node_grad_of_child()[0];
        const Tensor<T>& vp2 = g.val(pred);
        for (int64_t i = 0; i < n; ++i)
          gx[i] += go * T(2) * (vp2[i] - tc[i]) / static_cast<T>(n);
      }
    });
  }

  // ---- composites ----

  // softmax over channels of a (B,C,H,W) map
  Id softmax_channels(Id x) {
    const Tensor<T>& vx = val(x);
    MGM_CHECK_T(vx.rank() == 4, ShapeError, "softmax_channels: rank != 4");
    const int64_t B = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
    Id r = reshape(x, {B, C, H * W});
    Id t = btranspose(r);          // (B, HW, C)
    Id sm = softmax_lastdim(t);
    Id back = btranspose(sm);      // (B, C, HW)
    return reshape(back, {B, C, H, W});
  }

  // x / ||x||_2 along axis 1 (rows of (B,D) or channels of (B,C,H,W))
  Id l2_normalize_axis1(Id x, T eps) {
    Id sq = mul(x, x);
    Id s = sum_axis1_keep(sq);
    Id r = rsqrt(s, eps);
    return bcast_axis1_mul(r, x);
  }

  // ---- backward ----

  void backward(Id root) {
    MGM_CHECK(root >= 0 && root < static_cast<Id>(nodes_.size()), "backward: bad root");
    MGM_CHECK(nodes_[root].value.numel() == 1, "backward: root must be scalar");
    std::vector<uint8_t> reach(nodes_.size(), 0);
    std::vector<Id> stack{root};
    reach[root] = 1;
    while (!stack.empty()) {
      const Id id = stack.back();
      stack.pop_back();
      for (Id p : nodes_[id].parents) {
        if (!reach[p]) {
          reach[p] = 1;
          stack.push_back(p);
        }
      }
    }
    for (size_t i = 0; i < nodes_.size(); ++i) {
      if (reach[i] && nodes_[i].requires_grad) {
        if (nodes_[i].grad.numel() != nodes_[i].value.numel())
          nodes_[i].grad = Tensor<T>(nodes_[i].value.shape);
        else
          nodes_[i].grad.fill(T(0));
      }
    }
    if (!nodes_[root].requires_grad) return;
    nodes_[root].grad[0] = T(1);
    for (Id id = root; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!reach[id] || !n.requires_grad) continue;
      if (n.backward_fn) {
        current_ = id;
        n.backward_fn(*this);
      } else if (n.bound) {
        for (int64_t i = 0; i < n.grad.numel(); ++i) n.bound->grad[i] += n.grad[i];
      }
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::vector<Id> parents;
    std::function<void(Graph&)> backward_fn;
    Param<T>* bound = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  Id current_ = kNone;  // node whose backward closure is executing

  const Tensor<T>& val(Id id) const { return nodes_.at(id).value; }

  const Tensor<T>& node_grad_of_child() const { return nodes_[current_].grad; }
  const Tensor<T>& node_value_of_child() const { return nodes_[current_].value; }

  // gradient buffer of a parent node, or nullptr if it does not need grad
  T* gptr_parent(Id id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.numel() != n.value.numel()) n.grad = Tensor<T>(n.value.shape);
    return n.grad.ptr();
  }
  Tensor<T>* gtensor_parent(Id id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.numel() != n.value.numel()) n.grad = Tensor<T>(n.value.shape);
    return &n.grad;
  }

  Id make(Tensor<T> value, std::vector<Id> parents,
          std::function<void(Graph&)> backward_fn, bool force_requires = false) {
    bool req = force_requires;
    for (Id p : parents)
      if (nodes_[p].requires_grad) req = true;
    Node n;
    n.value = std::move(value);
    n.parents = std::move(parents);
    n.requires_grad = req;
    if (req) n.backward_fn = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  Id make(Tensor<T> value, std::vector<Id> parents,
          std::function<void(Graph&)> backward_fn) {
    return make(std::move(value), std::move(parents), std::move(backward_fn), false);
  }

  Id global_pool(Id x, bool average) {
    const Tensor<T>& vx = val(x);
    MGM_CHECK_T(vx.rank() == 4, ShapeError, "global_pool: rank != 4");
    const int64_t B = vx.dim(0), C = vx.dim(1), HW = vx.dim(2) * vx.dim(3);
    const T scale = average ? T(1) / static_cast<T>(HW) : T(1);
    Tensor<T> y({B, C});
    for (int64_t b = 0; b < B; ++b)
      for (int64_t c = 0; c < C; ++c) {
        T s = T(0);
        const T* p = vx.ptr() + (b * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) s += p[i];
        y.at2(b, c) = s * scale;
      }
    return make(std::move(y), {x}, [=](Graph& g) {
      if (T* gx = g.gptr_parent(x)) {
        const Tensor<T>& go = g.node_grad_of_child();
        for (int64_t b = 0; b < B; ++b)
          for (int64_t c = 0; c < C; ++c) {
            const T gv = go.at2(b, c) * scale;
            T* p = gx + (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) p[i] += gv;
          }
      }
    });
  }

  static T mask_count(const Tensor<T>& mask, int64_t full) {
    if (mask.empty()) return static_cast<T>(full);
    T c = T(0);
    for (const auto& v : mask.data) c += (v != T(0)) ? T(1) : T(0);
    MGM_CHECK(c > T(0), "empty valid mask");
    return c;
  }

  static T row_logsumexp(const T* row, int64_t n) {
    T mx = row[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
    T s = T(0);
    for (int64_t i = 0; i < n; ++i) s += std::exp(row[i] - mx);
    return mx + std::log(s);
  }

  static void row_softmax(const T* row, int64_t n, T* out) {
    T mx = row[0];
    for (int64_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
    T s = T(0);
    for (int64_t i = 0; i < n; ++i) {
      out[i] = std::exp(row[i] - mx);
      s += out[i];
    }
    for (int64_t i = 0; i < n; ++i) out[i] /= s;
  }

  static void softmax_rows_inplace(T* p, int64_t rows, int64_t n, bool log_space) {
    parallel_for(rows, [&](int64_t r) {
      T* row = p + r * n;
      T mx = row[0];
      for (int64_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
      T s = T(0);
      for (int64_t i = 0; i < n; ++i) s += std::exp(row[i] - mx);
      if (log_space) {
        const T lse = mx + std::log(s);
        for (int64_t i = 0; i < n; ++i) row[i] -= lse;
      } else {
        for (int64_t i = 0; i < n; ++i) row[i] = std::exp(row[i] - mx) / s;
      }
    });
  }
};

}  // namespace mgm
