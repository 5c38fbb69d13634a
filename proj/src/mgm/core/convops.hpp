// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstring>
#include <vector>

#include "mgm/core/gemm.hpp"
#include "mgm/core/parallel.hpp"
#include "mgm/core/tensor.hpp"

namespace mgm {

inline int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// x: one image (C,H,W) -> col (C*kh*kw, OH*OW)
template <typename T>
void im2col(const T* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t OH, int64_t OW, T* col) {
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t i = 0; i < kh; ++i) {
      for (int64_t j = 0; j < kw; ++j) {
        T* dst = col + ((c * kh + i) * kw + j) * OH * OW;
        for (int64_t oh = 0; oh < OH; ++oh) {
          const int64_t h = oh * stride - pad + i;
          if (h < 0 || h >= H) {
            std::memset(dst + oh * OW, 0, sizeof(T) * OW);
            continue;
          }
          const T* src_row = x + (c * H + h) * W;
          for (int64_t ow = 0; ow < OW; ++ow) {
            const int64_t w = ow * stride - pad + j;
            dst[oh * OW + ow] = (w >= 0 && w < W) ? src_row[w] : T(0);
          }
        }
      }
    }
  }
}

// col (C*kh*kw, OH*OW) -> accumulate into x (C,H,W)
template <typename T>
void col2im(const T* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t OH, int64_t OW, T* x) {
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t i = 0; i < kh; ++i) {
      for (int64_t j = 0; j < kw; ++j) {
        const T* src = col + ((c * kh + i) * kw + j) * OH * OW;
        for (int64_t oh = 0; oh < OH; ++oh) {
          const int64_t h = oh * stride - pad + i;
          if (h < 0 || h >= H) continue;
          T* dst_row = x + (c * H + h) * W;
          for (int64_t ow = 0; ow < OW; ++ow) {
            const int64_t w = ow * stride - pad + j;
            if (w >= 0 && w < W) dst_row[w] += src[oh * OW + ow];
          }
        }
      }
    }
  }
}

// y (B,O,OH,OW) = conv(x (B,C,H,W), w (O,C,kh,kw)) + b (O)
template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b,
                    int64_t stride, int64_t pad, Tensor<T>& y) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  MGM_CHECK_T(w.dim(1) == C, ShapeError, "conv2d: weight channels " << w.dim(1)
                                          << " != input channels " << C);
  const int64_t OH = conv_out_dim(H, kh, stride, pad);
  const int64_t OW = conv_out_dim(W, kw, stride, pad);
  y = Tensor<T>({B, O, OH, OW});
  const int64_t K = C * kh * kw, N = OH * OW;
  parallel_for(B, [&](int64_t bi) {
    std::vector<T> col(static_cast<size_t>(K * N));
    im2col(x.ptr() + bi * C * H * W, C, H, W, kh, kw, stride, pad, OH, OW, col.data());
    gemm<T>(false, false, O, N, K, T(1), w.ptr(), col.data(), T(0),
            y.ptr() + bi * O * N);
    if (b) {
      T* yb = y.ptr() + bi * O * N;
      for (int64_t o = 0; o < O; ++o) {
        const T bv = (*b)[o];
        for (int64_t p = 0; p < N; ++p) yb[o * N + p] += bv;
      }
    }
  });
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                     int64_t stride, int64_t pad, Tensor<T>* gx, Tensor<T>* gw,
                     Tensor<T>* gb) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int64_t OH = gy.dim(2), OW = gy.dim(3);
  const int64_t K = C * kh * kw, N = OH * OW;

  if (gx) {
    if (gx->empty()) *gx = Tensor<T>({B, C, H, W});
    parallel_for(B, [&](int64_t bi) {
      std::vector<T> col(static_cast<size_t>(K * N));
      gemm<T>(true, false, K, N, O, T(1), w.ptr(), gy.ptr() + bi * O * N, T(0),
              col.data());
      col2im(col.data(), C, H, W, kh, kw, stride, pad, OH, OW,
             gx->ptr() + bi * C * H * W);
    });
  }
  if (gw) {
    // Per-sample partials, summed serially in batch order for determinism.
    std::vector<T> partial(static_cast<size_t>(B * O * K));
    parallel_for(B, [&](int64_t bi) {
      std::vector<T> col(static_cast<size_t>(K * N));
      im2col(x.ptr() + bi * C * H * W, C, H, W, kh, kw, stride, pad, OH, OW,
             col.data());
      gemm<T>(false, true, O, K, N, T(1), gy.ptr() + bi * O * N, col.data(), T(0),
              partial.data() + bi * O * K);
    });
    for (int64_t bi = 0; bi < B; ++bi) {
      const T* p = partial.data() + bi * O * K;
      for (int64_t i = 0; i < O * K; ++i) gw->data[i] += p[i];
    }
  }
  if (gb) {
    for (int64_t bi = 0; bi < B; ++bi) {
      for (int64_t o = 0; o < O; ++o) {
        T s = T(0);
        const T* g = gy.ptr() + (bi * O + o) * N;
        for (int64_t p = 0; p < N; ++p) s += g[p];
        gb->data[o] += s;
      }
    }
  }
}

inline int64_t convt_out_dim(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in - 1) * stride - 2 * pad + k;
}

// y (B,O,OH,OW) = conv_transpose(x (B,C,H,W), w (C,O,kh,kw)) + b (O)
template <typename T>
void convt2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b,
                     int64_t stride, int64_t pad, Tensor<T>& y) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  MGM_CHECK_T(w.dim(0) == C, ShapeError, "convt2d: weight in-channels " << w.dim(0)
                                          << " != input channels " << C);
  const int64_t O = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const int64_t OH = convt_out_dim(H, kh, stride, pad);
  const int64_t OW = convt_out_dim(W, kw, stride, pad);
  y = Tensor<T>({B, O, OH, OW});
  const int64_t K = O * kh * kw, N = H * W;
  parallel_for(B, [&](int64_t bi) {
    std::vector<T> col(static_cast<size_t>(K * N));
    // col = w^T (K x C) * x (C x N)
    gemm<T>(true, false, K, N, C, T(1), w.ptr(), x.ptr() + bi * C * N, T(0),
            col.data());
    col2im(col.data(), O, OH, OW, kh, kw, stride, pad, H, W,
           y.ptr() + bi * O * OH * OW);
    if (b) {
      T* yb = y.ptr() + bi * O * OH * OW;
      for (int64_t o = 0; o < O; ++o) {
        const T bv = (*b)[o];
        for (int64_t p = 0; p < OH * OW; ++p) yb[o * OH * OW + p] += bv;
      }
    }
  });
}

template <typename T>
void convt2d_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& gy,
                      int64_t stride, int64_t pad, Tensor<T>* gx, Tensor<T>* gw,
                      Tensor<T>* gb) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t O = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  const int64_t OH = gy.dim(2), OW = gy.dim(3);
  const int64_t K = O * kh * kw, N = H * W;

  if (gx) {
    if (gx->empty()) *gx = Tensor<T>({B, C, H, W});
    // gx = w (C x K) * im2col(gy) (K x N)
    parallel_for(B, [&](int64_t bi) {
      std::vector<T> col(static_cast<size_t>(K * N));
      im2col(gy.ptr() + bi * O * OH * OW, O, OH, OW, kh, kw, stride, pad, H, W,
             col.data());
      gemm<T>(false, false, C, N, K, T(1), w.ptr(), col.data(), T(1),
              gx->ptr() + bi * C * N);
    });
  }
  if (gw) {
    std::vector<T> partial(static_cast<size_t>(B * C * K));
    parallel_for(B, [&](int64_t bi) {
      std::vector<T> col(static_cast<size_t>(K * N));
      im2col(gy.ptr() + bi * O * OH * OW, O, OH, OW, kh, kw, stride, pad, H, W,
             col.data());
      gemm<T>(false, true, C, K, N, T(1), x.ptr() + bi * C * N, col.data(), T(0),
              partial.data() + bi * C * K);
    });
    for (int64_t bi = 0; bi < B; ++bi) {
      const T* p = partial.data() + bi * C * K;
      for (int64_t i = 0; i < C * K; ++i) gw->data[i] += p[i];
    }
  }
  if (gb) {
    for (int64_t bi = 0; bi < B; ++bi) {
      for (int64_t o = 0; o < O; ++o) {
        T s = T(0);
        const T* g = gy.ptr() + (bi * O + o) * OH * OW;
        for (int64_t p = 0; p < OH * OW; ++p) s += g[p];
        gb->data[o] += s;
      }
    }
  }
}

}  // namespace mgm
