// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#define EIGEN_DONT_PARALLELIZE 1
#include <Eigen/Core>

#include <cstdint>

namespace mgm {

// C (m x n) = alpha * op(A) * op(B) + beta * C, all row-major.
// Eigen single-threaded kernels; batch-level parallelism happens above this.
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, T alpha,
          const T* a, int64_t lda, const T* b, int64_t ldb, T beta, T* c,
          int64_t ldc) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
  using MMap = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;

  CMap A(a, trans_a ? k : m, trans_a ? m : k, Eigen::OuterStride<>(lda));
  CMap B(b, trans_b ? n : k, trans_b ? k : n, Eigen::OuterStride<>(ldb));
  MMap C(c, m, n, Eigen::OuterStride<>(ldc));

  const auto prod = [&](auto&& lhs, auto&& rhs) {
    if (beta == T(0)) {
      C.noalias() = alpha * (lhs * rhs);
    } else {
      C *= beta;
      C.noalias() += alpha * (lhs * rhs);
    }
  };

  if (!trans_a && !trans_b) prod(A, B);
  else if (trans_a && !trans_b) prod(A.transpose(), B);
  else if (!trans_a && trans_b) prod(A, B.transpose());
  else prod(A.transpose(), B.transpose());
}

template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, T alpha,
          const T* a, const T* b, T beta, T* c) {
  gemm(trans_a, trans_b, m, n, k, alpha, a, trans_a ? m : k, b, trans_b ? k : n,
       beta, c, n);
}

}  // namespace mgm
