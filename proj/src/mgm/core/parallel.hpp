// Copyright 2026 the MGM authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mgm {

// Global worker count for batch-level loops. Work is partitioned per sample
// with static scheduling and disjoint outputs, so results are bit-identical
// for any thread count; reductions are always accumulated serially in index
// order.
inline int& thread_count_ref() {
  static int n = 1;
  return n;
}

inline void set_threads(int n) { thread_count_ref() = n < 1 ? 1 : n; }
inline int threads() { return thread_count_ref(); }

template <typename F>
void parallel_for(int64_t n, F&& fn) {
#ifdef _OPENMP
  if (threads() > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(threads())
    for (int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
#endif
  for (int64_t i = 0; i < n; ++i) fn(i);
}

}  // namespace mgm
