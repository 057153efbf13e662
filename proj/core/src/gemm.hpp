#pragma once

// Row-major GEMM kernels used by the convolution. Every kernel keeps the
// summation order of each output element fixed, independent of threading.

#include <cstddef>

#include "segforge/parallel.hpp"
#include "segforge/precision.hpp"

SEGFORGE_NAMESPACE_BEGIN
namespace detail {

/// c[m, n] += a[m, k] * b[k, n]
inline void gemm_acc(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c,
                     bool parallel) {
  auto rows = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Real* crow = c + i * n;
      const Real* arow = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const Real av = arow[p];
        if (av == Real{0}) continue;
        const Real* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  };
  if (parallel) {
    parallel_for(m, rows);
  } else {
    rows(0, m);
  }
}

/// c[k, n] += a[m, k]^T * b[m, n]
inline void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const Real* arow = a + i * k;
    const Real* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      if (av == Real{0}) continue;
      Real* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// dst[n, m] = src[m, n]
inline void transpose(std::size_t m, std::size_t n, const Real* src, Real* dst) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < m; i0 += kBlock) {
    for (std::size_t j0 = 0; j0 < n; j0 += kBlock) {
      const std::size_t i1 = i0 + kBlock < m ? i0 + kBlock : m;
      const std::size_t j1 = j0 + kBlock < n ? j0 + kBlock : n;
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) dst[j * m + i] = src[i * n + j];
      }
    }
  }
}

}  // namespace detail
SEGFORGE_NAMESPACE_END
