#pragma once

#include <cstdint>

namespace gmr {

// One-time BLAS setup: pins OpenBLAS to one thread (engine parallelism happens
// at the call level, see threading.hpp) and works around OpenBLAS core
// misdetection under virtualized CPUID by selecting the AVX-512 kernel set
// when the host reports avx512f and OPENBLAS_CORETYPE is unset. Called lazily
// by gemm(); safe to call explicitly from main().
void blas_init();

void set_blas_threads(int threads);

// Row-major C(m x n) = alpha * op(A)(m x k) * op(B)(k x n) + beta * C.
template <typename T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, T alpha,
          const T* a, int64_t lda, const T* b, int64_t ldb, T beta, T* c,
          int64_t ldc);

}  // namespace gmr
