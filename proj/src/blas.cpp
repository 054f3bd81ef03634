#include "gmr/blas.hpp"

#include <cblas.h>

#include <cstdlib>
#include <mutex>

namespace gmr {

namespace {

std::once_flag init_flag;

void do_init() {
#if defined(__x86_64__) && defined(__GNUC__)
  if (std::getenv("OPENBLAS_CORETYPE") == nullptr &&
      __builtin_cpu_supports("avx512f")) {
    // OpenBLAS reads this at its own first-use initialization, which has not
    // happened yet because nothing has called into it.
    setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
  }
#endif
  openblas_set_num_threads(1);
}

}  // namespace

void blas_init() { std::call_once(init_flag, do_init); }

void set_blas_threads(int threads) {
  blas_init();
  openblas_set_num_threads(threads < 1 ? 1 : threads);
}

template <>
void gemm<double>(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
                  double alpha, const double* a, int64_t lda, const double* b,
                  int64_t ldb, double beta, double* c, int64_t ldc) {
  blas_init();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

template <>
void gemm<float>(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
                 float alpha, const float* a, int64_t lda, const float* b,
                 int64_t ldb, float beta, float* c, int64_t ldc) {
  blas_init();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m),
              static_cast<int>(n), static_cast<int>(k), alpha, a,
              static_cast<int>(lda), b, static_cast<int>(ldb), beta, c,
              static_cast<int>(ldc));
}

}  // namespace gmr
