#include "blas_shim.hpp"

#include <cblas.h>

#include <cstdlib>

namespace pointfuse::detail {

namespace {

// Multi-threaded BLAS would make accumulation order depend on the thread
// count; pin to one thread unless the caller overrides the env first.
struct BlasInit {
  BlasInit() { setenv("OPENBLAS_NUM_THREADS", "1", /*overwrite=*/0); }
};
const BlasInit blas_init;

}  // namespace

void dgemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
           const double* a, int lda, const double* b, int ldb, double beta,
           double* c, int ldc) {
  if (m == 0 || n == 0) return;
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b,
              ldb, beta, c, ldc);
}

}  // namespace pointfuse::detail
