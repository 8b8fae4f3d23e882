#pragma once

// Thin wrapper over cblas_dgemm so callers state row-major matmuls directly.
// All heavy compute in the tape primitives funnels through here.

namespace pointfuse::detail {

// C = alpha * op(A) * op(B) + beta * C, row-major.
// op(A) is M x K, op(B) is K x N, C is M x N.
void dgemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha,
           const double* a, int lda, const double* b, int ldb, double beta,
           double* c, int ldc);

}  // namespace pointfuse::detail
