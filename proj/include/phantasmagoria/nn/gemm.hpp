#pragma once

namespace phantasmagoria::nn {

/// Row-major C = alpha * op(A) * op(B) + beta * C, backed by BLAS.
/// op(A) is M x K, op(B) is K x N.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc);

}  // namespace phantasmagoria::nn
