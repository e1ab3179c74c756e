#include "phantasmagoria/nn/gemm.hpp"

#include <cblas.h>

#include <Eigen/Core>

namespace phantasmagoria::nn {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

// The packaged OpenBLAS double kernels return wrong products on AVX-512
// hosts, so double precision goes through Eigen instead.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  using Stride = Eigen::OuterStride<>;
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using ColMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
  Eigen::Map<RowMat, 0, Stride> C(c, m, n, Stride(ldc));
  if (beta == 0.0) C.setZero();
  else if (beta != 1.0) C *= beta;
  // A row-major buffer read as column-major is its transpose.
  auto run = [&](const auto& A, const auto& B) { C.noalias() += alpha * (A * B); };
  if (!trans_a && !trans_b)
    run(Eigen::Map<const RowMat, 0, Stride>(a, m, k, Stride(lda)), Eigen::Map<const RowMat, 0, Stride>(b, k, n, Stride(ldb)));
  else if (!trans_a && trans_b)
    run(Eigen::Map<const RowMat, 0, Stride>(a, m, k, Stride(lda)), Eigen::Map<const ColMat, 0, Stride>(b, k, n, Stride(ldb)));
  else if (trans_a && !trans_b)
    run(Eigen::Map<const ColMat, 0, Stride>(a, m, k, Stride(lda)), Eigen::Map<const RowMat, 0, Stride>(b, k, n, Stride(ldb)));
  else
    run(Eigen::Map<const ColMat, 0, Stride>(a, m, k, Stride(lda)), Eigen::Map<const ColMat, 0, Stride>(b, k, n, Stride(ldb)));
}

}  // namespace phantasmagoria::nn
