#pragma once

#include <cstddef>

namespace qsep::detail {

// Row-major accumulating matrix products. All loops are fixed-order and
// sequential per output element, so results are bitwise reproducible.

// C(M x N) += A(M x K) . B(K x N)
void gemm_nn(int m, int n, int k, const double* a, int lda, const double* b,
             int ldb, double* c, int ldc);

// C(M x N) += A(M x K) . B(N x K)^T
void gemm_nt(int m, int n, int k, const double* a, int lda, const double* b,
             int ldb, double* c, int ldc);

// C(M x N) += A(K x M)^T . B(K x N)
void gemm_tn(int m, int n, int k, const double* a, int lda, const double* b,
             int ldb, double* c, int ldc);

}  // namespace qsep::detail
