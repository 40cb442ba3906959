#include "gemm.hpp"

namespace qsep::detail {

namespace {

constexpr int kMr = 4;
constexpr int kNr = 8;

// 4x8 register tile; gcc turns the accumulator array into FMA vector code.
inline void kernel_4x8(int k, const double* __restrict a, int lda,
                       const double* __restrict b, int ldb,
                       double* __restrict c, int ldc) {
  double acc[kMr][kNr] = {};
  for (int p = 0; p < k; ++p) {
    const double* bp = b + static_cast<std::size_t>(p) * ldb;
    for (int i = 0; i < kMr; ++i) {
      const double ai = a[static_cast<std::size_t>(i) * lda + p];
      for (int j = 0; j < kNr; ++j) acc[i][j] += ai * bp[j];
    }
  }
  for (int i = 0; i < kMr; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * ldc;
    for (int j = 0; j < kNr; ++j) ci[j] += acc[i][j];
  }
}

inline void kernel_edge(int mr, int nr, int k, const double* a, int lda,
                        const double* b, int ldb, double* c, int ldc) {
  for (int i = 0; i < mr; ++i) {
    for (int j = 0; j < nr; ++j) {
      double acc = 0.0;
      for (int p = 0; p < k; ++p)
        acc += a[static_cast<std::size_t>(i) * lda + p] *
               b[static_cast<std::size_t>(p) * ldb + j];
      c[static_cast<std::size_t>(i) * ldc + j] += acc;
    }
  }
}

}  // namespace

void gemm_nn(int m, int n, int k, const double* a, int lda, const double* b,
             int ldb, double* c, int ldc) {
  const int m_main = m - m % kMr;
  const int n_main = n - n % kNr;
  for (int i = 0; i < m_main; i += kMr) {
    for (int j = 0; j < n_main; j += kNr)
      kernel_4x8(k, a + static_cast<std::size_t>(i) * lda, lda, b + j, ldb,
                 c + static_cast<std::size_t>(i) * ldc + j, ldc);
    if (n_main < n)
      kernel_edge(kMr, n - n_main, k, a + static_cast<std::size_t>(i) * lda,
                  lda, b + n_main, ldb,
                  c + static_cast<std::size_t>(i) * ldc + n_main, ldc);
  }
  if (m_main < m)
    for (int j = 0; j < n; j += kNr)
      kernel_edge(m - m_main, j + kNr <= n ? kNr : n - j, k,
                  a + static_cast<std::size_t>(m_main) * lda, lda, b + j, ldb,
                  c + static_cast<std::size_t>(m_main) * ldc + j, ldc);
}

void gemm_nt(int m, int n, int k, const double* a, int lda, const double* b,
             int ldb, double* c, int ldc) {
  // Row-dot form: contiguous reductions over k.
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * lda;
    double* ci = c + static_cast<std::size_t>(i) * ldc;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * ldb;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

void gemm_tn(int m, int n, int k, const double* a, int lda, const double* b,
             int ldb, double* c, int ldc) {
  // Rank-1 update form: contiguous axpy over n for each (p, i).
  for (int p = 0; p < k; ++p) {
    const double* ap = a + static_cast<std::size_t>(p) * lda;
    const double* bp = b + static_cast<std::size_t>(p) * ldb;
    for (int i = 0; i < m; ++i) {
      const double ai = ap[i];
      if (ai == 0.0) continue;
      double* ci = c + static_cast<std::size_t>(i) * ldc;
      for (int j = 0; j < n; ++j) ci[j] += ai * bp[j];
    }
  }
}

}  // namespace qsep::detail
