#include "macdmp/kernels.hpp"

#include <cstddef>

namespace macdmp::kernels {

namespace {

// Below this many multiply-adds the fork/join costs more than it saves.
constexpr long kParallelThreshold = 1L << 16;

inline bool worth_parallel(int m, int n, int k) {
  return static_cast<long>(m) * n * k >= kParallelThreshold;
}

// A 4 x 16 tile of C stays in registers while p runs over k.
constexpr int kTile = 16;

inline void nn_rows4(int n, int k, const double* a, std::size_t lda, const double* b, double* c,
                     std::size_t ldc) {
  int j0 = 0;
  for (; j0 + kTile <= n; j0 += kTile) {
    double acc[4][kTile] = {};
    for (int p = 0; p < k; ++p) {
      const double* bp = b + static_cast<std::size_t>(p) * n + j0;
      const double a0 = a[p], a1 = a[lda + p], a2 = a[2 * lda + p], a3 = a[3 * lda + p];
#pragma omp simd
      for (int j = 0; j < kTile; ++j) {
        acc[0][j] += a0 * bp[j];
        acc[1][j] += a1 * bp[j];
        acc[2][j] += a2 * bp[j];
        acc[3][j] += a3 * bp[j];
      }
    }
    for (int r = 0; r < 4; ++r) {
      double* cr = c + r * ldc + j0;
      for (int j = 0; j < kTile; ++j) cr[j] += acc[r][j];
    }
  }
  for (; j0 < n; ++j0) {
    double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
    for (int p = 0; p < k; ++p) {
      const double bv = b[static_cast<std::size_t>(p) * n + j0];
      s0 += a[p] * bv;
      s1 += a[lda + p] * bv;
      s2 += a[2 * lda + p] * bv;
      s3 += a[3 * lda + p] * bv;
    }
    c[j0] += s0;
    c[ldc + j0] += s1;
    c[2 * ldc + j0] += s2;
    c[3 * ldc + j0] += s3;
  }
}

inline void nn_row1(int n, int k, const double* a, const double* b, double* c) {
  for (int p = 0; p < k; ++p) {
    const double av = a[p];
    const double* bp = b + static_cast<std::size_t>(p) * n;
#pragma omp simd
    for (int j = 0; j < n; ++j) c[j] += av * bp[j];
  }
}

}  // namespace

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c) {
  const int blocks = m / 4;
#pragma omp parallel for schedule(static) if (worth_parallel(m, n, k))
  for (int ib = 0; ib < blocks; ++ib) {
    const std::size_t i = static_cast<std::size_t>(ib) * 4;
    nn_rows4(n, k, a + i * k, k, b, c + i * n, n);
  }
  for (int i = blocks * 4; i < m; ++i) {
    nn_row1(n, k, a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n);
  }
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c) {
#pragma omp parallel for schedule(static) if (worth_parallel(m, n, k))
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    int j = 0;
    for (; j + 4 <= n; j += 4) {
      const double* b0 = b + static_cast<std::size_t>(j) * k;
      const double* b1 = b0 + k;
      const double* b2 = b1 + k;
      const double* b3 = b2 + k;
      double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
#pragma omp simd reduction(+ : s0, s1, s2, s3)
      for (int p = 0; p < k; ++p) {
        const double av = ai[p];
        s0 += av * b0[p];
        s1 += av * b1[p];
        s2 += av * b2[p];
        s3 += av * b3[p];
      }
      ci[j] += s0;
      ci[j + 1] += s1;
      ci[j + 2] += s2;
      ci[j + 3] += s3;
    }
    for (; j < n; ++j) {
      const double* bj = b + static_cast<std::size_t>(j) * k;
      double s = 0;
#pragma omp simd reduction(+ : s)
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c) {
  // Output row i gathers column i of A; rows are independent across threads.
#pragma omp parallel for schedule(static) if (worth_parallel(m, n, k))
  for (int i = 0; i < m; ++i) {
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = a[static_cast<std::size_t>(p) * m + i];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<std::size_t>(p) * n;
#pragma omp simd
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

namespace serial {

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] += s;
    }
  }
}

void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] += s;
    }
  }
}

void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] += s;
    }
  }
}

}  // namespace serial

}  // namespace macdmp::kernels
