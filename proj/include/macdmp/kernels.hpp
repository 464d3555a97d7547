#pragma once

// Dense row-major GEMM kernels. Every routine accumulates into C:
//
//   gemm_nn:  C[m x n] += A[m x k]   * B[k x n]
//   gemm_nt:  C[m x n] += A[m x k]   * B[n x k]^T
//   gemm_tn:  C[m x n] += A[k x m]^T * B[k x n]
//
// The OpenMP versions split output rows across threads, so each element is
// reduced in the same order regardless of the thread count.
namespace macdmp::kernels {

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c);
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c);
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c);

// Straightforward single-threaded loops, kept as the reference for tests and
// the benchmark.
namespace serial {
void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c);
void gemm_nt(int m, int n, int k, const double* a, const double* b, double* c);
void gemm_tn(int m, int n, int k, const double* a, const double* b, double* c);
}  // namespace serial

}  // namespace macdmp::kernels
