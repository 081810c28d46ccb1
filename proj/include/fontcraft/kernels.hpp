// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace fontcraft::nn {

// Row-major GEMM: C = alpha * op(A) @ op(B) + beta * C.
// Backed by cblas when available, naive loops otherwise.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc);

// Elementwise exp. The float version uses a vectorizable polynomial
// (|rel err| < 3e-7); the double version is exact std::exp, which the
// 1e-12 verification paths rely on.
void vexp_inplace(float* x, size_t n);
void vexp_inplace(double* x, size_t n);

// Elementwise tanh, same split as vexp_inplace.
void vtanh_inplace(float* x, size_t n);
void vtanh_inplace(double* x, size_t n);

void set_compute_threads(int n);
int compute_threads();

}  // namespace fontcraft::nn
