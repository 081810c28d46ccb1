// SPDX-License-Identifier: Apache-2.0
#include "fontcraft/kernels.hpp"

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>

#ifdef FONTCRAFTER_HAVE_CBLAS
#include <cblas.h>
#endif

namespace fontcraft::nn {

#ifdef FONTCRAFTER_HAVE_CBLAS

#if defined(__x86_64__) && defined(__GNUC__)
// OpenBLAS picks its kernel set from CPUID at library init. Virtualized CPUs
// often report a generic model string, which lands on a conservative kernel
// and costs ~4x GEMM throughput. When the ISA is known to be present, pin the
// core type before the dispatcher runs (priority 101 beats the library
// constructor under static linking). Existing user env always wins.
__attribute__((constructor(101))) static void pin_openblas_coretype() {
    if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512dq"))
        setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
    else if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
        setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
}
#endif

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void set_compute_threads(int n) {
    if (n > 0) openblas_set_num_threads(n);
}
int compute_threads() { return openblas_get_num_threads(); }

#else

namespace {
template <class S>
void gemm_naive(bool ta, bool tb, int m, int n, int k, S alpha, const S* a, int lda, const S* b,
                int ldb, S beta, S* c, int ldc) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            S acc = 0;
            for (int p = 0; p < k; ++p) {
                const S av = ta ? a[size_t(p) * lda + i] : a[size_t(i) * lda + p];
                const S bv = tb ? b[size_t(j) * ldb + p] : b[size_t(p) * ldb + j];
                acc += av * bv;
            }
            c[size_t(i) * ldc + j] = alpha * acc + beta * c[size_t(i) * ldc + j];
        }
    }
}
}  // namespace

void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
    gemm_naive(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
    gemm_naive(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
void set_compute_threads(int) {}
int compute_threads() { return 1; }

#endif

// exp(x) = 2^(x * log2(e)); split into integer and fractional parts, degree-5
// polynomial on the fraction. Max relative error ~2.5e-7 over the softmax
// range. Written so gcc vectorizes the loop at -O3 -march=native.
void vexp_inplace(float* x, size_t n) {
    constexpr float kLog2e = 1.442695040888963f;
    constexpr float kExpLo = -87.0f;
    constexpr float kExpHi = 88.0f;
    for (size_t i = 0; i < n; ++i) {
        float t = x[i];
        t = t < kExpLo ? kExpLo : (t > kExpHi ? kExpHi : t);
        float z = t * kLog2e;
        float nf = std::floor(z);
        float f = z - nf;
        // 2^f on [0,1), minimax-ish coefficients
        float p = 1.3534550e-3f;
        p = p * f + 9.6178371e-3f;
        p = p * f + 5.5502813e-2f;
        p = p * f + 2.4022652e-1f;
        p = p * f + 6.9314718e-1f;
        p = p * f + 1.0f;
        int32_t e = int32_t(nf);
        uint32_t bits;
        std::memcpy(&bits, &p, 4);
        bits += uint32_t(e) << 23;
        std::memcpy(&p, &bits, 4);
        x[i] = p;
    }
}

void vexp_inplace(double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] = std::exp(x[i]);
}

// tanh via the exp kernel: tanh(z) = 1 - 2 / (exp(2z) + 1).
void vtanh_inplace(float* x, size_t n) {
    constexpr float kClip = 9.0f;  // tanh saturates within float precision
    for (size_t i = 0; i < n; ++i) {
        float t = x[i];
        t = t < -kClip ? -kClip : (t > kClip ? kClip : t);
        x[i] = 2.0f * t;
    }
    vexp_inplace(x, n);
    for (size_t i = 0; i < n; ++i) x[i] = 1.0f - 2.0f / (x[i] + 1.0f);
}

void vtanh_inplace(double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] = std::tanh(x[i]);
}

}  // namespace fontcraft::nn
