#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

// Arithmetic inner loops used by the model and optimizer. Every float32
// routine has a scalar reference implementation and an AVX2 variant; the
// active one is picked once at startup from cpuid (override with
// PLBK_KERNELS=scalar|avx2 or set_isa). double overloads always run the
// scalar path; they exist for the finite-difference checks.
namespace plbk::kern {

enum class Isa { scalar, avx2 };

Isa active_isa();
void set_isa(Isa isa); // throws plbk::Error if unsupported on this CPU
bool avx2_supported();
const char* isa_name(Isa isa);

// Row-parallelism for the gemm family. n <= 1 disables threading.
void set_threads(int n);
int threads();

// c (+)= a * b          a: m x k, b: k x n, c: m x n
void gemm_nn(int m, int k, int n, const float* a, const float* b, float* c, bool accumulate);
void gemm_nn(int m, int k, int n, const double* a, const double* b, double* c, bool accumulate);

// c (+)= a * b^T        a: m x k, b: n x k, c: m x n
void gemm_nt(int m, int k, int n, const float* a, const float* b, float* c, bool accumulate);
void gemm_nt(int m, int k, int n, const double* a, const double* b, double* c, bool accumulate);

// c (+)= a^T * b        a: k x m, b: k x n, c: m x n
void gemm_tn(int m, int k, int n, const float* a, const float* b, float* c, bool accumulate);
void gemm_tn(int m, int k, int n, const double* a, const double* b, double* c, bool accumulate);

// In-place row softmax. A row whose maximum is -inf (fully masked) becomes
// all zeros rather than NaN.
void softmax_rows(float* x, int rows, int cols);
void softmax_rows(double* x, int rows, int cols);

// y = gain * (x - mean) * rstd + bias, per row; mean/rstd saved for backward.
void layernorm_fwd(const float* x, const float* gain, const float* bias, float* y,
                   float* mean, float* rstd, int rows, int cols, float eps);
void layernorm_fwd(const double* x, const double* gain, const double* bias, double* y,
                   double* mean, double* rstd, int rows, int cols, double eps);

// dx written (not accumulated); dgain/dbias accumulated across rows.
void layernorm_bwd(const float* x, const float* gain, const float* dy,
                   const float* mean, const float* rstd,
                   float* dx, float* dgain, float* dbias, int rows, int cols);
void layernorm_bwd(const double* x, const double* gain, const double* dy,
                   const double* mean, const double* rstd,
                   double* dx, double* dgain, double* dbias, int rows, int cols);

// Bias-corrected Adam: p -= lr * (m/bc1) / (sqrt(v/bc2) + eps)
void adam_update(float* p, const float* g, float* m, float* v, size_t n,
                 float lr, float beta1, float beta2, float eps, float bc1, float bc2);
void adam_update(double* p, const double* g, double* m, double* v, size_t n,
                 double lr, double beta1, double beta2, double eps, double bc1, double bc2);

void add_inplace(float* dst, const float* src, size_t n);
void add_inplace(double* dst, const double* src, size_t n);
void scale_inplace(float* x, float a, size_t n);
void scale_inplace(double* x, double a, size_t n);

// GELU (erf form). Scalar on all ISAs.
void gelu_fwd(const float* x, float* y, size_t n);
void gelu_fwd(const double* x, double* y, size_t n);
// dx += dy * gelu'(x)
void gelu_bwd(const float* x, const float* dy, float* dx, size_t n);
void gelu_bwd(const double* x, const double* dy, double* dx, size_t n);

namespace detail {

// Raw per-ISA entry points (row ranges let the dispatcher split work
// across threads). Exposed for the equivalence tests.
struct KernelsF32 {
    void (*gemm_nn)(int r0, int r1, int k, int n, const float* a, const float* b, float* c, bool acc);
    void (*gemm_nt)(int r0, int r1, int k, int n, const float* a, const float* b, float* c, bool acc);
    // a is k x m; m is the full output row count (the stride of a's rows).
    void (*gemm_tn)(int m, int r0, int r1, int k, int n, const float* a, const float* b, float* c, bool acc);
    void (*softmax_rows)(float* x, int rows, int cols);
    void (*layernorm_fwd)(const float* x, const float* gain, const float* bias, float* y,
                          float* mean, float* rstd, int rows, int cols, float eps);
    void (*layernorm_bwd)(const float* x, const float* gain, const float* dy,
                          const float* mean, const float* rstd,
                          float* dx, float* dgain, float* dbias, int rows, int cols);
    void (*adam_update)(float* p, const float* g, float* m, float* v, size_t n,
                        float lr, float b1, float b2, float eps, float bc1, float bc2);
    void (*add_inplace)(float* dst, const float* src, size_t n);
    void (*scale_inplace)(float* x, float a, size_t n);
};

const KernelsF32& scalar_table();
const KernelsF32& avx2_table(); // valid only when avx2_supported()

} // namespace detail

} // namespace plbk::kern
