#include "plbk/kernels.hpp"

#include <cmath>
#include <limits>

// Reference kernels. These define the semantics; the AVX2 variants must
// agree with them to float rounding.

namespace plbk::kern {

namespace {

template <typename T>
void gemm_nn_rows(int r0, int r1, int k, int n, const T* a, const T* b, T* c, bool acc) {
    for (int i = r0; i < r1; ++i) {
        T* crow = c + static_cast<size_t>(i) * n;
        if (!acc) {
            for (int j = 0; j < n; ++j) crow[j] = T(0);
        }
        const T* arow = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void gemm_nt_rows(int r0, int r1, int k, int n, const T* a, const T* b, T* c, bool acc) {
    for (int i = r0; i < r1; ++i) {
        const T* arow = a + static_cast<size_t>(i) * k;
        T* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<size_t>(j) * k;
            T sum = T(0);
            for (int p = 0; p < k; ++p) sum += arow[p] * brow[p];
            crow[j] = acc ? crow[j] + sum : sum;
        }
    }
}

// a is k x m; output rows r0..r1 index columns of a.
template <typename T>
void gemm_tn_full(int m, int r0, int r1, int k, int n, const T* a, const T* b, T* c, bool acc) {
    for (int i = r0; i < r1; ++i) {
        T* crow = c + static_cast<size_t>(i) * n;
        if (!acc) {
            for (int j = 0; j < n; ++j) crow[j] = T(0);
        }
        for (int p = 0; p < k; ++p) {
            const T av = a[static_cast<size_t>(p) * m + i];
            if (av == T(0)) continue;
            const T* brow = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void softmax_rows_impl(T* x, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        T* row = x + static_cast<size_t>(i) * cols;
        T mx = -std::numeric_limits<T>::infinity();
        for (int j = 0; j < cols; ++j) mx = std::max(mx, row[j]);
        if (!(mx > -std::numeric_limits<T>::infinity())) {
            // fully masked row: no keys to attend to
            for (int j = 0; j < cols; ++j) row[j] = T(0);
            continue;
        }
        T sum = T(0);
        for (int j = 0; j < cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const T inv = T(1) / sum;
        for (int j = 0; j < cols; ++j) row[j] *= inv;
    }
}

template <typename T>
void layernorm_fwd_impl(const T* x, const T* gain, const T* bias, T* y,
                        T* mean, T* rstd, int rows, int cols, T eps) {
    for (int i = 0; i < rows; ++i) {
        const T* xr = x + static_cast<size_t>(i) * cols;
        T* yr = y + static_cast<size_t>(i) * cols;
        T mu = T(0);
        for (int j = 0; j < cols; ++j) mu += xr[j];
        mu /= static_cast<T>(cols);
        T var = T(0);
        for (int j = 0; j < cols; ++j) {
            const T d = xr[j] - mu;
            var += d * d;
        }
        var /= static_cast<T>(cols);
        const T rs = T(1) / std::sqrt(var + eps);
        mean[i] = mu;
        rstd[i] = rs;
        for (int j = 0; j < cols; ++j) yr[j] = gain[j] * ((xr[j] - mu) * rs) + bias[j];
    }
}

// dx = rstd * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)), dxhat = dy * gain
template <typename T>
void layernorm_bwd_impl(const T* x, const T* gain, const T* dy,
                        const T* mean, const T* rstd,
                        T* dx, T* dgain, T* dbias, int rows, int cols) {
    for (int i = 0; i < rows; ++i) {
        const T* xr = x + static_cast<size_t>(i) * cols;
        const T* dyr = dy + static_cast<size_t>(i) * cols;
        T* dxr = dx + static_cast<size_t>(i) * cols;
        const T mu = mean[i];
        const T rs = rstd[i];
        T sum_dxhat = T(0);
        T sum_dxhat_xhat = T(0);
        for (int j = 0; j < cols; ++j) {
            const T xhat = (xr[j] - mu) * rs;
            const T dxhat = dyr[j] * gain[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            dgain[j] += dyr[j] * xhat;
            dbias[j] += dyr[j];
        }
        const T inv_n = T(1) / static_cast<T>(cols);
        for (int j = 0; j < cols; ++j) {
            const T xhat = (xr[j] - mu) * rs;
            const T dxhat = dyr[j] * gain[j];
            dxr[j] = rs * (dxhat - sum_dxhat * inv_n - xhat * sum_dxhat_xhat * inv_n);
        }
    }
}

template <typename T>
void adam_update_impl(T* p, const T* g, T* m, T* v, size_t n,
                      T lr, T b1, T b2, T eps, T bc1, T bc2) {
    for (size_t i = 0; i < n; ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * g[i];
        v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
        const T mhat = m[i] / bc1;
        const T vhat = v[i] / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

template <typename T>
void gelu_fwd_impl(const T* x, T* y, size_t n) {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    for (size_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(x[i]);
        y[i] = static_cast<T>(v * 0.5 * (1.0 + std::erf(v * kInvSqrt2)));
    }
}

template <typename T>
void gelu_bwd_impl(const T* x, const T* dy, T* dx, size_t n) {
    constexpr double kInvSqrt2 = 0.70710678118654752440;
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    for (size_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(x[i]);
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        dx[i] += dy[i] * static_cast<T>(cdf + v * pdf);
    }
}

} // namespace

namespace detail {

namespace scalar_ns {

void s_gemm_nn(int r0, int r1, int k, int n, const float* a, const float* b, float* c, bool acc) {
    gemm_nn_rows(r0, r1, k, n, a, b, c, acc);
}
void s_gemm_nt(int r0, int r1, int k, int n, const float* a, const float* b, float* c, bool acc) {
    gemm_nt_rows(r0, r1, k, n, a, b, c, acc);
}
void s_gemm_tn(int m, int r0, int r1, int k, int n, const float* a, const float* b, float* c, bool acc) {
    gemm_tn_full(m, r0, r1, k, n, a, b, c, acc);
}
void s_softmax(float* x, int rows, int cols) { softmax_rows_impl(x, rows, cols); }
void s_ln_fwd(const float* x, const float* g, const float* bi, float* y, float* mean, float* rstd,
              int rows, int cols, float eps) {
    layernorm_fwd_impl(x, g, bi, y, mean, rstd, rows, cols, eps);
}
void s_ln_bwd(const float* x, const float* g, const float* dy, const float* mean, const float* rstd,
              float* dx, float* dg, float* db, int rows, int cols) {
    layernorm_bwd_impl(x, g, dy, mean, rstd, dx, dg, db, rows, cols);
}
void s_adam(float* p, const float* g, float* m, float* v, size_t n,
            float lr, float b1, float b2, float eps, float bc1, float bc2) {
    adam_update_impl(p, g, m, v, n, lr, b1, b2, eps, bc1, bc2);
}
void s_add(float* dst, const float* src, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] += src[i];
}
void s_scale(float* x, float a, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] *= a;
}

} // namespace scalar_ns

const KernelsF32& scalar_table() {
    static const KernelsF32 table{
        scalar_ns::s_gemm_nn,
        scalar_ns::s_gemm_nt,
        scalar_ns::s_gemm_tn,
        scalar_ns::s_softmax,
        scalar_ns::s_ln_fwd,
        scalar_ns::s_ln_bwd,
        scalar_ns::s_adam,
        scalar_ns::s_add,
        scalar_ns::s_scale,
    };
    return table;
}

} // namespace detail

// double overloads: scalar only.
void gemm_nn(int m, int k, int n, const double* a, const double* b, double* c, bool acc) {
    gemm_nn_rows(0, m, k, n, a, b, c, acc);
}
void gemm_nt(int m, int k, int n, const double* a, const double* b, double* c, bool acc) {
    gemm_nt_rows(0, m, k, n, a, b, c, acc);
}
void gemm_tn(int m, int k, int n, const double* a, const double* b, double* c, bool acc) {
    gemm_tn_full(m, 0, m, k, n, a, b, c, acc);
}
void softmax_rows(double* x, int rows, int cols) { softmax_rows_impl(x, rows, cols); }
void layernorm_fwd(const double* x, const double* gain, const double* bias, double* y,
                   double* mean, double* rstd, int rows, int cols, double eps) {
    layernorm_fwd_impl(x, gain, bias, y, mean, rstd, rows, cols, eps);
}
void layernorm_bwd(const double* x, const double* gain, const double* dy,
                   const double* mean, const double* rstd,
                   double* dx, double* dgain, double* dbias, int rows, int cols) {
    layernorm_bwd_impl(x, gain, dy, mean, rstd, dx, dgain, dbias, rows, cols);
}
void adam_update(double* p, const double* g, double* m, double* v, size_t n,
                 double lr, double beta1, double beta2, double eps, double bc1, double bc2) {
    adam_update_impl(p, g, m, v, n, lr, beta1, beta2, eps, bc1, bc2);
}
void add_inplace(double* dst, const double* src, size_t n) {
    for (size_t i = 0; i < n; ++i) dst[i] += src[i];
}
void scale_inplace(double* x, double a, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] *= a;
}
void gelu_fwd(const float* x, float* y, size_t n) { gelu_fwd_impl(x, y, n); }
void gelu_fwd(const double* x, double* y, size_t n) { gelu_fwd_impl(x, y, n); }
void gelu_bwd(const float* x, const float* dy, float* dx, size_t n) { gelu_bwd_impl(x, dy, dx, n); }
void gelu_bwd(const double* x, const double* dy, double* dx, size_t n) { gelu_bwd_impl(x, dy, dx, n); }

} // namespace plbk::kern
