// AVX2+FMA variants of the float32 kernels. This TU is compiled with
// -mavx2 -mfma and must only be reached through the runtime dispatcher.
// Summation order is fixed per kernel, so results are reproducible for a
// given ISA choice.

#include "plbk/kernels.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

#include <cmath>
#include <limits>

namespace plbk::kern::detail {

namespace {

inline float hsum256(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, sums);
    sums = _mm_add_ss(sums, sh);
    return _mm_cvtss_f32(sums);
}

void a_gemm_nn(int r0, int r1, int k, int n, const float* a, const float* b, float* c, bool acc) {
    const int n8 = n & ~7;
    for (int i = r0; i < r1; ++i) {
        float* crow = c + static_cast<size_t>(i) * n;
        if (!acc) {
            for (int j = 0; j < n; ++j) crow[j] = 0.0f;
        }
        const float* arow = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const float av = arow[p];
            if (av == 0.0f) continue;
            const __m256 va = _mm256_set1_ps(av);
            const float* brow = b + static_cast<size_t>(p) * n;
            int j = 0;
            for (; j < n8; j += 8) {
                __m256 vc = _mm256_loadu_ps(crow + j);
                vc = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), vc);
                _mm256_storeu_ps(crow + j, vc);
            }
            for (; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void a_gemm_nt(int r0, int r1, int k, int n, const float* a, const float* b, float* c, bool acc) {
    const int k8 = k & ~7;
    for (int i = r0; i < r1; ++i) {
        const float* arow = a + static_cast<size_t>(i) * k;
        float* crow = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const float* brow = b + static_cast<size_t>(j) * k;
            __m256 vsum = _mm256_setzero_ps();
            int p = 0;
            for (; p < k8; p += 8) {
                vsum = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p), _mm256_loadu_ps(brow + p), vsum);
            }
            float sum = hsum256(vsum);
            for (; p < k; ++p) sum += arow[p] * brow[p];
            crow[j] = acc ? crow[j] + sum : sum;
        }
    }
}

void a_gemm_tn(int m, int r0, int r1, int k, int n, const float* a, const float* b, float* c, bool acc) {
    const int n8 = n & ~7;
    for (int i = r0; i < r1; ++i) {
        float* crow = c + static_cast<size_t>(i) * n;
        if (!acc) {
            for (int j = 0; j < n; ++j) crow[j] = 0.0f;
        }
        for (int p = 0; p < k; ++p) {
            const float av = a[static_cast<size_t>(p) * m + i];
            if (av == 0.0f) continue;
            const __m256 va = _mm256_set1_ps(av);
            const float* brow = b + static_cast<size_t>(p) * n;
            int j = 0;
            for (; j < n8; j += 8) {
                __m256 vc = _mm256_loadu_ps(crow + j);
                vc = _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j), vc);
                _mm256_storeu_ps(crow + j, vc);
            }
            for (; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void a_softmax(float* x, int rows, int cols) {
    const int c8 = cols & ~7;
    for (int i = 0; i < rows; ++i) {
        float* row = x + static_cast<size_t>(i) * cols;
        __m256 vmax = _mm256_set1_ps(-std::numeric_limits<float>::infinity());
        int j = 0;
        for (; j < c8; j += 8) vmax = _mm256_max_ps(vmax, _mm256_loadu_ps(row + j));
        float mx = -std::numeric_limits<float>::infinity();
        alignas(32) float tmp[8];
        _mm256_store_ps(tmp, vmax);
        for (float t : tmp) mx = std::max(mx, t);
        for (; j < cols; ++j) mx = std::max(mx, row[j]);
        if (!(mx > -std::numeric_limits<float>::infinity())) {
            for (int q = 0; q < cols; ++q) row[q] = 0.0f;
            continue;
        }
        // exp stays scalar (libm); the reductions and the final scale are wide
        float sum = 0.0f;
        for (int q = 0; q < cols; ++q) {
            row[q] = std::exp(row[q] - mx);
            sum += row[q];
        }
        const __m256 vinv = _mm256_set1_ps(1.0f / sum);
        j = 0;
        for (; j < c8; j += 8) _mm256_storeu_ps(row + j, _mm256_mul_ps(_mm256_loadu_ps(row + j), vinv));
        for (; j < cols; ++j) row[j] *= 1.0f / sum;
    }
}

void a_ln_fwd(const float* x, const float* gain, const float* bias, float* y,
              float* mean, float* rstd, int rows, int cols, float eps) {
    const int c8 = cols & ~7;
    for (int i = 0; i < rows; ++i) {
        const float* xr = x + static_cast<size_t>(i) * cols;
        float* yr = y + static_cast<size_t>(i) * cols;
        __m256 vsum = _mm256_setzero_ps();
        int j = 0;
        for (; j < c8; j += 8) vsum = _mm256_add_ps(vsum, _mm256_loadu_ps(xr + j));
        float mu = hsum256(vsum);
        for (; j < cols; ++j) mu += xr[j];
        mu /= static_cast<float>(cols);

        const __m256 vmu = _mm256_set1_ps(mu);
        __m256 vvar = _mm256_setzero_ps();
        j = 0;
        for (; j < c8; j += 8) {
            const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(xr + j), vmu);
            vvar = _mm256_fmadd_ps(d, d, vvar);
        }
        float var = hsum256(vvar);
        for (; j < cols; ++j) {
            const float d = xr[j] - mu;
            var += d * d;
        }
        var /= static_cast<float>(cols);
        const float rs = 1.0f / std::sqrt(var + eps);
        mean[i] = mu;
        rstd[i] = rs;

        const __m256 vrs = _mm256_set1_ps(rs);
        j = 0;
        for (; j < c8; j += 8) {
            const __m256 xhat = _mm256_mul_ps(_mm256_sub_ps(_mm256_loadu_ps(xr + j), vmu), vrs);
            const __m256 out = _mm256_fmadd_ps(_mm256_loadu_ps(gain + j), xhat, _mm256_loadu_ps(bias + j));
            _mm256_storeu_ps(yr + j, out);
        }
        for (; j < cols; ++j) yr[j] = gain[j] * ((xr[j] - mu) * rs) + bias[j];
    }
}

void a_ln_bwd(const float* x, const float* gain, const float* dy,
              const float* mean, const float* rstd,
              float* dx, float* dgain, float* dbias, int rows, int cols) {
    const int c8 = cols & ~7;
    for (int i = 0; i < rows; ++i) {
        const float* xr = x + static_cast<size_t>(i) * cols;
        const float* dyr = dy + static_cast<size_t>(i) * cols;
        float* dxr = dx + static_cast<size_t>(i) * cols;
        const float mu = mean[i];
        const float rs = rstd[i];
        const __m256 vmu = _mm256_set1_ps(mu);
        const __m256 vrs = _mm256_set1_ps(rs);

        __m256 vs1 = _mm256_setzero_ps();
        __m256 vs2 = _mm256_setzero_ps();
        int j = 0;
        for (; j < c8; j += 8) {
            const __m256 xhat = _mm256_mul_ps(_mm256_sub_ps(_mm256_loadu_ps(xr + j), vmu), vrs);
            const __m256 vdy = _mm256_loadu_ps(dyr + j);
            const __m256 dxhat = _mm256_mul_ps(vdy, _mm256_loadu_ps(gain + j));
            vs1 = _mm256_add_ps(vs1, dxhat);
            vs2 = _mm256_fmadd_ps(dxhat, xhat, vs2);
            _mm256_storeu_ps(dgain + j, _mm256_fmadd_ps(vdy, xhat, _mm256_loadu_ps(dgain + j)));
            _mm256_storeu_ps(dbias + j, _mm256_add_ps(vdy, _mm256_loadu_ps(dbias + j)));
        }
        float sum_dxhat = hsum256(vs1);
        float sum_dxhat_xhat = hsum256(vs2);
        for (; j < cols; ++j) {
            const float xhat = (xr[j] - mu) * rs;
            const float dxhat = dyr[j] * gain[j];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            dgain[j] += dyr[j] * xhat;
            dbias[j] += dyr[j];
        }
        const float inv_n = 1.0f / static_cast<float>(cols);
        const __m256 va = _mm256_set1_ps(sum_dxhat * inv_n);
        const __m256 vb = _mm256_set1_ps(sum_dxhat_xhat * inv_n);
        j = 0;
        for (; j < c8; j += 8) {
            const __m256 xhat = _mm256_mul_ps(_mm256_sub_ps(_mm256_loadu_ps(xr + j), vmu), vrs);
            const __m256 dxhat = _mm256_mul_ps(_mm256_loadu_ps(dyr + j), _mm256_loadu_ps(gain + j));
            const __m256 t = _mm256_sub_ps(_mm256_sub_ps(dxhat, va), _mm256_mul_ps(xhat, vb));
            _mm256_storeu_ps(dxr + j, _mm256_mul_ps(vrs, t));
        }
        for (; j < cols; ++j) {
            const float xhat = (xr[j] - mu) * rs;
            const float dxhat = dyr[j] * gain[j];
            dxr[j] = rs * (dxhat - sum_dxhat * inv_n - xhat * sum_dxhat_xhat * inv_n);
        }
    }
}

void a_adam(float* p, const float* g, float* m, float* v, size_t n,
            float lr, float b1, float b2, float eps, float bc1, float bc2) {
    const size_t n8 = n & ~size_t(7);
    const __m256 vb1 = _mm256_set1_ps(b1);
    const __m256 vb2 = _mm256_set1_ps(b2);
    const __m256 v1mb1 = _mm256_set1_ps(1.0f - b1);
    const __m256 v1mb2 = _mm256_set1_ps(1.0f - b2);
    const __m256 vinv_bc1 = _mm256_set1_ps(1.0f / bc1);
    const __m256 vinv_bc2 = _mm256_set1_ps(1.0f / bc2);
    const __m256 veps = _mm256_set1_ps(eps);
    const __m256 vlr = _mm256_set1_ps(lr);
    size_t i = 0;
    for (; i < n8; i += 8) {
        const __m256 vg = _mm256_loadu_ps(g + i);
        __m256 vm = _mm256_fmadd_ps(v1mb1, vg, _mm256_mul_ps(vb1, _mm256_loadu_ps(m + i)));
        __m256 vv = _mm256_fmadd_ps(v1mb2, _mm256_mul_ps(vg, vg), _mm256_mul_ps(vb2, _mm256_loadu_ps(v + i)));
        _mm256_storeu_ps(m + i, vm);
        _mm256_storeu_ps(v + i, vv);
        const __m256 mhat = _mm256_mul_ps(vm, vinv_bc1);
        const __m256 vhat = _mm256_mul_ps(vv, vinv_bc2);
        const __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(vhat), veps);
        const __m256 upd = _mm256_div_ps(_mm256_mul_ps(vlr, mhat), denom);
        _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), upd));
    }
    for (; i < n; ++i) {
        m[i] = b1 * m[i] + (1.0f - b1) * g[i];
        v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
        const float mhat = m[i] * (1.0f / bc1);
        const float vhat = v[i] * (1.0f / bc2);
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

void a_add(float* dst, const float* src, size_t n) {
    const size_t n8 = n & ~size_t(7);
    size_t i = 0;
    for (; i < n8; i += 8) {
        _mm256_storeu_ps(dst + i, _mm256_add_ps(_mm256_loadu_ps(dst + i), _mm256_loadu_ps(src + i)));
    }
    for (; i < n; ++i) dst[i] += src[i];
}

void a_scale(float* x, float a, size_t n) {
    const size_t n8 = n & ~size_t(7);
    const __m256 va = _mm256_set1_ps(a);
    size_t i = 0;
    for (; i < n8; i += 8) _mm256_storeu_ps(x + i, _mm256_mul_ps(_mm256_loadu_ps(x + i), va));
    for (; i < n; ++i) x[i] *= a;
}

} // namespace

const KernelsF32& avx2_table() {
    static const KernelsF32 table{
        a_gemm_nn, a_gemm_nt, a_gemm_tn, a_softmax,
        a_ln_fwd,  a_ln_bwd,  a_adam,    a_add,     a_scale,
    };
    return table;
}

} // namespace plbk::kern::detail

#else

#include <stdexcept>

namespace plbk::kern::detail {
const KernelsF32& avx2_table() { throw std::runtime_error("built without AVX2 support"); }
} // namespace plbk::kern::detail

#endif
