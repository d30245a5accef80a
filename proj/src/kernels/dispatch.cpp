#include "plbk/kernels.hpp"

#include "plbk/tensor.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <thread>
#include <vector>

namespace plbk::kern {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa initial_isa() {
    if (const char* env = std::getenv("PLBK_KERNELS")) {
        if (std::strcmp(env, "scalar") == 0) return Isa::scalar;
        if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Isa::avx2;
    }
    return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa> g_isa{initial_isa()};
std::atomic<int> g_threads{[] {
    if (const char* env = std::getenv("PLBK_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return 1;
}()};

const detail::KernelsF32& table() {
    return g_isa.load(std::memory_order_relaxed) == Isa::avx2 ? detail::avx2_table()
                                                              : detail::scalar_table();
}

// Static contiguous split over output rows; each row is written by exactly
// one thread, so results do not depend on the thread count. Small products
// stay serial: thread spawn costs more than the multiply below the cutoff.
constexpr size_t kParallelFlopCutoff = size_t(1) << 17;

template <typename Fn>
void parallel_rows(int m, size_t flops, Fn&& fn) {
    const int t = g_threads.load(std::memory_order_relaxed);
    if (t <= 1 || m < 2 * t || flops < kParallelFlopCutoff) {
        fn(0, m);
        return;
    }
    const int nt = std::min(t, m);
    std::vector<std::thread> workers;
    workers.reserve(static_cast<size_t>(nt));
    const int chunk = (m + nt - 1) / nt;
    for (int w = 0; w < nt; ++w) {
        const int b = w * chunk;
        const int e = std::min(m, b + chunk);
        if (b >= e) break;
        workers.emplace_back([&fn, b, e] { fn(b, e); });
    }
    for (auto& th : workers) th.join();
}

} // namespace

Isa active_isa() { return g_isa.load(std::memory_order_relaxed); }

bool avx2_supported() { return cpu_has_avx2(); }

const char* isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

void set_isa(Isa isa) {
    if (isa == Isa::avx2 && !cpu_has_avx2()) throw Error("avx2 kernels not supported on this cpu");
    g_isa.store(isa, std::memory_order_relaxed);
}

void set_threads(int n) { g_threads.store(n < 1 ? 1 : n, std::memory_order_relaxed); }

int threads() { return g_threads.load(std::memory_order_relaxed); }

void gemm_nn(int m, int k, int n, const float* a, const float* b, float* c, bool acc) {
    const auto& t = table();
    const size_t flops = size_t(m) * size_t(k) * size_t(n);
    parallel_rows(m, flops, [&](int r0, int r1) { t.gemm_nn(r0, r1, k, n, a, b, c, acc); });
}

void gemm_nt(int m, int k, int n, const float* a, const float* b, float* c, bool acc) {
    const auto& t = table();
    const size_t flops = size_t(m) * size_t(k) * size_t(n);
    parallel_rows(m, flops, [&](int r0, int r1) { t.gemm_nt(r0, r1, k, n, a, b, c, acc); });
}

void gemm_tn(int m, int k, int n, const float* a, const float* b, float* c, bool acc) {
    const auto& t = table();
    const size_t flops = size_t(m) * size_t(k) * size_t(n);
    parallel_rows(m, flops, [&](int r0, int r1) { t.gemm_tn(m, r0, r1, k, n, a, b, c, acc); });
}

void softmax_rows(float* x, int rows, int cols) { table().softmax_rows(x, rows, cols); }

void layernorm_fwd(const float* x, const float* gain, const float* bias, float* y,
                   float* mean, float* rstd, int rows, int cols, float eps) {
    table().layernorm_fwd(x, gain, bias, y, mean, rstd, rows, cols, eps);
}

void layernorm_bwd(const float* x, const float* gain, const float* dy,
                   const float* mean, const float* rstd,
                   float* dx, float* dgain, float* dbias, int rows, int cols) {
    table().layernorm_bwd(x, gain, dy, mean, rstd, dx, dgain, dbias, rows, cols);
}

void adam_update(float* p, const float* g, float* m, float* v, size_t n,
                 float lr, float beta1, float beta2, float eps, float bc1, float bc2) {
    table().adam_update(p, g, m, v, n, lr, beta1, beta2, eps, bc1, bc2);
}

void add_inplace(float* dst, const float* src, size_t n) { table().add_inplace(dst, src, n); }

void scale_inplace(float* x, float a, size_t n) { table().scale_inplace(x, a, n); }

} // namespace plbk::kern
