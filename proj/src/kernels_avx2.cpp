#include <cmath>
#include <cstddef>

#include "longred/kernels.hpp"

// AVX2+FMA lane. Per output element the matmul kernels keep the reference
// summation order (k innermost, single accumulator per element), so they
// track the scalar lane to within FMA-contraction rounding. Reductions
// (dot/sum/sumsq) use 4-way partial accumulators and do reassociate;
// equivalence tests use tolerances for those.

#if defined(LONGRED_BUILD_AVX2) && defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace longred::kern {
namespace {

struct VecF {
    using scalar = float;
    using reg = __m256;
    static constexpr std::size_t width = 8;
    static reg load(const float* p) { return _mm256_loadu_ps(p); }
    static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
    static reg zero() { return _mm256_setzero_ps(); }
    static reg set1(float v) { return _mm256_set1_ps(v); }
    static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
    static reg sub(reg a, reg b) { return _mm256_sub_ps(a, b); }
    static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
    static reg div(reg a, reg b) { return _mm256_div_ps(a, b); }
    static reg sqrt(reg a) { return _mm256_sqrt_ps(a); }
    static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
    static float hsum(reg v) {
        __m128 lo = _mm256_castps256_ps128(v);
        __m128 hi = _mm256_extractf128_ps(v, 1);
        lo = _mm_add_ps(lo, hi);
        lo = _mm_hadd_ps(lo, lo);
        lo = _mm_hadd_ps(lo, lo);
        return _mm_cvtss_f32(lo);
    }
};

struct VecD {
    using scalar = double;
    using reg = __m256d;
    static constexpr std::size_t width = 4;
    static reg load(const double* p) { return _mm256_loadu_pd(p); }
    static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
    static reg zero() { return _mm256_setzero_pd(); }
    static reg set1(double v) { return _mm256_set1_pd(v); }
    static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
    static reg sub(reg a, reg b) { return _mm256_sub_pd(a, b); }
    static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
    static reg div(reg a, reg b) { return _mm256_div_pd(a, b); }
    static reg sqrt(reg a) { return _mm256_sqrt_pd(a); }
    static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
    static double hsum(reg v) {
        __m128d lo = _mm256_castpd256_pd128(v);
        __m128d hi = _mm256_extractf128_pd(v, 1);
        lo = _mm_add_pd(lo, hi);
        __m128d sh = _mm_unpackhi_pd(lo, lo);
        return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
    }
};

template <typename V>
typename V::scalar dot_simd(const typename V::scalar* a, const typename V::scalar* b, std::size_t n) {
    constexpr std::size_t W = V::width;
    typename V::reg acc0 = V::zero(), acc1 = V::zero(), acc2 = V::zero(), acc3 = V::zero();
    std::size_t i = 0;
    for (; i + 4 * W <= n; i += 4 * W) {
        acc0 = V::fmadd(V::load(a + i), V::load(b + i), acc0);
        acc1 = V::fmadd(V::load(a + i + W), V::load(b + i + W), acc1);
        acc2 = V::fmadd(V::load(a + i + 2 * W), V::load(b + i + 2 * W), acc2);
        acc3 = V::fmadd(V::load(a + i + 3 * W), V::load(b + i + 3 * W), acc3);
    }
    for (; i + W <= n; i += W) acc0 = V::fmadd(V::load(a + i), V::load(b + i), acc0);
    typename V::scalar total = V::hsum(V::add(V::add(acc0, acc1), V::add(acc2, acc3)));
    for (; i < n; ++i) total += a[i] * b[i];
    return total;
}

template <typename V>
typename V::scalar sum_simd(const typename V::scalar* x, std::size_t n) {
    constexpr std::size_t W = V::width;
    typename V::reg acc0 = V::zero(), acc1 = V::zero();
    std::size_t i = 0;
    for (; i + 2 * W <= n; i += 2 * W) {
        acc0 = V::add(acc0, V::load(x + i));
        acc1 = V::add(acc1, V::load(x + i + W));
    }
    for (; i + W <= n; i += W) acc0 = V::add(acc0, V::load(x + i));
    typename V::scalar total = V::hsum(V::add(acc0, acc1));
    for (; i < n; ++i) total += x[i];
    return total;
}

template <typename V>
typename V::scalar sumsq_simd(const typename V::scalar* x, std::size_t n) {
    constexpr std::size_t W = V::width;
    typename V::reg acc0 = V::zero(), acc1 = V::zero();
    std::size_t i = 0;
    for (; i + 2 * W <= n; i += 2 * W) {
        const auto v0 = V::load(x + i);
        const auto v1 = V::load(x + i + W);
        acc0 = V::fmadd(v0, v0, acc0);
        acc1 = V::fmadd(v1, v1, acc1);
    }
    for (; i + W <= n; i += W) {
        const auto v = V::load(x + i);
        acc0 = V::fmadd(v, v, acc0);
    }
    typename V::scalar total = V::hsum(V::add(acc0, acc1));
    for (; i < n; ++i) total += x[i] * x[i];
    return total;
}

template <typename V>
void axpy_simd(typename V::scalar alpha, const typename V::scalar* x,
               typename V::scalar* y, std::size_t n) {
    constexpr std::size_t W = V::width;
    const auto av = V::set1(alpha);
    std::size_t i = 0;
    for (; i + W <= n; i += W) V::store(y + i, V::fmadd(av, V::load(x + i), V::load(y + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename V>
void scale_simd(typename V::scalar alpha, typename V::scalar* y, std::size_t n) {
    constexpr std::size_t W = V::width;
    const auto av = V::set1(alpha);
    std::size_t i = 0;
    for (; i + W <= n; i += W) V::store(y + i, V::mul(av, V::load(y + i)));
    for (; i < n; ++i) y[i] *= alpha;
}

template <typename V>
void add_simd(const typename V::scalar* a, const typename V::scalar* b,
              typename V::scalar* out, std::size_t n) {
    constexpr std::size_t W = V::width;
    std::size_t i = 0;
    for (; i + W <= n; i += W) V::store(out + i, V::add(V::load(a + i), V::load(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename V>
void mul_simd(const typename V::scalar* a, const typename V::scalar* b,
              typename V::scalar* out, std::size_t n) {
    constexpr std::size_t W = V::width;
    std::size_t i = 0;
    for (; i + W <= n; i += W) V::store(out + i, V::mul(V::load(a + i), V::load(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename V>
void mul_acc_simd(const typename V::scalar* a, const typename V::scalar* b,
                  typename V::scalar* out, std::size_t n) {
    constexpr std::size_t W = V::width;
    std::size_t i = 0;
    for (; i + W <= n; i += W)
        V::store(out + i, V::fmadd(V::load(a + i), V::load(b + i), V::load(out + i)));
    for (; i < n; ++i) out[i] += a[i] * b[i];
}

// Shared inner loop of the nn/tn forms: row i of C accumulated in register
// tiles, A element broadcast per k. `a_stride`/`a_step` pick the A layout:
// nn reads A[i*k + kk], tn reads A[kk*m + i].
template <typename V>
void matmul_rows_simd(const typename V::scalar* a, const typename V::scalar* b,
                      typename V::scalar* c, std::size_t m, std::size_t k, std::size_t n,
                      std::size_t a_row_stride, std::size_t a_k_step) {
    using S = typename V::scalar;
    constexpr std::size_t W = V::width;
    for (std::size_t i = 0; i < m; ++i) {
        const S* ai = a + i * a_row_stride;
        S* ci = c + i * n;
        std::size_t j = 0;
        for (; j + 4 * W <= n; j += 4 * W) {
            auto c0 = V::load(ci + j);
            auto c1 = V::load(ci + j + W);
            auto c2 = V::load(ci + j + 2 * W);
            auto c3 = V::load(ci + j + 3 * W);
            const S* bj = b + j;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const auto av = V::set1(ai[kk * a_k_step]);
                const S* bk = bj + kk * n;
                c0 = V::fmadd(av, V::load(bk), c0);
                c1 = V::fmadd(av, V::load(bk + W), c1);
                c2 = V::fmadd(av, V::load(bk + 2 * W), c2);
                c3 = V::fmadd(av, V::load(bk + 3 * W), c3);
            }
            V::store(ci + j, c0);
            V::store(ci + j + W, c1);
            V::store(ci + j + 2 * W, c2);
            V::store(ci + j + 3 * W, c3);
        }
        for (; j + W <= n; j += W) {
            auto c0 = V::load(ci + j);
            for (std::size_t kk = 0; kk < k; ++kk)
                c0 = V::fmadd(V::set1(ai[kk * a_k_step]), V::load(b + kk * n + j), c0);
            V::store(ci + j, c0);
        }
        for (; j < n; ++j) {
            S acc = ci[j];
            for (std::size_t kk = 0; kk < k; ++kk) acc += ai[kk * a_k_step] * b[kk * n + j];
            ci[j] = acc;
        }
    }
}

template <typename V>
void matmul_nn_simd(const typename V::scalar* a, const typename V::scalar* b,
                    typename V::scalar* c, std::size_t m, std::size_t k, std::size_t n) {
    matmul_rows_simd<V>(a, b, c, m, k, n, /*a_row_stride=*/k, /*a_k_step=*/1);
}

template <typename V>
void matmul_tn_simd(const typename V::scalar* a, const typename V::scalar* b,
                    typename V::scalar* c, std::size_t m, std::size_t k, std::size_t n) {
    // A stored [k, m]: row stride 1 over i, step m over kk.
    matmul_rows_simd<V>(a, b, c, m, k, n, /*a_row_stride=*/1, /*a_k_step=*/m);
}

template <typename V>
void matmul_nt_simd(const typename V::scalar* a, const typename V::scalar* b,
                    typename V::scalar* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const auto* ai = a + i * k;
        auto* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += dot_simd<V>(ai, b + j * k, k);
    }
}

template <typename V>
void adamw_simd(typename V::scalar* p, typename V::scalar* m, typename V::scalar* v,
                const typename V::scalar* g, std::size_t n,
                typename V::scalar lr, typename V::scalar beta1, typename V::scalar beta2,
                typename V::scalar eps, typename V::scalar wd,
                typename V::scalar bias1, typename V::scalar bias2) {
    using S = typename V::scalar;
    constexpr std::size_t W = V::width;
    const auto b1 = V::set1(beta1), ob1 = V::set1(S(1) - beta1);
    const auto b2 = V::set1(beta2), ob2 = V::set1(S(1) - beta2);
    const auto c1 = V::set1(bias1), c2 = V::set1(bias2);
    const auto lrv = V::set1(lr), epsv = V::set1(eps), wdv = V::set1(wd);
    std::size_t i = 0;
    for (; i + W <= n; i += W) {
        const auto gi = V::load(g + i);
        const auto mi = V::fmadd(b1, V::load(m + i), V::mul(ob1, gi));
        const auto vi = V::fmadd(b2, V::load(v + i), V::mul(ob2, V::mul(gi, gi)));
        V::store(m + i, mi);
        V::store(v + i, vi);
        const auto mhat = V::div(mi, c1);
        const auto vhat = V::div(vi, c2);
        const auto upd = V::fmadd(wdv, V::load(p + i), V::div(mhat, V::add(V::sqrt(vhat), epsv)));
        V::store(p + i, V::sub(V::load(p + i), V::mul(lrv, upd)));
    }
    for (; i < n; ++i) {
        const S gi = g[i];
        m[i] = beta1 * m[i] + (S(1) - beta1) * gi;
        v[i] = beta2 * v[i] + (S(1) - beta2) * gi * gi;
        const S mhat = m[i] / bias1;
        const S vhat = v[i] / bias2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
    }
}

template <typename T, typename V>
constexpr Table<T> make_avx2_table() {
    Table<T> t{};
    t.dot = dot_simd<V>;
    t.sum = sum_simd<V>;
    t.sumsq = sumsq_simd<V>;
    t.axpy = axpy_simd<V>;
    t.scale = scale_simd<V>;
    t.add = add_simd<V>;
    t.mul = mul_simd<V>;
    t.mul_acc = mul_acc_simd<V>;
    t.matmul_nn = matmul_nn_simd<V>;
    t.matmul_nt = matmul_nt_simd<V>;
    t.matmul_tn = matmul_tn_simd<V>;
    t.adamw = adamw_simd<V>;
    return t;
}

}  // namespace

namespace detail {
template <>
const Table<float>& avx2_table<float>() {
    static const Table<float> t = make_avx2_table<float, VecF>();
    return t;
}
template <>
const Table<double>& avx2_table<double>() {
    static const Table<double> t = make_avx2_table<double, VecD>();
    return t;
}
}  // namespace detail

}  // namespace longred::kern

#else  // AVX2 lane not built: null table, the dispatcher skips it.

namespace longred::kern::detail {
template <>
const Table<float>& avx2_table<float>() {
    static const Table<float> t{};
    return t;
}
template <>
const Table<double>& avx2_table<double>() {
    static const Table<double> t{};
    return t;
}
}  // namespace longred::kern::detail

#endif
