#include <cmath>
#include <cstddef>

#include "longred/kernels.hpp"

// Reference lane. Plain loops, one accumulator, fixed summation order; the
// SIMD lanes are tested against bit-for-bit semantics of *this* code modulo
// reassociation tolerance.

namespace longred::kern {
namespace {

template <typename T>
T dot_scalar(const T* a, const T* b, std::size_t n) {
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <typename T>
T sum_scalar(const T* x, std::size_t n) {
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

template <typename T>
T sumsq_scalar(const T* x, std::size_t n) {
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

template <typename T>
void axpy_scalar(T alpha, const T* x, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void scale_scalar(T alpha, T* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] *= alpha;
}

template <typename T>
void add_scalar(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void mul_scalar(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void mul_acc_scalar(const T* a, const T* b, T* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

template <typename T>
void matmul_nn_scalar(const T* a, const T* b, T* c,
                      std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T av = ai[kk];
            const T* bk = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bk[j];
        }
    }
}

template <typename T>
void matmul_nt_scalar(const T* a, const T* b, T* c,
                      std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* ai = a + i * k;
        T* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += dot_scalar(ai, b + j * k, k);
    }
}

template <typename T>
void matmul_tn_scalar(const T* a, const T* b, T* c,
                      std::size_t m, std::size_t k, std::size_t n) {
    // A is stored [k, m]; walk k outermost so B rows stream once per k.
    for (std::size_t kk = 0; kk < k; ++kk) {
        const T* ak = a + kk * m;
        const T* bk = b + kk * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T av = ak[i];
            T* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bk[j];
        }
    }
}

template <typename T>
void adamw_scalar(T* p, T* m, T* v, const T* g, std::size_t n,
                  T lr, T beta1, T beta2, T eps, T wd, T bias1, T bias2) {
    for (std::size_t i = 0; i < n; ++i) {
        const T gi = g[i];
        m[i] = beta1 * m[i] + (T(1) - beta1) * gi;
        v[i] = beta2 * v[i] + (T(1) - beta2) * gi * gi;
        const T mhat = m[i] / bias1;
        const T vhat = v[i] / bias2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
    }
}

template <typename T>
constexpr Table<T> make_scalar_table() {
    Table<T> t{};
    t.dot = dot_scalar<T>;
    t.sum = sum_scalar<T>;
    t.sumsq = sumsq_scalar<T>;
    t.axpy = axpy_scalar<T>;
    t.scale = scale_scalar<T>;
    t.add = add_scalar<T>;
    t.mul = mul_scalar<T>;
    t.mul_acc = mul_acc_scalar<T>;
    t.matmul_nn = matmul_nn_scalar<T>;
    t.matmul_nt = matmul_nt_scalar<T>;
    t.matmul_tn = matmul_tn_scalar<T>;
    t.adamw = adamw_scalar<T>;
    return t;
}

}  // namespace

namespace detail {
template <typename T>
const Table<T>& scalar_table() {
    static const Table<T> t = make_scalar_table<T>();
    return t;
}
template const Table<float>& scalar_table<float>();
template const Table<double>& scalar_table<double>();
}  // namespace detail

}  // namespace longred::kern
