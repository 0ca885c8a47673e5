#pragma once

#include <cstddef>
#include <string>

namespace longred::kern {

// Instruction-set lanes. `scalar` is the reference implementation every other
// lane is equivalence-tested against. Selection happens once at startup from
// CPUID, overridable with LONGRED_KERNELS=scalar|avx2 or force_isa().
enum class Isa { scalar, avx2 };

const char* isa_name(Isa isa);

// Flat kernel table. All matmul kernels accumulate into C; callers zero the
// output first when they want a plain product. m/k/n follow the row-major
// convention C[m,n] = A[.,.] * B[.,.].
template <typename T>
struct Table {
    T (*dot)(const T* a, const T* b, std::size_t n);
    T (*sum)(const T* x, std::size_t n);
    T (*sumsq)(const T* x, std::size_t n);
    void (*axpy)(T alpha, const T* x, T* y, std::size_t n);        // y += alpha*x
    void (*scale)(T alpha, T* y, std::size_t n);                   // y *= alpha
    void (*add)(const T* a, const T* b, T* out, std::size_t n);    // out = a+b
    void (*mul)(const T* a, const T* b, T* out, std::size_t n);    // out = a*b
    void (*mul_acc)(const T* a, const T* b, T* out, std::size_t n);// out += a*b
    void (*matmul_nn)(const T* a, const T* b, T* c,
                      std::size_t m, std::size_t k, std::size_t n);  // C[m,n] += A[m,k] B[k,n]
    void (*matmul_nt)(const T* a, const T* b, T* c,
                      std::size_t m, std::size_t k, std::size_t n);  // C[m,n] += A[m,k] B[n,k]^T
    void (*matmul_tn)(const T* a, const T* b, T* c,
                      std::size_t m, std::size_t k, std::size_t n);  // C[m,n] += A[k,m]^T B[k,n]
    // Decoupled-weight-decay adaptive-moment update, one parameter block.
    // bias1/bias2 are the step's bias corrections 1-beta^t.
    void (*adamw)(T* p, T* m, T* v, const T* g, std::size_t n,
                  T lr, T beta1, T beta2, T eps, T wd, T bias1, T bias2);
};

bool cpu_has_avx2();
Isa detect_isa();   // CPUID + LONGRED_KERNELS override
Isa active_isa();
void force_isa(Isa isa);

template <typename T> const Table<T>& table(Isa isa);
template <typename T> const Table<T>& active();

extern template const Table<float>& table<float>(Isa);
extern template const Table<double>& table<double>(Isa);
extern template const Table<float>& active<float>();
extern template const Table<double>& active<double>();

namespace detail {
template <typename T> const Table<T>& scalar_table();
template <typename T> const Table<T>& avx2_table();  // null fns when not built
extern template const Table<float>& scalar_table<float>();
extern template const Table<double>& scalar_table<double>();
template <> const Table<float>& avx2_table<float>();
template <> const Table<double>& avx2_table<double>();
}  // namespace detail

}  // namespace longred::kern
