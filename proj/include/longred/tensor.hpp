#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "longred/errors.hpp"

namespace longred {

template <typename T> class Graph;

template <typename T>
struct TensorImpl {
    std::vector<std::size_t> shape;
    std::vector<T> value;
    std::vector<T> grad;  // persistent accumulator, allocated when requires_grad
    std::vector<T> adj;   // pass-local adjoint, managed by Graph::backward
    bool requires_grad = false;
    bool tracked = false;  // participates in the current graph's backward
    std::uint64_t graph_uid = 0;
    int graph_id = -1;
};

template <typename T>
const char* dtype_name();
template <> const char* dtype_name<float>();
template <> const char* dtype_name<double>();

// Dense row-major tensor handle. Value semantics on the handle, shared storage.
template <typename T>
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape);
    static Tensor full(std::vector<std::size_t> shape, T v);
    static Tensor from(std::vector<std::size_t> shape, std::vector<T> data);
    static Tensor scalar(T v) { return from({1}, {v}); }

    bool defined() const { return impl_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return impl_->shape; }
    std::size_t size() const { return impl_->value.size(); }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t rows() const;  // product of all dims but the last
    std::size_t cols() const { return impl_->shape.back(); }

    T* data() { return impl_->value.data(); }
    const T* data() const { return impl_->value.data(); }
    T& operator[](std::size_t i) { return impl_->value[i]; }
    const T& operator[](std::size_t i) const { return impl_->value[i]; }
    T at(std::size_t r, std::size_t c) const { return impl_->value[r * cols() + c]; }
    T item() const;  // scalar tensors only

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool on);
    std::span<const T> grad() const;
    std::span<T> grad_mut();
    void zero_grad();

    bool all_finite() const;
    void assert_finite(const std::string& what) const;

    Tensor clone() const;  // deep copy of values; grad state not copied

    TensorImpl<T>* impl() const { return impl_.get(); }
    const std::shared_ptr<TensorImpl<T>>& ptr() const { return impl_; }

  private:
    friend class Graph<T>;
    explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<TensorImpl<T>> impl_;
};

// Precomputed per-position rotary angles. Angles are evaluated in double no
// matter the model dtype so interpolated (fractional) positions stay exact.
struct RopeTable {
    std::size_t len = 0;
    std::size_t pairs = 0;
    std::vector<double> cosv;  // [len * pairs]
    std::vector<double> sinv;

    static RopeTable build(std::span<const double> effective_positions, double theta,
                           std::size_t dim);
};

enum class OpKind {
    matmul, matmul_nt, add, mul, scale, silu, rmsnorm,
    softmax_rows, softmax_causal, rope, embedding, cross_entropy,
    cosine, mean_row_cosine, slice_cols, concat_cols, sum,
};

struct OpRecord {
    OpKind kind;
    std::vector<int> inputs;
    int output;
};

// Define-by-run tape. Rebuilt per forward pass; insertion order is the
// topological order and backward walks it exactly once in reverse.
//
// backward() accumulates adjoints in pass-local buffers and only at the end
// adds them into persistent grads, so repeating a backward pass adds the
// same contribution again (two passes double every gradient).
template <typename T>
class Graph {
  public:
    explicit Graph(bool recording = true);
    ~Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const { return recording_; }

    Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);     // [m,k]x[k,n]
    Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);  // [m,k]x[n,k]^T
    Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
    Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
    Tensor<T> scale(const Tensor<T>& a, double s);
    Tensor<T> silu(const Tensor<T>& a);
    Tensor<T> rmsnorm(const Tensor<T>& x, const Tensor<T>& w, double eps);
    Tensor<T> softmax_rows(const Tensor<T>& x);
    Tensor<T> softmax_causal(const Tensor<T>& x);
    Tensor<T> rope(const Tensor<T>& x, const RopeTable& table);
    Tensor<T> embedding(const Tensor<T>& table, std::span<const std::int32_t> ids);
    Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets);
    Tensor<T> cosine(const Tensor<T>& a, const Tensor<T>& b);
    Tensor<T> mean_row_cosine(const Tensor<T>& a, const Tensor<T>& b);
    Tensor<T> slice_cols(const Tensor<T>& x, std::size_t c0, std::size_t c1);
    Tensor<T> concat_cols(std::span<const Tensor<T>> xs);
    Tensor<T> sum(const Tensor<T>& x);

    void backward(const Tensor<T>& loss);
    void clear();

    const std::vector<OpRecord>& records() const { return records_; }
    std::size_t node_count() const { return nodes_.size(); }

  private:
    Tensor<T> make(std::vector<std::size_t> shape);
    int touch(const Tensor<T>& t);
    bool will_track(std::initializer_list<const Tensor<T>*> inputs) const;
    void finish(OpKind kind, std::initializer_list<const Tensor<T>*> inputs,
                Tensor<T>& out, std::function<void()> bwd);

    bool recording_;
    std::uint64_t uid_;
    std::vector<std::shared_ptr<TensorImpl<T>>> nodes_;
    std::vector<std::function<void()>> tape_;
    std::vector<OpRecord> records_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace longred
