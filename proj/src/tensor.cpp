#include "longred/tensor.hpp"

#include <atomic>
#include <cmath>
#include <cstring>

#include "longred/kernels.hpp"

namespace longred {

namespace {

std::atomic<std::uint64_t> g_graph_uid{1};

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        if (d == 0) throw ConfigError("tensor shape extents must be positive");
        n *= d;
    }
    return n;
}

template <typename T>
bool needs_adj(const TensorImpl<T>* t) {
    return t->tracked || t->requires_grad;
}

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
    if (a.shape() != b.shape())
        throw ConfigError(std::string(op) + ": shape mismatch");
}

}  // namespace

template <> const char* dtype_name<float>() { return "f32"; }
template <> const char* dtype_name<double>() { return "f64"; }

// ---------------------------------------------------------------- Tensor

template <typename T>
Tensor<T> Tensor<T>::zeros(std::vector<std::size_t> shape) {
    auto impl = std::make_shared<TensorImpl<T>>();
    const std::size_t n = shape_product(shape);
    impl->shape = std::move(shape);
    impl->value.assign(n, T(0));
    return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::full(std::vector<std::size_t> shape, T v) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.impl_->value.begin(), t.impl_->value.end(), v);
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::from(std::vector<std::size_t> shape, std::vector<T> data) {
    if (shape_product(shape) != data.size())
        throw ConfigError("tensor data length does not match shape");
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->value = std::move(data);
    return Tensor(std::move(impl));
}

template <typename T>
std::size_t Tensor<T>::rows() const {
    std::size_t r = 1;
    for (std::size_t i = 0; i + 1 < impl_->shape.size(); ++i) r *= impl_->shape[i];
    return r;
}

template <typename T>
T Tensor<T>::item() const {
    if (size() != 1) throw ConfigError("item(): tensor is not scalar");
    return impl_->value[0];
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    if (on)
        impl_->grad.assign(impl_->value.size(), T(0));
    else
        impl_->grad.clear();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
    if (!impl_->requires_grad) throw ConfigError("grad(): tensor does not require grad");
    return impl_->grad;
}

template <typename T>
std::span<T> Tensor<T>::grad_mut() {
    if (!impl_->requires_grad) throw ConfigError("grad(): tensor does not require grad");
    return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
bool Tensor<T>::all_finite() const {
    for (const T v : impl_->value)
        if (!std::isfinite(v)) return false;
    return true;
}

template <typename T>
void Tensor<T>::assert_finite(const std::string& what) const {
    if (!all_finite()) throw NumericError(what + ": non-finite values");
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    return from(impl_->shape, impl_->value);
}

// ---------------------------------------------------------------- RopeTable

RopeTable RopeTable::build(std::span<const double> effective_positions, double theta,
                           std::size_t dim) {
    if (dim % 2 != 0) throw ConfigError("rope: head dimension must be even");
    if (theta <= 1.0) throw ConfigError("rope: base must be > 1");
    RopeTable t;
    t.len = effective_positions.size();
    t.pairs = dim / 2;
    t.cosv.resize(t.len * t.pairs);
    t.sinv.resize(t.len * t.pairs);
    std::vector<double> freq(t.pairs);
    for (std::size_t i = 0; i < t.pairs; ++i)
        freq[i] = std::pow(theta, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
    for (std::size_t p = 0; p < t.len; ++p) {
        for (std::size_t i = 0; i < t.pairs; ++i) {
            const double angle = effective_positions[p] * freq[i];
            t.cosv[p * t.pairs + i] = std::cos(angle);
            t.sinv[p * t.pairs + i] = std::sin(angle);
        }
    }
    return t;
}

// ---------------------------------------------------------------- Graph

template <typename T>
Graph<T>::Graph(bool recording)
    : recording_(recording), uid_(g_graph_uid.fetch_add(1)) {}

template <typename T>
Tensor<T> Graph<T>::make(std::vector<std::size_t> shape) {
    return Tensor<T>::zeros(std::move(shape));
}

template <typename T>
int Graph<T>::touch(const Tensor<T>& t) {
    auto* impl = t.impl();
    if (impl->graph_uid != uid_) {
        impl->graph_uid = uid_;
        impl->graph_id = static_cast<int>(nodes_.size());
        impl->tracked = false;
        nodes_.push_back(t.ptr());
    }
    return impl->graph_id;
}

template <typename T>
bool Graph<T>::will_track(std::initializer_list<const Tensor<T>*> inputs) const {
    if (!recording_) return false;
    for (const auto* in : inputs) {
        auto* impl = in->impl();
        if (impl->requires_grad) return true;
        if (impl->graph_uid == uid_ && impl->tracked) return true;
    }
    return false;
}

template <typename T>
void Graph<T>::finish(OpKind kind, std::initializer_list<const Tensor<T>*> inputs,
                      Tensor<T>& out, std::function<void()> bwd) {
    if (!will_track(inputs)) return;
    OpRecord rec;
    rec.kind = kind;
    for (const auto* in : inputs) rec.inputs.push_back(touch(*in));
    rec.output = touch(out);
    out.impl()->tracked = true;
    records_.push_back(std::move(rec));
    tape_.push_back(std::move(bwd));
}

template <typename T>
void Graph<T>::backward(const Tensor<T>& loss) {
    if (!recording_) throw ConfigError("backward on a non-recording graph");
    if (loss.size() != 1) throw ConfigError("backward requires a scalar loss");
    auto* li = loss.impl();
    if (li->graph_uid != uid_ || !li->tracked)
        throw ConfigError("backward: loss is not tracked by this graph");

    for (auto& node : nodes_)
        if (needs_adj(node.get())) node->adj.assign(node->value.size(), T(0));
    li->adj[0] = T(1);

    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();

    for (auto& node : nodes_) {
        if (node->requires_grad && !node->adj.empty())
            kern::active<T>().axpy(T(1), node->adj.data(), node->grad.data(), node->grad.size());
    }
}

template <typename T>
void Graph<T>::clear() {
    nodes_.clear();
    tape_.clear();
    records_.clear();
    uid_ = g_graph_uid.fetch_add(1);
}

// ---------------------------------------------------------------- ops

template <typename T>
Tensor<T> Graph<T>::matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
        throw ConfigError("matmul: incompatible shapes");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
    Tensor<T> out = make({m, n});
    kern::active<T>().matmul_nn(a.data(), b.data(), out.data(), m, k, n);

    auto ai = a.ptr(), bi = b.ptr(), oi = out.ptr();
    finish(OpKind::matmul, {&a, &b}, out, [ai, bi, oi, m, k, n]() {
        const auto& kt = kern::active<T>();
        if (needs_adj(ai.get()))
            kt.matmul_nt(oi->adj.data(), bi->value.data(), ai->adj.data(), m, n, k);
        if (needs_adj(bi.get()))
            kt.matmul_tn(ai->value.data(), oi->adj.data(), bi->adj.data(), k, m, n);
    });
    return out;
}

template <typename T>
Tensor<T> Graph<T>::matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[1])
        throw ConfigError("matmul_nt: incompatible shapes");
    const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
    Tensor<T> out = make({m, n});
    kern::active<T>().matmul_nt(a.data(), b.data(), out.data(), m, k, n);

    auto ai = a.ptr(), bi = b.ptr(), oi = out.ptr();
    finish(OpKind::matmul_nt, {&a, &b}, out, [ai, bi, oi, m, k, n]() {
        const auto& kt = kern::active<T>();
        if (needs_adj(ai.get()))
            kt.matmul_nn(oi->adj.data(), bi->value.data(), ai->adj.data(), m, n, k);
        if (needs_adj(bi.get()))
            kt.matmul_tn(oi->adj.data(), ai->value.data(), bi->adj.data(), n, m, k);
    });
    return out;
}

template <typename T>
Tensor<T> Graph<T>::add(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "add");
    Tensor<T> out = make(a.shape());
    kern::active<T>().add(a.data(), b.data(), out.data(), a.size());

    auto ai = a.ptr(), bi = b.ptr(), oi = out.ptr();
    finish(OpKind::add, {&a, &b}, out, [ai, bi, oi]() {
        const auto& kt = kern::active<T>();
        if (needs_adj(ai.get())) kt.axpy(T(1), oi->adj.data(), ai->adj.data(), ai->adj.size());
        if (needs_adj(bi.get())) kt.axpy(T(1), oi->adj.data(), bi->adj.data(), bi->adj.size());
    });
    return out;
}

template <typename T>
Tensor<T> Graph<T>::mul(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mul");
    Tensor<T> out = make(a.shape());
    kern::active<T>().mul(a.data(), b.data(), out.data(), a.size());

    auto ai = a.ptr(), bi = b.ptr(), oi = out.ptr();
    finish(OpKind::mul, {&a, &b}, out, [ai, bi, oi]() {
        const auto& kt = kern::active<T>();
        if (needs_adj(ai.get()))
            kt.mul_acc(oi->adj.data(), bi->value.data(), ai->adj.data(), ai->adj.size());
        if (needs_adj(bi.get()))
            kt.mul_acc(oi->adj.data(), ai->value.data(), bi->adj.data(), bi->adj.size());
    });
    return out;
}

template <typename T>
Tensor<T> Graph<T>::scale(const Tensor<T>& a, double s) {
    Tensor<T> out = make(a.shape());
    const T sv = static_cast<T>(s);
    const T* av = a.data();
    T* ov = out.data();
    for (std::size_t i = 0; i < a.size(); ++i) ov[i] = sv * av[i];

    auto ai = a.ptr(), oi = out.ptr();
    finish(OpKind::scale, {&a}, out, [ai, oi, sv]() {
        if (needs_adj(ai.get()))
            kern::active<T>().axpy(sv, oi->adj.data(), ai->adj.data(), ai->adj.size());
    });
    return out;
}

template <typename T>
Tensor<T> Graph<T>::silu(const Tensor<T>& a) {
    Tensor<T> out = make(a.shape());
    auto sig = std::make_shared<std::vector<T>>(a.size());
    const T* av = a.data();
    T* ov = out.data();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const T s = T(1) / (T(1) + std::exp(-av[i]));
        (*sig)[i] = s;
        ov[i] = av[i] * s;
    }

    auto ai = a.ptr(), oi = out.ptr();
    finish(OpKind::silu, {&a}, out, [ai, oi, sig]() {
        if (!needs_adj(ai.get())) return;
        const T* x = ai->value.data();
        const T* go = oi->adj.data();
        T* gx = ai->adj.data();
        const T* s = sig->data();
        for (std::size_t i = 0; i < ai->adj.size(); ++i)
            gx[i] += go[i] * s[i] * (T(1) + x[i] * (T(1) - s[i]));
    });
    return out;
}

template <typename T>
Tensor<T> Graph<T>::rmsnorm(const Tensor<T>& x, const Tensor<T>& w, double eps) {
    if (x.rank() != 2 || w.rank() != 1 || x.shape()[1] != w.shape()[0])
        throw ConfigError("rmsnorm: incompatible shapes");
    const std::size_t rows = x.shape()[0], d = x.shape()[1];
    Tensor<T> out = make(x.shape());
    auto inv_rms = std::make_shared<std::vector<T>>(rows);
    const auto& kt = kern::active<T>();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + r * d;
        const T ms = kt.sumsq(xr, d) / static_cast<T>(d);
        const T ir = T(1) / std::sqrt(ms + static_cast<T>(eps));
        (*inv_rms)[r] = ir;
        T* or_ = out.data() + r * d;
        const T* wv = w.data();
        for (std::size_t j = 0; j < d; ++j) or_[j] = xr[j] * wv[j] * ir;
    }

    auto xi = x.ptr(), wi = w.ptr(), oi = out.ptr();
    finish(OpKind::rmsnorm, {&x, &w}, out, [xi, wi, oi, inv_rms, rows, d]() {
        const T* wv = wi->value.data();
        for (std::size_t r = 0; r < rows; ++r) {
            const T* xr = xi->value.data() + r * d;
            const T* go = oi->adj.data() + r * d;
            const T ir = (*inv_rms)[r];
            if (needs_adj(xi.get())) {
                // u = go .* w ; gx += ir*u - x * ir^3/d * <u, x>
                T dotux = 0;
                for (std::size_t j = 0; j < d; ++j) dotux += go[j] * wv[j] * xr[j];
                const T c = ir * ir * ir * dotux / static_cast<T>(d);
                T* gx = xi->adj.data() + r * d;
                for (std::size_t j = 0; j < d; ++j) gx[j] += ir * go[j] * wv[j] - c * xr[j];
            }
            if (needs_adj(wi.get())) {
                T* gw = wi->adj.data();
                for (std::size_t j = 0; j < d; ++j) gw[j] += go[j] * xr[j] * ir;
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> Graph<T>::softmax_rows(const Tensor<T>& x) {
    if (x.rank() < 1) throw ConfigError("softmax_rows: rank must be >= 1");
    x.assert_finite("softmax_rows input");
    const std::size_t rows = x.rows(), n = x.cols();
    if (n < 1) throw ConfigError("softmax_rows: empty rows");
    Tensor<T> out = make(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = x.data() + r * n;
        T* yr = out.data() + r * n;
        T mx = xr[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xr[j]);
        T total = 0;
        for (std::size_t j = 0; j < n; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            total += yr[j];
        }
        const T inv = T(1) / total;
        for (std::size_t j = 0; j < n; ++j) yr[j] *= inv;
    }

    auto xi = x.ptr(), oi = out.ptr();
    finish(OpKind::softmax_rows, {&x}, out, [xi, oi, rows, n]() {
        if (!needs_adj(xi.get())) return;
        for (std::size_t r = 0; r < rows; ++r) {
            const T* y = oi->value.data() + r * n;
            const T* go = oi->adj.data() + r * n;
            T* gx = xi->adj.data() + r * n;
            const T s = kern::active<T>().dot(go, y, n);
            for (std::size_t j = 0; j < n; ++j) gx[j] += y[j] * (go[j] - s);
        }
    });
    return out;
}

template <typename T>
Tensor<T> Graph<T>::softmax_causal(const Tensor<T>& x) {
    if (x.rank() != 2 || x.shape()[0] != x.shape()[1])
        throw ConfigError("softmax_causal: square matrix required");
    x.assert_finite("softmax_causal input");
    const std::size_t n = x.shape()[0];
    Tensor<T> out = make(x.shape());
    for (std::size_t t = 0; t < n; ++t) {
        const T* xr = x.data() + t * n;
        T* yr = out.data() + t * n;
        T mx = xr[0];
        for (std::size_t j = 1; j <= t; ++j) mx = std::max(mx, xr[j]);
        T total = 0;
        for (std::size_t j = 0; j <= t; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            total += yr[j];
        }
        const T inv = T(1) / total;
        for (std::size_t j = 0; j <= t; ++j) yr[j] *= inv;
        // entries j > t stay exactly zero
    }

    auto xi = x.ptr(), oi = out.ptr();
    finish(OpKind::softmax_causal, {&x}, out, [xi, oi, n]() {
        if (!needs_adj(xi.get())) return;
        for (std::size_t t = 0; t < n; ++t) {
            const T* y = oi->value.data() + t * n;
            const T* go = oi->adj.data() + t * n;
            T* gx = xi->adj.data() + t * n;
            const T s = kern::active<T>().dot(go, y, t + 1);
            for (std::size_t j = 0; j <= t; ++j) gx[j] += y[j] * (go[j] - s);
        }
    });
    return out;
}

template <typename T>
Tensor<T> Graph<T>::rope(const Tensor<T>& x, const RopeTable& table) {
    if (x.rank() != 2) throw ConfigError("rope: rank-2 input required");
    const std::size_t len = x.shape()[0], d = x.shape()[1];
    if (d % 2 != 0) throw ConfigError("rope: head dimension must be even");
    if (table.len != len || table.pairs != d / 2)
        throw ConfigError("rope: table does not match input");
    Tensor<T> out = make(x.shape());
    const std::size_t pairs = d / 2;
    for (std::size_t t = 0; t < len; ++t) {
        const T* xr = x.data() + t * d;
        T* yr = out.data() + t * d;
        const double* cv = table.cosv.data() + t * pairs;
        const double* sv = table.sinv.data() + t * pairs;
        for (std::size_t i = 0; i < pairs; ++i) {
            const T c = static_cast<T>(cv[i]);
            const T s = static_cast<T>(sv[i]);
            const T x0 = xr[2 * i], x1 = xr[2 * i + 1];
            yr[2 * i] = x0 * c - x1 * s;
            yr[2 * i + 1] = x0 * s + x1 * c;
        }
    }

    auto xi = x.ptr(), oi = out.ptr();
    // backward rotates the adjoint by the negated angle
    auto cosv = std::make_shared<std::vector<double>>(table.cosv);
    auto sinv = std::make_shared<std::vector<double>>(table.sinv);
    finish(OpKind::rope, {&x}, out, [xi, oi, cosv, sinv, len, pairs]() {
        if (!needs_adj(xi.get())) return;
        for (std::size_t t = 0; t < len; ++t) {
            const T* go = oi->adj.data() + t * pairs * 2;
            T* gx = xi->adj.data() + t * pairs * 2;
            const double* cv = cosv->data() + t * pairs;
            const double* sv = sinv->data() + t * pairs;
            for (std::size_t i = 0; i < pairs; ++i) {
                const T c = static_cast<T>(cv[i]);
                const T s = static_cast<T>(sv[i]);
                gx[2 * i] += go[2 * i] * c + go[2 * i + 1] * s;
                gx[2 * i + 1] += -go[2 * i] * s + go[2 * i + 1] * c;
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> Graph<T>::embedding(const Tensor<T>& table, std::span<const std::int32_t> ids) {
    if (table.rank() != 2) throw ConfigError("embedding: rank-2 table required");
    const std::size_t v = table.shape()[0], d = table.shape()[1];
    for (const auto id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= v)
            throw ConfigError("embedding: token id out of vocabulary range");
    Tensor<T> out = make({ids.size(), d});
    for (std::size_t t = 0; t < ids.size(); ++t)
        std::memcpy(out.data() + t * d, table.data() + static_cast<std::size_t>(ids[t]) * d,
                    d * sizeof(T));

    auto ti = table.ptr(), oi = out.ptr();
    auto idv = std::make_shared<std::vector<std::int32_t>>(ids.begin(), ids.end());
    finish(OpKind::embedding, {&table}, out, [ti, oi, idv, d]() {
        if (!needs_adj(ti.get())) return;
        const auto& kt = kern::active<T>();
        for (std::size_t t = 0; t < idv->size(); ++t)
            kt.axpy(T(1), oi->adj.data() + t * d,
                    ti->adj.data() + static_cast<std::size_t>((*idv)[t]) * d, d);
    });
    return out;
}

template <typename T>
Tensor<T> Graph<T>::cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> targets) {
    if (logits.rank() != 2) throw ConfigError("cross_entropy: rank-2 logits required");
    const std::size_t rows = logits.shape()[0], v = logits.shape()[1];
    if (targets.size() != rows) throw ConfigError("cross_entropy: target count mismatch");
    for (const auto t : targets)
        if (t < 0 || static_cast<std::size_t>(t) >= v)
            throw ConfigError("cross_entropy: target out of vocabulary range");

    auto probs = std::make_shared<std::vector<T>>(rows * v);
    double total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        const T* z = logits.data() + r * v;
        T* p = probs->data() + r * v;
        T mx = z[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, z[j]);
        T se = 0;
        for (std::size_t j = 0; j < v; ++j) {
            p[j] = std::exp(z[j] - mx);
            se += p[j];
        }
        const T inv = T(1) / se;
        for (std::size_t j = 0; j < v; ++j) p[j] *= inv;
        const double lse = static_cast<double>(mx) + std::log(static_cast<double>(se));
        total += lse - static_cast<double>(z[targets[r]]);
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(rows)));

    auto li = logits.ptr(), oi = out.ptr();
    auto tgt = std::make_shared<std::vector<std::int32_t>>(targets.begin(), targets.end());
    finish(OpKind::cross_entropy, {&logits}, out, [li, oi, probs, tgt, rows, v]() {
        if (!needs_adj(li.get())) return;
        const T g = oi->adj[0] / static_cast<T>(rows);
        T* gl = li->adj.data();
        const T* p = probs->data();
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < v; ++j) gl[r * v + j] += g * p[r * v + j];
            gl[r * v + static_cast<std::size_t>((*tgt)[r])] -= g;
        }
    });
    return out;
}

template <typename T>
Tensor<T> Graph<T>::cosine(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "cosine");
    const std::size_t n = a.size();
    const auto& kt = kern::active<T>();
    const T na2 = kt.sumsq(a.data(), n);
    const T nb2 = kt.sumsq(b.data(), n);
    if (na2 <= T(0) || nb2 <= T(0))
        throw NumericError("cosine: zero-norm vector");
    const T na = std::sqrt(na2), nb = std::sqrt(nb2);
    const T d = kt.dot(a.data(), b.data(), n);
    const T c = d / (na * nb);
    Tensor<T> out = Tensor<T>::scalar(c);

    auto ai = a.ptr(), bi = b.ptr(), oi = out.ptr();
    finish(OpKind::cosine, {&a, &b}, out, [ai, bi, oi, na, nb, c, n]() {
        const T g = oi->adj[0];
        const T* av = ai->value.data();
        const T* bv = bi->value.data();
        if (needs_adj(ai.get())) {
            T* ga = ai->adj.data();
            const T ka = g / (na * nb), kb = g * c / (na * na);
            for (std::size_t i = 0; i < n; ++i) ga[i] += ka * bv[i] - kb * av[i];
        }
        if (needs_adj(bi.get())) {
            T* gb = bi->adj.data();
            const T ka = g / (na * nb), kb = g * c / (nb * nb);
            for (std::size_t i = 0; i < n; ++i) gb[i] += ka * av[i] - kb * bv[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> Graph<T>::mean_row_cosine(const Tensor<T>& a, const Tensor<T>& b) {
    check_same_shape(a, b, "mean_row_cosine");
    if (a.rank() != 2) throw ConfigError("mean_row_cosine: rank-2 inputs required");
    const std::size_t rows = a.shape()[0], d = a.shape()[1];
    const auto& kt = kern::active<T>();
    auto na = std::make_shared<std::vector<T>>(rows);
    auto nb = std::make_shared<std::vector<T>>(rows);
    auto cs = std::make_shared<std::vector<T>>(rows);
    double total = 0;
    for (std::size_t r = 0; r < rows; ++r) {
        const T* ar = a.data() + r * d;
        const T* br = b.data() + r * d;
        const T na2 = kt.sumsq(ar, d), nb2 = kt.sumsq(br, d);
        if (na2 <= T(0) || nb2 <= T(0))
            throw NumericError("mean_row_cosine: zero-norm row");
        (*na)[r] = std::sqrt(na2);
        (*nb)[r] = std::sqrt(nb2);
        (*cs)[r] = kt.dot(ar, br, d) / ((*na)[r] * (*nb)[r]);
        total += static_cast<double>((*cs)[r]);
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(rows)));

    auto ai = a.ptr(), bi = b.ptr(), oi = out.ptr();
    finish(OpKind::mean_row_cosine, {&a, &b}, out, [ai, bi, oi, na, nb, cs, rows, d]() {
        const T g = oi->adj[0] / static_cast<T>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
            const T* av = ai->value.data() + r * d;
            const T* bv = bi->value.data() + r * d;
            const T nar = (*na)[r], nbr = (*nb)[r], c = (*cs)[r];
            if (needs_adj(ai.get())) {
                T* ga = ai->adj.data() + r * d;
                const T ka = g / (nar * nbr), kb = g * c / (nar * nar);
                for (std::size_t i = 0; i < d; ++i) ga[i] += ka * bv[i] - kb * av[i];
            }
            if (needs_adj(bi.get())) {
                T* gb = bi->adj.data() + r * d;
                const T ka = g / (nar * nbr), kb = g * c / (nbr * nbr);
                for (std::size_t i = 0; i < d; ++i) gb[i] += ka * av[i] - kb * bv[i];
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> Graph<T>::slice_cols(const Tensor<T>& x, std::size_t c0, std::size_t c1) {
    if (x.rank() != 2 || c1 > x.shape()[1] || c0 >= c1)
        throw ConfigError("slice_cols: bad column range");
    const std::size_t rows = x.shape()[0], d = x.shape()[1], w = c1 - c0;
    Tensor<T> out = make({rows, w});
    for (std::size_t r = 0; r < rows; ++r)
        std::memcpy(out.data() + r * w, x.data() + r * d + c0, w * sizeof(T));

    auto xi = x.ptr(), oi = out.ptr();
    finish(OpKind::slice_cols, {&x}, out, [xi, oi, rows, d, w, c0]() {
        if (!needs_adj(xi.get())) return;
        const auto& kt = kern::active<T>();
        for (std::size_t r = 0; r < rows; ++r)
            kt.axpy(T(1), oi->adj.data() + r * w, xi->adj.data() + r * d + c0, w);
    });
    return out;
}

template <typename T>
Tensor<T> Graph<T>::concat_cols(std::span<const Tensor<T>> xs) {
    if (xs.empty()) throw ConfigError("concat_cols: no inputs");
    const std::size_t rows = xs[0].shape()[0];
    std::size_t total = 0;
    for (const auto& x : xs) {
        if (x.rank() != 2 || x.shape()[0] != rows)
            throw ConfigError("concat_cols: row count mismatch");
        total += x.shape()[1];
    }
    Tensor<T> out = make({rows, total});
    std::size_t off = 0;
    for (const auto& x : xs) {
        const std::size_t w = x.shape()[1];
        for (std::size_t r = 0; r < rows; ++r)
            std::memcpy(out.data() + r * total + off, x.data() + r * w, w * sizeof(T));
        off += w;
    }

    std::vector<std::shared_ptr<TensorImpl<T>>> parts;
    parts.reserve(xs.size());
    for (const auto& x : xs) parts.push_back(x.ptr());
    auto oi = out.ptr();
    auto bwd = [parts, oi, rows, total]() {
        const auto& kt = kern::active<T>();
        std::size_t off2 = 0;
        for (const auto& p : parts) {
            const std::size_t w = p->shape[1];
            if (needs_adj(p.get())) {
                for (std::size_t r = 0; r < rows; ++r)
                    kt.axpy(T(1), oi->adj.data() + r * total + off2, p->adj.data() + r * w, w);
            }
            off2 += w;
        }
    };
    // finish() needs raw pointers; build the list explicitly
    std::vector<const Tensor<T>*> in_ptrs;
    bool track = recording_;
    if (recording_) {
        bool any = false;
        for (const auto& x : xs) {
            auto* impl = x.impl();
            if (impl->requires_grad || (impl->graph_uid == uid_ && impl->tracked)) any = true;
        }
        track = any;
    }
    if (track) {
        OpRecord rec;
        rec.kind = OpKind::concat_cols;
        for (const auto& x : xs) rec.inputs.push_back(touch(x));
        rec.output = touch(out);
        out.impl()->tracked = true;
        records_.push_back(std::move(rec));
        tape_.push_back(std::move(bwd));
    }
    return out;
}

template <typename T>
Tensor<T> Graph<T>::sum(const Tensor<T>& x) {
    Tensor<T> out = Tensor<T>::scalar(kern::active<T>().sum(x.data(), x.size()));
    auto xi = x.ptr(), oi = out.ptr();
    finish(OpKind::sum, {&x}, out, [xi, oi]() {
        if (!needs_adj(xi.get())) return;
        const T g = oi->adj[0];
        T* gx = xi->adj.data();
        for (std::size_t i = 0; i < xi->adj.size(); ++i) gx[i] += g;
    });
    return out;
}

template class Tensor<float>;
template class Tensor<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace longred
