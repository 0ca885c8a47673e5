#include "longred/drift.hpp"

#include <cmath>

#include "longred/errors.hpp"

namespace longred {

namespace {

constexpr double kKlClamp = 1e-12;
constexpr double kRowSumTol = 1e-4;

template <typename T>
std::vector<double> to_double(const Tensor<T>& t) {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<double>(t[i]);
    return out;
}

}  // namespace

double hidden_similarity(std::span<const double> h, std::span<const double> h_hat,
                         std::size_t rows, std::size_t dim) {
    if (h.size() != rows * dim || h_hat.size() != rows * dim)
        throw ConfigError("hidden_similarity: shape mismatch");
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* a = h.data() + r * dim;
        const double* b = h_hat.data() + r * dim;
        double na = 0.0, nb = 0.0, d = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            na += a[j] * a[j];
            nb += b[j] * b[j];
            d += a[j] * b[j];
        }
        if (na <= 0.0 || nb <= 0.0) throw NumericError("hidden_similarity: zero-norm row");
        total += d / (std::sqrt(na) * std::sqrt(nb));
    }
    return total / static_cast<double>(rows);
}

double attention_kld(std::span<const double> a, std::span<const double> a_hat, std::size_t t) {
    if (a.size() != t * t || a_hat.size() != t * t)
        throw ConfigError("attention_kld: shape mismatch");
    double total = 0.0;
    for (std::size_t r = 0; r < t; ++r) {
        const double* p = a.data() + r * t;
        const double* q = a_hat.data() + r * t;
        double sp = 0.0, sq = 0.0;
        for (std::size_t j = 0; j <= r; ++j) {
            sp += p[j];
            sq += q[j];
        }
        if (std::abs(sp - 1.0) > kRowSumTol || std::abs(sq - 1.0) > kRowSumTol)
            throw NumericError("attention_kld: row not normalized over the causal prefix");
        double row = 0.0;
        for (std::size_t j = 0; j <= r; ++j) {
            if (p[j] <= 0.0) continue;
            row += p[j] * std::log(p[j] / std::max(q[j], kKlClamp));
        }
        total += row;
    }
    return total / static_cast<double>(t);
}

template <typename T>
double hidden_similarity(const Tensor<T>& h, const Tensor<T>& h_hat) {
    if (h.shape() != h_hat.shape() || h.rank() != 2)
        throw ConfigError("hidden_similarity: rank-2 tensors of equal shape required");
    return hidden_similarity(to_double(h), to_double(h_hat), h.shape()[0], h.shape()[1]);
}

template <typename T>
double attention_kld(const Tensor<T>& a, const Tensor<T>& a_hat) {
    if (a.shape() != a_hat.shape() || a.rank() != 2 || a.shape()[0] != a.shape()[1])
        throw ConfigError("attention_kld: square tensors of equal shape required");
    return attention_kld(to_double(a), to_double(a_hat), a.shape()[0]);
}

std::vector<double> DriftReport::layer_kld() const {
    std::vector<double> out;
    out.reserve(head_kld.size());
    for (const auto& heads_v : head_kld) {
        double s = 0.0;
        for (const double v : heads_v) s += v;
        out.push_back(heads_v.empty() ? 0.0 : s / static_cast<double>(heads_v.size()));
    }
    return out;
}

double DriftReport::mean_similarity() const {
    double s = 0.0;
    for (const double v : layer_similarity) s += v;
    return layer_similarity.empty() ? 0.0 : s / static_cast<double>(layer_similarity.size());
}

double DriftReport::mean_kld() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& heads_v : head_kld) {
        for (const double v : heads_v) {
            s += v;
            ++n;
        }
    }
    return n == 0 ? 0.0 : s / static_cast<double>(n);
}

template <typename T>
DriftReport drift_report(const DecoderModel<T>& reference, const DecoderModel<T>& candidate,
                         std::span<const std::vector<std::int32_t>> batch,
                         const PositionPlan& plan) {
    const auto& rc = reference.config();
    const auto& cc = candidate.config();
    if (!rc.same_architecture(cc))
        throw ConfigError("drift_report: models differ in architecture");
    if (batch.empty()) throw ConfigError("drift_report: empty batch");
    const std::size_t len = batch.front().size();
    for (const auto& seq : batch)
        if (seq.size() != len) throw ConfigError("drift_report: ragged batch");

    DriftReport rep;
    rep.layers = rc.layers;
    rep.heads = rc.heads;
    rep.sample_count = static_cast<int>(batch.size());
    rep.sequence_length = static_cast<int>(len);
    rep.layer_similarity.assign(static_cast<std::size_t>(rc.layers) + 1, 0.0);
    rep.head_kld.assign(static_cast<std::size_t>(rc.layers),
                        std::vector<double>(static_cast<std::size_t>(rc.heads), 0.0));

    for (const auto& seq : batch) {
        Graph<T> gr(false), gc(false);
        LayerTrace<T> tr, tc;
        reference.forward(gr, seq, plan, CaptureFlags::all(), &tr);
        candidate.forward(gc, seq, plan, CaptureFlags::all(), &tc);
        for (int l = 0; l <= rc.layers; ++l) {
            rep.layer_similarity[static_cast<std::size_t>(l)] +=
                hidden_similarity(tr.hidden[static_cast<std::size_t>(l)],
                                  tc.hidden[static_cast<std::size_t>(l)]);
        }
        for (int l = 0; l < rc.layers; ++l)
            for (int h = 0; h < rc.heads; ++h)
                rep.head_kld[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)] +=
                    attention_kld(tr.attention[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)],
                                  tc.attention[static_cast<std::size_t>(l)][static_cast<std::size_t>(h)]);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& v : rep.layer_similarity) v *= inv;
    for (auto& heads_v : rep.head_kld)
        for (auto& v : heads_v) v *= inv;
    return rep;
}

template <typename T>
DriftReport drift_report(const DecoderModel<T>& reference, const DecoderModel<T>& candidate,
                         std::span<const std::vector<std::int32_t>> batch) {
    if (batch.empty()) throw ConfigError("drift_report: empty batch");
    return drift_report(reference, candidate, batch,
                        PositionPlan::identity(static_cast<std::int64_t>(batch.front().size())));
}

template <typename T>
PositionalVectorSet positional_vectors(const DecoderModel<T>& model,
                                       std::span<const std::vector<std::int32_t>> batch,
                                       const PositionPlan& plan) {
    if (batch.empty()) throw ConfigError("positional_vectors: empty batch");
    const std::size_t len = batch.front().size();
    for (const auto& seq : batch)
        if (seq.size() != len) throw ConfigError("positional_vectors: ragged batch");

    const auto& cfg = model.config();
    PositionalVectorSet set;
    set.layers = cfg.layers;
    set.sequence_length = static_cast<int>(len);
    set.dim = cfg.d_model;
    set.sample_count = static_cast<int>(batch.size());
    set.vectors.assign(static_cast<std::size_t>(cfg.layers) + 1,
                       std::vector<double>(len * static_cast<std::size_t>(cfg.d_model), 0.0));

    for (const auto& seq : batch) {
        Graph<T> g(false);
        LayerTrace<T> trace;
        model.forward(g, seq, plan, CaptureFlags{true, false}, &trace);
        for (int l = 0; l <= cfg.layers; ++l) {
            const auto& h = trace.hidden[static_cast<std::size_t>(l)];
            auto& acc = set.vectors[static_cast<std::size_t>(l)];
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(h[i]);
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    for (auto& layer : set.vectors)
        for (auto& v : layer) v *= inv;
    return set;
}

std::vector<double> posvec_similarity_matrix(const PositionalVectorSet& set, int layer) {
    if (layer < 0 || layer > set.layers)
        throw ConfigError("posvec_similarity_matrix: layer out of range");
    const auto t = static_cast<std::size_t>(set.sequence_length);
    const auto d = static_cast<std::size_t>(set.dim);
    const auto& vecs = set.vectors[static_cast<std::size_t>(layer)];

    std::vector<double> norms(t);
    for (std::size_t i = 0; i < t; ++i) {
        double n = 0.0;
        for (std::size_t j = 0; j < d; ++j) n += vecs[i * d + j] * vecs[i * d + j];
        if (n <= 0.0) throw NumericError("posvec_similarity_matrix: zero-norm positional vector");
        norms[i] = std::sqrt(n);
    }
    std::vector<double> m(t * t, 1.0);
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = i + 1; j < t; ++j) {
            double dp = 0.0;
            for (std::size_t k = 0; k < d; ++k) dp += vecs[i * d + k] * vecs[j * d + k];
            const double c = dp / (norms[i] * norms[j]);
            m[i * t + j] = c;
            m[j * t + i] = c;
        }
    }
    return m;
}

template double hidden_similarity<float>(const Tensor<float>&, const Tensor<float>&);
template double hidden_similarity<double>(const Tensor<double>&, const Tensor<double>&);
template double attention_kld<float>(const Tensor<float>&, const Tensor<float>&);
template double attention_kld<double>(const Tensor<double>&, const Tensor<double>&);

template DriftReport drift_report<float>(const DecoderModel<float>&, const DecoderModel<float>&,
                                         std::span<const std::vector<std::int32_t>>,
                                         const PositionPlan&);
template DriftReport drift_report<double>(const DecoderModel<double>&, const DecoderModel<double>&,
                                          std::span<const std::vector<std::int32_t>>,
                                          const PositionPlan&);
template DriftReport drift_report<float>(const DecoderModel<float>&, const DecoderModel<float>&,
                                         std::span<const std::vector<std::int32_t>>);
template DriftReport drift_report<double>(const DecoderModel<double>&, const DecoderModel<double>&,
                                          std::span<const std::vector<std::int32_t>>);
template PositionalVectorSet positional_vectors<float>(const DecoderModel<float>&,
                                                       std::span<const std::vector<std::int32_t>>,
                                                       const PositionPlan&);
template PositionalVectorSet positional_vectors<double>(const DecoderModel<double>&,
                                                        std::span<const std::vector<std::int32_t>>,
                                                        const PositionPlan&);

}  // namespace longred
