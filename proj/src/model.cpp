#include "longred/model.hpp"

#include <cmath>

#include "longred/errors.hpp"

namespace longred {

void ModelConfig::validate() const {
    if (layers < 1 || heads < 1 || d_model < 1 || head_dim < 1 || vocab < 1 || window < 1)
        throw ConfigError("model config: all counts must be >= 1");
    if (head_dim % 2 != 0) throw ConfigError("model config: head_dim must be even");
    if (d_model != heads * head_dim)
        throw ConfigError("model config: d_model must equal heads * head_dim");
    if (rope_base <= 1.0) throw ConfigError("model config: rope_base must be > 1");
    if (pi_scale < 1.0) throw ConfigError("model config: pi_scale must be >= 1");
    if (ffn_mult < 1) throw ConfigError("model config: ffn_mult must be >= 1");
}

bool ModelConfig::same_architecture(const ModelConfig& other) const {
    return layers == other.layers && heads == other.heads && d_model == other.d_model &&
           head_dim == other.head_dim && vocab == other.vocab && ffn_mult == other.ffn_mult;
}

PositionPlan PositionPlan::identity(std::int64_t len) {
    PositionPlan p;
    p.indices.resize(static_cast<std::size_t>(len));
    for (std::int64_t i = 0; i < len; ++i) p.indices[static_cast<std::size_t>(i)] = i;
    p.max_position = len > 0 ? len - 1 : 0;
    return p;
}

void PositionPlan::validate() const {
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] < 0 || indices[i] > max_position)
            throw ConfigError("position plan: index out of range");
        if (i > 0 && indices[i] <= indices[i - 1])
            throw ConfigError("position plan: indices must be strictly increasing");
    }
}

namespace {

template <typename T>
Tensor<T> init_weight(std::vector<std::size_t> shape, Rng& rng, double stddev) {
    Tensor<T> t = Tensor<T>::zeros(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<T>(rng.normal() * stddev);
    return t;
}

}  // namespace

template <typename T>
DecoderModel<T>::DecoderModel(const ModelConfig& config, Rng& rng) : config_(config) {
    config_.validate();
    const auto D = static_cast<std::size_t>(config_.d_model);
    const auto V = static_cast<std::size_t>(config_.vocab);
    const auto F = static_cast<std::size_t>(config_.ffn_mult) * D;
    const double std_base = 0.02;
    // residual-writing projections scaled down to keep the stack stable at init
    const double std_resid = std_base / std::sqrt(2.0 * config_.layers);

    params_.emplace_back("tok_embeddings", init_weight<T>({V, D}, rng, std_base));
    for (int l = 0; l < config_.layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        params_.emplace_back(p + "attn_norm", Tensor<T>::full({D}, T(1)));
        params_.emplace_back(p + "wq", init_weight<T>({D, D}, rng, std_base));
        params_.emplace_back(p + "wk", init_weight<T>({D, D}, rng, std_base));
        params_.emplace_back(p + "wv", init_weight<T>({D, D}, rng, std_base));
        params_.emplace_back(p + "wo", init_weight<T>({D, D}, rng, std_resid));
        params_.emplace_back(p + "ffn_norm", Tensor<T>::full({D}, T(1)));
        params_.emplace_back(p + "wg", init_weight<T>({D, F}, rng, std_base));
        params_.emplace_back(p + "wu", init_weight<T>({D, F}, rng, std_base));
        params_.emplace_back(p + "wd", init_weight<T>({F, D}, rng, std_resid));
    }
    params_.emplace_back("final_norm", Tensor<T>::full({D}, T(1)));
    params_.emplace_back("output", init_weight<T>({D, V}, rng, std_base));

    set_trainable(true);
    index_params();
}

template <typename T>
DecoderModel<T>::DecoderModel(const ModelConfig& config,
                              std::vector<std::pair<std::string, Tensor<T>>> params)
    : config_(config), params_(std::move(params)) {
    config_.validate();
    set_trainable(true);
    index_params();
}

template <typename T>
const Tensor<T>& DecoderModel<T>::named(const std::string& name) const {
    for (const auto& [n, t] : params_)
        if (n == name) return t;
    throw ConfigError("model parameter missing: " + name);
}

template <typename T>
Tensor<T>* DecoderModel<T>::find_param(const std::string& name) {
    for (auto& [n, t] : params_)
        if (n == name) return &t;
    return nullptr;
}

template <typename T>
void DecoderModel<T>::index_params() {
    const auto D = static_cast<std::size_t>(config_.d_model);
    const auto V = static_cast<std::size_t>(config_.vocab);
    const auto F = static_cast<std::size_t>(config_.ffn_mult) * D;
    auto expect = [](const Tensor<T>& t, std::vector<std::size_t> shape, const char* what) {
        if (t.shape() != shape) throw ConfigError(std::string("parameter shape mismatch: ") + what);
    };
    embed_ = named("tok_embeddings");
    expect(embed_, {V, D}, "tok_embeddings");
    layer_refs_.clear();
    for (int l = 0; l < config_.layers; ++l) {
        const std::string p = "layers." + std::to_string(l) + ".";
        LayerRefs r;
        r.attn_norm = named(p + "attn_norm");
        r.wq = named(p + "wq");
        r.wk = named(p + "wk");
        r.wv = named(p + "wv");
        r.wo = named(p + "wo");
        r.ffn_norm = named(p + "ffn_norm");
        r.wg = named(p + "wg");
        r.wu = named(p + "wu");
        r.wd = named(p + "wd");
        expect(r.attn_norm, {D}, "attn_norm");
        expect(r.wq, {D, D}, "wq");
        expect(r.wk, {D, D}, "wk");
        expect(r.wv, {D, D}, "wv");
        expect(r.wo, {D, D}, "wo");
        expect(r.ffn_norm, {D}, "ffn_norm");
        expect(r.wg, {D, F}, "wg");
        expect(r.wu, {D, F}, "wu");
        expect(r.wd, {F, D}, "wd");
        layer_refs_.push_back(std::move(r));
    }
    final_norm_ = named("final_norm");
    expect(final_norm_, {D}, "final_norm");
    output_ = named("output");
    expect(output_, {D, V}, "output");
}

template <typename T>
void DecoderModel<T>::set_trainable(bool trainable) {
    trainable_ = trainable;
    for (auto& [name, t] : params_) t.set_requires_grad(trainable);
}

template <typename T>
DecoderModel<T> DecoderModel<T>::clone() const {
    std::vector<std::pair<std::string, Tensor<T>>> copies;
    copies.reserve(params_.size());
    for (const auto& [name, t] : params_) copies.emplace_back(name, t.clone());
    DecoderModel m(config_, std::move(copies));
    m.set_trainable(trainable_);
    return m;
}

template <typename T>
void DecoderModel<T>::apply_config(const ModelConfig& updated) {
    updated.validate();
    if (!config_.same_architecture(updated))
        throw ConfigError("apply_config: architecture fields may not change");
    config_ = updated;
}

template <typename T>
Tensor<T> DecoderModel<T>::forward(Graph<T>& g, std::span<const std::int32_t> tokens,
                                   CaptureFlags capture, LayerTrace<T>* trace) const {
    return forward(g, tokens, PositionPlan::identity(static_cast<std::int64_t>(tokens.size())),
                   capture, trace);
}

template <typename T>
Tensor<T> DecoderModel<T>::forward(Graph<T>& g, std::span<const std::int32_t> tokens,
                                   const PositionPlan& plan, CaptureFlags capture,
                                   LayerTrace<T>* trace) const {
    const std::size_t len = tokens.size();
    if (len == 0) throw ConfigError("forward: empty input");
    if (len > static_cast<std::size_t>(config_.window))
        throw ConfigError("forward: sequence longer than context window");
    if (plan.length() != len) throw ConfigError("forward: position plan length mismatch");
    plan.validate();
    for (const auto idx : plan.indices)
        if (idx >= config_.window)
            throw ConfigError("forward: position index beyond context window");
    for (const auto id : tokens)
        if (id < 0 || id >= config_.vocab)
            throw ConfigError("forward: token id out of vocabulary range");

    std::vector<double> eff(len);
    for (std::size_t i = 0; i < len; ++i)
        eff[i] = static_cast<double>(plan.indices[i]) / config_.pi_scale;
    const RopeTable rt =
        RopeTable::build(eff, config_.rope_base, static_cast<std::size_t>(config_.head_dim));

    if (trace) {
        trace->hidden.clear();
        trace->attention.clear();
    }

    const int N = config_.heads;
    const std::size_t hd = static_cast<std::size_t>(config_.head_dim);
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(config_.head_dim));

    Tensor<T> x = g.embedding(embed_, tokens);
    if (trace && capture.hidden) trace->hidden.push_back(x);

    for (int l = 0; l < config_.layers; ++l) {
        const auto& w = layer_refs_[static_cast<std::size_t>(l)];
        Tensor<T> a = g.rmsnorm(x, w.attn_norm, 1e-5);
        Tensor<T> q = g.matmul(a, w.wq);
        Tensor<T> k = g.matmul(a, w.wk);
        Tensor<T> v = g.matmul(a, w.wv);

        std::vector<Tensor<T>> head_out;
        std::vector<Tensor<T>> head_attn;
        head_out.reserve(static_cast<std::size_t>(N));
        for (int h = 0; h < N; ++h) {
            const std::size_t c0 = static_cast<std::size_t>(h) * hd;
            Tensor<T> qh = g.rope(g.slice_cols(q, c0, c0 + hd), rt);
            Tensor<T> kh = g.rope(g.slice_cols(k, c0, c0 + hd), rt);
            Tensor<T> vh = g.slice_cols(v, c0, c0 + hd);
            Tensor<T> scores = g.scale(g.matmul_nt(qh, kh), inv_sqrt_d);
            Tensor<T> probs = g.softmax_causal(scores);
            if (trace && capture.attention) head_attn.push_back(probs);
            head_out.push_back(g.matmul(probs, vh));
        }
        Tensor<T> attn = g.matmul(g.concat_cols(head_out), w.wo);
        x = g.add(x, attn);

        Tensor<T> f = g.rmsnorm(x, w.ffn_norm, 1e-5);
        Tensor<T> gate = g.silu(g.matmul(f, w.wg));
        Tensor<T> up = g.matmul(f, w.wu);
        Tensor<T> ffn = g.matmul(g.mul(gate, up), w.wd);
        x = g.add(x, ffn);

        if (trace && capture.hidden) trace->hidden.push_back(x);
        if (trace && capture.attention) trace->attention.push_back(std::move(head_attn));
    }

    Tensor<T> logits = g.matmul(g.rmsnorm(x, final_norm_, 1e-5), output_);
    logits.assert_finite("forward logits");
    return logits;
}

template class DecoderModel<float>;
template class DecoderModel<double>;

}  // namespace longred
