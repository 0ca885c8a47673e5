#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "longred/rng.hpp"
#include "longred/tensor.hpp"

namespace longred {

struct ModelConfig {
    int layers = 0;        // L
    int heads = 0;         // N
    int d_model = 0;
    int head_dim = 0;      // d, even (rotary pairs)
    int vocab = 0;         // V
    int window = 0;        // context window T
    double rope_base = 10000.0;
    double pi_scale = 1.0;  // position-interpolation divisor; 1 = off
    int ffn_mult = 4;

    void validate() const;
    bool same_architecture(const ModelConfig& other) const;  // everything but window/base/scale
};

// Strictly increasing positional indices for one forward pass, with optional
// head/mid/tail segment boundaries when produced by a skip sampler.
struct PositionPlan {
    struct Segments {
        std::int64_t head_len = 0;  // indices [0, head_len) are the head
        std::int64_t mid_len = 0;   // next mid_len entries are the mid run
        std::int64_t tail_len = 0;
    };

    std::vector<std::int64_t> indices;
    std::optional<Segments> segments;
    std::int64_t max_position = 0;

    static PositionPlan identity(std::int64_t len);
    std::size_t length() const { return indices.size(); }
    void validate() const;
};

struct CaptureFlags {
    bool hidden = false;
    bool attention = false;
    static CaptureFlags all() { return {true, true}; }
    static CaptureFlags none() { return {false, false}; }
};

// Per-layer activations captured during a forward pass: hidden[l] for
// l = 0..L (embedding output plus every layer output) and the per-head
// causal attention matrices.
template <typename T>
struct LayerTrace {
    std::vector<Tensor<T>> hidden;                  // L+1 entries [T, d_model]
    std::vector<std::vector<Tensor<T>>> attention;  // L entries of N matrices [T, T]
};

// Pre-norm decoder-only transformer with rotary attention and a gated FFN.
// No biases; RMS norms; untied output head.
template <typename T>
class DecoderModel {
  public:
    DecoderModel(const ModelConfig& config, Rng& init_rng);  // fresh init
    DecoderModel(const ModelConfig& config,
                 std::vector<std::pair<std::string, Tensor<T>>> params);  // from checkpoint

    const ModelConfig& config() const { return config_; }
    void apply_config(const ModelConfig& updated);  // window/base/scale changes only

    std::vector<std::pair<std::string, Tensor<T>>>& parameters() { return params_; }
    const std::vector<std::pair<std::string, Tensor<T>>>& parameters() const { return params_; }
    Tensor<T>* find_param(const std::string& name);

    void set_trainable(bool trainable);
    bool trainable() const { return trainable_; }

    DecoderModel clone() const;

    Tensor<T> forward(Graph<T>& g, std::span<const std::int32_t> tokens,
                      const PositionPlan& plan, CaptureFlags capture,
                      LayerTrace<T>* trace) const;

    // Default positions [0..len).
    Tensor<T> forward(Graph<T>& g, std::span<const std::int32_t> tokens,
                      CaptureFlags capture, LayerTrace<T>* trace) const;

  private:
    struct LayerRefs {
        Tensor<T> attn_norm, wq, wk, wv, wo, ffn_norm, wg, wu, wd;
    };
    void index_params();
    const Tensor<T>& named(const std::string& name) const;

    ModelConfig config_;
    std::vector<std::pair<std::string, Tensor<T>>> params_;
    std::vector<LayerRefs> layer_refs_;
    Tensor<T> embed_, final_norm_, output_;
    bool trainable_ = true;
};

extern template class DecoderModel<float>;
extern template class DecoderModel<double>;

}  // namespace longred
