#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "longred/model.hpp"

namespace longred {

// Discrepancy measures between two models evaluated on shared inputs.
// All metric arithmetic runs in double no matter the model dtype.

// Mean per-row cosine similarity between two [T, d] hidden-state matrices.
double hidden_similarity(std::span<const double> h, std::span<const double> h_hat,
                         std::size_t rows, std::size_t dim);

// Mean per-row KL divergence between two causal row-stochastic [T, T]
// attention matrices. Rows must sum to 1 over the causal prefix within 1e-4;
// the reference probabilities are clamped at 1e-12 before the log.
double attention_kld(std::span<const double> a, std::span<const double> a_hat, std::size_t t);

template <typename T>
double hidden_similarity(const Tensor<T>& h, const Tensor<T>& h_hat);

template <typename T>
double attention_kld(const Tensor<T>& a, const Tensor<T>& a_hat);

struct DriftReport {
    int layers = 0;            // L
    int heads = 0;             // N
    int sample_count = 0;
    int sequence_length = 0;
    std::vector<double> layer_similarity;         // L+1, index 0 = embedding output
    std::vector<std::vector<double>> head_kld;    // L x N

    std::vector<double> layer_kld() const;        // per layer, mean over heads
    double mean_similarity() const;               // equal-weight mean over layers
    double mean_kld() const;                      // mean over layers and heads
};

template <typename T>
DriftReport drift_report(const DecoderModel<T>& reference, const DecoderModel<T>& candidate,
                         std::span<const std::vector<std::int32_t>> batch,
                         const PositionPlan& plan);

template <typename T>
DriftReport drift_report(const DecoderModel<T>& reference, const DecoderModel<T>& candidate,
                         std::span<const std::vector<std::int32_t>> batch);

// Mean hidden state at each position across samples, per layer: the latent
// positional signal carried by the model.
struct PositionalVectorSet {
    int layers = 0;       // L
    int sequence_length = 0;
    int dim = 0;
    int sample_count = 0;
    std::vector<std::vector<double>> vectors;  // (L+1) entries of [T * dim]
};

template <typename T>
PositionalVectorSet positional_vectors(const DecoderModel<T>& model,
                                       std::span<const std::vector<std::int32_t>> batch,
                                       const PositionPlan& plan);

// Symmetric [T, T] cosine matrix between a layer's positional vectors.
std::vector<double> posvec_similarity_matrix(const PositionalVectorSet& set, int layer);

extern template double hidden_similarity<float>(const Tensor<float>&, const Tensor<float>&);
extern template double hidden_similarity<double>(const Tensor<double>&, const Tensor<double>&);
extern template double attention_kld<float>(const Tensor<float>&, const Tensor<float>&);
extern template double attention_kld<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace longred
