#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "longred/corpus.hpp"
#include "longred/model.hpp"

namespace longred {

// Mean next-token cross-entropy over held-out sequences, default positions.
template <typename T>
double mean_cross_entropy(const DecoderModel<T>& model,
                          std::span<const std::vector<std::int32_t>> sequences);

template <typename T>
double perplexity(const DecoderModel<T>& model,
                  std::span<const std::vector<std::int32_t>> sequences);

// Fraction of recall-value bytes whose argmax prediction matches the bound
// value.
template <typename T>
double recall_byte_accuracy(const DecoderModel<T>& model, std::span<const RecallCase> cases);

extern template double mean_cross_entropy<float>(const DecoderModel<float>&,
                                                 std::span<const std::vector<std::int32_t>>);
extern template double mean_cross_entropy<double>(const DecoderModel<double>&,
                                                  std::span<const std::vector<std::int32_t>>);
extern template double perplexity<float>(const DecoderModel<float>&,
                                         std::span<const std::vector<std::int32_t>>);
extern template double perplexity<double>(const DecoderModel<double>&,
                                          std::span<const std::vector<std::int32_t>>);
extern template double recall_byte_accuracy<float>(const DecoderModel<float>&,
                                                   std::span<const RecallCase>);
extern template double recall_byte_accuracy<double>(const DecoderModel<double>&,
                                                    std::span<const RecallCase>);

}  // namespace longred
