#include "longred/eval.hpp"

#include <cmath>

#include "longred/errors.hpp"

namespace longred {

template <typename T>
double mean_cross_entropy(const DecoderModel<T>& model,
                          std::span<const std::vector<std::int32_t>> sequences) {
    if (sequences.empty()) throw ConfigError("mean_cross_entropy: no sequences");
    double total = 0.0;
    for (const auto& seq : sequences) {
        if (seq.size() < 2) throw ConfigError("mean_cross_entropy: sequence too short");
        Graph<T> g(false);
        const std::span<const std::int32_t> inputs(seq.data(), seq.size() - 1);
        const std::span<const std::int32_t> targets(seq.data() + 1, seq.size() - 1);
        Tensor<T> logits = model.forward(g, inputs, CaptureFlags::none(), nullptr);
        total += static_cast<double>(g.cross_entropy(logits, targets).item());
    }
    return total / static_cast<double>(sequences.size());
}

template <typename T>
double perplexity(const DecoderModel<T>& model,
                  std::span<const std::vector<std::int32_t>> sequences) {
    return std::exp(mean_cross_entropy(model, sequences));
}

template <typename T>
double recall_byte_accuracy(const DecoderModel<T>& model, std::span<const RecallCase> cases) {
    if (cases.empty()) throw ConfigError("recall_byte_accuracy: no cases");
    std::int64_t hits = 0, total = 0;
    for (const auto& rc : cases) {
        Graph<T> g(false);
        Tensor<T> logits = model.forward(g, rc.tokens, CaptureFlags::none(), nullptr);
        const std::size_t v = logits.cols();
        for (const std::size_t pos : rc.value_positions) {
            if (pos == 0 || pos >= rc.tokens.size())
                throw ConfigError("recall_byte_accuracy: bad value position");
            const T* row = logits.data() + (pos - 1) * v;
            std::size_t best = 0;
            for (std::size_t j = 1; j < v; ++j)
                if (row[j] > row[best]) best = j;
            if (static_cast<std::int32_t>(best) == rc.tokens[pos]) ++hits;
            ++total;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

template double mean_cross_entropy<float>(const DecoderModel<float>&,
                                          std::span<const std::vector<std::int32_t>>);
template double mean_cross_entropy<double>(const DecoderModel<double>&,
                                           std::span<const std::vector<std::int32_t>>);
template double perplexity<float>(const DecoderModel<float>&,
                                  std::span<const std::vector<std::int32_t>>);
template double perplexity<double>(const DecoderModel<double>&,
                                   std::span<const std::vector<std::int32_t>>);
template double recall_byte_accuracy<float>(const DecoderModel<float>&,
                                            std::span<const RecallCase>);
template double recall_byte_accuracy<double>(const DecoderModel<double>&,
                                             std::span<const RecallCase>);

}  // namespace longred
