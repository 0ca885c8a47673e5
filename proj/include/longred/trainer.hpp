#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "longred/corpus.hpp"
#include "longred/drift.hpp"
#include "longred/model.hpp"
#include "longred/positions.hpp"

namespace longred {

struct OptimizerConfig {
    double lr = 2e-5;  // fixed, no warmup
    double weight_decay = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
};

// Joint objective: loss_final = loss_long + alpha1 * loss_short + alpha2 * loss_s2l.
// Baseline modes: cpt_long trains the language-model loss on D1 only,
// cpt_mix trains it on all three datasets.
struct TrainPlan {
    enum class Mode { longred, cpt_long, cpt_mix };
    Mode mode = Mode::longred;
    double alpha1 = 5.0;
    double alpha2 = 10.0;
    int distill_layer_count = 0;            // M; resolved layer set below
    std::vector<int> distill_layers;        // L_M, always contains the last layer
    std::array<double, 3> mix_ratio{4, 3, 1};
    int t_long = 0, t_short = 0, t_base = 0;
    int steps = 0;
    std::int64_t batch_tokens = 0;
    int probe_sequences = 8;
    OptimizerConfig optim;

    static Mode parse_mode(const std::string& s);
    static const char* mode_name(Mode m);
    void validate(int model_layers) const;
};

struct StepRecord {
    int step = 0;
    double loss_long = 0.0;
    double loss_short = 0.0;
    double loss_s2l = 0.0;
    double loss_final = 0.0;
    std::int64_t tokens_d1 = 0, tokens_d2 = 0, tokens_d3 = 0;
    double wall_ms = 0.0;  // never serialized into the metrics stream
};

template <typename T>
class AdamW {
  public:
    AdamW(DecoderModel<T>& model, OptimizerConfig cfg);
    void zero_grad();
    void step();
    int step_count() const { return t_; }

  private:
    DecoderModel<T>* model_;
    OptimizerConfig cfg_;
    std::vector<std::vector<T>> m_, v_;
    int t_ = 0;
};

// Per-layer attention divergence on a probe batch picks the distillation
// layers: the M-1 highest-divergence layers (ties to the lower index) plus
// the last layer, which is always included.
template <typename T>
std::vector<int> select_distill_layers(const DecoderModel<T>& teacher,
                                       const DecoderModel<T>& student,
                                       std::span<const std::vector<std::int32_t>> probe_batch,
                                       int m);

// Mean next-token cross-entropy over the batch, default positions.
template <typename T>
Tensor<T> loss_long(Graph<T>& g, const DecoderModel<T>& student,
                    std::span<const std::vector<std::int32_t>> batch);

// Negative summed hidden-state similarity over the selected layers, averaged
// over the batch; both models run the same default positions, the teacher
// contributes constants only.
template <typename T>
Tensor<T> loss_short(Graph<T>& g, const DecoderModel<T>& student, const DecoderModel<T>& teacher,
                     std::span<const std::vector<std::int32_t>> batch, std::span<const int> layers);

// Negative last-layer similarity with the student on skipped positional
// indices and the teacher on default indices, averaged over the batch.
template <typename T>
Tensor<T> loss_s2l(Graph<T>& g, const DecoderModel<T>& student, const DecoderModel<T>& teacher,
                   std::span<const std::vector<std::int32_t>> batch,
                   std::span<const PositionPlan> student_plans);

// One optimizer update on the joint objective. The teacher is required for
// longred mode and must be frozen; plans are per-sequence skipped indices for
// the batch's D3 sequences.
template <typename T>
StepRecord train_step(DecoderModel<T>& student, const DecoderModel<T>* teacher,
                      const TrainPlan& plan, AdamW<T>& optimizer, const TrainBatch& batch,
                      std::span<const PositionPlan> s2l_plans, int step_index);

std::string format_step_record(const StepRecord& rec);

extern template class AdamW<float>;
extern template class AdamW<double>;

}  // namespace longred
