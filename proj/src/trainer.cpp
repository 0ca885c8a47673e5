#include "longred/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "longred/kernels.hpp"

namespace longred {

TrainPlan::Mode TrainPlan::parse_mode(const std::string& s) {
    if (s == "longred") return Mode::longred;
    if (s == "cpt_long") return Mode::cpt_long;
    if (s == "cpt_mix") return Mode::cpt_mix;
    throw ConfigError("unknown train mode: " + s);
}

const char* TrainPlan::mode_name(Mode m) {
    switch (m) {
        case Mode::longred: return "longred";
        case Mode::cpt_long: return "cpt_long";
        case Mode::cpt_mix: return "cpt_mix";
    }
    return "?";
}

void TrainPlan::validate(int model_layers) const {
    if (alpha1 < 0.0 || alpha2 < 0.0) throw ConfigError("train: alpha weights must be >= 0");
    if (steps < 1) throw ConfigError("train: steps must be >= 1");
    if (batch_tokens < 1) throw ConfigError("train: batch_tokens must be >= 1");
    for (const double r : mix_ratio)
        if (r < 0.0) throw ConfigError("train: mix ratio entries must be >= 0");
    if (mode == Mode::longred) {
        if (distill_layer_count < 1 || distill_layer_count > model_layers + 1)
            throw ConfigError("train: distill layer count must be in [1, L+1]");
        if (!distill_layers.empty()) {
            for (const int l : distill_layers)
                if (l < 0 || l > model_layers)
                    throw ConfigError("train: distill layer index out of range");
            if (std::find(distill_layers.begin(), distill_layers.end(), model_layers) ==
                distill_layers.end())
                throw ConfigError("train: distill layers must contain the last layer");
        }
    }
}

// ---------------------------------------------------------------- optimizer

template <typename T>
AdamW<T>::AdamW(DecoderModel<T>& model, OptimizerConfig cfg) : model_(&model), cfg_(cfg) {
    for (const auto& [name, p] : model.parameters()) {
        m_.emplace_back(p.size(), T(0));
        v_.emplace_back(p.size(), T(0));
    }
}

template <typename T>
void AdamW<T>::zero_grad() {
    for (auto& [name, p] : model_->parameters()) p.zero_grad();
}

template <typename T>
void AdamW<T>::step() {
    ++t_;
    const T bias1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, t_));
    const T bias2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, t_));
    const auto& kt = kern::active<T>();
    auto& params = model_->parameters();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].second;
        kt.adamw(p.data(), m_[i].data(), v_[i].data(), p.grad().data(), p.size(),
                 static_cast<T>(cfg_.lr), static_cast<T>(cfg_.beta1), static_cast<T>(cfg_.beta2),
                 static_cast<T>(cfg_.eps), static_cast<T>(cfg_.weight_decay), bias1, bias2);
    }
}

// ---------------------------------------------------------------- layer selection

template <typename T>
std::vector<int> select_distill_layers(const DecoderModel<T>& teacher,
                                       const DecoderModel<T>& student,
                                       std::span<const std::vector<std::int32_t>> probe_batch,
                                       int m) {
    const int layers = teacher.config().layers;
    if (m < 1) throw ConfigError("select_distill_layers: M must be >= 1");
    if (m > layers + 1) throw ConfigError("select_distill_layers: M exceeds L+1");

    std::vector<int> out;
    if (m == layers + 1) {  // every layer, embedding output included
        out.resize(static_cast<std::size_t>(layers) + 1);
        for (int l = 0; l <= layers; ++l) out[static_cast<std::size_t>(l)] = l;
        return out;
    }

    const DriftReport rep = drift_report(teacher, student, probe_batch);
    const std::vector<double> kld = rep.layer_kld();  // index l-1 = layer l

    // candidates are layers 1..L-1; the last layer is always taken
    std::vector<int> cand;
    for (int l = 1; l < layers; ++l) cand.push_back(l);
    std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) {
        const double ka = kld[static_cast<std::size_t>(a - 1)];
        const double kb = kld[static_cast<std::size_t>(b - 1)];
        if (ka != kb) return ka > kb;
        return a < b;
    });
    out.assign(cand.begin(), cand.begin() + (m - 1));
    out.push_back(layers);
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------- losses

namespace {

template <typename T>
Tensor<T> batch_mean(Graph<T>& g, const std::vector<Tensor<T>>& per_seq) {
    Tensor<T> total = per_seq.front();
    for (std::size_t i = 1; i < per_seq.size(); ++i) total = g.add(total, per_seq[i]);
    return g.scale(total, 1.0 / static_cast<double>(per_seq.size()));
}

template <typename T>
Tensor<T> sequence_lm_loss(Graph<T>& g, const DecoderModel<T>& model,
                           const std::vector<std::int32_t>& seq) {
    if (seq.size() < 2) throw ConfigError("lm loss: sequence must have at least 2 tokens");
    const std::span<const std::int32_t> inputs(seq.data(), seq.size() - 1);
    const std::span<const std::int32_t> targets(seq.data() + 1, seq.size() - 1);
    Tensor<T> logits = model.forward(g, inputs, CaptureFlags::none(), nullptr);
    return g.cross_entropy(logits, targets);
}

}  // namespace

template <typename T>
Tensor<T> loss_long(Graph<T>& g, const DecoderModel<T>& student,
                    std::span<const std::vector<std::int32_t>> batch) {
    if (batch.empty()) throw ConfigError("loss_long: empty batch");
    const std::size_t len = batch.front().size();
    std::vector<Tensor<T>> losses;
    losses.reserve(batch.size());
    for (const auto& seq : batch) {
        if (seq.size() != len) throw ConfigError("loss_long: sequence length mismatch");
        losses.push_back(sequence_lm_loss(g, student, seq));
    }
    return batch_mean(g, losses);
}

template <typename T>
Tensor<T> loss_short(Graph<T>& g, const DecoderModel<T>& student, const DecoderModel<T>& teacher,
                     std::span<const std::vector<std::int32_t>> batch,
                     std::span<const int> layers) {
    if (batch.empty()) throw ConfigError("loss_short: empty batch");
    const int L = student.config().layers;
    for (const int l : layers)
        if (l < 0 || l > L) throw ConfigError("loss_short: layer index out of range");

    const std::size_t len = batch.front().size();
    std::vector<Tensor<T>> losses;
    losses.reserve(batch.size());
    const CaptureFlags hidden_only{true, false};
    for (const auto& seq : batch) {
        if (seq.size() != len) throw ConfigError("loss_short: sequence length mismatch");
        Graph<T> tg(false);  // teacher contributes constants
        LayerTrace<T> tt;
        teacher.forward(tg, seq, hidden_only, &tt);
        LayerTrace<T> st;
        student.forward(g, seq, hidden_only, &st);

        Tensor<T> sim_sum;
        for (const int l : layers) {
            Tensor<T> sim = g.mean_row_cosine(st.hidden[static_cast<std::size_t>(l)],
                                              tt.hidden[static_cast<std::size_t>(l)]);
            sim_sum = sim_sum.defined() ? g.add(sim_sum, sim) : sim;
        }
        losses.push_back(g.scale(sim_sum, -1.0));
    }
    return batch_mean(g, losses);
}

template <typename T>
Tensor<T> loss_s2l(Graph<T>& g, const DecoderModel<T>& student, const DecoderModel<T>& teacher,
                   std::span<const std::vector<std::int32_t>> batch,
                   std::span<const PositionPlan> student_plans) {
    if (batch.empty()) throw ConfigError("loss_s2l: empty batch");
    if (student_plans.size() != batch.size())
        throw ConfigError("loss_s2l: one plan per sequence required");
    const int L = student.config().layers;
    const std::size_t len = batch.front().size();

    std::vector<Tensor<T>> losses;
    losses.reserve(batch.size());
    const CaptureFlags hidden_only{true, false};
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& seq = batch[i];
        if (seq.size() != len) throw ConfigError("loss_s2l: sequence length mismatch");
        if (student_plans[i].length() != seq.size())
            throw ConfigError("loss_s2l: plan length does not match sequence");
        Graph<T> tg(false);
        LayerTrace<T> tt;
        teacher.forward(tg, seq, hidden_only, &tt);  // default positions
        LayerTrace<T> st;
        student.forward(g, seq, student_plans[i], hidden_only, &st);
        Tensor<T> sim = g.mean_row_cosine(st.hidden[static_cast<std::size_t>(L)],
                                          tt.hidden[static_cast<std::size_t>(L)]);
        losses.push_back(g.scale(sim, -1.0));
    }
    return batch_mean(g, losses);
}

// ---------------------------------------------------------------- train step

template <typename T>
StepRecord train_step(DecoderModel<T>& student, const DecoderModel<T>* teacher,
                      const TrainPlan& plan, AdamW<T>& optimizer, const TrainBatch& batch,
                      std::span<const PositionPlan> s2l_plans, int step_index) {
    StepRecord rec;
    rec.step = step_index;
    rec.tokens_d1 = batch.tokens_d1();
    rec.tokens_d2 = batch.tokens_d2();
    rec.tokens_d3 = batch.tokens_d3();

    Graph<T> g(true);
    Tensor<T> final_loss;

    switch (plan.mode) {
        case TrainPlan::Mode::longred: {
            if (!teacher) throw ConfigError("train_step: longred mode requires a teacher");
            if (teacher->trainable())
                throw ConfigError("train_step: teacher must be frozen");
            Tensor<T> ll = loss_long(g, student, batch.d1);
            rec.loss_long = static_cast<double>(ll.item());
            final_loss = ll;
            if (plan.alpha1 > 0.0 && !batch.d2.empty()) {
                Tensor<T> ls = loss_short(g, student, *teacher, batch.d2, plan.distill_layers);
                rec.loss_short = static_cast<double>(ls.item());
                final_loss = g.add(final_loss, g.scale(ls, plan.alpha1));
            }
            if (plan.alpha2 > 0.0 && !batch.d3.empty()) {
                Tensor<T> l2 = loss_s2l(g, student, *teacher, batch.d3, s2l_plans);
                rec.loss_s2l = static_cast<double>(l2.item());
                final_loss = g.add(final_loss, g.scale(l2, plan.alpha2));
            }
            break;
        }
        case TrainPlan::Mode::cpt_long: {
            Tensor<T> ll = loss_long(g, student, batch.d1);
            rec.loss_long = static_cast<double>(ll.item());
            final_loss = ll;
            break;
        }
        case TrainPlan::Mode::cpt_mix: {
            // every sequence trains the language-model objective
            std::vector<std::vector<std::int32_t>> all;
            all.reserve(batch.d1.size() + batch.d2.size() + batch.d3.size());
            for (const auto& s : batch.d1) all.push_back(s);
            for (const auto& s : batch.d2) all.push_back(s);
            for (const auto& s : batch.d3) all.push_back(s);
            if (all.empty()) throw ConfigError("train_step: empty batch");
            std::vector<Tensor<T>> losses;
            losses.reserve(all.size());
            for (const auto& seq : all) losses.push_back(sequence_lm_loss(g, student, seq));
            Tensor<T> total = losses.front();
            for (std::size_t i = 1; i < losses.size(); ++i) total = g.add(total, losses[i]);
            final_loss = g.scale(total, 1.0 / static_cast<double>(losses.size()));
            rec.loss_long = static_cast<double>(final_loss.item());
            break;
        }
    }

    rec.loss_final = static_cast<double>(final_loss.item());
    if (!std::isfinite(rec.loss_final) || !std::isfinite(rec.loss_long) ||
        !std::isfinite(rec.loss_short) || !std::isfinite(rec.loss_s2l))
        throw NumericError("train_step " + std::to_string(step_index) + ": non-finite loss");

    optimizer.zero_grad();
    g.backward(final_loss);
    optimizer.step();
    return rec;
}

std::string format_step_record(const StepRecord& rec) {
    // Fixed %.17g formatting: the metrics stream must be byte-identical
    // across reruns. Wall time is deliberately not part of the record line.
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "step=%d loss_long=%.17g loss_short=%.17g loss_s2l=%.17g loss_final=%.17g "
                  "tokens_d1=%lld tokens_d2=%lld tokens_d3=%lld",
                  rec.step, rec.loss_long, rec.loss_short, rec.loss_s2l, rec.loss_final,
                  static_cast<long long>(rec.tokens_d1), static_cast<long long>(rec.tokens_d2),
                  static_cast<long long>(rec.tokens_d3));
    return std::string(buf);
}

template class AdamW<float>;
template class AdamW<double>;

template std::vector<int> select_distill_layers<float>(
    const DecoderModel<float>&, const DecoderModel<float>&,
    std::span<const std::vector<std::int32_t>>, int);
template std::vector<int> select_distill_layers<double>(
    const DecoderModel<double>&, const DecoderModel<double>&,
    std::span<const std::vector<std::int32_t>>, int);

template Tensor<float> loss_long<float>(Graph<float>&, const DecoderModel<float>&,
                                        std::span<const std::vector<std::int32_t>>);
template Tensor<double> loss_long<double>(Graph<double>&, const DecoderModel<double>&,
                                          std::span<const std::vector<std::int32_t>>);
template Tensor<float> loss_short<float>(Graph<float>&, const DecoderModel<float>&,
                                         const DecoderModel<float>&,
                                         std::span<const std::vector<std::int32_t>>,
                                         std::span<const int>);
template Tensor<double> loss_short<double>(Graph<double>&, const DecoderModel<double>&,
                                           const DecoderModel<double>&,
                                           std::span<const std::vector<std::int32_t>>,
                                           std::span<const int>);
template Tensor<float> loss_s2l<float>(Graph<float>&, const DecoderModel<float>&,
                                       const DecoderModel<float>&,
                                       std::span<const std::vector<std::int32_t>>,
                                       std::span<const PositionPlan>);
template Tensor<double> loss_s2l<double>(Graph<double>&, const DecoderModel<double>&,
                                         const DecoderModel<double>&,
                                         std::span<const std::vector<std::int32_t>>,
                                         std::span<const PositionPlan>);
template StepRecord train_step<float>(DecoderModel<float>&, const DecoderModel<float>*,
                                      const TrainPlan&, AdamW<float>&, const TrainBatch&,
                                      std::span<const PositionPlan>, int);
template StepRecord train_step<double>(DecoderModel<double>&, const DecoderModel<double>*,
                                       const TrainPlan&, AdamW<double>&, const TrainBatch&,
                                       std::span<const PositionPlan>, int);

}  // namespace longred
