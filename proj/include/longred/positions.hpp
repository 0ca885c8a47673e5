#pragma once

#include <cstdint>

#include "longred/model.hpp"
#include "longred/rng.hpp"

namespace longred {

// Skipped positional index generation: a length-T input keeps its head
// indices, the tail is pushed to the end of the target window T_l, and the
// mid run is placed at a sampled end position T_me so the model sees
// long-range separations on short text.
struct SkipConfig {
    int input_len = 0;    // T
    int target_len = 0;   // T_l

    enum class TbPolicy { fixed, cream_random };
    TbPolicy tb_policy = TbPolicy::fixed;
    int tb_value = 0;  // used by the fixed policy

    enum class Sampler { uniform, cream };
    Sampler sampler = Sampler::uniform;

    double sigma = 3.0;      // truncated-Gaussian width for cream
    int grid_points = 1000;  // inverse-CDF interpolation grid

    double extension_factor() const;  // T_l / T
    // Both cream_random candidates: round(4 * extension factor) and T/3.
    int tb_candidate_4x() const;
    int tb_candidate_third() const;
    void validate() const;

    static Sampler parse_sampler(const std::string& s);
    static TbPolicy parse_tb_policy(const std::string& s);
};

struct SegmentSplit {
    int head_begin = 0, head_end = 0;  // [head_begin, head_end)
    int mid_begin = 0, mid_end = 0;
    int tail_begin = 0, tail_end = 0;
};

// head [0, Tb), mid [Tb, T-Tb), tail [T-Tb, T). Requires 2*Tb < T.
SegmentSplit split_segments(int input_len, int tb);

struct SamplerDiagnostics {
    std::int64_t draws = 0;
    std::int64_t cream_fallbacks = 0;  // draws whose alpha-scaled range was empty
};

// Mid-run end position sampled uniformly over [T - Tb, T_l - Tb - 1].
PositionPlan uniform_skip(const SkipConfig& cfg, Rng& rng);

// Truncated-Gaussian scale factor alpha in [1, T_l/T]: grid the factor range,
// evaluate the Gaussian CDF (mu = 1 + T_l/T), draw uniformly between the grid
// endpoints' CDF values, invert by piecewise-linear interpolation, round.
int sample_cream_alpha(const SkipConfig& cfg, Rng& rng);

// Like uniform_skip but T_me is drawn from the alpha-scaled range
// [Tb + alpha*(T - 2*Tb), alpha*T - Tb - 1]. An empty range (always the case
// at alpha = 1) falls back to the uniform range and is counted in diag.
PositionPlan cream_skip(const SkipConfig& cfg, Rng& rng, SamplerDiagnostics* diag = nullptr);

// Shared plan builder used by both samplers; exposed for tests.
PositionPlan build_skip_plan(int input_len, int target_len, int tb, std::int64_t t_me);

}  // namespace longred
