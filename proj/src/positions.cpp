#include "longred/positions.hpp"

#include <algorithm>
#include <cmath>

#include "longred/errors.hpp"

namespace longred {

namespace {

double normal_cdf(double x, double mu, double sigma) {
    return 0.5 * (1.0 + std::erf((x - mu) / (sigma * std::sqrt(2.0))));
}

int choose_tb(const SkipConfig& cfg, Rng& rng) {
    switch (cfg.tb_policy) {
        case SkipConfig::TbPolicy::fixed:
            return cfg.tb_value;
        case SkipConfig::TbPolicy::cream_random:
            return rng.uniform_int(0, 1) == 0 ? cfg.tb_candidate_4x() : cfg.tb_candidate_third();
    }
    throw ConfigError("skip config: bad tb policy");
}

}  // namespace

double SkipConfig::extension_factor() const {
    return static_cast<double>(target_len) / static_cast<double>(input_len);
}

int SkipConfig::tb_candidate_4x() const {
    return std::max(1, static_cast<int>(std::llround(4.0 * extension_factor())));
}

int SkipConfig::tb_candidate_third() const {
    return input_len / 3;
}

void SkipConfig::validate() const {
    if (input_len < 3) throw ConfigError("skip config: input length must be >= 3");
    if (target_len <= input_len)
        throw ConfigError("skip config: target length must exceed input length");
    auto check_tb = [this](int tb) {
        if (tb < 1) throw ConfigError("skip config: T_b must be >= 1");
        if (2 * tb >= input_len)
            throw ConfigError("skip config: 2*T_b must be smaller than the input length");
    };
    if (tb_policy == TbPolicy::fixed) {
        check_tb(tb_value);
    } else {
        check_tb(tb_candidate_4x());
        check_tb(tb_candidate_third());
    }
    if (sigma <= 0.0) throw ConfigError("skip config: sigma must be positive");
    if (grid_points < 2) throw ConfigError("skip config: grid_points must be >= 2");
}

SkipConfig::Sampler SkipConfig::parse_sampler(const std::string& s) {
    if (s == "uniform") return Sampler::uniform;
    if (s == "cream") return Sampler::cream;
    throw ConfigError("unknown skip sampler: " + s);
}

SkipConfig::TbPolicy SkipConfig::parse_tb_policy(const std::string& s) {
    if (s == "fixed") return TbPolicy::fixed;
    if (s == "cream_random") return TbPolicy::cream_random;
    throw ConfigError("unknown T_b policy: " + s);
}

SegmentSplit split_segments(int input_len, int tb) {
    if (tb < 1) throw ConfigError("split_segments: T_b must be >= 1");
    if (2 * tb >= input_len)
        throw ConfigError("split_segments: 2*T_b must be smaller than the input length");
    SegmentSplit s;
    s.head_begin = 0;
    s.head_end = tb;
    s.mid_begin = tb;
    s.mid_end = input_len - tb;
    s.tail_begin = input_len - tb;
    s.tail_end = input_len;
    return s;
}

PositionPlan build_skip_plan(int input_len, int target_len, int tb, std::int64_t t_me) {
    const SegmentSplit seg = split_segments(input_len, tb);
    const std::int64_t mid_len = seg.mid_end - seg.mid_begin;  // T - 2*Tb
    const std::int64_t lo = input_len - tb;                    // smallest legal T_me
    const std::int64_t hi = target_len - tb - 1;               // largest legal T_me
    if (t_me < lo || t_me > hi) throw ConfigError("build_skip_plan: T_me out of range");

    PositionPlan plan;
    plan.indices.reserve(static_cast<std::size_t>(input_len));
    for (int i = 0; i < tb; ++i) plan.indices.push_back(i);
    const std::int64_t mid_start = t_me - mid_len + 1;
    for (std::int64_t i = 0; i < mid_len; ++i) plan.indices.push_back(mid_start + i);
    for (int i = 0; i < tb; ++i) plan.indices.push_back(target_len - tb + i);
    plan.max_position = target_len - 1;
    plan.segments = PositionPlan::Segments{tb, mid_len, tb};
    plan.validate();
    return plan;
}

PositionPlan uniform_skip(const SkipConfig& cfg, Rng& rng) {
    cfg.validate();
    const int tb = choose_tb(cfg, rng);
    const std::int64_t lo = cfg.input_len - tb;
    const std::int64_t hi = cfg.target_len - tb - 1;
    if (lo > hi) throw ConfigError("uniform_skip: empty sampling range");
    const std::int64_t t_me = rng.uniform_int(lo, hi);
    return build_skip_plan(cfg.input_len, cfg.target_len, tb, t_me);
}

int sample_cream_alpha(const SkipConfig& cfg, Rng& rng) {
    const double factor = cfg.extension_factor();
    if (factor <= 1.0) throw ConfigError("sample_cream_alpha: extension factor must exceed 1");
    const int g = cfg.grid_points;
    const double mu = 1.0 + factor;
    const double f_lo = normal_cdf(1.0, mu, cfg.sigma);
    const double f_hi = normal_cdf(factor, mu, cfg.sigma);

    // Draw inside [F(x_1), F(x_G)] so the inversion always lands on the grid.
    const double v = rng.uniform(f_lo, f_hi);

    auto grid_x = [&](int i) {  // x_1..x_G uniform on [1, factor]
        return 1.0 + (factor - 1.0) * static_cast<double>(i) / static_cast<double>(g - 1);
    };
    // binary search for the bracketing cell; F is increasing in x
    int lo = 0, hi = g - 1;
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        if (normal_cdf(grid_x(mid), mu, cfg.sigma) >= v)
            hi = mid;
        else
            lo = mid;
    }
    const double x0 = grid_x(lo), x1 = grid_x(hi);
    const double f0 = normal_cdf(x0, mu, cfg.sigma), f1 = normal_cdf(x1, mu, cfg.sigma);
    const double u = f1 > f0 ? x0 + (x1 - x0) * (v - f0) / (f1 - f0) : x0;

    const auto alpha_max = static_cast<int>(std::floor(factor + 1e-9));
    const int alpha = static_cast<int>(std::llround(u));
    return std::clamp(alpha, 1, std::max(1, alpha_max));
}

PositionPlan cream_skip(const SkipConfig& cfg, Rng& rng, SamplerDiagnostics* diag) {
    cfg.validate();
    const int tb = choose_tb(cfg, rng);
    const int alpha = sample_cream_alpha(cfg, rng);

    const std::int64_t valid_lo = cfg.input_len - tb;
    const std::int64_t valid_hi = cfg.target_len - tb - 1;

    // alpha-scaled window, clipped to the legal T_me range
    std::int64_t lo = tb + static_cast<std::int64_t>(alpha) * (cfg.input_len - 2 * tb);
    std::int64_t hi = static_cast<std::int64_t>(alpha) * cfg.input_len - tb - 1;
    lo = std::max(lo, valid_lo);
    hi = std::min(hi, valid_hi);

    if (diag) ++diag->draws;
    if (lo > hi) {
        // empty at alpha = 1 (and for degenerate configs): uniform fallback
        lo = valid_lo;
        hi = valid_hi;
        if (diag) ++diag->cream_fallbacks;
    }
    if (lo > hi) throw ConfigError("cream_skip: empty sampling range");
    const std::int64_t t_me = rng.uniform_int(lo, hi);
    return build_skip_plan(cfg.input_len, cfg.target_len, tb, t_me);
}

}  // namespace longred
