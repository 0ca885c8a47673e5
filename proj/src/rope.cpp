#include "longred/rope.hpp"

#include <cmath>
#include <complex>

#include "longred/errors.hpp"

namespace longred {

ExtensionSpec::Kind ExtensionSpec::parse_kind(const std::string& s) {
    if (s == "none") return Kind::none;
    if (s == "abf") return Kind::abf;
    if (s == "pi") return Kind::pi;
    throw ConfigError("unknown extension kind: " + s);
}

const char* ExtensionSpec::kind_name(Kind k) {
    switch (k) {
        case Kind::none: return "none";
        case Kind::abf: return "abf";
        case Kind::pi: return "pi";
    }
    return "?";
}

ModelConfig extend_abf(const ModelConfig& config, double new_base, int target_window) {
    if (new_base <= 1.0) throw ConfigError("extend_abf: new base must be > 1");
    if (target_window <= config.window)
        throw ConfigError("extend_abf: target window must exceed the current window");
    ModelConfig out = config;
    out.rope_base = new_base;
    out.window = target_window;
    return out;
}

ModelConfig extend_pi(const ModelConfig& config, double scale, int target_window) {
    if (scale < 1.0) throw ConfigError("extend_pi: scale must be >= 1");
    if (target_window <= config.window)
        throw ConfigError("extend_pi: target window must exceed the current window");
    if (static_cast<double>(target_window) > scale * config.window)
        throw ConfigError("extend_pi: target window exceeds scale * current window");
    ModelConfig out = config;
    out.pi_scale = scale;
    out.window = target_window;
    return out;
}

ModelConfig apply_extension(const ModelConfig& config, const ExtensionSpec& spec) {
    switch (spec.kind) {
        case ExtensionSpec::Kind::none: return config;
        case ExtensionSpec::Kind::abf: return extend_abf(config, spec.new_base, spec.target_window);
        case ExtensionSpec::Kind::pi: return extend_pi(config, spec.scale, spec.target_window);
    }
    throw ConfigError("apply_extension: bad kind");
}

void BoundConfig::validate() const {
    if (base <= 1.0) throw ConfigError("bound: base must be > 1");
    if (head_dim < 2 || head_dim % 2 != 0) throw ConfigError("bound: head_dim must be even, >= 2");
    if (max_len < 0) throw ConfigError("bound: max_len must be >= 0");
}

std::vector<double> partial_sum_magnitudes(const BoundConfig& cfg, std::int64_t t) {
    cfg.validate();
    if (t < 0 || t > cfg.max_len) throw ConfigError("partial_sum_magnitudes: t out of range");
    const std::size_t half = static_cast<std::size_t>(cfg.head_dim) / 2;
    std::vector<double> mags(half);
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t k = 0; k < half; ++k) {
        const double theta_k =
            std::pow(cfg.base, -2.0 * static_cast<double>(k) / static_cast<double>(cfg.head_dim));
        const double angle = static_cast<double>(t) * theta_k;
        acc += std::complex<double>(std::cos(angle), std::sin(angle));
        mags[k] = std::abs(acc);  // |S_{k+1}|
    }
    return mags;
}

double rope_bound(const BoundConfig& cfg) {
    cfg.validate();
    double total = 0.0;
    for (std::int64_t t = 0; t <= cfg.max_len; ++t) {
        const auto mags = partial_sum_magnitudes(cfg, t);
        double inner = 0.0;
        for (const double m : mags) inner += m;
        total += static_cast<double>(cfg.max_len - t) * inner;
    }
    return total;
}

}  // namespace longred
