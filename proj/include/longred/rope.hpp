#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "longred/model.hpp"

namespace longred {

// Context-window extension by positional-encoding scaling. `abf` swaps the
// rotary base, `pi` divides effective positions by `scale`. Parameters are
// untouched either way.
struct ExtensionSpec {
    enum class Kind { none, abf, pi };
    Kind kind = Kind::none;
    double new_base = 0.0;  // abf
    double scale = 1.0;     // pi
    int target_window = 0;

    static Kind parse_kind(const std::string& s);
    static const char* kind_name(Kind k);
};

ModelConfig extend_abf(const ModelConfig& config, double new_base, int target_window);
ModelConfig extend_pi(const ModelConfig& config, double scale, int target_window);
ModelConfig apply_extension(const ModelConfig& config, const ExtensionSpec& spec);

// Attention-drift bound over rotary partial sums. For relative position t,
// S_j(t) = sum_{k=0}^{j-1} exp(i * t * theta_k) with theta_k = base^(-2k/d),
// and the bound aggregates |S_j| over j = 1..d/2 and t = 0..T weighted by
// the number of (query, key) pairs at that separation.
struct BoundConfig {
    double base = 0.0;
    int head_dim = 0;  // even
    int max_len = 0;   // T

    void validate() const;
};

// |S_j(t)| for j = 1..d/2, single incremental complex accumulation.
std::vector<double> partial_sum_magnitudes(const BoundConfig& cfg, std::int64_t t);

// B = sum_{t=0}^{T} (T - t) * sum_{j=1}^{d/2} |S_j(t)|
double rope_bound(const BoundConfig& cfg);

}  // namespace longred
