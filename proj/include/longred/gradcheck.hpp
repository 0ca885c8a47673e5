#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "longred/errors.hpp"
#include "longred/tensor.hpp"

namespace longred {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

// Compares the analytic gradient of a scalar function with central finite
// differences, componentwise over x. `f` must be a deterministic pure
// function of x's values; it is re-evaluated with perturbed entries, so it
// must read x by reference (capture the Tensor handle, not a copy of data).
//
// Relative error uses max(1, |analytic|, |numeric|) as the denominator:
// pure relative error for O(1)+ gradients, absolute for near-zero ones.
template <typename T>
GradCheckReport grad_check(const std::function<Tensor<T>(Graph<T>&)>& f, Tensor<T>& x,
                           double eps) {
    if (eps < 1e-5 || eps > 1e-2)
        throw ConfigError("grad_check: eps must be within [1e-5, 1e-2]");
    if (!x.requires_grad()) throw ConfigError("grad_check: x must require grad");

    auto eval = [&]() -> T {
        Graph<T> g(false);
        Tensor<T> out = f(g);
        if (out.size() != 1) throw ConfigError("grad_check: f must return a scalar");
        return out.item();
    };

    const T v1 = eval();
    const T v2 = eval();
    if (v1 != v2) throw NumericError("grad_check: f is not deterministic");

    x.zero_grad();
    Graph<T> g(true);
    Tensor<T> loss = f(g);
    g.backward(loss);
    std::vector<T> analytic(x.grad().begin(), x.grad().end());

    GradCheckReport rep;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const T saved = x[i];
        x[i] = saved + static_cast<T>(eps);
        const double fp = static_cast<double>(eval());
        x[i] = saved - static_cast<T>(eps);
        const double fm = static_cast<double>(eval());
        x[i] = saved;

        const double numeric = (fp - fm) / (2.0 * eps);
        const double a = static_cast<double>(analytic[i]);
        const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
        const double rel = std::abs(a - numeric) / denom;
        if (rel > rep.max_rel_error) {
            rep.max_rel_error = rel;
            rep.worst_index = i;
            rep.analytic_at_worst = a;
            rep.numeric_at_worst = numeric;
        }
    }
    return rep;
}

}  // namespace longred
