#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "longred/gradcheck.hpp"
#include "longred/rng.hpp"
#include "longred/tensor.hpp"
#include "testutil.hpp"

using namespace longred;
using testutil::random_vec;

namespace {

Tensor<double> rand_tensor(Rng& rng, std::vector<std::size_t> shape, bool grad = false) {
    std::size_t n = 1;
    for (const auto d : shape) n *= d;
    Tensor<double> t = Tensor<double>::from(std::move(shape), random_vec<double>(rng, n));
    if (grad) t.set_requires_grad(true);
    return t;
}

}  // namespace

TEST_CASE("softmax_rows: symmetry, saturation and a hand-computed row") {
    Graph<double> g(false);

    auto two = g.softmax_rows(Tensor<double>::from({2}, {0.0, 0.0}));
    CHECK(two[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(two[1] == doctest::Approx(0.5).epsilon(1e-12));

    auto big = g.softmax_rows(Tensor<double>::from({2}, {1000.0, 0.0}));
    CHECK(big.all_finite());
    CHECK(big[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(big[1] < 1e-300);

    auto thirds = g.softmax_rows(
        Tensor<double>::from({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
    CHECK(thirds[0] == doctest::Approx(1.0 / 6).epsilon(1e-14));
    CHECK(thirds[1] == doctest::Approx(2.0 / 6).epsilon(1e-14));
    CHECK(thirds[2] == doctest::Approx(3.0 / 6).epsilon(1e-14));
}

TEST_CASE("softmax_rows: rows sum to one and shifting a row is a no-op") {
    Rng rng(4, "softmax");
    Graph<double> g(false);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t rows = 1 + static_cast<std::size_t>(rng.uniform_int(0, 5));
        const std::size_t n = 1 + static_cast<std::size_t>(rng.uniform_int(0, 11));
        Tensor<double> x = rand_tensor(rng, {rows, n});
        auto y = g.softmax_rows(x);
        for (std::size_t r = 0; r < rows; ++r) {
            double s = 0;
            for (std::size_t j = 0; j < n; ++j) s += y.at(r, j);
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
        Tensor<double> shifted = x.clone();
        const double c = rng.uniform(-5.0, 5.0);
        const std::size_t r0 =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(rows) - 1));
        for (std::size_t j = 0; j < n; ++j) shifted[r0 * n + j] += c;
        auto y2 = g.softmax_rows(shifted);
        for (std::size_t j = 0; j < n; ++j)
            CHECK(std::abs(y2.at(r0, j) - y.at(r0, j)) < 1e-12);
    }
}

TEST_CASE("softmax_rows: non-finite input is an error") {
    Graph<double> g(false);
    CHECK_THROWS_AS(
        g.softmax_rows(Tensor<double>::from({2}, {std::numeric_limits<double>::infinity(), 0.0})),
        NumericError);
    CHECK_THROWS_AS(g.softmax_rows(Tensor<double>::from({2}, {std::nan(""), 0.0})), NumericError);
}

TEST_CASE("cross_entropy: uniform, saturated and hand-computed cases") {
    Graph<double> g(false);

    Tensor<double> uniform = Tensor<double>::zeros({3, 4});
    const std::int32_t t1[] = {0, 3, 2};
    CHECK(g.cross_entropy(uniform, t1).item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Tensor<double> confident = Tensor<double>::zeros({2, 5});
    confident[0 * 5 + 1] = 20.0;
    confident[1 * 5 + 4] = 20.0;
    const std::int32_t t2[] = {1, 4};
    CHECK(g.cross_entropy(confident, t2).item() < 1e-8);

    Tensor<double> pair = Tensor<double>::from({1, 2}, {std::log(3.0), std::log(1.0)});
    const std::int32_t t3[] = {0};
    CHECK(g.cross_entropy(pair, t3).item() == doctest::Approx(0.2876820724517809).epsilon(1e-12));

    const std::int32_t bad[] = {0, 7, 2};
    CHECK_THROWS_AS(g.cross_entropy(uniform, bad), ConfigError);
}

TEST_CASE("cosine: identity, orthogonality, hand value, zero-norm error") {
    Graph<double> g(false);
    auto v = Tensor<double>::from({3}, {1, 2, 3});
    CHECK(g.cosine(v, v).item() == doctest::Approx(1.0).epsilon(1e-14));

    CHECK(g.cosine(Tensor<double>::from({2}, {1, 0}), Tensor<double>::from({2}, {0, 1})).item() ==
          doctest::Approx(0.0));

    CHECK(g.cosine(Tensor<double>::from({2}, {1, 1}), Tensor<double>::from({2}, {1, 0})).item() ==
          doctest::Approx(0.7071067811865475).epsilon(1e-14));

    CHECK_THROWS_AS(g.cosine(Tensor<double>::zeros({2}), Tensor<double>::from({2}, {1, 0})),
                    NumericError);
}

TEST_CASE("backward accumulates: running it twice doubles every gradient") {
    Rng rng(11, "double");
    Tensor<double> x = rand_tensor(rng, {4, 3}, true);
    Tensor<double> w = rand_tensor(rng, {3, 2}, true);

    Graph<double> g(true);
    auto y = g.matmul(x, w);
    auto loss = g.sum(g.mul(y, y));
    g.backward(loss);
    const std::vector<double> gx1(x.grad().begin(), x.grad().end());
    const std::vector<double> gw1(w.grad().begin(), w.grad().end());
    g.backward(loss);
    for (std::size_t i = 0; i < gx1.size(); ++i) CHECK(x.grad()[i] == 2.0 * gx1[i]);
    for (std::size_t i = 0; i < gw1.size(); ++i) CHECK(w.grad()[i] == 2.0 * gw1[i]);
}

TEST_CASE("graph records are in topological order") {
    Rng rng(12, "topo");
    Tensor<double> x = rand_tensor(rng, {3, 3}, true);
    Graph<double> g(true);
    auto y = g.matmul(x, x);
    auto z = g.add(y, x);
    auto loss = g.sum(g.mul(z, z));
    g.backward(loss);
    CHECK(g.records().size() == 4);
    for (const auto& rec : g.records())
        for (const int in : rec.inputs) CHECK(in <= rec.output);
    for (std::size_t i = 1; i < g.records().size(); ++i)
        CHECK(g.records()[i - 1].output < g.records()[i].output);
}

TEST_CASE("teacher-style constants stay out of the tape") {
    Rng rng(13, "const");
    Tensor<double> x = rand_tensor(rng, {2, 4}, true);
    Tensor<double> constant = rand_tensor(rng, {2, 4}, false);
    Graph<double> g(true);
    auto sim = g.mean_row_cosine(x, constant);
    g.backward(sim);
    double norm = 0;
    for (const double v : x.grad()) norm += v * v;
    CHECK(norm > 0.0);
    CHECK_FALSE(constant.impl()->tracked);
}

TEST_CASE("grad_check validates every differentiable op") {
    Rng rng(21, "gradcheck");
    const double eps = 1e-3;

    SUBCASE("sum of squares is near-exact") {
        Tensor<double> x = rand_tensor(rng, {5, 3}, true);
        auto rep =
            grad_check<double>([&](Graph<double>& g) { return g.sum(g.mul(x, x)); }, x, eps);
        CHECK(rep.max_rel_error < 1e-6);
    }
    SUBCASE("matmul both sides") {
        Tensor<double> x = rand_tensor(rng, {4, 3}, true);
        Tensor<double> b = rand_tensor(rng, {3, 5});
        Tensor<double> w = rand_tensor(rng, {4, 5});
        auto rep = grad_check<double>(
            [&](Graph<double>& g) { return g.sum(g.mul(g.matmul(x, b), w)); }, x, eps);
        CHECK(rep.max_rel_error < 1e-4);

        Tensor<double> y = rand_tensor(rng, {3, 5}, true);
        Tensor<double> a = rand_tensor(rng, {4, 3});
        auto rep2 = grad_check<double>(
            [&](Graph<double>& g) { return g.sum(g.mul(g.matmul(a, y), w)); }, y, eps);
        CHECK(rep2.max_rel_error < 1e-4);
    }
    SUBCASE("matmul_nt both sides") {
        Tensor<double> x = rand_tensor(rng, {4, 6}, true);
        Tensor<double> b = rand_tensor(rng, {5, 6});
        Tensor<double> w = rand_tensor(rng, {4, 5});
        auto rep = grad_check<double>(
            [&](Graph<double>& g) { return g.sum(g.mul(g.matmul_nt(x, b), w)); }, x, eps);
        CHECK(rep.max_rel_error < 1e-4);
        Tensor<double> y = rand_tensor(rng, {5, 6}, true);
        Tensor<double> a = rand_tensor(rng, {4, 6});
        auto rep2 = grad_check<double>(
            [&](Graph<double>& g) { return g.sum(g.mul(g.matmul_nt(a, y), w)); }, y, eps);
        CHECK(rep2.max_rel_error < 1e-4);
    }
    SUBCASE("add, mul, scale chain") {
        Tensor<double> x = rand_tensor(rng, {3, 4}, true);
        Tensor<double> b = rand_tensor(rng, {3, 4});
        auto rep = grad_check<double>(
            [&](Graph<double>& g) { return g.sum(g.mul(g.scale(g.add(x, b), 1.7), b)); }, x, eps);
        CHECK(rep.max_rel_error < 1e-4);
    }
    SUBCASE("silu") {
        Tensor<double> x = rand_tensor(rng, {4, 4}, true);
        Tensor<double> w = rand_tensor(rng, {4, 4});
        auto rep = grad_check<double>(
            [&](Graph<double>& g) { return g.sum(g.mul(g.silu(x), w)); }, x, eps);
        CHECK(rep.max_rel_error < 1e-4);
    }
    SUBCASE("rmsnorm wrt x and w") {
        Tensor<double> x = rand_tensor(rng, {4, 6}, true);
        Tensor<double> w = rand_tensor(rng, {6});
        Tensor<double> proj = rand_tensor(rng, {4, 6});
        auto rep = grad_check<double>(
            [&](Graph<double>& g) { return g.sum(g.mul(g.rmsnorm(x, w, 1e-5), proj)); }, x, eps);
        CHECK(rep.max_rel_error < 1e-4);

        Tensor<double> x2 = rand_tensor(rng, {4, 6});
        Tensor<double> w2 = rand_tensor(rng, {6}, true);
        auto rep2 = grad_check<double>(
            [&](Graph<double>& g) { return g.sum(g.mul(g.rmsnorm(x2, w2, 1e-5), proj)); }, w2,
            eps);
        CHECK(rep2.max_rel_error < 1e-4);
    }
    SUBCASE("softmax_rows and softmax_causal") {
        Tensor<double> x = rand_tensor(rng, {4, 4}, true);
        Tensor<double> w = rand_tensor(rng, {4, 4});
        auto rep = grad_check<double>(
            [&](Graph<double>& g) { return g.sum(g.mul(g.softmax_rows(x), w)); }, x, eps);
        CHECK(rep.max_rel_error < 1e-4);
        auto rep2 = grad_check<double>(
            [&](Graph<double>& g) { return g.sum(g.mul(g.softmax_causal(x), w)); }, x, eps);
        CHECK(rep2.max_rel_error < 1e-4);
    }
    SUBCASE("rope") {
        const std::vector<double> pos = {0, 1, 2, 5};
        const RopeTable table = RopeTable::build(pos, 10000.0, 6);
        Tensor<double> x = rand_tensor(rng, {4, 6}, true);
        Tensor<double> w = rand_tensor(rng, {4, 6});
        auto rep = grad_check<double>(
            [&](Graph<double>& g) { return g.sum(g.mul(g.rope(x, table), w)); }, x, eps);
        CHECK(rep.max_rel_error < 1e-4);
    }
    SUBCASE("embedding table") {
        Tensor<double> table = rand_tensor(rng, {7, 4}, true);
        const std::vector<std::int32_t> ids = {3, 1, 3, 6, 0};
        Tensor<double> w = rand_tensor(rng, {5, 4});
        auto rep = grad_check<double>(
            [&](Graph<double>& g) { return g.sum(g.mul(g.embedding(table, ids), w)); }, table,
            eps);
        CHECK(rep.max_rel_error < 1e-4);
    }
    SUBCASE("cross_entropy") {
        Tensor<double> logits = rand_tensor(rng, {5, 7}, true);
        const std::vector<std::int32_t> targets = {1, 0, 6, 3, 3};
        auto rep = grad_check<double>(
            [&](Graph<double>& g) { return g.cross_entropy(logits, targets); }, logits, eps);
        CHECK(rep.max_rel_error < 1e-4);
    }
    SUBCASE("cosine vs fixed vector") {
        Tensor<double> x = rand_tensor(rng, {6}, true);
        Tensor<double> b = rand_tensor(rng, {6});
        auto rep = grad_check<double>([&](Graph<double>& g) { return g.cosine(x, b); }, x, eps);
        CHECK(rep.max_rel_error < 1e-5);
    }
    SUBCASE("mean_row_cosine both sides") {
        Tensor<double> x = rand_tensor(rng, {4, 5}, true);
        Tensor<double> b = rand_tensor(rng, {4, 5});
        auto rep =
            grad_check<double>([&](Graph<double>& g) { return g.mean_row_cosine(x, b); }, x, eps);
        CHECK(rep.max_rel_error < 1e-4);
        Tensor<double> y = rand_tensor(rng, {4, 5}, true);
        auto rep2 =
            grad_check<double>([&](Graph<double>& g) { return g.mean_row_cosine(b, y); }, y, eps);
        CHECK(rep2.max_rel_error < 1e-4);
    }
    SUBCASE("slice and concat") {
        Tensor<double> x = rand_tensor(rng, {3, 8}, true);
        Tensor<double> w = rand_tensor(rng, {3, 4});
        auto rep = grad_check<double>(
            [&](Graph<double>& g) { return g.sum(g.mul(g.slice_cols(x, 2, 6), w)); }, x, eps);
        CHECK(rep.max_rel_error < 1e-4);

        Tensor<double> w8 = rand_tensor(rng, {3, 8});
        auto rep2 = grad_check<double>(
            [&](Graph<double>& g) {
                const Tensor<double> parts[] = {g.slice_cols(x, 4, 8), g.slice_cols(x, 0, 4)};
                return g.sum(g.mul(g.concat_cols(parts), w8));
            },
            x, eps);
        CHECK(rep2.max_rel_error < 1e-4);
    }
}

TEST_CASE("grad_check flags a non-deterministic function") {
    Rng rng(30, "nondet");
    Tensor<double> x = rand_tensor(rng, {3}, true);
    int calls = 0;
    CHECK_THROWS_AS(grad_check<double>(
                        [&](Graph<double>& g) {
                            ++calls;
                            return g.sum(g.scale(x, 1.0 + 0.001 * calls));
                        },
                        x, 1e-3),
                    NumericError);
}

TEST_CASE("float graph works end to end") {
    Rng rng(31, "f32");
    Tensor<float> x = Tensor<float>::from({2, 3}, random_vec<float>(rng, 6));
    x.set_requires_grad(true);
    Graph<float> g(true);
    auto y = g.softmax_rows(x);
    for (std::size_t r = 0; r < 2; ++r) {
        float s = 0;
        for (std::size_t j = 0; j < 3; ++j) s += y.at(r, j);
        CHECK(std::abs(s - 1.0f) < 1e-6f);
    }
    auto loss = g.sum(g.mul(y, y));
    g.backward(loss);
    CHECK(x.grad().size() == 6);
}

TEST_CASE("tensor invariants: shape/data length and grad shape") {
    CHECK_THROWS_AS(Tensor<double>::from({2, 3}, {1.0, 2.0}), ConfigError);
    Tensor<double> t = Tensor<double>::zeros({2, 2});
    t.set_requires_grad(true);
    CHECK(t.grad().size() == t.size());
    CHECK_THROWS_AS(Tensor<double>::zeros({0, 3}), ConfigError);
}
