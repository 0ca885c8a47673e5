#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <vector>

#include "longred/kernels.hpp"
#include "longred/rng.hpp"
#include "testutil.hpp"

using namespace longred;
using testutil::random_vec;
using testutil::rel_err;

namespace {

template <typename T>
struct Tol;
template <>
struct Tol<float> {
    static constexpr double value = 2e-5;
};
template <>
struct Tol<double> {
    static constexpr double value = 1e-12;
};

const std::vector<std::size_t> kSizes = {1, 2, 3, 7, 8, 15, 16, 31, 33, 64, 67, 128, 250};

struct MatShape {
    std::size_t m, k, n;
};
const std::vector<MatShape> kShapes = {
    {1, 1, 1}, {2, 3, 4}, {5, 8, 3}, {7, 16, 16}, {16, 32, 48}, {33, 17, 65}, {4, 96, 130},
};

template <typename T>
void check_elementwise_pair(const kern::Table<T>& ref, const kern::Table<T>& alt) {
    Rng rng(99, "kern-elem");
    for (const auto n : kSizes) {
        const auto a = random_vec<T>(rng, n);
        const auto b = random_vec<T>(rng, n);

        CHECK(rel_err(ref.dot(a.data(), b.data(), n), alt.dot(a.data(), b.data(), n),
                      static_cast<double>(n)) < Tol<T>::value);
        CHECK(rel_err(ref.sum(a.data(), n), alt.sum(a.data(), n), static_cast<double>(n)) <
              Tol<T>::value);
        CHECK(rel_err(ref.sumsq(a.data(), n), alt.sumsq(a.data(), n), static_cast<double>(n)) <
              Tol<T>::value);

        auto y1 = b, y2 = b;
        ref.axpy(T(0.37), a.data(), y1.data(), n);
        alt.axpy(T(0.37), a.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(rel_err(y1[i], y2[i]) < Tol<T>::value);

        auto s1 = a, s2 = a;
        ref.scale(T(1.7), s1.data(), n);
        alt.scale(T(1.7), s2.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(s1[i] == s2[i]);

        std::vector<T> o1(n), o2(n);
        ref.add(a.data(), b.data(), o1.data(), n);
        alt.add(a.data(), b.data(), o2.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(o1[i] == o2[i]);

        ref.mul(a.data(), b.data(), o1.data(), n);
        alt.mul(a.data(), b.data(), o2.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(o1[i] == o2[i]);

        auto m1 = b, m2 = b;
        ref.mul_acc(a.data(), b.data(), m1.data(), n);
        alt.mul_acc(a.data(), b.data(), m2.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(rel_err(m1[i], m2[i]) < Tol<T>::value);
    }
}

template <typename T>
void check_matmuls(const kern::Table<T>& ref, const kern::Table<T>& alt) {
    Rng rng(7, "kern-mm");
    for (const auto& s : kShapes) {
        const auto a_nn = random_vec<T>(rng, s.m * s.k);
        const auto b_nn = random_vec<T>(rng, s.k * s.n);
        const auto init = random_vec<T>(rng, s.m * s.n);

        auto c1 = init, c2 = init;
        ref.matmul_nn(a_nn.data(), b_nn.data(), c1.data(), s.m, s.k, s.n);
        alt.matmul_nn(a_nn.data(), b_nn.data(), c2.data(), s.m, s.k, s.n);
        for (std::size_t i = 0; i < c1.size(); ++i)
            CHECK(rel_err(c1[i], c2[i], static_cast<double>(s.k)) < Tol<T>::value);

        const auto b_nt = random_vec<T>(rng, s.n * s.k);
        c1 = init;
        c2 = init;
        ref.matmul_nt(a_nn.data(), b_nt.data(), c1.data(), s.m, s.k, s.n);
        alt.matmul_nt(a_nn.data(), b_nt.data(), c2.data(), s.m, s.k, s.n);
        for (std::size_t i = 0; i < c1.size(); ++i)
            CHECK(rel_err(c1[i], c2[i], static_cast<double>(s.k)) < Tol<T>::value);

        const auto a_tn = random_vec<T>(rng, s.k * s.m);
        c1 = init;
        c2 = init;
        ref.matmul_tn(a_tn.data(), b_nn.data(), c1.data(), s.m, s.k, s.n);
        alt.matmul_tn(a_tn.data(), b_nn.data(), c2.data(), s.m, s.k, s.n);
        for (std::size_t i = 0; i < c1.size(); ++i)
            CHECK(rel_err(c1[i], c2[i], static_cast<double>(s.k)) < Tol<T>::value);
    }
}

template <typename T>
void check_adamw(const kern::Table<T>& ref, const kern::Table<T>& alt) {
    Rng rng(13, "kern-adamw");
    const std::size_t n = 67;
    auto p1 = random_vec<T>(rng, n), m1 = random_vec<T>(rng, n, 0.0, 0.1),
         v1 = random_vec<T>(rng, n, 0.0, 0.1);
    auto p2 = p1, m2 = m1, v2 = v1;
    for (int step = 1; step <= 5; ++step) {
        const auto g = random_vec<T>(rng, n);
        const T b1 = T(1) - static_cast<T>(std::pow(0.9, step));
        const T b2 = T(1) - static_cast<T>(std::pow(0.95, step));
        ref.adamw(p1.data(), m1.data(), v1.data(), g.data(), n, T(1e-3), T(0.9), T(0.95),
                  T(1e-8), T(0.1), b1, b2);
        alt.adamw(p2.data(), m2.data(), v2.data(), g.data(), n, T(1e-3), T(0.9), T(0.95),
                  T(1e-8), T(0.1), b1, b2);
    }
    for (std::size_t i = 0; i < n; ++i) {
        CHECK(rel_err(p1[i], p2[i]) < Tol<T>::value);
        CHECK(rel_err(m1[i], m2[i]) < Tol<T>::value);
        CHECK(rel_err(v1[i], v2[i]) < Tol<T>::value);
    }
}

}  // namespace

TEST_CASE("scalar lane is self-consistent on a known product") {
    const auto& t = kern::table<double>(kern::Isa::scalar);
    const double a[6] = {1, 2, 3, 4, 5, 6};   // [2,3]
    const double b[6] = {7, 8, 9, 10, 11, 12};  // [3,2]
    double c[4] = {0, 0, 0, 0};
    t.matmul_nn(a, b, c, 2, 3, 2);
    CHECK(c[0] == doctest::Approx(58));
    CHECK(c[1] == doctest::Approx(64));
    CHECK(c[2] == doctest::Approx(139));
    CHECK(c[3] == doctest::Approx(154));
}

TEST_CASE("dispatch selects a built lane and can be forced") {
    const auto isa = kern::active_isa();
    CHECK((isa == kern::Isa::scalar || isa == kern::Isa::avx2));
    kern::force_isa(kern::Isa::scalar);
    CHECK(kern::active_isa() == kern::Isa::scalar);
    CHECK(kern::active<double>().dot == kern::table<double>(kern::Isa::scalar).dot);
    kern::force_isa(isa);
}

TEST_CASE("avx2 lane matches the scalar reference") {
    if (!kern::cpu_has_avx2() ||
        kern::table<double>(kern::Isa::avx2).dot == kern::table<double>(kern::Isa::scalar).dot) {
        MESSAGE("avx2 lane unavailable; skipping equivalence");
        return;
    }
    SUBCASE("f64 elementwise") {
        check_elementwise_pair(kern::table<double>(kern::Isa::scalar),
                               kern::table<double>(kern::Isa::avx2));
    }
    SUBCASE("f32 elementwise") {
        check_elementwise_pair(kern::table<float>(kern::Isa::scalar),
                               kern::table<float>(kern::Isa::avx2));
    }
    SUBCASE("f64 matmul") {
        check_matmuls(kern::table<double>(kern::Isa::scalar), kern::table<double>(kern::Isa::avx2));
    }
    SUBCASE("f32 matmul") {
        check_matmuls(kern::table<float>(kern::Isa::scalar), kern::table<float>(kern::Isa::avx2));
    }
    SUBCASE("f64 adamw") {
        check_adamw(kern::table<double>(kern::Isa::scalar), kern::table<double>(kern::Isa::avx2));
    }
    SUBCASE("f32 adamw") {
        check_adamw(kern::table<float>(kern::Isa::scalar), kern::table<float>(kern::Isa::avx2));
    }
}
