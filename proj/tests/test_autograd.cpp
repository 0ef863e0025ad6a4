#include <doctest.h>

#include <cmath>

#include "proxytrain/autograd.hpp"
#include "proxytrain/errors.hpp"
#include "proxytrain/rng.hpp"

using namespace proxytrain;

TEST_CASE("forward evaluation basics") {
    // log(exp(x)) elementwise recovers x
    Var x(Tensor({2}, {0.5, -1.2}));
    Tensor y = vlog(vexp(x)).value();
    CHECK(y.at(0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(y.at(1) == doctest::Approx(-1.2).epsilon(1e-15));

    // sum over a 3x3 tensor of ones
    CHECK(sum(Var(Tensor::ones({3, 3}))).value().item() == 9.0);
}

TEST_CASE("evaluate is deterministic bit-for-bit") {
    Rng rng(3);
    std::vector<double> d(12);
    for (double& v : d) v = rng.normal();
    Tensor t({3, 4}, d);
    auto run = [&] {
        Var x(t);
        return sum(mul(log_softmax_rows(x), vexp(scale(x, 0.5)))).value().item();
    };
    CHECK(run() == run());
}

TEST_CASE("overflow surfaces as a numeric error") {
    Var x(Tensor({1}, {1000.0}));
    CHECK_THROWS_AS(vexp(x), NumericError);
}

TEST_CASE("quadratic gradient") {
    // loss = sum(w*w), w = [1,2] -> grad [2,4]
    Var w = Var::parameter("w", Tensor({2}, {1, 2}));
    Var loss = sum(mul(w, w));
    GradMap g = gradients(loss, {w});
    CHECK(g.at("w").at(0) == 2.0);
    CHECK(g.at("w").at(1) == 4.0);
}

TEST_CASE("constant loss gives zero gradients") {
    Var w = Var::parameter("w", Tensor({2}, {1, 2}));
    Var loss = sum(Var(Tensor({2}, {5, 5})));
    GradMap g = gradients(loss, {w});
    CHECK(g.at("w").at(0) == 0.0);
    CHECK(g.at("w").at(1) == 0.0);
}

TEST_CASE("loss must be scalar") {
    Var w = Var::parameter("w", Tensor({2}, {1, 2}));
    CHECK_THROWS_AS(gradients(mul(w, w), {w}), ValueError);
}

TEST_CASE("softmax cross-entropy gradient matches finite differences") {
    Rng rng(11);
    std::vector<double> d(3);
    for (double& v : d) v = rng.normal();
    Tensor logits({1, 3}, d);
    LossFn fn = [](const std::vector<Var>& p) {
        return neg(sum(gather_rows(log_softmax_rows(p[0]), {1})));
    };
    CHECK(finite_diff_check(fn, {logits}, 1e-6) <= 1e-6);
}

TEST_CASE("finite_diff_check validates eps and determinism") {
    Tensor w({2}, {1, 2});
    LossFn fn = [](const std::vector<Var>& p) { return sum(mul(p[0], p[0])); };
    CHECK(finite_diff_check(fn, {w}, 1e-6) <= 1e-9);  // quadratic: exact
    CHECK_THROWS_AS(finite_diff_check(fn, {w}, 0.0), ValueError);
    CHECK_THROWS_AS(finite_diff_check(fn, {w}, 1e-2), ValueError);

    int calls = 0;
    LossFn nondet = [&calls](const std::vector<Var>& p) {
        return add(sum(p[0]), 0.001 * static_cast<double>(calls++));
    };
    CHECK_THROWS_AS(finite_diff_check(nondet, {w}, 1e-6), ValueError);
}

TEST_CASE("max subgradient: first index wins on ties") {
    Var x = Var::parameter("x", Tensor({4}, {3, 7, 7, 1}));
    GradMap g = gradients(max_all(x), {x});
    CHECK(g.at("x").at(0) == 0.0);
    CHECK(g.at("x").at(1) == 1.0);  // first of the tied maxima
    CHECK(g.at("x").at(2) == 0.0);

    Var m = Var::parameter("m", Tensor({2, 2}, {5, 5, 2, 9}));
    GradMap gr = gradients(sum(row_max(m)), {m});
    CHECK(gr.at("m").at(0, 0) == 1.0);
    CHECK(gr.at("m").at(0, 1) == 0.0);
    CHECK(gr.at("m").at(1, 1) == 1.0);
}

TEST_CASE("relu and abs derivatives are 0 at the kink") {
    Var x = Var::parameter("x", Tensor({3}, {-1, 0, 2}));
    GradMap g = gradients(sum(relu(x)), {x});
    CHECK(g.at("x").at(0) == 0.0);
    CHECK(g.at("x").at(1) == 0.0);
    CHECK(g.at("x").at(2) == 1.0);

    GradMap ga = gradients(sum(vabs(x)), {x});
    CHECK(ga.at("x").at(0) == -1.0);
    CHECK(ga.at("x").at(1) == 0.0);
    CHECK(ga.at("x").at(2) == 1.0);
}

TEST_CASE("gradient of a sum equals the sum of gradients on random DAGs") {
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> wd(6), vd(6);
        for (double& x : wd) x = rng.uniform(0.3, 2.0);
        for (double& x : vd) x = rng.uniform(0.3, 2.0);
        Tensor wt({2, 3}, wd), vt({2, 3}, vd);

        auto make_f = [](const Var& w, const Var& v) {
            return sum(mul(vlog(add(mul(w, w), 1.0)), vexp(scale(v, 0.3))));
        };
        auto make_g = [](const Var& w, const Var& v) {
            return mean(mul(vsqrt(add(mul(w, v), 2.0)), w));
        };

        // combined graph
        Var w = Var::parameter("w", wt);
        Var v = Var::parameter("v", vt);
        GradMap both = gradients(add(make_f(w, v), make_g(w, v)), {w, v});

        // separate graphs
        Var w1 = Var::parameter("w", wt);
        Var v1 = Var::parameter("v", vt);
        GradMap gf = gradients(make_f(w1, v1), {w1, v1});
        Var w2 = Var::parameter("w", wt);
        Var v2 = Var::parameter("v", vt);
        GradMap gg = gradients(make_g(w2, v2), {w2, v2});

        for (const char* name : {"w", "v"}) {
            Tensor expect = t_add(gf.at(name), gg.at(name));
            CHECK(max_abs_diff(both.at(name), expect) <= 1e-12);
        }
    }
}

TEST_CASE("diamond-shaped graphs accumulate correctly") {
    // y = w * w reused twice: loss = sum(y) + sum(y)
    Var w = Var::parameter("w", Tensor({2}, {3, 4}));
    Var y = mul(w, w);
    GradMap g = gradients(add(sum(y), sum(y)), {w});
    CHECK(g.at("w").at(0) == 12.0);
    CHECK(g.at("w").at(1) == 16.0);
}

TEST_CASE("matmul, transpose, broadcast, gather gradients pass finite differences") {
    Rng rng(5);
    auto randn = [&rng](Shape s) {
        std::vector<double> d(shape_numel(s));
        for (double& v : d) v = rng.normal();
        return Tensor(std::move(s), std::move(d));
    };

    SUBCASE("matmul + add_rowvec") {
        LossFn fn = [](const std::vector<Var>& p) {
            return mean(mul(add_rowvec(matmul(p[0], p[1]), p[2]),
                            add_rowvec(matmul(p[0], p[1]), p[2])));
        };
        CHECK(finite_diff_check(fn, {randn({3, 4}), randn({4, 2}), randn({2})}, 1e-6) <= 1e-8);
    }
    SUBCASE("add_colvec + mul_colvec + transpose") {
        LossFn fn = [](const std::vector<Var>& p) {
            Var m = mul_colvec(add_colvec(transpose(p[0]), p[1]), p[1]);
            return sum(mul(m, m));
        };
        CHECK(finite_diff_check(fn, {randn({3, 2}), randn({2})}, 1e-6) <= 1e-8);
    }
    SUBCASE("gather and drop_column_per_row") {
        std::vector<int> idx{2, 0, 1};
        LossFn fn = [idx](const std::vector<Var>& p) {
            Var picked = gather_rows(p[0], idx);
            Var rest = drop_column_per_row(p[0], idx);
            return add(sum(mul(picked, picked)), mean(vexp(scale(rest, 0.5))));
        };
        CHECK(finite_diff_check(fn, {randn({3, 4})}, 1e-6) <= 1e-8);
    }
    SUBCASE("logsumexp and softmax rows") {
        LossFn fn = [](const std::vector<Var>& p) {
            return add(sum(logsumexp_rows(p[0])), sum(mul(softmax_rows(p[0]), p[0])));
        };
        CHECK(finite_diff_check(fn, {randn({3, 4})}, 1e-6) <= 1e-7);
    }
    SUBCASE("reshape, div, pow") {
        LossFn fn = [](const std::vector<Var>& p) {
            Var a = reshape(p[0], {2, 6});
            return sum(div(pow_scalar(a, 2.0), add(mul(a, a), 1.0)));
        };
        CHECK(finite_diff_check(fn, {randn({3, 4})}, 1e-6) <= 1e-7);
    }
}

TEST_CASE("unreached parameters receive zero gradients of matching shape") {
    Var w = Var::parameter("w", Tensor({2}, {1, 2}));
    Var u = Var::parameter("u", Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
    GradMap g = gradients(sum(mul(w, w)), {w, u});
    CHECK(g.at("u").shape() == Shape{3, 2});
    for (std::size_t i = 0; i < 6; ++i) CHECK(g.at("u")[i] == 0.0);
}

TEST_CASE("shape mismatch in ops names both shapes") {
    Var a(Tensor({2, 2}, {1, 2, 3, 4}));
    Var b(Tensor({4}, {1, 2, 3, 4}));
    CHECK_THROWS_AS(add(a, b), ShapeError);
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}
