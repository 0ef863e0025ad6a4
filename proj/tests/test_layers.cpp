#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "proxytrain/errors.hpp"
#include "proxytrain/layers.hpp"

using namespace proxytrain;

namespace {

Tensor randn(Rng& rng, Shape s, double sigma = 1.0) {
    std::vector<double> d(shape_numel(s));
    for (double& v : d) v = rng.normal(0.0, sigma);
    return Tensor(std::move(s), std::move(d));
}

// exhaustive k-subset mean maximization (the pooling definition, literally)
double kmax_oracle(const std::vector<double>& column, std::size_t k) {
    const std::size_t s = column.size();
    double best = -1e300;
    for (std::size_t mask = 0; mask < (std::size_t{1} << s); ++mask) {
        if (static_cast<std::size_t>(__builtin_popcountll(mask)) != k) continue;
        double acc = 0.0;
        for (std::size_t i = 0; i < s; ++i) {
            if ((mask >> i) & 1) acc += column[i];
        }
        best = std::max(best, acc / static_cast<double>(k));
    }
    return best;
}

}  // namespace

TEST_CASE("linear_forward") {
    SUBCASE("identity weights, zero bias") {
        Var x(Tensor({2, 2}, {1, 2, 3, 4}));
        Var w(Tensor({2, 2}, {1, 0, 0, 1}));
        Var b(Tensor::zeros({2}));
        Tensor y = linear_forward(x, w, b).value();
        for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == x.value()[i]);
    }
    SUBCASE("x=[[1,2]], W=[[1],[1]], b=[3] -> [[6]]") {
        Var x(Tensor({1, 2}, {1, 2}));
        Var w(Tensor({2, 1}, {1, 1}));
        Var b(Tensor({1}, {3}));
        CHECK(linear_forward(x, w, b).value().item() == 6.0);
    }
    SUBCASE("random instance matches a naive triple loop") {
        Rng rng(99);
        Tensor x = randn(rng, {4, 3});
        Tensor w = randn(rng, {3, 5});
        Tensor b = randn(rng, {5});
        Tensor y = linear_forward(Var(x), Var(w), Var(b)).value();
        for (std::size_t i = 0; i < 4; ++i) {
            for (std::size_t j = 0; j < 5; ++j) {
                double acc = b.at(j);
                for (std::size_t p = 0; p < 3; ++p) acc += x.at(i, p) * w.at(p, j);
                CHECK(y.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
            }
        }
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(linear_forward(Var(Tensor({1, 2}, {1, 2})), Var(Tensor({3, 1}, {1, 2, 3})),
                                       Var(Tensor({1}, {0}))),
                        ShapeError);
    }
}

TEST_CASE("layer_norm_no_affine") {
    SUBCASE("constant row maps to zeros") {
        Tensor y = layer_norm_no_affine(Var(Tensor({1, 3}, {1, 1, 1}))).value();
        for (std::size_t i = 0; i < 3; ++i) CHECK(y[i] == 0.0);
    }
    SUBCASE("symmetric row") {
        Tensor y = layer_norm_no_affine(Var(Tensor({1, 2}, {0, 2}))).value();
        CHECK(y.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-5));
        CHECK(y.at(0, 1) == doctest::Approx(1.0).epsilon(1e-5));
    }
    SUBCASE("row [1,2,3] matches the direct formula") {
        Tensor y = layer_norm_no_affine(Var(Tensor({1, 3}, {1, 2, 3}))).value();
        const double denom = std::sqrt(2.0 / 3.0 + 1e-5);
        CHECK(y.at(0, 0) == doctest::Approx((1.0 - 2.0) / denom).epsilon(1e-14));
        CHECK(y.at(0, 1) == doctest::Approx(0.0).epsilon(1e-14));
        CHECK(y.at(0, 2) == doctest::Approx((3.0 - 2.0) / denom).epsilon(1e-14));
    }
    SUBCASE("row statistics for non-constant rows") {
        Rng rng(4);
        Tensor x = randn(rng, {8, 16}, 3.0);
        Tensor y = layer_norm_no_affine(Var(x)).value();
        for (std::size_t i = 0; i < 8; ++i) {
            double m = 0.0, v = 0.0;
            for (std::size_t j = 0; j < 16; ++j) m += y.at(i, j);
            m /= 16.0;
            for (std::size_t j = 0; j < 16; ++j) v += (y.at(i, j) - m) * (y.at(i, j) - m);
            v /= 16.0;
            CHECK(std::abs(m) <= 1e-10);
            CHECK(std::abs(v - 1.0) <= 1e-4);
        }
    }
    SUBCASE("needs at least 2 features") {
        CHECK_THROWS_AS(layer_norm_no_affine(Var(Tensor({2, 1}, {1, 2}))), ValueError);
    }
}

TEST_CASE("l2_normalize") {
    SUBCASE("[3,4] -> [0.6,0.8]") {
        Tensor y = l2_normalize(Var(Tensor({1, 2}, {3, 4}))).value();
        CHECK(y.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
        CHECK(y.at(0, 1) == doctest::Approx(0.8).epsilon(1e-15));
    }
    SUBCASE("unit vector unchanged") {
        Tensor y = l2_normalize(Var(Tensor({1, 2}, {0, 1}))).value();
        CHECK(y.at(0, 0) == 0.0);
        CHECK(y.at(0, 1) == 1.0);
    }
    SUBCASE("output rows have norm 1 within 1e-12") {
        Rng rng(8);
        Tensor x = randn(rng, {5, 7}, 4.0);
        Tensor y = l2_normalize(Var(x)).value();
        for (std::size_t i = 0; i < 5; ++i) {
            double n = 0.0;
            for (std::size_t j = 0; j < 7; ++j) n += y.at(i, j) * y.at(i, j);
            CHECK(std::abs(std::sqrt(n) - 1.0) <= 1e-12);
        }
    }
    SUBCASE("zero row is an error") {
        CHECK_THROWS_AS(l2_normalize(Var(Tensor({1, 2}, {0, 0}))), ValueError);
    }
}

TEST_CASE("global_k_max_pool") {
    SUBCASE("k=1 is global max pooling, bit-equal") {
        Rng rng(17);
        Tensor g = randn(rng, {3, 9, 4});
        Tensor pooled = global_k_max_pool(Var(g), 1).value();
        for (std::size_t b = 0; b < 3; ++b) {
            for (std::size_t e = 0; e < 4; ++e) {
                double m = g.at(b, 0, e);
                for (std::size_t s = 1; s < 9; ++s) m = std::max(m, g.at(b, s, e));
                CHECK(pooled.at(b, e) == m);
            }
        }
    }
    SUBCASE("k=S is global average pooling") {
        Rng rng(18);
        Tensor g = randn(rng, {2, 6, 3});
        Tensor pooled = global_k_max_pool(Var(g), 6).value();
        for (std::size_t b = 0; b < 2; ++b) {
            for (std::size_t e = 0; e < 3; ++e) {
                double m = 0.0;
                for (std::size_t s = 0; s < 6; ++s) m += g.at(b, s, e);
                CHECK(pooled.at(b, e) == doctest::Approx(m / 6.0).epsilon(1e-15));
            }
        }
    }
    SUBCASE("channel [5,1,4,2], k=2 -> 4.5; matches subset enumeration") {
        Tensor g({1, 4, 1}, {5, 1, 4, 2});
        CHECK(global_k_max_pool(Var(g), 2).value().item() == 4.5);
        for (std::size_t k = 1; k <= 4; ++k) {
            CHECK(global_k_max_pool(Var(g), k).value().item() ==
                  doctest::Approx(kmax_oracle({5, 1, 4, 2}, k)).epsilon(1e-15));
        }
    }
    SUBCASE("monotone nonincreasing in k for random inputs") {
        Rng rng(19);
        for (int trial = 0; trial < 5; ++trial) {
            Tensor g = randn(rng, {2, 7, 3});
            double prev[2][3];
            for (std::size_t k = 1; k <= 7; ++k) {
                Tensor p = global_k_max_pool(Var(g), k).value();
                for (std::size_t b = 0; b < 2; ++b) {
                    for (std::size_t e = 0; e < 3; ++e) {
                        if (k > 1) CHECK(p.at(b, e) <= prev[b][e] + 1e-15);
                        prev[b][e] = p.at(b, e);
                    }
                }
            }
        }
    }
    SUBCASE("tie-break: lowest spatial index receives the gradient") {
        Var g = Var::parameter("g", Tensor({1, 3, 1}, {7, 7, 1}));
        GradMap grad = gradients(sum(global_k_max_pool(g, 1)), {g});
        CHECK(grad.at("g").at(0, 0, 0) == 1.0);
        CHECK(grad.at("g").at(0, 1, 0) == 0.0);
    }
    SUBCASE("gradient mass 1/k per selected entry") {
        Var g = Var::parameter("g", Tensor({1, 4, 1}, {5, 1, 4, 2}));
        GradMap grad = gradients(sum(global_k_max_pool(g, 2)), {g});
        CHECK(grad.at("g").at(0, 0, 0) == 0.5);
        CHECK(grad.at("g").at(0, 1, 0) == 0.0);
        CHECK(grad.at("g").at(0, 2, 0) == 0.5);
    }
    SUBCASE("k out of range") {
        Tensor g({1, 4, 1}, {5, 1, 4, 2});
        CHECK_THROWS_AS(global_k_max_pool(Var(g), 0), ValueError);
        CHECK_THROWS_AS(global_k_max_pool(Var(g), 5), ValueError);
    }
}

TEST_CASE("dropout") {
    Rng rng(20);
    SUBCASE("p=0 and evaluation mode are identities") {
        Tensor x = randn(rng, {3, 3});
        Tensor y0 = dropout(Var(x), 0.0, rng, true).value();
        Tensor ye = dropout(Var(x), 0.7, rng, false).value();
        for (std::size_t i = 0; i < 9; ++i) {
            CHECK(y0[i] == x[i]);
            CHECK(ye[i] == x[i]);
        }
    }
    SUBCASE("p=0.5 over 1e5 ones keeps the mean within 3 sigma of 1") {
        Tensor ones = Tensor::ones({100000});
        Tensor y = dropout(Var(ones), 0.5, rng, true).value();
        double mean = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) mean += y[i];
        mean /= static_cast<double>(y.size());
        // entries are 2*Bernoulli(1/2): variance 1, sigma_mean = 1/sqrt(1e5)
        CHECK(std::abs(mean - 1.0) <= 3.0 / std::sqrt(1e5));
    }
    SUBCASE("p outside [0,1) rejected") {
        CHECK_THROWS_AS(dropout(Var(Tensor::ones({2})), 1.0, rng, true), ValueError);
    }
}

TEST_CASE("layer list parsing round-trips") {
    const std::string text = "linear(16,48) relu kmaxpool(8,1) linear(6,8) layernorm l2norm";
    auto specs = parse_layers(text);
    REQUIRE(specs.size() == 6);
    CHECK(specs[0].kind == LayerKind::linear);
    CHECK(specs[0].in == 16);
    CHECK(specs[2].kind == LayerKind::kmax_pool);
    CHECK(specs[2].spatial == 8);
    CHECK(specs[2].k == 1);
    CHECK(layers_to_string(specs) == text);
    CHECK_THROWS_AS(parse_layers("linear(16)"), ConfigError);
    CHECK_THROWS_AS(parse_layers("conv(3,3)"), ConfigError);
}

TEST_CASE("model forward shapes and determinism") {
    Rng init(31);
    Model model(parse_layers("linear(4,12) relu kmaxpool(3,1) linear(4,5) layernorm l2norm"), init);
    CHECK(model.input_dim() == 4);
    CHECK(model.output_dim() == 5);

    Rng rng(32);
    Tensor x = randn(rng, {6, 4});
    Tensor a = model.forward_eval(x);
    Tensor b = model.forward_eval(x);
    CHECK(a.shape() == Shape{6, 5});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

    // rows are unit-norm because the model ends in l2norm
    for (std::size_t i = 0; i < 6; ++i) {
        double n = 0.0;
        for (std::size_t j = 0; j < 5; ++j) n += a.at(i, j) * a.at(i, j);
        CHECK(std::abs(n - 1.0) <= 1e-12);
    }
}

TEST_CASE("model training step reduces a simple loss") {
    Rng init(41);
    Model model(parse_layers("linear(3,8) relu linear(8,2)"), init);
    Rng rng(42);
    Tensor x = randn(rng, {10, 3});

    auto loss_value = [&] {
        Binding binding;
        Var out = model.forward(Var(x), true, nullptr, binding);
        return sum(mul(out, out)).value().item();
    };
    const double before = loss_value();
    for (int i = 0; i < 20; ++i) {
        Binding binding;
        Var out = model.forward(Var(x), true, nullptr, binding);
        Var loss = sum(mul(out, out));
        GradMap g = gradients(loss, binding.vars());
        for (Parameter* p : binding.params()) {
            p->value = t_axpy(-0.01, g.at(p->name), p->value);
        }
    }
    CHECK(loss_value() < before);
}
