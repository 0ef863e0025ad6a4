#include "proxytrain/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "proxytrain/aux_losses.hpp"
#include "proxytrain/layers.hpp"
#include "proxytrain/metric_losses.hpp"

namespace proxytrain {

namespace {

Tensor randn(Rng& rng, Shape shape, double sigma = 1.0) {
    std::vector<double> d(shape_numel(shape));
    for (double& v : d) v = rng.normal(0.0, sigma);
    return Tensor(std::move(shape), std::move(d));
}

// Values bounded away from zero, for ops with a kink at the origin.
Tensor randn_off_zero(Rng& rng, Shape shape, double min_abs) {
    std::vector<double> d(shape_numel(shape));
    for (double& v : d) {
        const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
        v = sign * (min_abs + std::abs(rng.normal()));
    }
    return Tensor(std::move(shape), std::move(d));
}

std::vector<int> random_labels(Rng& rng, std::size_t n, int k) {
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(k)));
    return y;
}

}  // namespace

std::vector<GradCheckCase> standard_gradcheck_cases() {
    std::vector<GradCheckCase> cases;

    cases.push_back({"loss/nca", [](Rng& rng) {
        Tensor anchor = randn(rng, {3});
        Tensor same = randn(rng, {2, 3});
        Tensor diff = randn(rng, {3, 3});
        LossFn fn = [](const std::vector<Var>& p) { return nca_loss(p[0], p[1], p[2]); };
        return std::pair<LossFn, std::vector<Tensor>>{fn, {anchor, same, diff}};
    }});

    cases.push_back({"loss/proxynca", [](Rng& rng) {
        Tensor x = randn(rng, {4, 3});
        Tensor proxies = randn(rng, {3, 3});
        auto labels = random_labels(rng, 4, 3);
        LossFn fn = [labels](const std::vector<Var>& p) {
            return proxynca_loss(p[0], labels, p[1]);
        };
        return std::pair<LossFn, std::vector<Tensor>>{fn, {x, proxies}};
    }});

    cases.push_back({"loss/proxynca_pp", [](Rng& rng) {
        Tensor x = randn(rng, {4, 3});
        Tensor proxies = randn(rng, {3, 3});
        auto labels = random_labels(rng, 4, 3);
        const double beta = rng.uniform(0.5, 9.0);
        LossFn fn = [labels, beta](const std::vector<Var>& p) {
            return proxynca_pp_loss(p[0], labels, p[1], InverseTemperature(beta));
        };
        return std::pair<LossFn, std::vector<Tensor>>{fn, {x, proxies}};
    }});

    cases.push_back({"loss/normsoftmax", [](Rng& rng) {
        Tensor x = randn(rng, {4, 3});
        Tensor proxies = randn(rng, {3, 3});
        auto labels = random_labels(rng, 4, 3);
        const double beta = rng.uniform(0.5, 9.0);
        LossFn fn = [labels, beta](const std::vector<Var>& p) {
            return normsoftmax_loss(p[0], labels, p[1], InverseTemperature(beta));
        };
        return std::pair<LossFn, std::vector<Tensor>>{fn, {x, proxies}};
    }});

    cases.push_back({"loss/self_perturbation", [](Rng& rng) {
        Tensor z = randn(rng, {3, 4});
        Tensor zs = randn(rng, {3, 4});
        LossFn fn = [](const std::vector<Var>& p) { return self_perturbation_loss(p[0], p[1]); };
        return std::pair<LossFn, std::vector<Tensor>>{fn, {z, zs}};
    }});

    cases.push_back({"loss/contrastive", [](Rng& rng) {
        // keep Dist away from the hinge at margin=1 and from 0
        Tensor a, b;
        double dist;
        do {
            a = randn(rng, {5});
            b = randn(rng, {5});
            Tensor d = t_sub(a, b);
            dist = t_dot(d, d) / static_cast<double>(d.size());
        } while (std::abs(dist - 1.0) < 0.02 || dist < 0.02);
        LossFn fn = [](const std::vector<Var>& p) {
            return add(contrastive_loss(p[0], p[1], true), contrastive_loss(p[0], p[1], false));
        };
        return std::pair<LossFn, std::vector<Tensor>>{fn, {a, b}};
    }});

    cases.push_back({"loss/masked_cross_entropy", [](Rng& rng) {
        Tensor logits = randn(rng, {4, 3});
        auto labels = random_labels(rng, 4, 3);
        labels[1] = PseudoLabelSet::IGNORE;
        PseudoLabelSet y(labels, 3);
        LossFn fn = [y](const std::vector<Var>& p) { return masked_cross_entropy(p[0], y); };
        return std::pair<LossFn, std::vector<Tensor>>{fn, {logits}};
    }});

    cases.push_back({"loss/consistency", [](Rng& rng) {
        Tensor fs = randn(rng, {2, 4, 3});
        Tensor ft = randn(rng, {2, 4, 3});
        const std::uint64_t mask_seed = rng.next_u64();
        // fresh rng per evaluation -> identical (frozen) dropout masks
        LossFn fn = [mask_seed](const std::vector<Var>& p) {
            Rng mask_rng(mask_seed);
            return consistency_feature_loss(p[0], p[1], 0.5, mask_rng);
        };
        return std::pair<LossFn, std::vector<Tensor>>{fn, {fs, ft}};
    }});

    cases.push_back({"layer/linear", [](Rng& rng) {
        Tensor x = randn(rng, {4, 3});
        Tensor w = randn(rng, {3, 2});
        Tensor b = randn(rng, {2});
        LossFn fn = [](const std::vector<Var>& p) {
            return mean(mul(linear_forward(p[0], p[1], p[2]), linear_forward(p[0], p[1], p[2])));
        };
        return std::pair<LossFn, std::vector<Tensor>>{fn, {x, w, b}};
    }});

    cases.push_back({"layer/relu", [](Rng& rng) {
        Tensor x = randn_off_zero(rng, {3, 4}, 0.05);
        LossFn fn = [](const std::vector<Var>& p) { return sum(mul(relu(p[0]), relu(p[0]))); };
        return std::pair<LossFn, std::vector<Tensor>>{fn, {x}};
    }});

    cases.push_back({"layer/layer_norm", [](Rng& rng) {
        Tensor x = randn(rng, {3, 5});
        LossFn fn = [](const std::vector<Var>& p) {
            Var y = layer_norm_no_affine(p[0]);
            return mean(mul(y, vexp(scale(y, 0.1))));
        };
        return std::pair<LossFn, std::vector<Tensor>>{fn, {x}};
    }});

    cases.push_back({"layer/l2_normalize", [](Rng& rng) {
        Tensor x = randn_off_zero(rng, {3, 4}, 0.1);
        LossFn fn = [](const std::vector<Var>& p) {
            Var y = l2_normalize(p[0]);
            return sum(mul(y, vexp(scale(y, 0.3))));
        };
        return std::pair<LossFn, std::vector<Tensor>>{fn, {x}};
    }});

    cases.push_back({"layer/kmax_pool", [](Rng& rng) {
        Tensor g = randn(rng, {2, 6, 3});
        const std::size_t k = 1 + rng.uniform_index(6);
        LossFn fn = [k](const std::vector<Var>& p) {
            Var y = global_k_max_pool(p[0], k);
            return mean(mul(y, y));
        };
        return std::pair<LossFn, std::vector<Tensor>>{fn, {g}};
    }});

    cases.push_back({"layer/dropout", [](Rng& rng) {
        Tensor x = randn(rng, {4, 5});
        Rng mask_rng(rng.next_u64());
        Tensor mask = make_dropout_mask({4, 5}, 0.5, mask_rng);  // frozen mask
        LossFn fn = [mask](const std::vector<Var>& p) {
            Var y = dropout_with_mask(p[0], mask);
            return mean(mul(y, y));
        };
        return std::pair<LossFn, std::vector<Tensor>>{fn, {x}};
    }});

    return cases;
}

std::vector<GradCheckResult> run_gradcheck(const std::vector<GradCheckCase>& cases, int instances,
                                           double eps, std::uint64_t seed) {
    std::vector<GradCheckResult> results;
    results.reserve(cases.size());
    for (const GradCheckCase& c : cases) {
        GradCheckResult r{c.name, 0.0, instances};
        Rng rng = Rng::stream(seed, "gradcheck/" + c.name);
        for (int i = 0; i < instances; ++i) {
            auto [fn, params] = c.make(rng);
            r.max_error = std::max(r.max_error, finite_diff_check(fn, params, eps));
        }
        results.push_back(std::move(r));
    }
    return results;
}

}  // namespace proxytrain
