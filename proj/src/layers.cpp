#include "proxytrain/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "proxytrain/errors.hpp"

namespace proxytrain {

Var linear_forward(const Var& x, const Var& w, const Var& b) {
    if (x.value().rank() != 2 || w.value().rank() != 2 || b.value().rank() != 1 ||
        x.value().dim(1) != w.value().dim(0) || w.value().dim(1) != b.value().dim(0)) {
        throw ShapeError("linear_forward: x " + x.value().shape_str() + ", W " +
                         w.value().shape_str() + ", b " + b.value().shape_str());
    }
    return add_rowvec(matmul(x, w), b);
}

Var layer_norm_no_affine(const Var& x, double eps) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2) throw ShapeError("layer_norm: need rank-2, got " + xv.shape_str());
    const std::size_t b = xv.dim(0), e = xv.dim(1);
    if (e < 2) throw ValueError("layer_norm: need at least 2 features per row");

    std::vector<double> out(b * e), mu(b), inv_sigma(b);
    for (std::size_t i = 0; i < b; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < e; ++j) m += xv[i * e + j];
        m /= static_cast<double>(e);
        double var = 0.0;
        for (std::size_t j = 0; j < e; ++j) {
            const double d = xv[i * e + j] - m;
            var += d * d;
        }
        var /= static_cast<double>(e);
        mu[i] = m;
        inv_sigma[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < e; ++j) out[i * e + j] = (xv[i * e + j] - m) * inv_sigma[i];
    }

    detail::Node* xn = x.node();
    Tensor y({b, e}, out);
    Tensor yc = y;
    // dx = inv_sigma * (up - mean(up) - y * mean(up .* y)) per row.
    return make_op(std::move(y), {x},
                   [xn, b, e, yc, inv_sigma](const Tensor& up, const detail::GradSink& sink) {
                       std::vector<double> g(b * e);
                       for (std::size_t i = 0; i < b; ++i) {
                           double s = 0.0, sy = 0.0;
                           for (std::size_t j = 0; j < e; ++j) {
                               s += up[i * e + j];
                               sy += up[i * e + j] * yc[i * e + j];
                           }
                           s /= static_cast<double>(e);
                           sy /= static_cast<double>(e);
                           for (std::size_t j = 0; j < e; ++j) {
                               g[i * e + j] =
                                   inv_sigma[i] * (up[i * e + j] - s - yc[i * e + j] * sy);
                           }
                       }
                       sink(xn, Tensor({b, e}, std::move(g)));
                   });
}

Var l2_normalize(const Var& x) {
    const Tensor& xv = x.value();
    if (xv.rank() != 2) throw ShapeError("l2_normalize: need rank-2, got " + xv.shape_str());
    const std::size_t b = xv.dim(0), e = xv.dim(1);
    std::vector<double> out(b * e), inv_norm(b);
    for (std::size_t i = 0; i < b; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < e; ++j) s += xv[i * e + j] * xv[i * e + j];
        if (s == 0.0) throw ValueError("l2_normalize: zero row " + std::to_string(i) +
                                       " (degenerate embedding)");
        inv_norm[i] = 1.0 / std::sqrt(s);
        for (std::size_t j = 0; j < e; ++j) out[i * e + j] = xv[i * e + j] * inv_norm[i];
    }
    detail::Node* xn = x.node();
    Tensor y({b, e}, out);
    Tensor yc = y;
    // dx = (up - y * (y . up)) / ||x|| per row.
    return make_op(std::move(y), {x},
                   [xn, b, e, yc, inv_norm](const Tensor& up, const detail::GradSink& sink) {
                       std::vector<double> g(b * e);
                       for (std::size_t i = 0; i < b; ++i) {
                           double dot = 0.0;
                           for (std::size_t j = 0; j < e; ++j) dot += up[i * e + j] * yc[i * e + j];
                           for (std::size_t j = 0; j < e; ++j)
                               g[i * e + j] =
                                   (up[i * e + j] - yc[i * e + j] * dot) * inv_norm[i];
                       }
                       sink(xn, Tensor({b, e}, std::move(g)));
                   });
}

Var global_k_max_pool(const Var& g, std::size_t k) {
    const Tensor& gv = g.value();
    if (gv.rank() != 3) throw ShapeError("global_k_max_pool: need [B x S x E], got " + gv.shape_str());
    const std::size_t b = gv.dim(0), s = gv.dim(1), e = gv.dim(2);
    if (k < 1 || k > s) {
        throw ValueError("global_k_max_pool: k=" + std::to_string(k) + " outside [1, " +
                         std::to_string(s) + "]");
    }

    std::vector<double> out(b * e);
    std::vector<std::size_t> picked(b * e * k);
    std::vector<std::size_t> order(s);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t c = 0; c < e; ++c) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            auto val = [&](std::size_t sp) { return gv[(i * s + sp) * e + c]; };
            // value descending, spatial index ascending on ties
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a2, std::size_t b2) { return val(a2) > val(b2); });
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) {
                picked[(i * e + c) * k + t] = order[t];
                acc += val(order[t]);
            }
            out[i * e + c] = acc / static_cast<double>(k);
        }
    }

    detail::Node* gn = g.node();
    return make_op(Tensor({b, e}, std::move(out)), {g},
                   [gn, b, s, e, k, picked](const Tensor& up, const detail::GradSink& sink) {
                       std::vector<double> grad(b * s * e, 0.0);
                       const double w = 1.0 / static_cast<double>(k);
                       for (std::size_t i = 0; i < b; ++i)
                           for (std::size_t c = 0; c < e; ++c) {
                               const double u = up[i * e + c] * w;
                               for (std::size_t t = 0; t < k; ++t) {
                                   const std::size_t sp = picked[(i * e + c) * k + t];
                                   grad[(i * s + sp) * e + c] += u;
                               }
                           }
                       sink(gn, Tensor({b, s, e}, std::move(grad)));
                   });
}

Tensor make_dropout_mask(const Shape& shape, double p, Rng& rng) {
    if (!(p >= 0.0 && p < 1.0)) throw ValueError("dropout: p must be in [0,1)");
    std::vector<double> m(shape_numel(shape));
    const double keep_scale = 1.0 / (1.0 - p);
    for (double& v : m) v = (rng.uniform() < p) ? 0.0 : keep_scale;
    return Tensor(shape, std::move(m));
}

Var dropout_with_mask(const Var& x, const Tensor& mask) {
    require_same_shape(x.value(), mask, "dropout_with_mask");
    return mul(x, Var(mask));
}

Var dropout(const Var& x, double p, Rng& rng, bool training) {
    if (!(p >= 0.0 && p < 1.0)) throw ValueError("dropout: p must be in [0,1)");
    if (!training || p == 0.0) return x;
    return dropout_with_mask(x, make_dropout_mask(x.value().shape(), p, rng));
}

// ---- LayerSpec --------------------------------------------------------------

LayerSpec LayerSpec::linear(std::size_t in, std::size_t out) {
    if (in == 0 || out == 0) throw ValueError("linear: dims must be positive");
    LayerSpec s;
    s.kind = LayerKind::linear;
    s.in = in;
    s.out = out;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::relu;
    return s;
}

LayerSpec LayerSpec::layer_norm() {
    LayerSpec s;
    s.kind = LayerKind::layer_norm;
    return s;
}

LayerSpec LayerSpec::l2_normalize() {
    LayerSpec s;
    s.kind = LayerKind::l2_normalize;
    return s;
}

LayerSpec LayerSpec::dropout(double p) {
    if (!(p >= 0.0 && p < 1.0)) throw ValueError("dropout: p must be in [0,1)");
    LayerSpec s;
    s.kind = LayerKind::dropout;
    s.p = p;
    return s;
}

LayerSpec LayerSpec::kmax_pool(std::size_t spatial, std::size_t k) {
    if (spatial == 0 || k < 1 || k > spatial) {
        throw ValueError("kmaxpool: need 1 <= k <= spatial");
    }
    LayerSpec s;
    s.kind = LayerKind::kmax_pool;
    s.spatial = spatial;
    s.k = k;
    return s;
}

std::string LayerSpec::to_string() const {
    std::ostringstream os;
    switch (kind) {
        case LayerKind::linear: os << "linear(" << in << "," << out << ")"; break;
        case LayerKind::relu: os << "relu"; break;
        case LayerKind::layer_norm: os << "layernorm"; break;
        case LayerKind::l2_normalize: os << "l2norm"; break;
        case LayerKind::dropout: os << "dropout(" << p << ")"; break;
        case LayerKind::kmax_pool: os << "kmaxpool(" << spatial << "," << k << ")"; break;
    }
    return os.str();
}

std::vector<LayerSpec> parse_layers(const std::string& text) {
    std::vector<LayerSpec> specs;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) {
        auto args_of = [&](const std::string& name) {
            std::string inner = tok.substr(name.size());
            if (inner.size() < 2 || inner.front() != '(' || inner.back() != ')') {
                throw ConfigError("layer '" + tok + "': expected " + name + "(...)");
            }
            inner = inner.substr(1, inner.size() - 2);
            std::replace(inner.begin(), inner.end(), ',', ' ');
            std::istringstream as(inner);
            std::vector<double> args;
            double v;
            while (as >> v) args.push_back(v);
            return args;
        };
        if (tok.rfind("linear", 0) == 0) {
            auto a = args_of("linear");
            if (a.size() != 2) throw ConfigError("linear needs (in,out): " + tok);
            specs.push_back(LayerSpec::linear(static_cast<std::size_t>(a[0]),
                                              static_cast<std::size_t>(a[1])));
        } else if (tok == "relu") {
            specs.push_back(LayerSpec::relu());
        } else if (tok == "layernorm") {
            specs.push_back(LayerSpec::layer_norm());
        } else if (tok == "l2norm") {
            specs.push_back(LayerSpec::l2_normalize());
        } else if (tok.rfind("dropout", 0) == 0) {
            auto a = args_of("dropout");
            if (a.size() != 1) throw ConfigError("dropout needs (p): " + tok);
            specs.push_back(LayerSpec::dropout(a[0]));
        } else if (tok.rfind("kmaxpool", 0) == 0) {
            auto a = args_of("kmaxpool");
            if (a.size() != 2) throw ConfigError("kmaxpool needs (spatial,k): " + tok);
            specs.push_back(LayerSpec::kmax_pool(static_cast<std::size_t>(a[0]),
                                                 static_cast<std::size_t>(a[1])));
        } else {
            throw ConfigError("unknown layer '" + tok + "'");
        }
    }
    return specs;
}

std::string layers_to_string(const std::vector<LayerSpec>& specs) {
    std::string out;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (i) out += ' ';
        out += specs[i].to_string();
    }
    return out;
}

// ---- Binding / Model ---------------------------------------------------------

Var Binding::bind(Parameter& p) {
    // One node per parameter per graph: a second forward pass over the same
    // parameters reuses the Var, so gradients accumulate across branches.
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (params_[i] == &p) return vars_[i];
    }
    Var v = Var::parameter(p.name, p.value);
    vars_.push_back(v);
    params_.push_back(&p);
    return v;
}

Model::Model(std::vector<LayerSpec> specs, Rng& init_rng, double head_init_scale)
    : specs_(std::move(specs)) {
    if (!(head_init_scale > 0.0)) throw ValueError("model: head_init_scale must be positive");
    param_offset_.assign(specs_.size(), -1);
    std::size_t last_linear = SIZE_MAX;
    for (std::size_t i = specs_.size(); i-- > 0;) {
        if (specs_[i].kind == LayerKind::linear) {
            last_linear = i;
            break;
        }
    }
    for (std::size_t i = 0; i < specs_.size(); ++i) {
        const LayerSpec& s = specs_[i];
        if (s.kind != LayerKind::linear) continue;
        param_offset_[i] = static_cast<int>(params_.size());
        double std_w = std::sqrt(2.0 / static_cast<double>(s.in));
        if (i == last_linear) std_w *= head_init_scale;
        std::vector<double> w(s.in * s.out);
        for (double& v : w) v = init_rng.normal(0.0, std_w);
        params_.push_back({"L" + std::to_string(i) + ".W", Tensor({s.in, s.out}, std::move(w)),
                           1.0, true});
        params_.push_back({"L" + std::to_string(i) + ".b", Tensor::zeros({s.out}), 1.0, true});
    }
}

namespace {

Var apply_layers(const std::vector<LayerSpec>& specs, const std::vector<int>& offsets,
                 const std::vector<Var>& param_vars, const Var& input, bool training,
                 Rng* dropout_rng, std::size_t tap_after = SIZE_MAX, Var* tap = nullptr) {
    Var h = input;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const LayerSpec& s = specs[i];
        switch (s.kind) {
            case LayerKind::linear: {
                const int off = offsets[i];
                h = linear_forward(h, param_vars[off], param_vars[off + 1]);
                break;
            }
            case LayerKind::relu:
                h = relu(h);
                break;
            case LayerKind::layer_norm:
                h = layer_norm_no_affine(h);
                break;
            case LayerKind::l2_normalize:
                h = l2_normalize(h);
                break;
            case LayerKind::dropout:
                if (training) {
                    if (!dropout_rng) throw ValueError("model: dropout layer needs an rng in training mode");
                    h = dropout(h, s.p, *dropout_rng, true);
                }
                break;
            case LayerKind::kmax_pool: {
                const std::size_t flat = h.value().dim(1);
                if (h.value().rank() != 2 || flat % s.spatial != 0) {
                    throw ShapeError("kmaxpool: input " + h.value().shape_str() +
                                     " not divisible into spatial " + std::to_string(s.spatial));
                }
                const std::size_t e = flat / s.spatial;
                h = reshape(h, {h.value().dim(0), s.spatial, e});
                h = global_k_max_pool(h, s.k);
                break;
            }
        }
        if (tap && i == tap_after) *tap = h;
    }
    return h;
}

}  // namespace

Var Model::forward(const Var& x, bool training, Rng* dropout_rng, Binding& binding) {
    std::vector<Var> vars;
    vars.reserve(params_.size());
    for (Parameter& p : params_) vars.push_back(binding.bind(p));
    return apply_layers(specs_, param_offset_, vars, x, training, dropout_rng);
}

Tensor Model::forward_eval(const Tensor& x) const {
    std::vector<Var> vars;
    vars.reserve(params_.size());
    for (const Parameter& p : params_) vars.push_back(Var(p.value));
    return apply_layers(specs_, param_offset_, vars, Var(x), false, nullptr).value();
}

Tensor Model::forward_eval_with(const std::vector<Tensor>& params, const Tensor& x) const {
    if (params.size() != params_.size()) {
        throw ValueError("forward_eval_with: expected " + std::to_string(params_.size()) +
                         " parameter tensors, got " + std::to_string(params.size()));
    }
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& t : params) vars.push_back(Var(t));
    return apply_layers(specs_, param_offset_, vars, Var(x), false, nullptr).value();
}

std::pair<Var, Var> Model::forward_tap(const Var& x, bool training, Rng* dropout_rng,
                                       Binding& binding, std::size_t tap_after) {
    if (tap_after >= specs_.size()) throw ValueError("forward_tap: tap layer out of range");
    std::vector<Var> vars;
    vars.reserve(params_.size());
    for (Parameter& p : params_) vars.push_back(binding.bind(p));
    Var tap;
    Var out = apply_layers(specs_, param_offset_, vars, x, training, dropout_rng, tap_after, &tap);
    return {out, tap};
}

std::pair<Tensor, Tensor> Model::forward_eval_with_tap(const std::vector<Tensor>& params,
                                                       const Tensor& x,
                                                       std::size_t tap_after) const {
    if (tap_after >= specs_.size()) throw ValueError("forward_eval_with_tap: tap layer out of range");
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& t : params) vars.push_back(Var(t));
    Var tap;
    Var out = apply_layers(specs_, param_offset_, vars, Var(x), false, nullptr, tap_after, &tap);
    return {out.value(), tap.value()};
}

std::size_t Model::last_linear_weight_index() const {
    for (std::size_t i = specs_.size(); i-- > 0;) {
        if (specs_[i].kind == LayerKind::linear) return static_cast<std::size_t>(param_offset_[i]);
    }
    throw ValueError("model has no linear layer");
}

std::size_t Model::input_dim() const {
    for (const LayerSpec& s : specs_) {
        if (s.kind == LayerKind::linear) return s.in;
    }
    throw ValueError("model has no linear layer");
}

std::size_t Model::output_dim() const {
    for (std::size_t i = specs_.size(); i-- > 0;) {
        if (specs_[i].kind == LayerKind::linear) return specs_[i].out;
    }
    throw ValueError("model has no linear layer");
}

}  // namespace proxytrain
