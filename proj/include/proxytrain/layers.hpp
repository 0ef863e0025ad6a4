#pragma once

#include <optional>
#include <string>
#include <vector>

#include "proxytrain/autograd.hpp"
#include "proxytrain/rng.hpp"
#include "proxytrain/tensor.hpp"

namespace proxytrain {

// ---- layer ops -------------------------------------------------------------

/// x W + b for x:[B x in], W:[in x out], b:[out].
Var linear_forward(const Var& x, const Var& w, const Var& b);

/// Per-row standardization with population variance (denominator E) and
/// eps=1e-5 inside the square root; no affine parameters. A constant row maps
/// to all zeros.
Var layer_norm_no_affine(const Var& x, double eps = 1e-5);

/// Rows rescaled to unit Euclidean norm. A zero row is a degenerate embedding
/// and raises ValueError.
Var l2_normalize(const Var& x);

/// Mean of the k largest spatial entries per channel for g:[B x S x E]
/// (S is the flattened spatial extent, M*M for an M x M map). k=1 is global max
/// pooling, k=S global average pooling. Ties break toward the lowest spatial
/// index; each selected entry receives gradient 1/k.
Var global_k_max_pool(const Var& g, std::size_t k);

/// Zero each entry with probability p, scale survivors by 1/(1-p). Identity
/// when training == false or p == 0.
Var dropout(const Var& x, double p, Rng& rng, bool training);

/// Dropout with an externally fixed mask (already scaled); used to freeze the
/// mask for gradient checks.
Var dropout_with_mask(const Var& x, const Tensor& mask);
Tensor make_dropout_mask(const Shape& shape, double p, Rng& rng);

// ---- model -----------------------------------------------------------------

enum class LayerKind { linear, relu, layer_norm, l2_normalize, dropout, kmax_pool };

struct LayerSpec {
    LayerKind kind = LayerKind::relu;
    std::size_t in = 0, out = 0;   // linear
    double p = 0.0;                // dropout
    std::size_t spatial = 0;       // kmax_pool: flattened spatial extent (M^2)
    std::size_t k = 0;             // kmax_pool

    static LayerSpec linear(std::size_t in, std::size_t out);
    static LayerSpec relu();
    static LayerSpec layer_norm();
    static LayerSpec l2_normalize();
    static LayerSpec dropout(double p);
    static LayerSpec kmax_pool(std::size_t spatial, std::size_t k);
    std::string to_string() const;
};

/// Parse a whitespace-separated layer list, e.g.
///   "linear(16,48) relu kmaxpool(8,1) linear(6,8) layernorm l2norm".
std::vector<LayerSpec> parse_layers(const std::string& text);
std::string layers_to_string(const std::vector<LayerSpec>& specs);

struct Parameter {
    std::string name;
    Tensor value;
    double lr_multiplier = 1.0;
    bool weight_decay = true;
};

/// Records which parameter Vars participate in a graph so that gradients()
/// and the optimizer agree on identity. One Binding per recorded graph.
class Binding {
public:
    Var bind(Parameter& p);
    const std::vector<Var>& vars() const { return vars_; }
    std::vector<Parameter*>& params() { return params_; }

private:
    std::vector<Var> vars_;
    std::vector<Parameter*> params_;
};

/// Ordered list of layers with their parameters. Linear weights use He
/// initialization, biases start at zero. Parameter names are "L<i>.W" /
/// "L<i>.b" by layer index. `head_init_scale` multiplies the init std of the
/// last linear layer (the embedding head); with a normalization layer behind
/// it the forward pass is unaffected while head gradients scale as 1/scale,
/// mirroring the gradient asymmetry a pretrained backbone feeds a fresh head.
class Model {
public:
    Model() = default;
    Model(std::vector<LayerSpec> specs, Rng& init_rng, double head_init_scale = 1.0);

    /// Records the forward graph; parameters are bound through `binding`.
    /// `dropout_rng` may be null when no dropout layer is present or when
    /// training == false.
    Var forward(const Var& x, bool training, Rng* dropout_rng, Binding& binding);

    /// Forward that also returns the activation after layer `tap_after`
    /// (e.g. penultimate features for consistency losses).
    std::pair<Var, Var> forward_tap(const Var& x, bool training, Rng* dropout_rng,
                                    Binding& binding, std::size_t tap_after);
    /// Evaluation-mode tap with substituted parameter values (teacher weights).
    std::pair<Tensor, Tensor> forward_eval_with_tap(const std::vector<Tensor>& params,
                                                    const Tensor& x, std::size_t tap_after) const;

    /// Evaluation-mode forward on plain tensors (dropout = identity).
    Tensor forward_eval(const Tensor& x) const;
    /// Same, but substituting parameter values (used for EMA teacher weights).
    Tensor forward_eval_with(const std::vector<Tensor>& params, const Tensor& x) const;

    std::vector<Parameter>& params() { return params_; }
    const std::vector<Parameter>& params() const { return params_; }
    const std::vector<LayerSpec>& specs() const { return specs_; }

    /// Index into params() of the weight of the last linear layer (the
    /// embedding layer in retrieval models).
    std::size_t last_linear_weight_index() const;

    std::size_t input_dim() const;
    std::size_t output_dim() const;

private:
    std::vector<Parameter> params_;
    std::vector<LayerSpec> specs_;
    std::vector<int> param_offset_;  // per layer: index into params_, -1 if none
};

}  // namespace proxytrain
