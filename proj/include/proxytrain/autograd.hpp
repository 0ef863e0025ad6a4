#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "proxytrain/rng.hpp"
#include "proxytrain/tensor.hpp"

namespace proxytrain {

class Var;

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

/// Called by a node's backward pass to hand a gradient contribution to one of
/// its inputs. Contributions for the same node accumulate by addition.
using GradSink = std::function<void(Node*, Tensor)>;

struct Node {
    Tensor value;
    bool requires_grad = false;
    std::string param_name;  // non-empty only for parameter leaves
    std::vector<NodePtr> inputs;
    // backward(upstream, sink): push d(loss)/d(input) for each input.
    // Null for leaves and for nodes whose inputs carry no gradient.
    std::function<void(const Tensor&, const GradSink&)> backward;
};

}  // namespace detail

/// Handle to a node in a recorded computation DAG. Building expressions out
/// of Vars records the forward value and enough structure for exact reverse
/// accumulation. Vars are cheap to copy (shared graph ownership).
class Var {
public:
    Var() : Var(Tensor()) {}
    explicit Var(Tensor value);
    Var(Tensor value, std::vector<Var> inputs,
        std::function<void(const Tensor&, const detail::GradSink&)> backward);

    static Var parameter(std::string name, Tensor value);

    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    bool requires_grad() const { return node_->requires_grad; }
    const std::string& param_name() const { return node_->param_name; }
    detail::Node* node() const { return node_.get(); }

private:
    detail::NodePtr node_;
};

/// Gradient of a scalar loss for each named parameter. Parameters not on any
/// path to the loss receive zero gradients of matching shape.
using GradMap = std::map<std::string, Tensor>;

GradMap gradients(const Var& loss, const std::vector<Var>& params);

// ---- primitive ops -------------------------------------------------------

Var add(const Var& a, const Var& b);
Var add(const Var& a, double c);
Var sub(const Var& a, const Var& b);
Var neg(const Var& a);
Var mul(const Var& a, const Var& b);  // elementwise, same shape
Var scale(const Var& a, double c);
Var div(const Var& a, const Var& b);  // elementwise, same shape
Var vexp(const Var& a);
Var vlog(const Var& a);
Var vsqrt(const Var& a);
Var vabs(const Var& a);                  // subgradient 0 at 0
Var pow_scalar(const Var& a, double p);  // a^p elementwise
Var relu(const Var& a);                  // derivative 0 at 0
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var reshape(const Var& a, Shape shape);

// Reductions. max ties resolve to the first (lowest) index.
Var sum(const Var& a);
Var mean(const Var& a);
Var max_all(const Var& a);
Var row_sum(const Var& a);   // [B x C] -> [B]
Var row_mean(const Var& a);  // [B x C] -> [B]
Var row_max(const Var& a);   // [B x C] -> [B]

// Leading-dimension broadcasts over a [B x C] matrix.
Var add_rowvec(const Var& x, const Var& v);  // v: [C], added to every row
Var add_colvec(const Var& x, const Var& v);  // v: [B], added to every column
Var mul_colvec(const Var& x, const Var& v);  // row b scaled by v[b]

// Comparison-free selects (indices are plain data, not differentiated).
Var gather_rows(const Var& x, const std::vector<int>& col);            // [B x C] -> [B]
Var drop_column_per_row(const Var& x, const std::vector<int>& col);    // [B x C] -> [B x C-1]

// Fused row ops with hand-derived backwards; all are gated by the same
// finite-difference oracle as everything else.
Var logsumexp_rows(const Var& x);    // [B x C] -> [B], numerically stable
Var log_softmax_rows(const Var& x);  // [B x C] -> [B x C]
Var softmax_rows(const Var& x);      // [B x C] -> [B x C]

/// Custom-op escape hatch: wrap a precomputed value with an explicit backward.
Var make_op(Tensor value, std::vector<Var> inputs,
            std::function<void(const Tensor&, const detail::GradSink&)> backward);

// ---- finite-difference oracle ---------------------------------------------

/// Rebuilds the loss graph from the given parameter tensors. Parameter Vars
/// are named "p0", "p1", ... in order.
using LossFn = std::function<Var(const std::vector<Var>&)>;

/// Max over all parameter entries of
///   |g_analytic - g_central_fd| / max(1, |g_central_fd|).
/// Requires eps in (0, 1e-3] and a deterministic loss_fn (two evaluations at
/// the same point must agree bit-for-bit).
double finite_diff_check(const LossFn& loss_fn, const std::vector<Tensor>& params, double eps);

}  // namespace proxytrain
