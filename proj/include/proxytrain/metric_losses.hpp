#pragma once

#include <vector>

#include "proxytrain/autograd.hpp"
#include "proxytrain/layers.hpp"
#include "proxytrain/rng.hpp"

namespace proxytrain {

/// Inverse temperature: logits are multiplied by beta before the softmax.
/// Large beta sharpens the distribution, small beta flattens it. beta = 1/T
/// in the distance-based losses; the logit-softening add-on multiplies by its
/// T directly, so it also maps onto beta (beta = T there).
struct InverseTemperature {
    double beta;
    explicit InverseTemperature(double b);
};

/// One learnable proxy row per class (row index == class id). Proxies carry
/// their own learning-rate multiplier so they can move faster than the rest
/// of the model; weight decay is disabled for them (it fights normalization).
struct ProxySet {
    Parameter proxies;  // [K x E]

    static ProxySet random(std::size_t n_classes, std::size_t dim, double lr_multiplier, Rng& rng);
    std::size_t n_classes() const { return proxies.value.dim(0); }
    std::size_t dim() const { return proxies.value.dim(1); }
};

/// D[i,j] = ||a_i - b_j||^2 for a:[B x E], b:[K x E]. For unit rows this
/// equals 2 - 2 a_i.b_j.
Var pairwise_sq_distance(const Var& a, const Var& b);

/// -log( sum_{j in same} exp(-d(x,s_j)) / sum_{k in diff} exp(-d(x,k)) )
/// for a single anchor x:[E]. Distances are squared Euclidean on the inputs
/// as given (no normalization). The value is a log ratio, not a probability,
/// so it may be negative.
Var nca_loss(const Var& x, const Var& same_class, const Var& diff_class);

/// Batch-mean ProxyNCA: rows of x and the proxies are L2-normalized inside;
/// the denominator excludes the own-class proxy (other-class proxies only).
Var proxynca_loss(const Var& x, const std::vector<int>& labels, const Var& proxies);

/// Softmax over all proxies of -beta * d(x_hat, p_hat); entry [own class] is
/// the proxy assignment probability. Inputs must already be normalized.
Tensor proxy_assignment_distribution(const Tensor& x_i, const Tensor& proxies,
                                     InverseTemperature beta);

/// Batch-mean -log P_i with temperature: the denominator runs over all
/// proxies including the own one, and beta multiplies every distance.
Var proxynca_pp_loss(const Var& x, const std::vector<int>& labels, const Var& proxies,
                     InverseTemperature beta);

/// Same shape as proxynca_pp_loss but with cosine similarity logits:
/// -log softmax(beta * x_hat . p_hat)[own].
Var normsoftmax_loss(const Var& x, const std::vector<int>& labels, const Var& proxies,
                     InverseTemperature beta);

}  // namespace proxytrain
