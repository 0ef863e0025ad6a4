#include "proxytrain/metric_losses.hpp"

#include <cmath>

#include "proxytrain/errors.hpp"

namespace proxytrain {

InverseTemperature::InverseTemperature(double b) : beta(b) {
    if (!(b > 0.0)) throw ValueError("InverseTemperature: beta must be positive");
}

ProxySet ProxySet::random(std::size_t n_classes, std::size_t dim, double lr_multiplier, Rng& rng) {
    if (n_classes < 1 || dim < 1) throw ValueError("ProxySet: need n_classes, dim >= 1");
    if (!(lr_multiplier > 0.0)) throw ValueError("ProxySet: lr_multiplier must be positive");
    std::vector<double> d(n_classes * dim);
    for (double& v : d) v = rng.normal();
    // i.i.d. standard normal rows, then unit length
    for (std::size_t i = 0; i < n_classes; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < dim; ++j) s += d[i * dim + j] * d[i * dim + j];
        const double inv = 1.0 / std::sqrt(s);
        for (std::size_t j = 0; j < dim; ++j) d[i * dim + j] *= inv;
    }
    ProxySet ps{{"proxies", Tensor({n_classes, dim}, std::move(d)), lr_multiplier,
                 /*weight_decay=*/false}};
    return ps;
}

Var pairwise_sq_distance(const Var& a, const Var& b) {
    if (a.value().rank() != 2 || b.value().rank() != 2 || a.value().dim(1) != b.value().dim(1)) {
        throw ShapeError("pairwise_sq_distance: " + a.value().shape_str() + " vs " +
                         b.value().shape_str());
    }
    // ||a_i||^2 + ||b_j||^2 - 2 a_i.b_j
    Var cross = scale(matmul(a, transpose(b)), -2.0);
    Var a_sq = row_sum(mul(a, a));
    Var b_sq = row_sum(mul(b, b));
    return add_rowvec(add_colvec(cross, a_sq), b_sq);
}

namespace {

void check_labels(const std::vector<int>& labels, std::size_t batch, std::size_t n_classes) {
    if (labels.size() != batch) throw ShapeError("labels: need one per batch row");
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
            throw ValueError("label " + std::to_string(y) + " outside proxy rows [0," +
                             std::to_string(n_classes) + ")");
        }
    }
}

}  // namespace

Var nca_loss(const Var& x, const Var& same_class, const Var& diff_class) {
    if (x.value().rank() != 1) throw ShapeError("nca_loss: anchor must be rank-1");
    if (same_class.value().rank() != 2 || diff_class.value().rank() != 2) {
        throw ShapeError("nca_loss: same/diff sets must be rank-2");
    }
    Var anchor = reshape(x, {1, x.value().dim(0)});
    Var d_pos = pairwise_sq_distance(anchor, same_class);  // [1 x n]
    Var d_neg = pairwise_sq_distance(anchor, diff_class);  // [1 x m]
    // -log(sum exp(-d_pos)) + log(sum exp(-d_neg))
    return sum(sub(logsumexp_rows(neg(d_neg)), logsumexp_rows(neg(d_pos))));
}

Var proxynca_loss(const Var& x, const std::vector<int>& labels, const Var& proxies) {
    const std::size_t k = proxies.value().dim(0);
    if (k < 2) throw ValueError("proxynca_loss: need K >= 2 proxies (Z would be empty)");
    check_labels(labels, x.value().dim(0), k);
    Var d = pairwise_sq_distance(l2_normalize(x), l2_normalize(proxies));  // [B x K]
    Var own = gather_rows(d, labels);                                      // [B]
    Var others = drop_column_per_row(d, labels);                           // [B x K-1]
    // loss_i = d_own + logsumexp(-d_z), z != own
    return mean(add(own, logsumexp_rows(neg(others))));
}

Tensor proxy_assignment_distribution(const Tensor& x_i, const Tensor& proxies,
                                     InverseTemperature beta) {
    if (x_i.rank() != 1 || proxies.rank() != 2 || x_i.dim(0) != proxies.dim(1)) {
        throw ShapeError("proxy_assignment_distribution: x " + x_i.shape_str() + " vs proxies " +
                         proxies.shape_str());
    }
    Var d = pairwise_sq_distance(Var(Tensor({1, x_i.dim(0)},
                                            {x_i.data().begin(), x_i.data().end()})),
                                 Var(proxies));
    Tensor p = softmax_rows(scale(d, -beta.beta)).value();  // [1 x K]
    return Tensor({proxies.dim(0)}, {p.data().begin(), p.data().end()});
}

Var proxynca_pp_loss(const Var& x, const std::vector<int>& labels, const Var& proxies,
                     InverseTemperature beta) {
    const std::size_t k = proxies.value().dim(0);
    if (k < 2) throw ValueError("proxynca_pp_loss: need K >= 2 proxies");
    check_labels(labels, x.value().dim(0), k);
    Var d = pairwise_sq_distance(l2_normalize(x), l2_normalize(proxies));
    Var log_p = log_softmax_rows(scale(d, -beta.beta));  // denominator includes own proxy
    return neg(mean(gather_rows(log_p, labels)));
}

Var normsoftmax_loss(const Var& x, const std::vector<int>& labels, const Var& proxies,
                     InverseTemperature beta) {
    const std::size_t k = proxies.value().dim(0);
    if (k < 2) throw ValueError("normsoftmax_loss: need K >= 2 proxies");
    check_labels(labels, x.value().dim(0), k);
    Var cos = matmul(l2_normalize(x), transpose(l2_normalize(proxies)));  // [B x K]
    Var log_p = log_softmax_rows(scale(cos, beta.beta));
    return neg(mean(gather_rows(log_p, labels)));
}

}  // namespace proxytrain
