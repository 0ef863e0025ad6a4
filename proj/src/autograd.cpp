#include "proxytrain/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "proxytrain/errors.hpp"

namespace proxytrain {

using detail::GradSink;
using detail::Node;
using detail::NodePtr;

Var::Var(Tensor value) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
}

Var::Var(Tensor value, std::vector<Var> inputs,
         std::function<void(const Tensor&, const GradSink&)> backward)
    : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    for (const Var& in : inputs) {
        node_->inputs.push_back(in.node_);
        node_->requires_grad = node_->requires_grad || in.requires_grad();
    }
    if (node_->requires_grad) node_->backward = std::move(backward);
}

Var Var::parameter(std::string name, Tensor value) {
    Var v(std::move(value));
    v.node_->requires_grad = true;
    v.node_->param_name = std::move(name);
    return v;
}

Var make_op(Tensor value, std::vector<Var> inputs,
            std::function<void(const Tensor&, const GradSink&)> backward) {
    return Var(std::move(value), std::move(inputs), std::move(backward));
}

namespace {

// Post-order DFS; the reverse is a valid order for reverse accumulation.
void topo_sort(Node* root, std::vector<Node*>& order) {
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* in = node->inputs[next++].get();
            if (in->requires_grad && !visited.count(in)) {
                visited.insert(in);
                stack.emplace_back(in, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
}

}  // namespace

GradMap gradients(const Var& loss, const std::vector<Var>& params) {
    if (loss.value().size() != 1) {
        throw ValueError("gradients: loss must be scalar, got shape " + loss.value().shape_str());
    }
    std::vector<Node*> order;
    if (loss.requires_grad()) topo_sort(loss.node(), order);

    std::unordered_map<Node*, Tensor> grads;
    grads.emplace(loss.node(), Tensor::ones(loss.value().shape()));

    GradSink sink = [&grads](Node* n, Tensor g) {
        if (!n->requires_grad) return;
        require_same_shape(n->value, g, "gradient accumulation");
        auto it = grads.find(n);
        if (it == grads.end()) {
            grads.emplace(n, std::move(g));
        } else {
            it->second = t_add(it->second, g);
        }
    };

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        auto g = grads.find(n);
        if (g == grads.end() || !n->backward) continue;
        n->backward(g->second, sink);
    }

    GradMap out;
    for (const Var& p : params) {
        if (p.param_name().empty()) {
            throw ValueError("gradients: params must be named parameter Vars");
        }
        auto it = grads.find(p.node());
        Tensor g = (it != grads.end()) ? it->second : zeros_like(p.value());
        auto [pos, inserted] = out.emplace(p.param_name(), std::move(g));
        if (!inserted) throw ValueError("gradients: duplicate parameter name '" + p.param_name() + "'");
    }
    return out;
}

// ---- elementwise ----------------------------------------------------------

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor v = t_add(a.value(), b.value());
    Node* an = a.node();
    Node* bn = b.node();
    return make_op(std::move(v), {a, b}, [an, bn](const Tensor& up, const GradSink& sink) {
        sink(an, up);
        sink(bn, up);
    });
}

Var add(const Var& a, double c) {
    std::vector<double> d(a.value().size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.value()[i] + c;
    Node* an = a.node();
    return make_op(Tensor(a.shape(), std::move(d)), {a},
                   [an](const Tensor& up, const GradSink& sink) { sink(an, up); });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor v = t_sub(a.value(), b.value());
    Node* an = a.node();
    Node* bn = b.node();
    return make_op(std::move(v), {a, b}, [an, bn](const Tensor& up, const GradSink& sink) {
        sink(an, up);
        sink(bn, t_scale(up, -1.0));
    });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor v = t_mul(a.value(), b.value());
    Node* an = a.node();
    Node* bn = b.node();
    Tensor av = a.value(), bv = b.value();
    return make_op(std::move(v), {a, b},
                   [an, bn, av, bv](const Tensor& up, const GradSink& sink) {
                       sink(an, t_mul(up, bv));
                       sink(bn, t_mul(up, av));
                   });
}

Var scale(const Var& a, double c) {
    Node* an = a.node();
    return make_op(t_scale(a.value(), c), {a},
                   [an, c](const Tensor& up, const GradSink& sink) { sink(an, t_scale(up, c)); });
}

Var div(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "div");
    std::vector<double> d(a.value().size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a.value()[i] / b.value()[i];
    Node* an = a.node();
    Node* bn = b.node();
    Tensor av = a.value(), bv = b.value();
    return make_op(Tensor(a.shape(), std::move(d)), {a, b},
                   [an, bn, av, bv](const Tensor& up, const GradSink& sink) {
                       std::vector<double> ga(up.size()), gb(up.size());
                       for (std::size_t i = 0; i < up.size(); ++i) {
                           ga[i] = up[i] / bv[i];
                           gb[i] = -up[i] * av[i] / (bv[i] * bv[i]);
                       }
                       sink(an, Tensor(up.shape(), std::move(ga)));
                       sink(bn, Tensor(up.shape(), std::move(gb)));
                   });
}

namespace {

template <typename F, typename DF>
Var unary_op(const Var& a, F f, DF df) {
    std::vector<double> d(a.value().size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = f(a.value()[i]);
    Node* an = a.node();
    Tensor av = a.value();
    return make_op(Tensor(a.shape(), std::move(d)), {a},
                   [an, av, df](const Tensor& up, const GradSink& sink) {
                       std::vector<double> g(up.size());
                       for (std::size_t i = 0; i < up.size(); ++i) g[i] = up[i] * df(av[i]);
                       sink(an, Tensor(up.shape(), std::move(g)));
                   });
}

}  // namespace

Var vexp(const Var& a) {
    return unary_op(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var vlog(const Var& a) {
    return unary_op(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var vsqrt(const Var& a) {
    return unary_op(a, [](double x) { return std::sqrt(x); },
                    [](double x) { return 0.5 / std::sqrt(x); });
}

Var vabs(const Var& a) {
    return unary_op(a, [](double x) { return std::abs(x); },
                    [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Var pow_scalar(const Var& a, double p) {
    return unary_op(a, [p](double x) { return std::pow(x, p); },
                    [p](double x) { return p * std::pow(x, p - 1.0); });
}

Var relu(const Var& a) {
    return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

// ---- matrix ---------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
    Tensor v = t_matmul(a.value(), b.value());  // validates shapes
    Node* an = a.node();
    Node* bn = b.node();
    Tensor av = a.value(), bv = b.value();
    return make_op(std::move(v), {a, b},
                   [an, bn, av, bv](const Tensor& up, const GradSink& sink) {
                       const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
                       // dA = up * B^T
                       std::vector<double> ga(m * k, 0.0);
                       for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < n; ++j) {
                               const double u = up[i * n + j];
                               if (u == 0.0) continue;
                               for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += u * bv[p * n + j];
                           }
                       // dB = A^T * up
                       std::vector<double> gb(k * n, 0.0);
                       for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t p = 0; p < k; ++p) {
                               const double x = av[i * k + p];
                               if (x == 0.0) continue;
                               for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += x * up[i * n + j];
                           }
                       sink(an, Tensor({m, k}, std::move(ga)));
                       sink(bn, Tensor({k, n}, std::move(gb)));
                   });
}

namespace {

Tensor transpose_t(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose: need rank-2, got " + a.shape_str());
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> d(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d[j * m + i] = a[i * n + j];
    return Tensor({n, m}, std::move(d));
}

}  // namespace

Var transpose(const Var& a) {
    Node* an = a.node();
    return make_op(transpose_t(a.value()), {a}, [an](const Tensor& up, const GradSink& sink) {
        sink(an, transpose_t(up));
    });
}

Var reshape(const Var& a, Shape shape) {
    if (shape_numel(shape) != a.value().size()) {
        throw ShapeError("reshape: " + a.value().shape_str() + " to " + shape_str(shape) +
                         " changes element count");
    }
    std::vector<double> d(a.value().data().begin(), a.value().data().end());
    Node* an = a.node();
    Shape orig = a.shape();
    return make_op(Tensor(std::move(shape), std::move(d)), {a},
                   [an, orig](const Tensor& up, const GradSink& sink) {
                       std::vector<double> g(up.data().begin(), up.data().end());
                       sink(an, Tensor(orig, std::move(g)));
                   });
}

// ---- reductions -----------------------------------------------------------

Var sum(const Var& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value()[i];
    Node* an = a.node();
    Shape shape = a.shape();
    return make_op(Tensor::scalar(s), {a}, [an, shape](const Tensor& up, const GradSink& sink) {
        sink(an, Tensor::full(shape, up.item()));
    });
}

Var mean(const Var& a) {
    const double n = static_cast<double>(a.value().size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.value().size(); ++i) s += a.value()[i];
    Node* an = a.node();
    Shape shape = a.shape();
    return make_op(Tensor::scalar(s / n), {a},
                   [an, shape, n](const Tensor& up, const GradSink& sink) {
                       sink(an, Tensor::full(shape, up.item() / n));
                   });
}

Var max_all(const Var& a) {
    // Ties: first (lowest) flat index wins.
    std::size_t arg = 0;
    for (std::size_t i = 1; i < a.value().size(); ++i) {
        if (a.value()[i] > a.value()[arg]) arg = i;
    }
    Node* an = a.node();
    Shape shape = a.shape();
    return make_op(Tensor::scalar(a.value()[arg]), {a},
                   [an, shape, arg](const Tensor& up, const GradSink& sink) {
                       std::vector<double> g(shape_numel(shape), 0.0);
                       g[arg] = up.item();
                       sink(an, Tensor(shape, std::move(g)));
                   });
}

namespace {

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": need rank-2, got " + t.shape_str());
}

}  // namespace

Var row_sum(const Var& a) {
    require_rank2(a.value(), "row_sum");
    const std::size_t b = a.value().dim(0), c = a.value().dim(1);
    std::vector<double> d(b, 0.0);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j) d[i] += a.value()[i * c + j];
    Node* an = a.node();
    return make_op(Tensor({b}, std::move(d)), {a},
                   [an, b, c](const Tensor& up, const GradSink& sink) {
                       std::vector<double> g(b * c);
                       for (std::size_t i = 0; i < b; ++i)
                           for (std::size_t j = 0; j < c; ++j) g[i * c + j] = up[i];
                       sink(an, Tensor({b, c}, std::move(g)));
                   });
}

Var row_mean(const Var& a) {
    require_rank2(a.value(), "row_mean");
    return scale(row_sum(a), 1.0 / static_cast<double>(a.value().dim(1)));
}

Var row_max(const Var& a) {
    require_rank2(a.value(), "row_max");
    const std::size_t b = a.value().dim(0), c = a.value().dim(1);
    std::vector<double> d(b);
    std::vector<std::size_t> arg(b, 0);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t j = 1; j < c; ++j) {
            if (a.value()[i * c + j] > a.value()[i * c + arg[i]]) arg[i] = j;
        }
        d[i] = a.value()[i * c + arg[i]];
    }
    Node* an = a.node();
    return make_op(Tensor({b}, std::move(d)), {a},
                   [an, b, c, arg](const Tensor& up, const GradSink& sink) {
                       std::vector<double> g(b * c, 0.0);
                       for (std::size_t i = 0; i < b; ++i) g[i * c + arg[i]] = up[i];
                       sink(an, Tensor({b, c}, std::move(g)));
                   });
}

// ---- broadcasts -----------------------------------------------------------

Var add_rowvec(const Var& x, const Var& v) {
    require_rank2(x.value(), "add_rowvec");
    const std::size_t b = x.value().dim(0), c = x.value().dim(1);
    if (v.value().rank() != 1 || v.value().dim(0) != c) {
        throw ShapeError("add_rowvec: vector " + v.value().shape_str() + " vs matrix " +
                         x.value().shape_str());
    }
    std::vector<double> d(b * c);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j) d[i * c + j] = x.value()[i * c + j] + v.value()[j];
    Node* xn = x.node();
    Node* vn = v.node();
    return make_op(Tensor({b, c}, std::move(d)), {x, v},
                   [xn, vn, b, c](const Tensor& up, const GradSink& sink) {
                       sink(xn, up);
                       std::vector<double> gv(c, 0.0);
                       for (std::size_t i = 0; i < b; ++i)
                           for (std::size_t j = 0; j < c; ++j) gv[j] += up[i * c + j];
                       sink(vn, Tensor({c}, std::move(gv)));
                   });
}

Var add_colvec(const Var& x, const Var& v) {
    require_rank2(x.value(), "add_colvec");
    const std::size_t b = x.value().dim(0), c = x.value().dim(1);
    if (v.value().rank() != 1 || v.value().dim(0) != b) {
        throw ShapeError("add_colvec: vector " + v.value().shape_str() + " vs matrix " +
                         x.value().shape_str());
    }
    std::vector<double> d(b * c);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j) d[i * c + j] = x.value()[i * c + j] + v.value()[i];
    Node* xn = x.node();
    Node* vn = v.node();
    return make_op(Tensor({b, c}, std::move(d)), {x, v},
                   [xn, vn, b, c](const Tensor& up, const GradSink& sink) {
                       sink(xn, up);
                       std::vector<double> gv(b, 0.0);
                       for (std::size_t i = 0; i < b; ++i)
                           for (std::size_t j = 0; j < c; ++j) gv[i] += up[i * c + j];
                       sink(vn, Tensor({b}, std::move(gv)));
                   });
}

Var mul_colvec(const Var& x, const Var& v) {
    require_rank2(x.value(), "mul_colvec");
    const std::size_t b = x.value().dim(0), c = x.value().dim(1);
    if (v.value().rank() != 1 || v.value().dim(0) != b) {
        throw ShapeError("mul_colvec: vector " + v.value().shape_str() + " vs matrix " +
                         x.value().shape_str());
    }
    std::vector<double> d(b * c);
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < c; ++j) d[i * c + j] = x.value()[i * c + j] * v.value()[i];
    Node* xn = x.node();
    Node* vn = v.node();
    Tensor xv = x.value(), vv = v.value();
    return make_op(Tensor({b, c}, std::move(d)), {x, v},
                   [xn, vn, b, c, xv, vv](const Tensor& up, const GradSink& sink) {
                       std::vector<double> gx(b * c);
                       std::vector<double> gv(b, 0.0);
                       for (std::size_t i = 0; i < b; ++i)
                           for (std::size_t j = 0; j < c; ++j) {
                               gx[i * c + j] = up[i * c + j] * vv[i];
                               gv[i] += up[i * c + j] * xv[i * c + j];
                           }
                       sink(xn, Tensor({b, c}, std::move(gx)));
                       sink(vn, Tensor({b}, std::move(gv)));
                   });
}

// ---- selects ---------------------------------------------------------------

Var gather_rows(const Var& x, const std::vector<int>& col) {
    require_rank2(x.value(), "gather_rows");
    const std::size_t b = x.value().dim(0), c = x.value().dim(1);
    if (col.size() != b) throw ShapeError("gather_rows: need one index per row");
    std::vector<double> d(b);
    for (std::size_t i = 0; i < b; ++i) {
        if (col[i] < 0 || static_cast<std::size_t>(col[i]) >= c) {
            throw ValueError("gather_rows: index " + std::to_string(col[i]) + " out of range [0," +
                             std::to_string(c) + ") at row " + std::to_string(i));
        }
        d[i] = x.value()[i * c + static_cast<std::size_t>(col[i])];
    }
    Node* xn = x.node();
    std::vector<int> idx = col;
    return make_op(Tensor({b}, std::move(d)), {x},
                   [xn, b, c, idx](const Tensor& up, const GradSink& sink) {
                       std::vector<double> g(b * c, 0.0);
                       for (std::size_t i = 0; i < b; ++i)
                           g[i * c + static_cast<std::size_t>(idx[i])] = up[i];
                       sink(xn, Tensor({b, c}, std::move(g)));
                   });
}

Var drop_column_per_row(const Var& x, const std::vector<int>& col) {
    require_rank2(x.value(), "drop_column_per_row");
    const std::size_t b = x.value().dim(0), c = x.value().dim(1);
    if (c < 2) throw ShapeError("drop_column_per_row: need at least 2 columns");
    if (col.size() != b) throw ShapeError("drop_column_per_row: need one index per row");
    std::vector<double> d(b * (c - 1));
    for (std::size_t i = 0; i < b; ++i) {
        if (col[i] < 0 || static_cast<std::size_t>(col[i]) >= c) {
            throw ValueError("drop_column_per_row: index out of range at row " + std::to_string(i));
        }
        std::size_t w = 0;
        for (std::size_t j = 0; j < c; ++j) {
            if (j == static_cast<std::size_t>(col[i])) continue;
            d[i * (c - 1) + w++] = x.value()[i * c + j];
        }
    }
    Node* xn = x.node();
    std::vector<int> idx = col;
    return make_op(Tensor({b, c - 1}, std::move(d)), {x},
                   [xn, b, c, idx](const Tensor& up, const GradSink& sink) {
                       std::vector<double> g(b * c, 0.0);
                       for (std::size_t i = 0; i < b; ++i) {
                           std::size_t w = 0;
                           for (std::size_t j = 0; j < c; ++j) {
                               if (j == static_cast<std::size_t>(idx[i])) continue;
                               g[i * c + j] = up[i * (c - 1) + w++];
                           }
                       }
                       sink(xn, Tensor({b, c}, std::move(g)));
                   });
}

// ---- fused row ops ----------------------------------------------------------

namespace {

// Row-wise softmax of a raw matrix, max-shifted for stability.
std::vector<double> softmax_data(const Tensor& x) {
    const std::size_t b = x.dim(0), c = x.dim(1);
    std::vector<double> p(b * c);
    for (std::size_t i = 0; i < b; ++i) {
        double m = x[i * c];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, x[i * c + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            p[i * c + j] = std::exp(x[i * c + j] - m);
            z += p[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) p[i * c + j] /= z;
    }
    return p;
}

}  // namespace

Var logsumexp_rows(const Var& x) {
    require_rank2(x.value(), "logsumexp_rows");
    const std::size_t b = x.value().dim(0), c = x.value().dim(1);
    std::vector<double> out(b);
    for (std::size_t i = 0; i < b; ++i) {
        double m = x.value()[i * c];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, x.value()[i * c + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(x.value()[i * c + j] - m);
        out[i] = m + std::log(z);
    }
    Node* xn = x.node();
    std::vector<double> p = softmax_data(x.value());
    return make_op(Tensor({b}, std::move(out)), {x},
                   [xn, b, c, p](const Tensor& up, const GradSink& sink) {
                       std::vector<double> g(b * c);
                       for (std::size_t i = 0; i < b; ++i)
                           for (std::size_t j = 0; j < c; ++j) g[i * c + j] = up[i] * p[i * c + j];
                       sink(xn, Tensor({b, c}, std::move(g)));
                   });
}

Var log_softmax_rows(const Var& x) {
    require_rank2(x.value(), "log_softmax_rows");
    const std::size_t b = x.value().dim(0), c = x.value().dim(1);
    std::vector<double> out(b * c);
    for (std::size_t i = 0; i < b; ++i) {
        double m = x.value()[i * c];
        for (std::size_t j = 1; j < c; ++j) m = std::max(m, x.value()[i * c + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(x.value()[i * c + j] - m);
        const double lse = m + std::log(z);
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.value()[i * c + j] - lse;
    }
    Node* xn = x.node();
    std::vector<double> p = softmax_data(x.value());
    // d/dx log_softmax: up - softmax * row_sum(up)
    return make_op(Tensor({b, c}, std::move(out)), {x},
                   [xn, b, c, p](const Tensor& up, const GradSink& sink) {
                       std::vector<double> g(b * c);
                       for (std::size_t i = 0; i < b; ++i) {
                           double s = 0.0;
                           for (std::size_t j = 0; j < c; ++j) s += up[i * c + j];
                           for (std::size_t j = 0; j < c; ++j)
                               g[i * c + j] = up[i * c + j] - p[i * c + j] * s;
                       }
                       sink(xn, Tensor({b, c}, std::move(g)));
                   });
}

Var softmax_rows(const Var& x) {
    require_rank2(x.value(), "softmax_rows");
    const std::size_t b = x.value().dim(0), c = x.value().dim(1);
    std::vector<double> p = softmax_data(x.value());
    Node* xn = x.node();
    std::vector<double> pc = p;
    // dx = p .* (up - row_sum(up .* p))
    return make_op(Tensor({b, c}, std::move(p)), {x},
                   [xn, b, c, pc](const Tensor& up, const GradSink& sink) {
                       std::vector<double> g(b * c);
                       for (std::size_t i = 0; i < b; ++i) {
                           double s = 0.0;
                           for (std::size_t j = 0; j < c; ++j) s += up[i * c + j] * pc[i * c + j];
                           for (std::size_t j = 0; j < c; ++j)
                               g[i * c + j] = pc[i * c + j] * (up[i * c + j] - s);
                       }
                       sink(xn, Tensor({b, c}, std::move(g)));
                   });
}

// ---- finite differences ------------------------------------------------------

double finite_diff_check(const LossFn& loss_fn, const std::vector<Tensor>& params, double eps) {
    if (!(eps > 0.0 && eps <= 1e-3)) {
        throw ValueError("finite_diff_check: eps must be in (0, 1e-3], got " + std::to_string(eps));
    }

    auto eval = [&](const std::vector<Tensor>& values) {
        std::vector<Var> vars;
        vars.reserve(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            vars.push_back(Var::parameter("p" + std::to_string(i), values[i]));
        }
        Var loss = loss_fn(vars);
        if (loss.value().size() != 1) {
            throw ValueError("finite_diff_check: loss_fn must produce a scalar");
        }
        return std::pair<double, std::vector<Var>>{loss.value().item(), std::move(vars)};
    };

    // Determinism gate: two evaluations at the same point must agree exactly.
    const double l0 = eval(params).first;
    const double l1 = eval(params).first;
    if (l0 != l1) {
        throw ValueError("finite_diff_check: loss_fn is not deterministic (" + std::to_string(l0) +
                         " vs " + std::to_string(l1) + ")");
    }

    // Analytic gradients.
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        vars.push_back(Var::parameter("p" + std::to_string(i), params[i]));
    }
    GradMap analytic = gradients(loss_fn(vars), vars);

    double worst = 0.0;
    std::vector<Tensor> work = params;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const Tensor& g = analytic.at("p" + std::to_string(pi));
        for (std::size_t e = 0; e < params[pi].size(); ++e) {
            std::vector<double> plus(params[pi].data().begin(), params[pi].data().end());
            std::vector<double> minus = plus;
            plus[e] += eps;
            minus[e] -= eps;
            work[pi] = Tensor(params[pi].shape(), std::move(plus));
            const double lp = eval(work).first;
            work[pi] = Tensor(params[pi].shape(), std::move(minus));
            const double lm = eval(work).first;
            work[pi] = params[pi];
            const double fd = (lp - lm) / (2.0 * eps);
            const double err = std::abs(g[e] - fd) / std::max(1.0, std::abs(fd));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace proxytrain
