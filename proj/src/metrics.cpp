#include "proxytrain/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "proxytrain/errors.hpp"

namespace proxytrain {

std::string EvalReport::to_text() const {
    std::ostringstream os;
    char buf[64];
    for (const auto& [k, v] : recall_at) {
        std::snprintf(buf, sizeof(buf), "recall_at_%d=%.17g\n", k, v);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "nmi=%.17g\n", nmi);
    os << buf;
    os << "n_queries=" << n_queries << "\n";
    return os.str();
}

namespace {

double sq_dist(const Tensor& emb, std::size_t i, std::size_t j) {
    const std::size_t e = emb.dim(1);
    double s = 0.0;
    for (std::size_t c = 0; c < e; ++c) {
        const double d = emb[i * e + c] - emb[j * e + c];
        s += d * d;
    }
    return s;
}

}  // namespace

std::map<int, double> recall_at_k(const Tensor& emb, const std::vector<int>& labels,
                                  const std::vector<int>& ks) {
    if (emb.rank() != 2) throw ShapeError("recall_at_k: embeddings must be [N x E]");
    const std::size_t n = emb.dim(0);
    if (labels.size() != n) throw ShapeError("recall_at_k: label count mismatch");
    if (ks.empty()) throw ValueError("recall_at_k: need at least one K");
    const int max_k = *std::max_element(ks.begin(), ks.end());
    if (max_k < 1 || n < static_cast<std::size_t>(max_k) + 1) {
        throw ValueError("recall_at_k: need N >= max(ks)+1");
    }

    std::map<int, std::size_t> hits;
    for (int k : ks) hits[k] = 0;

    std::vector<std::size_t> order(n - 1);
    for (std::size_t q = 0; q < n; ++q) {
        std::size_t w = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j != q) order[w++] = j;
        }
        // distance ascending, index ascending on ties
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return sq_dist(emb, q, a) < sq_dist(emb, q, b);
        });
        int found_at = -1;
        for (std::size_t r = 0; r < static_cast<std::size_t>(max_k); ++r) {
            if (labels[order[r]] == labels[q]) {
                found_at = static_cast<int>(r) + 1;
                break;
            }
        }
        if (found_at > 0) {
            for (int k : ks) {
                if (found_at <= k) ++hits[k];
            }
        }
    }

    std::map<int, double> out;
    for (int k : ks) out[k] = static_cast<double>(hits[k]) / static_cast<double>(n);
    return out;
}

std::vector<int> kmeans(const Tensor& emb, std::size_t k, Rng& rng, int iters) {
    if (emb.rank() != 2) throw ShapeError("kmeans: embeddings must be [N x E]");
    const std::size_t n = emb.dim(0), e = emb.dim(1);
    if (k < 1 || k > n) throw ValueError("kmeans: need 1 <= k <= N");

    // k-means++ seeding
    std::vector<std::vector<double>> centers;
    centers.reserve(k);
    auto point = [&](std::size_t i) {
        return std::vector<double>(emb.data().begin() + i * e, emb.data().begin() + (i + 1) * e);
    };
    auto dist_to = [&](std::size_t i, const std::vector<double>& c) {
        double s = 0.0;
        for (std::size_t j = 0; j < e; ++j) {
            const double d = emb[i * e + j] - c[j];
            s += d * d;
        }
        return s;
    };
    centers.push_back(point(rng.uniform_index(n)));
    std::vector<double> d2(n);
    while (centers.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = dist_to(i, centers[0]);
            for (std::size_t c = 1; c < centers.size(); ++c) best = std::min(best, dist_to(i, centers[c]));
            d2[i] = best;
            total += best;
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.uniform_index(n);  // all points coincide with centers
        }
        centers.push_back(point(pick));
    }

    std::vector<int> assign(n, 0), prev(n, -1);
    for (int pass = 0; pass < iters; ++pass) {
        // assignment step (ties to the lowest cluster index)
        for (std::size_t i = 0; i < n; ++i) {
            double best = dist_to(i, centers[0]);
            int arg = 0;
            for (std::size_t c = 1; c < k; ++c) {
                const double d = dist_to(i, centers[c]);
                if (d < best) {
                    best = d;
                    arg = static_cast<int>(c);
                }
            }
            assign[i] = arg;
        }
        if (assign == prev) break;
        prev = assign;

        // update step
        std::vector<std::vector<double>> sums(k, std::vector<double>(e, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            ++counts[static_cast<std::size_t>(assign[i])];
            for (std::size_t j = 0; j < e; ++j) sums[static_cast<std::size_t>(assign[i])][j] += emb[i * e + j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // reseed from the point farthest from its assigned centroid
                double worst = -1.0;
                std::size_t far = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double d = dist_to(i, centers[static_cast<std::size_t>(assign[i])]);
                    if (d > worst) {
                        worst = d;
                        far = i;
                    }
                }
                centers[c] = point(far);
            } else {
                for (std::size_t j = 0; j < e; ++j) centers[c][j] = sums[c][j] / static_cast<double>(counts[c]);
            }
        }
    }
    return assign;
}

double nmi(const std::vector<int>& assignment, const std::vector<int>& labels) {
    if (assignment.size() != labels.size()) throw ShapeError("nmi: length mismatch");
    if (assignment.empty()) throw ValueError("nmi: empty input");
    const double n = static_cast<double>(assignment.size());

    std::map<int, double> pa, pb;
    std::map<std::pair<int, int>, double> pab;
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        pa[assignment[i]] += 1.0;
        pb[labels[i]] += 1.0;
        pab[{assignment[i], labels[i]}] += 1.0;
    }

    double ha = 0.0, hb = 0.0;
    for (auto& [_, c] : pa) {
        const double p = c / n;
        ha -= p * std::log(p);
    }
    for (auto& [_, c] : pb) {
        const double p = c / n;
        hb -= p * std::log(p);
    }
    if (ha + hb == 0.0) return 1.0;  // both single-cluster: identical labelings

    double mi = 0.0;
    for (auto& [key, c] : pab) {
        const double pxy = c / n;
        const double px = pa[key.first] / n;
        const double py = pb[key.second] / n;
        mi += pxy * std::log(pxy / (px * py));
    }
    return 2.0 * mi / (ha + hb);
}

Tensor extract_embeddings(const Model& model, const Tensor& inputs) {
    return model.forward_eval(inputs);
}

EvalReport evaluate_retrieval(const Tensor& emb, const std::vector<int>& labels,
                              const std::vector<int>& ks, Rng& rng) {
    EvalReport report;
    report.recall_at = recall_at_k(emb, labels, ks);
    report.n_queries = emb.dim(0);
    std::set<int> classes(labels.begin(), labels.end());
    report.nmi = nmi(kmeans(emb, classes.size(), rng), labels);
    return report;
}

}  // namespace proxytrain
