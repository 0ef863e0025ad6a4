#pragma once

#include <map>
#include <string>
#include <vector>

#include "proxytrain/layers.hpp"
#include "proxytrain/rng.hpp"
#include "proxytrain/tensor.hpp"

namespace proxytrain {

struct EvalReport {
    std::map<int, double> recall_at;  // K -> fraction in [0,1]
    double nmi = 0.0;
    std::size_t n_queries = 0;

    /// Flat "metric=value" lines (recall_at_1=..., nmi=..., n_queries=...).
    std::string to_text() const;
};

/// Fraction of queries whose K nearest neighbors (squared Euclidean, self
/// excluded, ties broken by lower index) contain at least one same-label
/// item. Queries whose class has a single example count as misses.
std::map<int, double> recall_at_k(const Tensor& emb, const std::vector<int>& labels,
                                  const std::vector<int>& ks);

/// Lloyd's algorithm with k-means++ seeding. Runs until assignments stop
/// changing or `iters` passes. Empty clusters are reseeded from the point
/// farthest from its assigned centroid.
std::vector<int> kmeans(const Tensor& emb, std::size_t k, Rng& rng, int iters = 100);

/// Normalized mutual information 2 I(a,b) / (H(a)+H(b)) with natural-log
/// entropies. When both sides are single-cluster the value is 1.0 by
/// convention (the labelings are identical up to renaming).
double nmi(const std::vector<int>& assignment, const std::vector<int>& labels);

/// Deterministic evaluation-mode forward over all rows.
Tensor extract_embeddings(const Model& model, const Tensor& inputs);

/// Full retrieval evaluation: Recall@ks plus NMI of k-means clusters with
/// k = number of distinct labels.
EvalReport evaluate_retrieval(const Tensor& emb, const std::vector<int>& labels,
                              const std::vector<int>& ks, Rng& rng);

}  // namespace proxytrain
