#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "proxytrain/autograd.hpp"
#include "proxytrain/layers.hpp"
#include "proxytrain/metric_losses.hpp"

namespace proxytrain {

/// Per-element integer labels with a reserved IGNORE sentinel. IGNORE elements
/// contribute nothing to losses, in value or gradient. The sentinel is -1
/// internally so class ids can be 0-based.
struct PseudoLabelSet {
    static constexpr int IGNORE = -1;

    std::vector<int> labels;
    int n_classes = 0;

    PseudoLabelSet() = default;
    PseudoLabelSet(std::vector<int> labels, int n_classes);

    std::size_t size() const { return labels.size(); }
    double fraction_ignored() const;
    std::uint64_t checksum() const;

    /// File format: header "n: N k: K_cls" then one integer per line.
    void save(const std::filesystem::path& path) const;
    static PseudoLabelSet load(const std::filesystem::path& path);
};

/// EMA mirror of a student's parameters. theta* <- theta* beta + theta (1-beta).
struct TeacherState {
    std::vector<Tensor> params;
    double beta_ema = 0.9;

    static TeacherState from_student(const std::vector<Parameter>& student, double beta_ema);
};

TeacherState ema_update(const TeacherState& teacher, const std::vector<Parameter>& student);

/// Mean over all N*C entries of (z - z*)^2.
Var self_perturbation_loss(const Var& z, const Var& z_star);

/// Dist = mean squared difference. same -> Dist; different -> max(0, margin - Dist).
Var contrastive_loss(const Var& z_i, const Var& z_j, bool same, double margin = 1.0);

/// Mean over non-IGNORE elements of -log softmax(logits)[label]. Errors if
/// every element is IGNORE.
Var masked_cross_entropy(const Var& logits, const PseudoLabelSet& y);

/// Mean absolute difference of independently dropout-perturbed features.
/// Accepts pooled [B x E] features, or [B x S x E] which is mean-pooled over
/// the spatial axis first. Student and teacher masks are drawn independently
/// from `rng`.
Var consistency_feature_loss(const Var& f_student, const Var& f_teacher, double p_drop, Rng& rng);

/// argmax label where the row max probability >= phi, IGNORE otherwise.
/// Rows must be distributions (sum to 1 within 1e-6, entries in [0,1]).
PseudoLabelSet erase_low_confidence(const Tensor& probs, double phi);

/// softmax(beta * y) for a logit vector [K] or logit rows [N x K]. Smaller
/// beta flattens the distribution; argmax is preserved for any beta > 0.
Tensor soften_logits(const Tensor& logits, InverseTemperature beta);

}  // namespace proxytrain
