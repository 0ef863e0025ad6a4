#pragma once

#include <memory>

#include "proxytrain/datasets.hpp"
#include "proxytrain/optim.hpp"
#include "proxytrain/selftrain.hpp"

namespace proxytrain {

/// Optional self-training add-ons: mean-teacher consistency (CL),
/// confidence-threshold label erase (LE), and logit softening (TS).
struct AddOns {
    bool consistency = false;
    double ema_beta = 0.9;
    double p_drop = 0.5;
    double cl_weight = 1.0;

    bool label_erase = false;
    double phi = 0.999;

    bool soften = false;
    double beta_ts = 0.1;
};

struct SegLearnerConfig {
    std::vector<LayerSpec> layers;  // per-pixel classifier, at least 2 layers
    SgdConfig optim;
    std::size_t batch_images = 2;  // images per branch per iteration
    AddOns addons;
    std::uint64_t seed = 0;
};

/// Per-pixel classifier on the toy grid task. Dev/test scores are mean IoU
/// over the two classes on the corresponding image split. Deterministic under
/// a fixed seed: clones copy optimizer and RNG state bit-for-bit.
class GridSegLearner : public Learner {
public:
    GridSegLearner(std::shared_ptr<const GridSegDataset> data, const SegLearnerConfig& cfg);

    std::unique_ptr<Learner> clone() const override;
    void refine(double alpha, int k_iters, bool batchwise_alpha = false) override;
    double dev_score() const override { return miou(Split::dev); }
    double test_score() const override { return miou(Split::test); }

    Tensor predict_logits(const Tensor& pixel_rows) const;

    /// Supervised warm-up on the labeled images (the stage-0 model).
    void train_supervised(int iters);

    const PseudoLabelSet& pseudo_labels() const { return pseudo_; }
    std::uint64_t pseudo_checksum() const { return pseudo_.labels.empty() ? 0 : pseudo_.checksum(); }
    int pseudo_regen_count() const { return pseudo_regen_count_; }

    Model& model() { return model_; }
    const Model& model() const { return model_; }

private:
    double miou(Split s) const;
    void regenerate_pseudo_labels();
    Var branch_loss(const std::vector<std::size_t>& images, bool use_pseudo, Binding& binding,
                    Var* features_out);
    void train_iteration(double alpha, bool batchwise_alpha);

    std::shared_ptr<const GridSegDataset> data_;
    SegLearnerConfig cfg_;
    Model model_;
    SgdOptimizer opt_;
    TeacherState teacher_;
    PseudoLabelSet pseudo_;                 // over unlabeled train images, frozen per stage
    std::vector<std::size_t> pseudo_base_;  // row offset per unlabeled image
    int pseudo_regen_count_ = 0;
    Rng rng_;
};

}  // namespace proxytrain
