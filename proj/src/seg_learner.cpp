#include "proxytrain/seg_learner.hpp"

#include <algorithm>
#include <cmath>

#include "proxytrain/errors.hpp"

namespace proxytrain {

namespace {

Rng init_stream(const SegLearnerConfig& cfg) { return Rng::stream(cfg.seed, "seg.init"); }

}  // namespace

GridSegLearner::GridSegLearner(std::shared_ptr<const GridSegDataset> data,
                               const SegLearnerConfig& cfg)
    : data_(std::move(data)),
      cfg_(cfg),
      model_([&] {
          Rng init = init_stream(cfg);
          return Model(cfg.layers, init);
      }()),
      opt_(cfg.optim),
      teacher_(TeacherState::from_student(model_.params(), cfg.addons.ema_beta)),
      rng_(Rng::stream(cfg.seed, "seg.train")) {
    if (cfg_.layers.size() < 2) throw ValueError("GridSegLearner: need at least 2 layers");
    if (model_.output_dim() != 2) throw ValueError("GridSegLearner: classifier must output 2 classes");
    if (data_->labeled_train_images().empty()) {
        throw ValueError("GridSegLearner: dataset has no labeled train images");
    }
}

std::unique_ptr<Learner> GridSegLearner::clone() const {
    return std::make_unique<GridSegLearner>(*this);
}

Tensor GridSegLearner::predict_logits(const Tensor& pixel_rows) const {
    return model_.forward_eval(pixel_rows);
}

double GridSegLearner::miou(Split s) const {
    const std::size_t px = data_->grid * data_->grid;
    // intersection/union counts per class over all pixels of the split
    std::size_t inter[2] = {0, 0}, uni[2] = {0, 0};
    for (std::size_t img : data_->images_of(s)) {
        Tensor logits = model_.forward_eval(data_->image_pixels(img));
        for (std::size_t p = 0; p < px; ++p) {
            const int pred = logits.at(p, 1) > logits.at(p, 0) ? 1 : 0;
            const int truth = data_->pixel_labels[img][p];
            if (pred == truth) {
                ++inter[truth];
                ++uni[truth];
            } else {
                ++uni[truth];
                ++uni[pred];
            }
        }
    }
    double sum = 0.0;
    int present = 0;
    for (int c = 0; c < 2; ++c) {
        if (uni[c] > 0) {
            sum += static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
            ++present;
        }
    }
    return present ? sum / present : 0.0;
}

void GridSegLearner::regenerate_pseudo_labels() {
    const std::vector<std::size_t> unlabeled = data_->unlabeled_train_images();
    if (unlabeled.empty()) {
        pseudo_ = PseudoLabelSet();
        pseudo_base_.clear();
        return;
    }
    const std::size_t px = data_->grid * data_->grid;
    std::vector<double> logits;
    logits.reserve(unlabeled.size() * px * 2);
    pseudo_base_.clear();
    for (std::size_t i = 0; i < unlabeled.size(); ++i) {
        pseudo_base_.push_back(i * px);
        Tensor l = model_.forward_eval(data_->image_pixels(unlabeled[i]));
        logits.insert(logits.end(), l.data().begin(), l.data().end());
    }
    const double phi = cfg_.addons.label_erase ? cfg_.addons.phi : 0.0;
    const double beta = cfg_.addons.soften ? cfg_.addons.beta_ts : 1.0;
    pseudo_ = generate_pseudo_labels(Tensor({unlabeled.size() * px, 2}, std::move(logits)), phi,
                                     InverseTemperature(beta));
    ++pseudo_regen_count_;
}

Var GridSegLearner::branch_loss(const std::vector<std::size_t>& pool, bool use_pseudo,
                                Binding& binding, Var* consistency_out) {
    const std::size_t px = data_->grid * data_->grid;
    const std::size_t n_img = std::min<std::size_t>(cfg_.batch_images, pool.size());

    std::vector<std::size_t> chosen(n_img);
    std::vector<std::size_t> pool_pos(n_img);
    for (std::size_t i = 0; i < n_img; ++i) {
        pool_pos[i] = rng_.uniform_index(pool.size());
        chosen[i] = pool[pool_pos[i]];
    }

    std::vector<double> rows;
    rows.reserve(n_img * px * data_->feature_dim);
    std::vector<int> labels;
    labels.reserve(n_img * px);
    for (std::size_t i = 0; i < n_img; ++i) {
        Tensor p = data_->image_pixels(chosen[i]);
        rows.insert(rows.end(), p.data().begin(), p.data().end());
        if (use_pseudo) {
            const std::size_t base = pseudo_base_[pool_pos[i]];
            for (std::size_t j = 0; j < px; ++j) labels.push_back(pseudo_.labels[base + j]);
        } else {
            const auto& truth = data_->pixel_labels[chosen[i]];
            labels.insert(labels.end(), truth.begin(), truth.end());
        }
    }
    const std::size_t n_rows = n_img * px;
    Tensor batch({n_rows, data_->feature_dim}, std::move(rows));
    Var x(batch);

    Var logits;
    if (consistency_out) {
        const std::size_t tap_idx = cfg_.layers.size() - 2;
        auto [out, tap] = model_.forward_tap(x, true, &rng_, binding, tap_idx);
        logits = out;
        const std::size_t h = tap.value().dim(1);
        // [n_img x px x H]: the consistency loss pools spatially per image
        Var student_feats = reshape(tap, {n_img, px, h});
        Tensor teacher_tap = model_.forward_eval_with_tap(teacher_.params, batch, tap_idx).second;
        Var teacher_feats =
            reshape(Var(teacher_tap), {n_img, px, h});  // constant: no grad into teacher
        *consistency_out =
            consistency_feature_loss(student_feats, teacher_feats, cfg_.addons.p_drop, rng_);
    } else {
        logits = model_.forward(x, true, &rng_, binding);
    }

    bool any_kept = false;
    for (int y : labels) any_kept = any_kept || (y != PseudoLabelSet::IGNORE);
    if (!any_kept) return Var(Tensor::scalar(0.0));  // fully erased batch contributes nothing
    return masked_cross_entropy(logits, PseudoLabelSet(std::move(labels), 2));
}

void GridSegLearner::train_iteration(double alpha, bool batchwise_alpha) {
    double a = alpha;
    if (batchwise_alpha) a = rng_.uniform() > 0.5 ? 1.0 : 0.0;

    const std::vector<std::size_t> labeled = data_->labeled_train_images();
    const std::vector<std::size_t> unlabeled = data_->unlabeled_train_images();

    Binding binding;
    Var total(Tensor::scalar(0.0));
    Var consistency;
    Var* cl = cfg_.addons.consistency ? &consistency : nullptr;
    bool have_loss = false;
    bool cl_taken = false;

    if (a > 0.0) {
        Var lh = branch_loss(labeled, /*use_pseudo=*/false, binding, cl);
        total = (a >= 1.0) ? lh : scale(lh, a);
        have_loss = true;
        cl_taken = cl != nullptr;
        cl = nullptr;  // consistency measured on the first branch's batch
    }
    if (a < 1.0 && !unlabeled.empty()) {
        Var lp = branch_loss(unlabeled, /*use_pseudo=*/true, binding, cl);
        total = have_loss ? add(total, scale(lp, 1.0 - a)) : ((a <= 0.0) ? lp : scale(lp, 1.0 - a));
        have_loss = true;
        cl_taken = cl_taken || cl != nullptr;
        cl = nullptr;
    }

    if (cl_taken && have_loss) {
        total = add(total, scale(consistency, cfg_.addons.cl_weight));
    }

    GradMap grads = gradients(total, binding.vars());
    opt_.step(binding.params(), grads);
    if (cfg_.addons.consistency) teacher_ = ema_update(teacher_, model_.params());
}

void GridSegLearner::refine(double alpha, int k_iters, bool batchwise_alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValueError("refine: alpha in [0,1]");
    if (k_iters < 0) throw ValueError("refine: k_iters >= 0");
    if (k_iters == 0) return;
    if (batchwise_alpha || alpha < 1.0) regenerate_pseudo_labels();
    for (int i = 0; i < k_iters; ++i) train_iteration(alpha, batchwise_alpha);
}

void GridSegLearner::train_supervised(int iters) {
    for (int i = 0; i < iters; ++i) train_iteration(1.0, false);
}

}  // namespace proxytrain
