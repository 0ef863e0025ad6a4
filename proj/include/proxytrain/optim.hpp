#pragma once

#include <map>
#include <string>
#include <vector>

#include "proxytrain/autograd.hpp"
#include "proxytrain/layers.hpp"
#include "proxytrain/rng.hpp"

namespace proxytrain {

// ---- class-balanced sampling -------------------------------------------------

/// Batches of exactly N_c distinct classes with floor(N_b/N_c) examples each.
struct BatchPlan {
    std::vector<std::vector<std::size_t>> batches;
    std::size_t batch_size = 0;        // N_c * floor(N_b/N_c)
    std::size_t classes_per_batch = 0;
};

/// Epoch-level plan: per-class example pools are consumed without replacement;
/// once fewer than N_c classes can still fill their quota, leftovers are
/// dropped. Errors name any class with fewer than floor(N_b/N_c) examples.
BatchPlan class_balanced_batches(const std::vector<int>& labels, std::size_t n_b, std::size_t n_c,
                                 Rng& rng);

/// Plain shuffled batches of the same size (the non-CBS baseline).
BatchPlan shuffled_batches(std::size_t n_examples, std::size_t batch_size, Rng& rng);

// ---- schedules -----------------------------------------------------------------

/// base_lr * (1 - iter/max_iter)^power; iter must not exceed max_iter.
double poly_decay(double base_lr, long iter, long max_iter, double power = 0.9);

/// Final learning-rate scale after replaying a dev-score history (higher is
/// better) through a patience counter: the scale is multiplied by `factor`
/// whenever `patience` consecutive evaluations fail to beat the best score.
double reduce_on_plateau(const std::vector<double>& history, int patience, double factor);

/// Streaming form of reduce_on_plateau.
class PlateauTracker {
public:
    PlateauTracker(int patience, double factor);
    /// Feed one dev score; returns the current scale.
    double observe(double score);
    double scale() const { return scale_; }

private:
    int patience_;
    double factor_;
    bool seen_ = false;
    double best_ = 0.0;
    int stale_ = 0;
    double scale_ = 1.0;
};

enum class ScheduleKind { constant, poly, exponential, plateau };

struct ScheduleConfig {
    ScheduleKind kind = ScheduleKind::constant;
    double power = 0.9;    // poly
    long max_iter = 0;     // poly
    double gamma = 0.94;   // exponential (per epoch)
    int patience = 4;      // plateau
    double factor = 0.5;   // plateau
};

ScheduleKind parse_schedule_kind(const std::string& s);

// ---- SGD with momentum and parameter groups -------------------------------------

struct SgdConfig {
    double base_lr = 1e-2;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    ScheduleConfig schedule;
};

/// v <- mu v + g + wd theta;  theta <- theta - lr_group v, where
/// lr_group = base_lr * schedule(iter) * lr_multiplier. Weight decay is
/// skipped for parameters flagged weight_decay = false (the proxies).
class SgdOptimizer {
public:
    explicit SgdOptimizer(SgdConfig cfg);

    void step(const std::vector<Parameter*>& params, const GradMap& grads);

    /// Epoch hook for the exponential schedule (decays by gamma per epoch).
    void set_epoch(long epoch) { epoch_ = epoch; }
    /// Dev-score hook for the plateau schedule.
    void observe_dev_score(double score);

    long iterations() const { return iter_; }
    double current_scale() const;
    const SgdConfig& config() const { return cfg_; }

private:
    SgdConfig cfg_;
    long iter_ = 0;
    long epoch_ = 0;
    PlateauTracker plateau_;
    std::map<std::string, Tensor> velocity_;
};

}  // namespace proxytrain
