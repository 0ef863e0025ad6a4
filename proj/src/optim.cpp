#include "proxytrain/optim.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "proxytrain/errors.hpp"

namespace proxytrain {

BatchPlan class_balanced_batches(const std::vector<int>& labels, std::size_t n_b, std::size_t n_c,
                                 Rng& rng) {
    if (n_c < 1) throw ValueError("class_balanced_batches: N_c must be >= 1");
    const std::size_t per_class = n_b / n_c;
    if (per_class < 1) {
        throw ValueError("class_balanced_batches: floor(N_b/N_c) must be >= 1 (N_b=" +
                         std::to_string(n_b) + ", N_c=" + std::to_string(n_c) + ")");
    }

    std::map<int, std::vector<std::size_t>> pools;
    for (std::size_t i = 0; i < labels.size(); ++i) pools[labels[i]].push_back(i);
    if (pools.size() < n_c) {
        throw ValueError("class_balanced_batches: only " + std::to_string(pools.size()) +
                         " distinct classes for N_c=" + std::to_string(n_c));
    }
    for (auto& [cls, pool] : pools) {
        if (pool.size() < per_class) {
            throw ValueError("class_balanced_batches: class " + std::to_string(cls) + " has " +
                             std::to_string(pool.size()) + " examples, need at least " +
                             std::to_string(per_class));
        }
        rng.shuffle(pool);
    }

    std::vector<int> class_ids;
    for (const auto& [cls, pool] : pools) class_ids.push_back(cls);

    BatchPlan plan;
    plan.batch_size = per_class * n_c;
    plan.classes_per_batch = n_c;
    while (true) {
        std::vector<int> eligible;
        for (int cls : class_ids) {
            if (pools[cls].size() >= per_class) eligible.push_back(cls);
        }
        if (eligible.size() < n_c) break;  // leftovers dropped
        rng.shuffle(eligible);
        std::vector<std::size_t> batch;
        batch.reserve(plan.batch_size);
        for (std::size_t c = 0; c < n_c; ++c) {
            auto& pool = pools[eligible[c]];
            for (std::size_t j = 0; j < per_class; ++j) {
                batch.push_back(pool.back());
                pool.pop_back();
            }
        }
        plan.batches.push_back(std::move(batch));
    }
    return plan;
}

BatchPlan shuffled_batches(std::size_t n_examples, std::size_t batch_size, Rng& rng) {
    if (batch_size < 1) throw ValueError("shuffled_batches: batch_size must be >= 1");
    std::vector<std::size_t> order(n_examples);
    for (std::size_t i = 0; i < n_examples; ++i) order[i] = i;
    rng.shuffle(order);
    BatchPlan plan;
    plan.batch_size = batch_size;
    plan.classes_per_batch = 0;
    for (std::size_t at = 0; at + batch_size <= n_examples; at += batch_size) {
        plan.batches.emplace_back(order.begin() + at, order.begin() + at + batch_size);
    }
    return plan;
}

double poly_decay(double base_lr, long iter, long max_iter, double power) {
    if (iter < 0 || iter > max_iter) {
        throw ValueError("poly_decay: iter " + std::to_string(iter) + " outside [0, " +
                         std::to_string(max_iter) + "]");
    }
    const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
    return base_lr * std::pow(frac, power);
}

PlateauTracker::PlateauTracker(int patience, double factor) : patience_(patience), factor_(factor) {
    if (patience < 1) throw ValueError("PlateauTracker: patience must be >= 1");
    if (!(factor > 0.0 && factor < 1.0)) throw ValueError("PlateauTracker: factor in (0,1)");
}

double PlateauTracker::observe(double score) {
    if (!seen_) {
        seen_ = true;
        best_ = score;
        stale_ = 0;
        return scale_;
    }
    if (score > best_) {
        best_ = score;
        stale_ = 0;
    } else if (++stale_ >= patience_) {
        scale_ *= factor_;
        stale_ = 0;
    }
    return scale_;
}

double reduce_on_plateau(const std::vector<double>& history, int patience, double factor) {
    PlateauTracker t(patience, factor);
    double s = 1.0;
    for (double score : history) s = t.observe(score);
    return s;
}

ScheduleKind parse_schedule_kind(const std::string& s) {
    if (s == "constant") return ScheduleKind::constant;
    if (s == "poly") return ScheduleKind::poly;
    if (s == "exp" || s == "exponential") return ScheduleKind::exponential;
    if (s == "plateau") return ScheduleKind::plateau;
    throw ConfigError("unknown schedule '" + s + "' (constant|poly|exp|plateau)");
}

SgdOptimizer::SgdOptimizer(SgdConfig cfg)
    : cfg_(cfg), plateau_(cfg.schedule.patience, cfg.schedule.factor) {
    if (!(cfg.base_lr > 0.0)) throw ValueError("sgd: base_lr must be positive");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw ValueError("sgd: momentum in [0,1)");
}

double SgdOptimizer::current_scale() const {
    switch (cfg_.schedule.kind) {
        case ScheduleKind::constant: return 1.0;
        case ScheduleKind::poly: {
            const long cap = std::min(iter_, cfg_.schedule.max_iter);
            return poly_decay(1.0, cap, cfg_.schedule.max_iter, cfg_.schedule.power);
        }
        case ScheduleKind::exponential: return std::pow(cfg_.schedule.gamma, epoch_);
        case ScheduleKind::plateau: return plateau_.scale();
    }
    return 1.0;
}

void SgdOptimizer::observe_dev_score(double score) {
    if (cfg_.schedule.kind == ScheduleKind::plateau) plateau_.observe(score);
}

void SgdOptimizer::step(const std::vector<Parameter*>& params, const GradMap& grads) {
    const double scale = current_scale();
    for (Parameter* p : params) {
        auto g = grads.find(p->name);
        if (g == grads.end()) throw ValueError("sgd: missing gradient for '" + p->name + "'");
        require_same_shape(p->value, g->second, "sgd step");

        Tensor update = g->second;
        if (cfg_.weight_decay != 0.0 && p->weight_decay) {
            update = t_axpy(cfg_.weight_decay, p->value, update);
        }
        auto v = velocity_.find(p->name);
        if (cfg_.momentum != 0.0) {
            if (v == velocity_.end()) {
                v = velocity_.emplace(p->name, zeros_like(p->value)).first;
            }
            v->second = t_axpy(cfg_.momentum, v->second, update);
            update = v->second;
        }
        const double lr = cfg_.base_lr * scale * p->lr_multiplier;
        p->value = t_axpy(-lr, update, p->value);
    }
    ++iter_;
}

}  // namespace proxytrain
