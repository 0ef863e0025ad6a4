#include "proxytrain/selftrain.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "proxytrain/errors.hpp"

namespace proxytrain {

AlphaPath AlphaPath::fixed(double alpha, std::size_t n_stages) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValueError("AlphaPath: alpha in [0,1]");
    AlphaPath p;
    p.mode = Mode::fixed;
    p.fixed_alpha = alpha;
    p.stages.assign(n_stages, 0);
    return p;
}

AlphaPath AlphaPath::binary(std::vector<int> stages) {
    for (int s : stages) {
        if (s != 0 && s != 1) throw ValueError("AlphaPath: binary entries must be 0 or 1");
    }
    AlphaPath p;
    p.mode = Mode::binary;
    p.stages = std::move(stages);
    return p;
}

std::size_t AlphaPath::length() const { return stages.size(); }

double AlphaPath::alpha_at(std::size_t stage) const {
    if (stage >= stages.size()) throw ValueError("AlphaPath: stage out of range");
    return mode == Mode::fixed ? fixed_alpha : static_cast<double>(stages[stage]);
}

void AlphaPath::append(int alpha_bit) {
    if (alpha_bit != 0 && alpha_bit != 1) throw ValueError("AlphaPath: bit must be 0 or 1");
    stages.push_back(alpha_bit);
}

std::string AlphaPath::to_string() const {
    if (mode == Mode::fixed) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "fixed(%g)x%zu", fixed_alpha, stages.size());
        return buf;
    }
    std::string s;
    for (int b : stages) s += (b == 1 ? 'L' : 'P');
    return s;
}

bool AlphaPath::has_run_longer_than(std::size_t limit) const {
    std::size_t run = 0;
    int prev = -1;
    for (int b : stages) {
        run = (b == prev) ? run + 1 : 1;
        prev = b;
        if (run > limit) return true;
    }
    return false;
}

Var joint_alpha_loss(const Var& loss_human, const Var& loss_pseudo, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValueError("joint_alpha_loss: alpha in [0,1]");
    return add(scale(loss_human, alpha), scale(loss_pseudo, 1.0 - alpha));
}

void run_stage(Learner& learner, double alpha, int k_iters, bool batchwise_alpha) {
    if (k_iters < 0) throw ValueError("run_stage: k_iters must be >= 0");
    learner.refine(alpha, k_iters, batchwise_alpha);
}

PseudoLabelSet generate_pseudo_labels(const Tensor& logits, double phi, InverseTemperature beta) {
    Tensor probs = soften_logits(logits, beta);
    PseudoLabelSet out = erase_low_confidence(probs, phi);
    if (out.fraction_ignored() == 1.0) {
        char buf[96];
        std::snprintf(buf, sizeof(buf),
                      "generate_pseudo_labels: all labels erased (fraction=1.0, phi=%g)", phi);
        throw ValueError(buf);
    }
    return out;
}

std::string SearchResult::records_csv() const {
    std::ostringstream os;
    os << "trial,stage,path_prefix,dev_score,test_score\n";
    char buf[64];
    for (const StageRecord& r : provenance) {
        os << r.trial << ',' << r.stage << ',' << (r.path_prefix.empty() ? "-" : r.path_prefix);
        std::snprintf(buf, sizeof(buf), ",%.17g,%.17g\n", r.dev_score, r.test_score);
        os << buf;
    }
    return os.str();
}

namespace {

struct Best {
    double dev = 0.0;
    double test = 0.0;
    AlphaPath path;
    std::unique_ptr<Learner> learner;
    bool seen = false;

    void offer(double dev_score, double test_score, const AlphaPath& p, const Learner& l) {
        if (!seen || dev_score > dev) {
            seen = true;
            dev = dev_score;
            test = test_score;
            path = p;
            learner = l.clone();
        }
    }
};

void finish(SearchResult& out, Best& best) {
    out.best_path = best.path;
    out.best_dev_score = best.dev;
    out.best_test_score = best.test;
    out.best_learner = std::move(best.learner);
}

}  // namespace

SearchResult fist_run(const Learner& learner0, int n_stages, double alpha, int k_iters) {
    if (n_stages < 1) throw ValueError("fist_run: need n_stages >= 1");
    SearchResult out;
    Best best;
    std::unique_ptr<Learner> cur = learner0.clone();

    AlphaPath path = AlphaPath::fixed(alpha, 0);
    double dev = cur->dev_score();
    out.provenance.push_back({0, 0, path.to_string(), dev, cur->test_score()});
    out.per_stage_dev_scores.push_back(dev);
    best.offer(dev, cur->test_score(), path, *cur);

    for (int s = 1; s <= n_stages; ++s) {
        run_stage(*cur, alpha, k_iters);
        path.stages.push_back(0);  // length tracks stages done; alpha is fixed
        dev = cur->dev_score();
        out.provenance.push_back({0, s, path.to_string(), dev, cur->test_score()});
        out.per_stage_dev_scores.push_back(dev);
        best.offer(dev, cur->test_score(), path, *cur);
    }
    finish(out, best);
    return out;
}

SearchResult gist_search(const Learner& learner0, int n_stages, int beam, int k_iters) {
    if (n_stages < 1 || beam < 1) throw ValueError("gist_search: need n_stages, beam >= 1");
    SearchResult out;
    Best best;

    struct Candidate {
        std::unique_ptr<Learner> learner;
        AlphaPath path;
        double dev;
    };

    std::vector<Candidate> kept;
    {
        Candidate root{learner0.clone(), AlphaPath::binary({}), 0.0};
        root.dev = root.learner->dev_score();
        out.provenance.push_back({0, 0, root.path.to_string(), root.dev, root.learner->test_score()});
        out.per_stage_dev_scores.push_back(root.dev);
        best.offer(root.dev, root.learner->test_score(), root.path, *root.learner);
        kept.push_back(std::move(root));
    }

    for (int s = 1; s <= n_stages; ++s) {
        std::vector<Candidate> expanded;
        for (Candidate& parent : kept) {
            for (int alpha_bit : {0, 1}) {
                Candidate child{parent.learner->clone(), parent.path, 0.0};
                child.path.append(alpha_bit);
                run_stage(*child.learner, static_cast<double>(alpha_bit), k_iters);
                child.dev = child.learner->dev_score();
                out.provenance.push_back(
                    {0, s, child.path.to_string(), child.dev, child.learner->test_score()});
                best.offer(child.dev, child.learner->test_score(), child.path, *child.learner);
                expanded.push_back(std::move(child));
            }
        }
        // descending dev score; stable keeps expansion order on ties
        std::stable_sort(expanded.begin(), expanded.end(),
                         [](const Candidate& a, const Candidate& b) { return a.dev > b.dev; });
        if (expanded.size() > static_cast<std::size_t>(beam)) {
            expanded.resize(static_cast<std::size_t>(beam));
        }
        out.per_stage_dev_scores.push_back(expanded.front().dev);
        kept = std::move(expanded);
    }
    finish(out, best);
    return out;
}

SearchResult rist_trial(const Learner& learner0, int n_stages, int k_iters,
                        std::uint64_t trial_seed, int trial_index, bool reject_degenerate) {
    if (n_stages < 1) throw ValueError("rist_trial: need n_stages >= 1");
    Rng rng(trial_seed);

    // alpha_s = (Uniform(0,1) > 0.5) per stage
    std::vector<int> bits(n_stages);
    auto draw = [&]() {
        for (int s = 0; s < n_stages; ++s) bits[s] = rng.uniform() > 0.5 ? 1 : 0;
    };
    draw();
    if (reject_degenerate) {
        while (AlphaPath::binary(bits).has_run_longer_than(4)) draw();
    }

    SearchResult out;
    Best best;
    std::unique_ptr<Learner> cur = learner0.clone();
    AlphaPath path = AlphaPath::binary({});

    double dev = cur->dev_score();
    out.provenance.push_back({trial_index, 0, path.to_string(), dev, cur->test_score()});
    out.per_stage_dev_scores.push_back(dev);
    best.offer(dev, cur->test_score(), path, *cur);

    for (int s = 1; s <= n_stages; ++s) {
        const int bit = bits[s - 1];
        run_stage(*cur, static_cast<double>(bit), k_iters);
        path.append(bit);
        dev = cur->dev_score();
        out.provenance.push_back({trial_index, s, path.to_string(), dev, cur->test_score()});
        out.per_stage_dev_scores.push_back(dev);
        best.offer(dev, cur->test_score(), path, *cur);
    }
    finish(out, best);
    return out;
}

SearchResult rist_search(const Learner& learner0, int n_stages, int n_trials, int k_iters,
                         Rng& rng, bool reject_degenerate) {
    if (n_trials < 1) throw ValueError("rist_search: need n_trials >= 1");
    std::vector<std::uint64_t> seeds(n_trials);
    for (auto& s : seeds) s = rng.next_u64();

    SearchResult out;
    Best best;
    for (int t = 0; t < n_trials; ++t) {
        SearchResult trial = rist_trial(learner0, n_stages, k_iters, seeds[static_cast<std::size_t>(t)],
                                        t + 1, reject_degenerate);
        for (const StageRecord& r : trial.provenance) out.provenance.push_back(r);
        best.offer(trial.best_dev_score, trial.best_test_score, trial.best_path,
                   *trial.best_learner);
        if (out.per_stage_dev_scores.empty()) {
            out.per_stage_dev_scores = trial.per_stage_dev_scores;
        } else {
            for (std::size_t s = 0; s < trial.per_stage_dev_scores.size(); ++s) {
                out.per_stage_dev_scores[s] =
                    std::max(out.per_stage_dev_scores[s], trial.per_stage_dev_scores[s]);
            }
        }
    }
    finish(out, best);
    return out;
}

SearchResult batchwise_run(const Learner& learner0, int n_stages, int k_iters) {
    if (n_stages < 1) throw ValueError("batchwise_run: need n_stages >= 1");
    SearchResult out;
    Best best;
    std::unique_ptr<Learner> cur = learner0.clone();
    AlphaPath path = AlphaPath::binary({});

    double dev = cur->dev_score();
    out.provenance.push_back({0, 0, "batchwise", dev, cur->test_score()});
    out.per_stage_dev_scores.push_back(dev);
    best.offer(dev, cur->test_score(), path, *cur);

    for (int s = 1; s <= n_stages; ++s) {
        run_stage(*cur, 0.5, k_iters, /*batchwise_alpha=*/true);
        dev = cur->dev_score();
        out.provenance.push_back({0, s, "batchwise", dev, cur->test_score()});
        out.per_stage_dev_scores.push_back(dev);
        best.offer(dev, cur->test_score(), path, *cur);
    }
    finish(out, best);
    return out;
}

}  // namespace proxytrain
