#pragma once

#include <memory>
#include <string>
#include <vector>

#include "proxytrain/aux_losses.hpp"
#include "proxytrain/rng.hpp"

namespace proxytrain {

/// A self-training schedule: one alpha per refinement stage. Binary paths
/// serialize in the L/P notation (L for alpha=1, human labels only; P for
/// alpha=0, pseudo labels only), stage order left to right.
struct AlphaPath {
    enum class Mode { fixed, binary };
    Mode mode = Mode::binary;
    double fixed_alpha = 1.0;    // fixed mode
    std::vector<int> stages;     // binary mode, entries in {0,1}

    static AlphaPath fixed(double alpha, std::size_t n_stages);
    static AlphaPath binary(std::vector<int> stages);

    std::size_t length() const;
    double alpha_at(std::size_t stage) const;  // 0-based
    void append(int alpha_bit);
    std::string to_string() const;

    /// True when some run of identical choices is longer than `limit`
    /// (binary mode only; the degenerate-path heuristic).
    bool has_run_longer_than(std::size_t limit) const;
};

/// alpha * L_human + (1 - alpha) * L_pseudo.
Var joint_alpha_loss(const Var& loss_human, const Var& loss_pseudo, double alpha);

/// Abstract trainable model used by the schedule searches. Implementations
/// must be deterministic under a fixed seed; dev scores are higher-is-better.
class Learner {
public:
    virtual ~Learner() = default;
    virtual std::unique_ptr<Learner> clone() const = 0;

    /// One refinement stage: regenerate pseudo-labels (when alpha < 1), then
    /// train k_iters iterations on the joint loss. Pseudo-labels stay frozen
    /// within the stage. `batchwise_alpha` replaces the stage alpha with an
    /// independent coin flip per iteration (comparison mode).
    virtual void refine(double alpha, int k_iters, bool batchwise_alpha = false) = 0;

    virtual double dev_score() const = 0;
    virtual double test_score() const { return 0.0; }
};

/// Calls learner.refine; kept as a named operation so tests and the harness
/// share one entry point for "advance one stage".
void run_stage(Learner& learner, double alpha, int k_iters, bool batchwise_alpha = false);

/// Softens logits by beta, then erases rows whose max probability is below
/// phi. Errors (reporting the erased fraction) if nothing survives.
PseudoLabelSet generate_pseudo_labels(const Tensor& logits, double phi, InverseTemperature beta);

struct StageRecord {
    int trial = 0;  // RIST trial id; 0 elsewhere
    int stage = 0;  // 0 = the unrefined starting learner
    std::string path_prefix;
    double dev_score = 0.0;
    double test_score = 0.0;
};

/// Search output: the best node over ALL stages explored (intermediate stages
/// may win), its dev-score trajectory, the learner at the best node, and a
/// provenance log of every explored candidate.
struct SearchResult {
    AlphaPath best_path;
    double best_dev_score = 0.0;
    double best_test_score = 0.0;
    std::vector<double> per_stage_dev_scores;  // index = stage, entry = best at that stage
    std::unique_ptr<Learner> best_learner;
    std::vector<StageRecord> provenance;

    std::string records_csv() const;  // trial,stage,path_prefix,dev_score,test_score
};

/// Fixed alpha for every stage.
SearchResult fist_run(const Learner& learner0, int n_stages, double alpha, int k_iters);

/// Beam search over binary alpha choices: every kept candidate expands with
/// alpha in {0,1}, candidates are scored on the dev set and the top `beam`
/// survive to the next stage. beam = 2^S covers the whole tree.
SearchResult gist_search(const Learner& learner0, int n_stages, int beam, int k_iters);

/// One random binary path trained end to end; exposed so trials can be
/// verified exchangeable under seed permutation.
SearchResult rist_trial(const Learner& learner0, int n_stages, int k_iters,
                        std::uint64_t trial_seed, int trial_index, bool reject_degenerate);

/// n_trials independent random paths; best node across all trials and stages.
/// reject_degenerate resamples paths with more than four consecutive
/// identical choices (off by default).
SearchResult rist_search(const Learner& learner0, int n_stages, int n_trials, int k_iters,
                         Rng& rng, bool reject_degenerate = false);

/// Comparison mode: one path whose alpha is re-flipped every iteration.
SearchResult batchwise_run(const Learner& learner0, int n_stages, int k_iters);

}  // namespace proxytrain
