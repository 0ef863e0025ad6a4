#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "proxytrain/checkpoint.hpp"
#include "proxytrain/config.hpp"
#include "proxytrain/datasets.hpp"
#include "proxytrain/gradcheck.hpp"
#include "proxytrain/metrics.hpp"
#include "proxytrain/selftrain.hpp"

namespace proxytrain {

// ---- retrieval training -------------------------------------------------------

struct EpochRow {
    std::size_t epoch = 0;
    double loss = 0.0;
    double dev_r1 = 0.0;
};

struct RetrievalOutcome {
    std::vector<EpochRow> epochs;
    EvalReport test_report;
    double best_dev_r1 = 0.0;
    std::filesystem::path run_dir;  // empty when not persisted
};

/// Trains a proxy-based model on the synthetic retrieval task. When `persist`
/// is set, the run directory receives config.snapshot.txt, metrics.csv
/// (columns: epoch,loss,dev_r1), report.txt and checkpoint.txt.
RetrievalOutcome run_train_retrieval(const RunConfig& cfg, bool persist = true);

/// Generalized ProxyNCA with a temperature on the distances; beta=1 is the
/// plain loss. Used by the ablation grid where +scale combines with -prob.
Var proxynca_scaled_loss(const Var& x, const std::vector<int>& labels, const Var& proxies,
                         InverseTemperature beta);

// ---- ablation -------------------------------------------------------------------

struct AblateRow {
    std::string variant;
    std::vector<double> r1_per_seed;  // test R@1
    double mean_r1 = 0.0;
    double std_r1 = 0.0;
};

/// The six enhancement toggles; absent keys keep the full configuration.
RunConfig apply_toggles(const RunConfig& base, const std::map<std::string, bool>& toggles);

/// leave_one_out: full, one row per disabled toggle, and an all-off baseline.
/// grid: the cartesian product over the listed toggles.
std::vector<AblateRow> run_ablate(const RunConfig& cfg, bool persist = true);

// ---- self-training ----------------------------------------------------------------

struct SelftrainOutcome {
    SearchResult result;
    std::filesystem::path run_dir;  // empty when not persisted
};

SelftrainOutcome run_selftrain(const RunConfig& cfg, bool persist = true);

// ---- study helpers (acceptance + CLI) ----------------------------------------------

/// Trains the 2 -> 100 -> 2 two-moons classifier with inverse-temperature
/// scaled logits for a fixed budget; returns final training accuracy.
double two_moons_train_accuracy(std::uint64_t seed, double beta, int epochs = 60,
                                double lr = 0.5);

struct GradRmsProbe {
    double proxy_rms = 0.0;
    double embedding_rms = 0.0;  // weight of the last linear layer
};

/// RMS gradients on the first balanced batch at initialization.
GradRmsProbe measure_initial_grad_rms(const RunConfig& cfg);

/// Formats gradcheck results, one line per component.
std::string gradcheck_report(const std::vector<GradCheckResult>& results, double tolerance);

}  // namespace proxytrain
