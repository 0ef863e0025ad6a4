#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "proxytrain/layers.hpp"
#include "proxytrain/optim.hpp"
#include "proxytrain/seg_learner.hpp"

namespace proxytrain {

/// Flat "key = value" file with [section] headers and '#' comments. The raw
/// text is kept verbatim as the run's config snapshot.
class Config {
public:
    static Config parse_text(const std::string& text);
    static Config load(const std::filesystem::path& path);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const;
    const std::string& text() const { return text_; }

private:
    std::map<std::string, std::map<std::string, std::string>> sections_;
    std::string text_;
};

struct RetrievalDataConfig {
    std::string generator = "gaussian_classes";
    std::size_t n_classes = 12, per_class = 30, dim = 16;
    double spread = 0.3;
    std::size_t n = 600;  // two_moons
    double noise = 0.3;   // two_moons
};

struct SelfTrainConfig {
    std::string strategy = "fist";  // fist | gist | rist | batchwise
    int stages = 9;
    int k_iters = 200;
    int stage0_iters = 400;
    int n_trials = 5;
    int beam = 2;
    double alpha = 0.75;
    bool reject_degenerate = false;
    std::size_t grid = 12, n_images = 250;
    double labeled_fraction = 0.02;
    std::size_t batch_images = 2;
    std::vector<LayerSpec> layers;
    SgdConfig optim;
    AddOns addons;
};

struct AblateConfig {
    std::string mode = "leave_one_out";  // leave_one_out | grid
    std::vector<std::string> toggles = {"prob", "scale", "max", "norm", "cbs", "fast"};
    int n_seeds = 5;
};

/// Validated, structured run configuration. Parsing collects every problem it
/// finds and throws one ConfigError listing all of them.
struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path out_dir;

    RetrievalDataConfig data;
    std::vector<LayerSpec> layers;
    double head_init_scale = 1.0;
    double model_lr_multiplier = 1.0;  // lr group multiplier for backbone+head
    std::string loss_kind = "proxynca_pp";  // nca excluded: batch losses only
    double beta = 9.0;
    std::size_t batch_size = 24, classes_per_batch = 4;
    bool balanced = true;
    SgdConfig optim;
    double proxy_lr_multiplier = 100.0;
    std::size_t epochs = 30;
    bool two_stage = false;
    std::vector<int> recall_ks = {1, 2, 4, 8};

    SelfTrainConfig st;
    AblateConfig ablate;

    std::string snapshot;  // raw config text

    static RunConfig from_config(const Config& cfg);
    static RunConfig from_file(const std::filesystem::path& path);
    static RunConfig from_text(const std::string& text);

    std::uint64_t snapshot_hash() const { return fnv1a(snapshot); }
};

}  // namespace proxytrain
