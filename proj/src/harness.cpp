#include "proxytrain/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "proxytrain/errors.hpp"
#include "proxytrain/metric_losses.hpp"
#include "proxytrain/optim.hpp"
#include "proxytrain/seg_learner.hpp"

namespace proxytrain {

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot write " + path.string());
    os << content;
}

Dataset build_retrieval_dataset(const RunConfig& cfg) {
    if (cfg.data.generator == "two_moons") {
        return make_two_moons(cfg.data.n, cfg.data.noise, cfg.seed);
    }
    return make_gaussian_classes(cfg.data.n_classes, cfg.data.per_class, cfg.data.dim,
                                 cfg.data.spread, cfg.seed);
}

struct RetrievalSetup {
    Dataset data;
    Model model;
    ProxySet proxies;
    std::vector<std::size_t> train_idx, dev_idx, test_idx;
    std::vector<int> train_labels;
    Tensor train_inputs{Shape{1, 1}, {0.0}};
};

RetrievalSetup build_retrieval_setup(const RunConfig& cfg) {
    RetrievalSetup s{build_retrieval_dataset(cfg), Model{}, ProxySet{}, {}, {}, {}, {}};
    s.train_idx = s.data.indices_of(Split::train);
    s.dev_idx = s.data.indices_of(Split::dev);
    s.test_idx = s.data.indices_of(Split::test);
    s.train_labels = s.data.labels_of(s.train_idx);
    s.train_inputs = s.data.rows(s.train_idx);

    Rng init = Rng::stream(cfg.seed, "init");
    s.model = Model(cfg.layers, init, cfg.head_init_scale);
    for (Parameter& p : s.model.params()) p.lr_multiplier = cfg.model_lr_multiplier;
    if (s.model.input_dim() != s.data.inputs.dim(1)) {
        throw ConfigError("model input dim " + std::to_string(s.model.input_dim()) +
                          " does not match data dim " + std::to_string(s.data.inputs.dim(1)));
    }

    int max_train_label = 0;
    for (int y : s.train_labels) max_train_label = std::max(max_train_label, y);
    Rng proxy_init = Rng::stream(cfg.seed, "init.proxies");
    s.proxies = ProxySet::random(static_cast<std::size_t>(max_train_label) + 1,
                                 s.model.output_dim(), cfg.proxy_lr_multiplier, proxy_init);
    return s;
}

Var batch_metric_loss(const RunConfig& cfg, const Var& emb, const std::vector<int>& labels,
                      const Var& proxies) {
    const InverseTemperature beta(cfg.beta);
    if (cfg.loss_kind == "proxynca") return proxynca_scaled_loss(emb, labels, proxies, beta);
    if (cfg.loss_kind == "normsoftmax") return normsoftmax_loss(emb, labels, proxies, beta);
    return proxynca_pp_loss(emb, labels, proxies, beta);
}

double dev_recall1(const Model& model, const RetrievalSetup& s) {
    if (s.dev_idx.size() < 2) return 0.0;
    Tensor emb = extract_embeddings(model, s.data.rows(s.dev_idx));
    return recall_at_k(emb, s.data.labels_of(s.dev_idx), {1}).at(1);
}

}  // namespace

Var proxynca_scaled_loss(const Var& x, const std::vector<int>& labels, const Var& proxies,
                         InverseTemperature beta) {
    const std::size_t k = proxies.value().dim(0);
    if (k < 2) throw ValueError("proxynca_scaled_loss: need K >= 2 proxies");
    Var d = scale(pairwise_sq_distance(l2_normalize(x), l2_normalize(proxies)), beta.beta);
    Var own = gather_rows(d, labels);
    Var others = drop_column_per_row(d, labels);
    return mean(add(own, logsumexp_rows(neg(others))));
}

namespace {

// Trains in place over the given dataset rows; returns per-epoch rows (dev R@1
// evaluated against the held-out dev split).
std::vector<EpochRow> retrieval_train_loop(const RunConfig& cfg, RetrievalSetup& s,
                                           const std::vector<std::size_t>& subset_idx,
                                           const std::vector<int>& subset_labels,
                                           std::size_t epochs, const char* stream_tag) {
    SgdOptimizer opt(cfg.optim);
    Rng sampler_rng = Rng::stream(cfg.seed, std::string(stream_tag) + ".sampler");
    Rng dropout_rng = Rng::stream(cfg.seed, std::string(stream_tag) + ".dropout");

    std::vector<EpochRow> rows_out;
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        opt.set_epoch(static_cast<long>(epoch));
        BatchPlan plan = cfg.balanced
                             ? class_balanced_batches(subset_labels, cfg.batch_size,
                                                      cfg.classes_per_batch, sampler_rng)
                             : shuffled_batches(subset_labels.size(), cfg.batch_size, sampler_rng);
        double loss_sum = 0.0;
        for (const auto& batch : plan.batches) {
            std::vector<std::size_t> rows;
            std::vector<int> labels;
            rows.reserve(batch.size());
            labels.reserve(batch.size());
            for (std::size_t local : batch) {
                rows.push_back(subset_idx[local]);
                labels.push_back(subset_labels[local]);
            }
            Binding binding;
            Var emb = s.model.forward(Var(s.data.rows(rows)), true, &dropout_rng, binding);
            Var pvar = binding.bind(s.proxies.proxies);
            Var loss = batch_metric_loss(cfg, emb, labels, pvar);
            GradMap grads = gradients(loss, binding.vars());
            opt.step(binding.params(), grads);
            loss_sum += loss.value().item();
        }
        const double epoch_loss =
            plan.batches.empty() ? 0.0 : loss_sum / static_cast<double>(plan.batches.size());
        const double r1 = dev_recall1(s.model, s);
        opt.observe_dev_score(r1);
        rows_out.push_back({epoch, epoch_loss, r1});
    }
    return rows_out;
}

}  // namespace

RetrievalOutcome run_train_retrieval(const RunConfig& cfg, bool persist) {
    RetrievalSetup s = build_retrieval_setup(cfg);

    RetrievalOutcome out;
    out.epochs = retrieval_train_loop(cfg, s, s.train_idx, s.train_labels, cfg.epochs, "stage1");
    for (const EpochRow& r : out.epochs) out.best_dev_r1 = std::max(out.best_dev_r1, r.dev_r1);

    if (cfg.two_stage && !out.epochs.empty()) {
        // retrain on train+dev for the dev-selected number of epochs
        std::size_t best_epoch = 0;
        for (const EpochRow& r : out.epochs) {
            if (r.dev_r1 > out.epochs[best_epoch].dev_r1) best_epoch = r.epoch;
        }
        RetrievalSetup s2 = build_retrieval_setup(cfg);
        std::vector<std::size_t> combined = s2.train_idx;
        combined.insert(combined.end(), s2.dev_idx.begin(), s2.dev_idx.end());
        std::vector<int> combined_labels = s2.data.labels_of(combined);
        retrieval_train_loop(cfg, s2, combined, combined_labels, best_epoch + 1, "stage2");
        s = std::move(s2);
    }

    Rng eval_rng = Rng::stream(cfg.seed, "eval.kmeans");
    Tensor test_emb = extract_embeddings(s.model, s.data.rows(s.test_idx));
    out.test_report =
        evaluate_retrieval(test_emb, s.data.labels_of(s.test_idx), cfg.recall_ks, eval_rng);

    if (persist) {
        if (cfg.out_dir.empty()) throw ConfigError("[run] out_dir: required to persist a run");
        std::filesystem::create_directories(cfg.out_dir);
        write_file(cfg.out_dir / "config.snapshot.txt", cfg.snapshot);
        std::ostringstream csv;
        csv << "epoch,loss,dev_r1\n";
        for (const EpochRow& r : out.epochs) {
            csv << r.epoch << ',' << fmt17(r.loss) << ',' << fmt17(r.dev_r1) << "\n";
        }
        write_file(cfg.out_dir / "metrics.csv", csv.str());
        write_file(cfg.out_dir / "report.txt", out.test_report.to_text());
        std::ostringstream rep_csv;
        for (const auto& [k, v] : out.test_report.recall_at) rep_csv << "recall_at_" << k << ',';
        rep_csv << "nmi,n_queries\n";
        for (const auto& [k, v] : out.test_report.recall_at) rep_csv << fmt17(v) << ',';
        rep_csv << fmt17(out.test_report.nmi) << ',' << out.test_report.n_queries << "\n";
        write_file(cfg.out_dir / "report.csv", rep_csv.str());
        std::vector<Parameter> all = s.model.params();
        all.push_back(s.proxies.proxies);
        checkpoint_save(cfg.out_dir / "checkpoint.txt", all, cfg.snapshot);
        out.run_dir = cfg.out_dir;
    }
    return out;
}

RunConfig apply_toggles(const RunConfig& base, const std::map<std::string, bool>& toggles) {
    RunConfig cfg = base;
    auto on = [&](const std::string& name, bool dflt) {
        auto it = toggles.find(name);
        return it == toggles.end() ? dflt : it->second;
    };
    if (!on("prob", true)) cfg.loss_kind = "proxynca";
    if (!on("scale", true)) cfg.beta = 1.0;
    // fast off = proxies share the model group's learning rate (the classic
    // setup trains proxies, embedding and backbone at one shared rate)
    if (!on("fast", true)) cfg.proxy_lr_multiplier = cfg.model_lr_multiplier;
    if (!on("cbs", true)) cfg.balanced = false;
    if (!on("max", true)) {
        for (LayerSpec& l : cfg.layers) {
            if (l.kind == LayerKind::kmax_pool) l.k = l.spatial;  // GAP
        }
    }
    if (!on("norm", true)) {
        std::vector<LayerSpec> kept;
        for (const LayerSpec& l : cfg.layers) {
            if (l.kind != LayerKind::layer_norm) kept.push_back(l);
        }
        cfg.layers = std::move(kept);
    }
    return cfg;
}

namespace {

AblateRow run_variant(const RunConfig& base, const std::string& name,
                      const std::map<std::string, bool>& toggles, int n_seeds) {
    AblateRow row;
    row.variant = name;
    RunConfig cfg = apply_toggles(base, toggles);
    for (int i = 0; i < n_seeds; ++i) {
        cfg.seed = base.seed + static_cast<std::uint64_t>(i);
        RetrievalOutcome o = run_train_retrieval(cfg, /*persist=*/false);
        row.r1_per_seed.push_back(o.test_report.recall_at.at(1));
    }
    double sum = 0.0;
    for (double v : row.r1_per_seed) sum += v;
    row.mean_r1 = sum / static_cast<double>(row.r1_per_seed.size());
    double var = 0.0;
    for (double v : row.r1_per_seed) var += (v - row.mean_r1) * (v - row.mean_r1);
    row.std_r1 = row.r1_per_seed.size() > 1
                     ? std::sqrt(var / static_cast<double>(row.r1_per_seed.size() - 1))
                     : 0.0;
    return row;
}

}  // namespace

std::vector<AblateRow> run_ablate(const RunConfig& cfg, bool persist) {
    if (std::find(cfg.recall_ks.begin(), cfg.recall_ks.end(), 1) == cfg.recall_ks.end()) {
        throw ConfigError("[eval] recall_ks: ablation needs K=1 in the list");
    }
    std::vector<AblateRow> rows;
    if (cfg.ablate.mode == "leave_one_out") {
        rows.push_back(run_variant(cfg, "full", {}, cfg.ablate.n_seeds));
        for (const std::string& t : cfg.ablate.toggles) {
            rows.push_back(run_variant(cfg, "-" + t, {{t, false}}, cfg.ablate.n_seeds));
        }
        std::map<std::string, bool> all_off;
        for (const char* t : {"prob", "scale", "max", "norm", "cbs", "fast"}) {
            all_off[t] = false;
        }
        rows.push_back(run_variant(cfg, "baseline", all_off, cfg.ablate.n_seeds));
    } else {
        const std::size_t t = cfg.ablate.toggles.size();
        for (std::size_t mask = 0; mask < (std::size_t{1} << t); ++mask) {
            std::map<std::string, bool> toggles;
            std::string name;
            for (std::size_t i = 0; i < t; ++i) {
                const bool on = (mask >> i) & 1;
                toggles[cfg.ablate.toggles[i]] = on;
                if (!name.empty()) name += ' ';
                name += cfg.ablate.toggles[i] + (on ? "=1" : "=0");
            }
            rows.push_back(run_variant(cfg, name, toggles, cfg.ablate.n_seeds));
        }
    }

    if (persist) {
        if (cfg.out_dir.empty()) throw ConfigError("[run] out_dir: required to persist a run");
        std::filesystem::create_directories(cfg.out_dir);
        write_file(cfg.out_dir / "config.snapshot.txt", cfg.snapshot);
        std::ostringstream csv;
        csv << "variant,mean_r1,std_r1";
        for (int i = 0; i < cfg.ablate.n_seeds; ++i) csv << ",seed" << i;
        csv << "\n";
        for (const AblateRow& r : rows) {
            csv << r.variant << ',' << fmt17(r.mean_r1) << ',' << fmt17(r.std_r1);
            for (double v : r.r1_per_seed) csv << ',' << fmt17(v);
            csv << "\n";
        }
        write_file(cfg.out_dir / "ablate.csv", csv.str());
    }
    return rows;
}

SelftrainOutcome run_selftrain(const RunConfig& cfg, bool persist) {
    auto data = std::make_shared<GridSegDataset>(
        make_toy_grid_segmentation(cfg.st.grid, cfg.st.n_images, cfg.st.labeled_fraction, cfg.seed));

    SegLearnerConfig lcfg;
    lcfg.layers = cfg.st.layers;
    lcfg.optim = cfg.st.optim;
    lcfg.batch_images = cfg.st.batch_images;
    lcfg.addons = cfg.st.addons;
    lcfg.seed = Rng::stream(cfg.seed, "selftrain.learner").next_u64();

    GridSegLearner learner0(data, lcfg);
    learner0.train_supervised(cfg.st.stage0_iters);

    SelftrainOutcome out;
    if (cfg.st.strategy == "fist") {
        out.result = fist_run(learner0, cfg.st.stages, cfg.st.alpha, cfg.st.k_iters);
    } else if (cfg.st.strategy == "gist") {
        out.result = gist_search(learner0, cfg.st.stages, cfg.st.beam, cfg.st.k_iters);
    } else if (cfg.st.strategy == "rist") {
        Rng search_rng = Rng::stream(cfg.seed, "search");
        out.result = rist_search(learner0, cfg.st.stages, cfg.st.n_trials, cfg.st.k_iters,
                                 search_rng, cfg.st.reject_degenerate);
    } else {
        out.result = batchwise_run(learner0, cfg.st.stages, cfg.st.k_iters);
    }

    if (persist) {
        if (cfg.out_dir.empty()) throw ConfigError("[run] out_dir: required to persist a run");
        std::filesystem::create_directories(cfg.out_dir);
        write_file(cfg.out_dir / "config.snapshot.txt", cfg.snapshot);
        write_file(cfg.out_dir / "metrics.csv", out.result.records_csv());
        std::ostringstream rep;
        rep << "strategy=" << cfg.st.strategy << "\n";
        rep << "best_path=" << out.result.best_path.to_string() << "\n";
        rep << "best_dev_score=" << fmt17(out.result.best_dev_score) << "\n";
        rep << "best_test_score=" << fmt17(out.result.best_test_score) << "\n";
        write_file(cfg.out_dir / "report.txt", rep.str());
        auto* best = dynamic_cast<GridSegLearner*>(out.result.best_learner.get());
        if (best) {
            checkpoint_save(cfg.out_dir / "checkpoint.txt", best->model().params(), cfg.snapshot);
        }
        out.run_dir = cfg.out_dir;
    }
    return out;
}

double two_moons_train_accuracy(std::uint64_t seed, double beta, int epochs, double lr) {
    Dataset moons = make_two_moons(600, 0.3, seed);
    Rng init = Rng::stream(seed, "moons.init");
    Model model(parse_layers("linear(2,100) relu linear(100,2)"), init);

    SgdConfig ocfg;
    ocfg.base_lr = lr;
    ocfg.momentum = 0.9;
    ocfg.weight_decay = 0.0;
    SgdOptimizer opt(ocfg);
    Rng sampler = Rng::stream(seed, "moons.sampler");

    PseudoLabelSet all_labels(moons.labels, 2);
    const std::size_t n = moons.labels.size();
    for (int e = 0; e < epochs; ++e) {
        BatchPlan plan = shuffled_batches(n, 64, sampler);
        for (const auto& batch : plan.batches) {
            std::vector<int> labels;
            labels.reserve(batch.size());
            for (std::size_t i : batch) labels.push_back(moons.labels[i]);
            Binding binding;
            Var logits = model.forward(Var(moons.rows(batch)), true, nullptr, binding);
            Var loss = masked_cross_entropy(scale(logits, beta),
                                            PseudoLabelSet(labels, 2));
            GradMap grads = gradients(loss, binding.vars());
            opt.step(binding.params(), grads);
        }
    }

    Tensor logits = model.forward_eval(moons.inputs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const int pred = logits.at(i, 1) > logits.at(i, 0) ? 1 : 0;
        correct += (pred == moons.labels[i]);
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

GradRmsProbe measure_initial_grad_rms(const RunConfig& cfg) {
    RetrievalSetup s = build_retrieval_setup(cfg);
    Rng sampler_rng = Rng::stream(cfg.seed, "sampler");
    Rng dropout_rng = Rng::stream(cfg.seed, "dropout");
    BatchPlan plan = class_balanced_batches(s.train_labels, cfg.batch_size, cfg.classes_per_batch,
                                            sampler_rng);
    const auto& batch = plan.batches.at(0);
    std::vector<std::size_t> rows;
    std::vector<int> labels;
    for (std::size_t local : batch) {
        rows.push_back(s.train_idx[local]);
        labels.push_back(s.train_labels[local]);
    }
    Binding binding;
    Var emb = s.model.forward(Var(s.data.rows(rows)), true, &dropout_rng, binding);
    Var pvar = binding.bind(s.proxies.proxies);
    Var loss = batch_metric_loss(cfg, emb, labels, pvar);
    GradMap grads = gradients(loss, binding.vars());

    GradRmsProbe probe;
    probe.proxy_rms = rms(grads.at("proxies"));
    const std::string emb_name = s.model.params()[s.model.last_linear_weight_index()].name;
    probe.embedding_rms = rms(grads.at(emb_name));
    return probe;
}

std::string gradcheck_report(const std::vector<GradCheckResult>& results, double tolerance) {
    std::ostringstream os;
    for (const GradCheckResult& r : results) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-28s max_rel_error=%.3e  (%d instances)  %s\n",
                      r.name.c_str(), r.max_error, r.instances,
                      r.passed(tolerance) ? "ok" : "FAIL");
        os << buf;
    }
    return os.str();
}

}  // namespace proxytrain
