// Command-line runner: gradient checks, retrieval training, ablation grids,
// self-training schedule search, and checkpoint evaluation.
//
// Exit codes: 0 success, 1 validation/config error, 2 tolerance failure.

#include <cstdlib>
#include <iostream>
#include <set>

#include <CLI11.hpp>

#include "proxytrain/errors.hpp"
#include "proxytrain/harness.hpp"

using namespace proxytrain;

namespace {

RunConfig load_config(const std::string& path) {
    RunConfig cfg = RunConfig::from_file(path);
    if (const char* env = std::getenv("PROXYTRAIN_OUT_DIR")) {
        cfg.out_dir = env;  // the one environment override
    }
    return cfg;
}

int cmd_gradcheck() {
    auto results = run_gradcheck(standard_gradcheck_cases(), 20, kGradCheckEps, 20200825);
    std::cout << gradcheck_report(results, kGradCheckTolerance);
    for (const auto& r : results) {
        if (!r.passed(kGradCheckTolerance)) {
            std::cout << "gradcheck FAILED: " << r.name << " exceeded tolerance "
                      << kGradCheckTolerance << "\n";
            return 2;
        }
    }
    std::cout << "gradcheck: all " << results.size() << " components ok\n";
    return 0;
}

int cmd_train_retrieval(const std::string& config_path) {
    RunConfig cfg = load_config(config_path);
    RetrievalOutcome out = run_train_retrieval(cfg, /*persist=*/true);
    std::cout << "run dir: " << out.run_dir.string() << "\n";
    std::cout << "best dev R@1: " << out.best_dev_r1 << "\n";
    std::cout << out.test_report.to_text();
    return 0;
}

int cmd_ablate(const std::string& config_path) {
    RunConfig cfg = load_config(config_path);
    auto rows = run_ablate(cfg, /*persist=*/true);
    std::cout << "variant,mean_r1,std_r1\n";
    for (const auto& r : rows) {
        std::cout << r.variant << ',' << r.mean_r1 << ',' << r.std_r1 << "\n";
    }
    return 0;
}

int cmd_selftrain(const std::string& config_path) {
    RunConfig cfg = load_config(config_path);
    SelftrainOutcome out = run_selftrain(cfg, /*persist=*/true);
    std::cout << "run dir: " << out.run_dir.string() << "\n";
    std::cout << "best path: " << out.result.best_path.to_string() << "\n";
    std::cout << "best dev score: " << out.result.best_dev_score << "\n";
    std::cout << "best test score: " << out.result.best_test_score << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_dir) {
    Checkpoint ck = checkpoint_load(checkpoint_path);
    RunConfig cfg = RunConfig::from_text(ck.config_snapshot);

    Rng init = Rng::stream(cfg.seed, "init");
    Model model(cfg.layers, init, cfg.head_init_scale);
    for (Parameter& p : model.params()) {
        bool found = false;
        for (const Parameter& c : ck.params) {
            if (c.name == p.name) {
                require_same_shape(p.value, c.value, "eval: checkpoint parameter");
                p.value = c.value;
                found = true;
                break;
            }
        }
        if (!found) throw IoError("eval: checkpoint is missing parameter '" + p.name + "'");
    }

    Dataset data = Dataset::load(data_dir);
    std::vector<std::size_t> idx = data.indices_of(Split::test);
    if (idx.empty()) {
        idx.resize(data.labels.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    }
    Tensor emb = extract_embeddings(model, data.rows(idx));
    Rng eval_rng = Rng::stream(cfg.seed, "eval.kmeans");
    EvalReport report = evaluate_retrieval(emb, data.labels_of(idx), cfg.recall_ks, eval_rng);
    std::cout << report.to_text();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"proxy-based metric learning and iterative self-training toolkit"};
    app.require_subcommand(1);

    app.add_subcommand("gradcheck", "finite-difference check of every loss and layer");

    std::string train_config;
    auto* train = app.add_subcommand("train-retrieval", "train a proxy-based retrieval model");
    train->add_option("--config", train_config, "run config file")->required();

    std::string ablate_config;
    auto* ablate = app.add_subcommand("ablate", "enhancement-toggle ablation grid");
    ablate->add_option("--config", ablate_config, "run config file")->required();

    std::string selftrain_config;
    auto* selftrain = app.add_subcommand("selftrain", "FIST/GIST/RIST schedule search");
    selftrain->add_option("--config", selftrain_config, "run config file")->required();

    std::string eval_checkpoint, eval_data;
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a saved dataset");
    eval->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
    eval->add_option("--data", eval_data, "dataset directory")->required();

    try {
        app.parse(argc, argv);
        if (app.got_subcommand("gradcheck")) return cmd_gradcheck();
        if (app.got_subcommand(train)) return cmd_train_retrieval(train_config);
        if (app.got_subcommand(ablate)) return cmd_ablate(ablate_config);
        if (app.got_subcommand(selftrain)) return cmd_selftrain(selftrain_config);
        if (app.got_subcommand(eval)) return cmd_eval(eval_checkpoint, eval_data);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) ? 1 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
