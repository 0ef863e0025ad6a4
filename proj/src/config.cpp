#include "proxytrain/config.hpp"

#include <fstream>
#include <sstream>

#include "proxytrain/errors.hpp"

namespace proxytrain {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

Config Config::parse_text(const std::string& text) {
    Config cfg;
    cfg.text_ = text;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        cfg.sections_[section][key] = value;
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_text(ss.str());
}

bool Config::has(const std::string& section, const std::string& key) const {
    auto s = sections_.find(section);
    return s != sections_.end() && s->second.count(key) > 0;
}

std::string Config::get(const std::string& section, const std::string& key,
                        const std::string& fallback) const {
    auto s = sections_.find(section);
    if (s == sections_.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

namespace {

// Reads typed values, collecting every problem instead of failing fast.
struct Reader {
    const Config& cfg;
    std::vector<std::string>& errors;

    std::string str(const std::string& sec, const std::string& key, const std::string& dflt) {
        return cfg.get(sec, key, dflt);
    }

    double num(const std::string& sec, const std::string& key, double dflt) {
        if (!cfg.has(sec, key)) return dflt;
        const std::string v = cfg.get(sec, key, "");
        try {
            std::size_t used = 0;
            const double x = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            errors.push_back("[" + sec + "] " + key + ": not a number: '" + v + "'");
            return dflt;
        }
    }

    long integer(const std::string& sec, const std::string& key, long dflt) {
        const double x = num(sec, key, static_cast<double>(dflt));
        const long i = static_cast<long>(x);
        if (static_cast<double>(i) != x) {
            errors.push_back("[" + sec + "] " + key + ": expected an integer");
        }
        return i;
    }

    bool flag(const std::string& sec, const std::string& key, bool dflt) {
        if (!cfg.has(sec, key)) return dflt;
        const std::string v = cfg.get(sec, key, "");
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        errors.push_back("[" + sec + "] " + key + ": expected a boolean, got '" + v + "'");
        return dflt;
    }

    void check(bool ok, const std::string& message) {
        if (!ok) errors.push_back(message);
    }
};

ScheduleConfig read_schedule(Reader& r, const std::string& sec) {
    ScheduleConfig s;
    const std::string kind = r.str(sec, "schedule", "constant");
    try {
        s.kind = parse_schedule_kind(kind);
    } catch (const ConfigError& e) {
        r.errors.push_back("[" + sec + "] " + e.what());
    }
    s.power = r.num(sec, "power", s.power);
    s.max_iter = r.integer(sec, "max_iter", s.max_iter);
    s.gamma = r.num(sec, "gamma", s.gamma);
    s.patience = static_cast<int>(r.integer(sec, "patience", s.patience));
    s.factor = r.num(sec, "factor", s.factor);
    r.check(s.patience >= 1, "[" + sec + "] patience: must be >= 1");
    r.check(s.factor > 0.0 && s.factor < 1.0, "[" + sec + "] factor: must be in (0,1)");
    if (s.kind == ScheduleKind::poly) {
        r.check(s.max_iter > 0, "[" + sec + "] max_iter: required (positive) for poly schedule");
    }
    return s;
}

SgdConfig read_sgd(Reader& r, const std::string& sec, const SgdConfig& dflt) {
    SgdConfig o = dflt;
    o.base_lr = r.num(sec, "base_lr", o.base_lr);
    o.momentum = r.num(sec, "momentum", o.momentum);
    o.weight_decay = r.num(sec, "weight_decay", o.weight_decay);
    o.schedule = read_schedule(r, sec);
    r.check(o.base_lr > 0.0, "[" + sec + "] base_lr: must be positive");
    r.check(o.momentum >= 0.0 && o.momentum < 1.0, "[" + sec + "] momentum: must be in [0,1)");
    r.check(o.weight_decay >= 0.0, "[" + sec + "] weight_decay: must be >= 0");
    return o;
}

std::vector<LayerSpec> read_layers(Reader& r, const std::string& sec, const std::string& dflt) {
    const std::string text = r.str(sec, "layers", dflt);
    try {
        return parse_layers(text);
    } catch (const ConfigError& e) {
        r.errors.push_back("[" + sec + "] layers: " + e.what());
        return {};
    }
}

}  // namespace

RunConfig RunConfig::from_config(const Config& cfg) {
    std::vector<std::string> errors;
    Reader r{cfg, errors};
    RunConfig out;
    out.snapshot = cfg.text();

    // [run] — seed is mandatory
    if (!cfg.has("run", "seed")) {
        errors.push_back("[run] seed: required");
    } else {
        out.seed = static_cast<std::uint64_t>(r.integer("run", "seed", 0));
    }
    out.out_dir = r.str("run", "out_dir", "");

    // [data]
    out.data.generator = r.str("data", "generator", out.data.generator);
    out.data.n_classes = static_cast<std::size_t>(r.integer("data", "n_classes", 12));
    out.data.per_class = static_cast<std::size_t>(r.integer("data", "per_class", 30));
    out.data.dim = static_cast<std::size_t>(r.integer("data", "dim", 16));
    out.data.spread = r.num("data", "spread", out.data.spread);
    out.data.n = static_cast<std::size_t>(r.integer("data", "n", 600));
    out.data.noise = r.num("data", "noise", out.data.noise);
    r.check(out.data.generator == "gaussian_classes" || out.data.generator == "two_moons",
            "[data] generator: must be gaussian_classes or two_moons");
    if (out.data.generator == "gaussian_classes") {
        r.check(out.data.n_classes >= 4, "[data] n_classes: must be >= 4 (zero-shot split)");
    }

    // [model]
    out.layers = read_layers(r, "model", "linear(16,48) relu kmaxpool(8,1) linear(6,8) layernorm l2norm");
    r.check(!out.layers.empty(), "[model] layers: must not be empty");
    out.head_init_scale = r.num("model", "head_init_scale", out.head_init_scale);
    r.check(out.head_init_scale > 0.0, "[model] head_init_scale: must be positive");
    out.model_lr_multiplier = r.num("model", "lr_multiplier", out.model_lr_multiplier);
    r.check(out.model_lr_multiplier > 0.0, "[model] lr_multiplier: must be positive");

    // [loss]
    out.loss_kind = r.str("loss", "kind", out.loss_kind);
    out.beta = r.num("loss", "beta", out.beta);
    r.check(out.loss_kind == "proxynca" || out.loss_kind == "proxynca_pp" ||
                out.loss_kind == "normsoftmax",
            "[loss] kind: must be proxynca, proxynca_pp or normsoftmax");
    r.check(out.beta > 0.0, "[loss] beta: must be positive");

    // [sampler]
    out.batch_size = static_cast<std::size_t>(r.integer("sampler", "batch_size", 24));
    out.classes_per_batch = static_cast<std::size_t>(r.integer("sampler", "classes_per_batch", 4));
    out.balanced = r.flag("sampler", "balanced", true);
    r.check(out.batch_size >= 1, "[sampler] batch_size: must be >= 1");
    r.check(out.classes_per_batch >= 1, "[sampler] classes_per_batch: must be >= 1");

    // [optim]
    SgdConfig optim_default;
    optim_default.base_lr = 0.05;
    optim_default.schedule.kind = ScheduleKind::plateau;
    out.optim = read_sgd(r, "optim", optim_default);
    out.proxy_lr_multiplier = r.num("optim", "proxy_lr_multiplier", out.proxy_lr_multiplier);
    out.epochs = static_cast<std::size_t>(r.integer("optim", "epochs", 30));
    out.two_stage = r.flag("optim", "two_stage", false);
    r.check(out.proxy_lr_multiplier > 0.0, "[optim] proxy_lr_multiplier: must be positive");
    r.check(out.epochs >= 1, "[optim] epochs: must be >= 1");

    // [eval]
    if (cfg.has("eval", "recall_ks")) {
        out.recall_ks.clear();
        std::istringstream ks(cfg.get("eval", "recall_ks", ""));
        int k;
        while (ks >> k) out.recall_ks.push_back(k);
        r.check(!out.recall_ks.empty(), "[eval] recall_ks: expected integers");
        for (int kk : out.recall_ks) r.check(kk >= 1, "[eval] recall_ks: entries must be >= 1");
    }

    // [selftrain]
    out.st.strategy = r.str("selftrain", "strategy", out.st.strategy);
    out.st.stages = static_cast<int>(r.integer("selftrain", "stages", out.st.stages));
    out.st.k_iters = static_cast<int>(r.integer("selftrain", "k_iters", out.st.k_iters));
    out.st.stage0_iters =
        static_cast<int>(r.integer("selftrain", "stage0_iters", out.st.stage0_iters));
    out.st.n_trials = static_cast<int>(r.integer("selftrain", "n_trials", out.st.n_trials));
    out.st.beam = static_cast<int>(r.integer("selftrain", "beam", out.st.beam));
    out.st.alpha = r.num("selftrain", "alpha", out.st.alpha);
    out.st.reject_degenerate = r.flag("selftrain", "reject_degenerate", false);
    out.st.grid = static_cast<std::size_t>(r.integer("selftrain", "grid", 12));
    out.st.n_images = static_cast<std::size_t>(r.integer("selftrain", "n_images", 250));
    out.st.labeled_fraction = r.num("selftrain", "labeled_fraction", out.st.labeled_fraction);
    out.st.batch_images = static_cast<std::size_t>(r.integer("selftrain", "batch_images", 2));
    out.st.layers = read_layers(r, "selftrain", "linear(4,16) relu linear(16,2)");
    SgdConfig st_default;
    st_default.base_lr = 0.05;
    st_default.momentum = 0.9;
    st_default.weight_decay = 5e-4;
    out.st.optim = read_sgd(r, "selftrain", st_default);
    out.st.addons.consistency = r.flag("selftrain", "cl", false);
    out.st.addons.label_erase = r.flag("selftrain", "le", false);
    out.st.addons.soften = r.flag("selftrain", "ts", false);
    out.st.addons.phi = r.num("selftrain", "phi", out.st.addons.phi);
    out.st.addons.beta_ts = r.num("selftrain", "beta_ts", out.st.addons.beta_ts);
    out.st.addons.ema_beta = r.num("selftrain", "ema_beta", out.st.addons.ema_beta);
    out.st.addons.p_drop = r.num("selftrain", "p_drop", out.st.addons.p_drop);
    out.st.addons.cl_weight = r.num("selftrain", "cl_weight", out.st.addons.cl_weight);
    r.check(out.st.strategy == "fist" || out.st.strategy == "gist" || out.st.strategy == "rist" ||
                out.st.strategy == "batchwise",
            "[selftrain] strategy: must be fist, gist, rist or batchwise");
    r.check(out.st.stages >= 1, "[selftrain] stages: must be >= 1");
    r.check(out.st.alpha >= 0.0 && out.st.alpha <= 1.0, "[selftrain] alpha: must be in [0,1]");
    r.check(out.st.labeled_fraction > 0.0 && out.st.labeled_fraction <= 1.0,
            "[selftrain] labeled_fraction: must be in (0,1]");
    r.check(out.st.addons.phi >= 0.0 && out.st.addons.phi <= 1.0,
            "[selftrain] phi: must be in [0,1]");
    r.check(out.st.addons.beta_ts > 0.0, "[selftrain] beta_ts: must be positive");
    r.check(out.st.addons.ema_beta >= 0.0 && out.st.addons.ema_beta <= 1.0,
            "[selftrain] ema_beta: must be in [0,1]");
    r.check(out.st.addons.p_drop >= 0.0 && out.st.addons.p_drop < 1.0,
            "[selftrain] p_drop: must be in [0,1)");

    // [ablate]
    out.ablate.mode = r.str("ablate", "mode", out.ablate.mode);
    if (cfg.has("ablate", "toggles")) {
        out.ablate.toggles.clear();
        std::istringstream ts(cfg.get("ablate", "toggles", ""));
        std::string t;
        while (ts >> t) out.ablate.toggles.push_back(t);
    }
    out.ablate.n_seeds = static_cast<int>(r.integer("ablate", "n_seeds", out.ablate.n_seeds));
    r.check(out.ablate.mode == "leave_one_out" || out.ablate.mode == "grid",
            "[ablate] mode: must be leave_one_out or grid");
    r.check(out.ablate.n_seeds >= 1, "[ablate] n_seeds: must be >= 1");
    for (const std::string& t : out.ablate.toggles) {
        r.check(t == "prob" || t == "scale" || t == "max" || t == "norm" || t == "cbs" ||
                    t == "fast",
                "[ablate] toggles: unknown toggle '" + t + "'");
    }

    if (!errors.empty()) {
        std::string all = "config validation failed:";
        for (const std::string& e : errors) all += "\n  - " + e;
        throw ConfigError(all);
    }
    return out;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    return from_config(Config::load(path));
}

RunConfig RunConfig::from_text(const std::string& text) {
    return from_config(Config::parse_text(text));
}

}  // namespace proxytrain
