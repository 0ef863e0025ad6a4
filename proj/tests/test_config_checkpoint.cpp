#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "proxytrain/checkpoint.hpp"
#include "proxytrain/config.hpp"
#include "proxytrain/errors.hpp"

using namespace proxytrain;

namespace {

const char* kMinimalConfig = R"(
[run]
seed = 42
out_dir = /tmp/proxytrain_cfg_test

[data]
generator = gaussian_classes
n_classes = 8
per_class = 10
dim = 6
spread = 0.25

[model]
layers = linear(6,12) relu kmaxpool(4,1) linear(3,4) layernorm l2norm

[loss]
kind = proxynca_pp
beta = 9

[sampler]
batch_size = 8
classes_per_batch = 2
)";

}  // namespace

TEST_CASE("config parsing") {
    SUBCASE("sections, comments and defaults") {
        Config c = Config::parse_text("[run]\nseed = 3 # a comment\n\n[loss]\nbeta = 2.5\n");
        CHECK(c.get("run", "seed", "") == "3");
        CHECK(c.get("loss", "beta", "") == "2.5");
        CHECK(c.get("loss", "missing", "fallback") == "fallback");
        CHECK_FALSE(c.has("nope", "seed"));
    }
    SUBCASE("malformed lines throw") {
        CHECK_THROWS_AS(Config::parse_text("[run\nseed = 1\n"), ConfigError);
        CHECK_THROWS_AS(Config::parse_text("justtext\n"), ConfigError);
    }
    SUBCASE("structured RunConfig from text") {
        RunConfig cfg = RunConfig::from_text(kMinimalConfig);
        CHECK(cfg.seed == 42);
        CHECK(cfg.data.n_classes == 8);
        CHECK(cfg.layers.size() == 6);
        CHECK(cfg.beta == 9.0);
        CHECK(cfg.batch_size == 8);
        CHECK(cfg.loss_kind == "proxynca_pp");
        CHECK(cfg.snapshot == kMinimalConfig);
    }
    SUBCASE("seed is mandatory") {
        CHECK_THROWS_AS(RunConfig::from_text("[loss]\nbeta = 2\n"), ConfigError);
    }
    SUBCASE("all validation problems are reported together") {
        try {
            RunConfig::from_text(
                "[run]\nseed = 1\n[loss]\nkind = triplet\nbeta = -2\n[sampler]\nbatch_size = 0\n");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("kind") != std::string::npos);
            CHECK(msg.find("beta") != std::string::npos);
            CHECK(msg.find("batch_size") != std::string::npos);
        }
    }
    SUBCASE("unparsable numbers are named") {
        try {
            RunConfig::from_text("[run]\nseed = 1\n[loss]\nbeta = fast\n");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("beta") != std::string::npos);
        }
    }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    const auto dir = std::filesystem::temp_directory_path() / "proxytrain_test_ckpt";
    std::filesystem::create_directories(dir);
    const auto path = dir / "checkpoint.txt";

    Rng rng(17);
    std::vector<Parameter> params;
    {
        std::vector<double> w(12), b(3);
        for (double& v : w) v = rng.normal() * 1e3;
        for (double& v : b) v = rng.normal() * 1e-7;
        params.push_back({"L0.W", Tensor({4, 3}, w), 1.0, true});
        params.push_back({"L0.b", Tensor({3}, b), 1.0, true});
        params.push_back({"proxies", Tensor({2, 3}, {1.0 / 3, -2.0 / 7, 0.25, 1e-300, 5, -6}),
                          100.0, false});
    }
    const std::string snapshot = "[run]\nseed = 7\n";
    checkpoint_save(path, params, snapshot);

    Checkpoint back = checkpoint_load(path);
    CHECK(back.config_snapshot == snapshot);
    REQUIRE(back.params.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.params[i].name == params[i].name);
        CHECK(back.params[i].lr_multiplier == params[i].lr_multiplier);
        CHECK(back.params[i].weight_decay == params[i].weight_decay);
        REQUIRE(back.params[i].value.shape() == params[i].value.shape());
        for (std::size_t j = 0; j < params[i].value.size(); ++j) {
            CHECK(back.params[i].value[j] == params[i].value[j]);  // bit-identical
        }
    }

    SUBCASE("truncated file is a structured corruption error") {
        std::ifstream is(path);
        std::string content((std::istreambuf_iterator<char>(is)), {});
        std::ofstream os(path);
        os << content.substr(0, content.size() / 2);
        os.close();
        CHECK_THROWS_AS(checkpoint_load(path), IoError);
    }

    SUBCASE("config-hash mismatch refuses and reports both hashes") {
        const std::uint64_t wrong = 0xdeadbeefULL;
        try {
            checkpoint_load(path, wrong);
            FAIL("expected IoError");
        } catch (const IoError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("00000000deadbeef") != std::string::npos);
            char expect[20];
            std::snprintf(expect, sizeof(expect), "%016llx",
                          static_cast<unsigned long long>(fnv1a(snapshot)));
            CHECK(msg.find(expect) != std::string::npos);
        }
    }

    SUBCASE("matching expected hash loads fine") {
        Checkpoint ok = checkpoint_load(path, fnv1a(snapshot));
        CHECK(ok.params.size() == 3);
    }

    std::filesystem::remove_all(dir);
}
