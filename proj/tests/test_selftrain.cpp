#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>

#include "proxytrain/errors.hpp"
#include "proxytrain/seg_learner.hpp"
#include "proxytrain/selftrain.hpp"

using namespace proxytrain;

namespace {

/// Learner whose dev score is a fixed deterministic (effectively injective)
/// function of the refinement path; training just appends to the path.
class MockLearner : public Learner {
public:
    explicit MockLearner(std::uint64_t salt) : salt_(salt) {}

    std::unique_ptr<Learner> clone() const override { return std::make_unique<MockLearner>(*this); }

    void refine(double alpha, int k_iters, bool batchwise_alpha) override {
        (void)k_iters;
        if (batchwise_alpha) {
            path_ += 'B';
        } else {
            path_ += alpha >= 0.5 ? 'L' : 'P';
        }
    }

    double dev_score() const override { return score_of(path_, salt_); }

    static double score_of(const std::string& path, std::uint64_t salt) {
        const std::uint64_t h = fnv1a(path + "#" + std::to_string(salt));
        return static_cast<double>(h % 1000003ULL) / 1000003.0;
    }

    const std::string& path() const { return path_; }

private:
    std::uint64_t salt_;
    std::string path_;
};

// exhaustive enumeration over all binary paths up to length S, including the
// empty (stage-0) prefix at every depth
double exhaustive_best(int S, std::uint64_t salt, std::string* best_path = nullptr) {
    double best = MockLearner::score_of("", salt);
    if (best_path) *best_path = "";
    std::vector<std::string> frontier{""};
    for (int s = 0; s < S; ++s) {
        std::vector<std::string> next;
        for (const std::string& p : frontier) {
            for (char c : {'P', 'L'}) {
                std::string q = p + c;
                const double score = MockLearner::score_of(q, salt);
                if (score > best) {
                    best = score;
                    if (best_path) *best_path = q;
                }
                next.push_back(std::move(q));
            }
        }
        frontier = std::move(next);
    }
    return best;
}

}  // namespace

TEST_CASE("AlphaPath") {
    AlphaPath p = AlphaPath::binary({0, 0, 1, 1, 0, 1, 0, 1, 1});
    CHECK(p.to_string() == "PPLLPLPLL");
    CHECK(p.alpha_at(2) == 1.0);
    CHECK_FALSE(p.has_run_longer_than(4));
    AlphaPath degenerate = AlphaPath::binary({1, 1, 1, 1, 1, 0, 0, 1, 0});
    CHECK(degenerate.has_run_longer_than(4));
    CHECK_THROWS_AS(AlphaPath::binary({0, 2}), ValueError);

    AlphaPath fixed = AlphaPath::fixed(0.75, 3);
    CHECK(fixed.alpha_at(0) == 0.75);
    CHECK_THROWS_AS(AlphaPath::fixed(1.5, 3), ValueError);
}

TEST_CASE("joint_alpha_loss") {
    Var lh(Tensor::scalar(2.0));
    Var lp(Tensor::scalar(4.0));
    CHECK(joint_alpha_loss(lh, lp, 1.0).value().item() == 2.0);
    CHECK(joint_alpha_loss(lh, lp, 0.0).value().item() == 4.0);
    CHECK(joint_alpha_loss(lh, lp, 0.75).value().item() == doctest::Approx(2.5).epsilon(1e-15));
    CHECK_THROWS_AS(joint_alpha_loss(lh, lp, 1.5), ValueError);
}

TEST_CASE("generate_pseudo_labels") {
    SUBCASE("phi=0 is plain argmax everywhere") {
        Tensor logits({3, 2}, {2, 1, -1, 0, 5, -5});
        PseudoLabelSet y = generate_pseudo_labels(logits, 0.0, InverseTemperature(1.0));
        CHECK(y.labels == std::vector<int>{0, 1, 0});
    }
    SUBCASE("flattened logits plus phi above 1/K erases everything -> error") {
        Tensor logits({2, 4}, {3, 1, 0, -1, 2, 2, 1, 0});
        CHECK_THROWS_AS(generate_pseudo_labels(logits, 0.5, InverseTemperature(1e-9)), ValueError);
    }
    SUBCASE("softening changes what passes the threshold") {
        Tensor logits({1, 2}, {4, 0});  // softmax: 0.982; beta=0.2: softmax(0.8,0): 0.69
        CHECK(generate_pseudo_labels(logits, 0.9, InverseTemperature(1.0)).labels[0] == 0);
        // rows 0/1 drop below phi once softened; row 2 stays confident
        Tensor three({3, 2}, {4, 0, 0, 4, 20, 0});
        PseudoLabelSet soft = generate_pseudo_labels(three, 0.9, InverseTemperature(0.2));
        CHECK(soft.labels[0] == PseudoLabelSet::IGNORE);
        CHECK(soft.labels[1] == PseudoLabelSet::IGNORE);
        CHECK(soft.labels[2] == 0);
    }
}

TEST_CASE("gist_search") {
    SUBCASE("S=1, G=1 picks the argmax over {alpha=0, alpha=1}") {
        MockLearner l0(42);
        SearchResult r = gist_search(l0, 1, 1, 5);
        const double p = MockLearner::score_of("P", 42);
        const double l = MockLearner::score_of("L", 42);
        const double root = MockLearner::score_of("", 42);
        CHECK(r.best_dev_score == std::max({p, l, root}));
    }
    SUBCASE("beam 2^S equals exhaustive enumeration (bit-equal)") {
        for (int S = 1; S <= 4; ++S) {
            for (std::uint64_t salt : {7ULL, 19ULL, 23ULL}) {
                MockLearner l0(salt);
                SearchResult r = gist_search(l0, S, 1 << S, 1);
                std::string best_path;
                const double expect = exhaustive_best(S, salt, &best_path);
                CHECK(r.best_dev_score == expect);
                CHECK(r.best_path.to_string() == best_path);
            }
        }
    }
    SUBCASE("best is never below the stage-0 score") {
        for (std::uint64_t salt = 0; salt < 20; ++salt) {
            MockLearner l0(salt);
            SearchResult r = gist_search(l0, 3, 1, 2);
            CHECK(r.best_dev_score >= MockLearner::score_of("", salt));
        }
    }
    SUBCASE("provenance records every explored candidate") {
        MockLearner l0(5);
        SearchResult r = gist_search(l0, 2, 1, 1);
        // stage 0 once, then 2 expansions per stage with beam 1
        CHECK(r.provenance.size() == 1 + 2 + 2);
        CHECK(r.per_stage_dev_scores.size() == 3);
    }
}

TEST_CASE("rist") {
    SUBCASE("seeded trial follows the seed's Bernoulli(0.5) sequence") {
        MockLearner l0(1);
        const std::uint64_t seed = 777;
        SearchResult r = rist_trial(l0, 8, 1, seed, 1, false);
        Rng rng(seed);
        std::string expect;
        for (int s = 0; s < 8; ++s) expect += rng.uniform() > 0.5 ? 'L' : 'P';
        CHECK(r.provenance.back().path_prefix == expect);
    }
    SUBCASE("alpha draws are a fair coin (3 sigma over 1e4 draws)") {
        MockLearner l0(2);
        Rng rng(11);
        std::size_t ones = 0, total = 0;
        SearchResult r = rist_search(l0, 20, 500, 1, rng);
        for (const StageRecord& rec : r.provenance) {
            if (rec.stage == 20) {
                for (char c : rec.path_prefix) {
                    ones += (c == 'L');
                    ++total;
                }
            }
        }
        REQUIRE(total == 10000);
        const double frac = static_cast<double>(ones) / static_cast<double>(total);
        CHECK(std::abs(frac - 0.5) <= 3.0 * 0.5 / std::sqrt(10000.0));
    }
    SUBCASE("trials are exchangeable: permuting seeds permutes results") {
        MockLearner l0(3);
        SearchResult a1 = rist_trial(l0, 6, 1, 101, 1, false);
        SearchResult a2 = rist_trial(l0, 6, 1, 202, 2, false);
        SearchResult b1 = rist_trial(l0, 6, 1, 202, 1, false);
        SearchResult b2 = rist_trial(l0, 6, 1, 101, 2, false);
        CHECK(a1.best_dev_score == b2.best_dev_score);
        CHECK(a2.best_dev_score == b1.best_dev_score);
        CHECK(a1.best_path.to_string() == b2.best_path.to_string());
    }
    SUBCASE("best-of-5 beats the median single trial on the mock") {
        MockLearner l0(4);
        std::vector<double> singles;
        for (std::uint64_t s = 0; s < 101; ++s) {
            singles.push_back(rist_trial(l0, 6, 1, 1000 + s, 0, false).best_dev_score);
        }
        std::sort(singles.begin(), singles.end());
        const double median = singles[50];
        Rng rng(12);
        SearchResult best5 = rist_search(l0, 6, 5, 1, rng);
        CHECK(best5.best_dev_score >= median);
    }
    SUBCASE("degenerate-path filter rejects runs longer than four") {
        MockLearner l0(5);
        Rng rng(13);
        SearchResult r = rist_search(l0, 9, 40, 1, rng, /*reject_degenerate=*/true);
        for (const StageRecord& rec : r.provenance) {
            if (rec.stage == 9) {
                AlphaPath p = AlphaPath::binary([&] {
                    std::vector<int> bits;
                    for (char c : rec.path_prefix) bits.push_back(c == 'L' ? 1 : 0);
                    return bits;
                }());
                CHECK_FALSE(p.has_run_longer_than(4));
            }
        }
    }
}

TEST_CASE("fist_run") {
    SUBCASE("records the full trajectory and the best stage") {
        MockLearner l0(6);
        SearchResult r = fist_run(l0, 5, 0.75, 3);
        CHECK(r.per_stage_dev_scores.size() == 6);  // stage 0 plus 5
        double best = -1.0;
        for (double s : r.per_stage_dev_scores) best = std::max(best, s);
        CHECK(r.best_dev_score == best);
    }
    SUBCASE("S=1 equals a single run_stage") {
        MockLearner l0(7);
        SearchResult r = fist_run(l0, 1, 1.0, 2);
        MockLearner manual(7);
        run_stage(manual, 1.0, 2);
        CHECK(r.per_stage_dev_scores[1] == manual.dev_score());
    }
}

TEST_CASE("batchwise_run flips the coin per iteration inside the learner") {
    MockLearner l0(8);
    SearchResult r = batchwise_run(l0, 3, 2);
    CHECK(r.per_stage_dev_scores.size() == 4);
    // the mock records 'B' for batchwise refinement
    auto* best = dynamic_cast<MockLearner*>(r.best_learner.get());
    REQUIRE(best != nullptr);
    for (char c : best->path()) CHECK(c == 'B');
}

TEST_CASE("grid segmentation learner") {
    auto data = std::make_shared<GridSegDataset>(make_toy_grid_segmentation(6, 12, 0.25, 21));
    SegLearnerConfig cfg;
    cfg.layers = parse_layers("linear(4,8) relu linear(8,2)");
    cfg.optim.base_lr = 0.05;
    cfg.optim.weight_decay = 0.0;
    cfg.batch_images = 2;
    cfg.seed = 99;

    SUBCASE("k_iters=0 leaves the learner unchanged") {
        GridSegLearner l(data, cfg);
        const double before = l.dev_score();
        std::vector<Tensor> params;
        for (const Parameter& p : l.model().params()) params.push_back(p.value);
        l.refine(0.5, 0);
        CHECK(l.dev_score() == before);
        for (std::size_t i = 0; i < params.size(); ++i) {
            CHECK(max_abs_diff(params[i], l.model().params()[i].value) == 0.0);
        }
    }
    SUBCASE("alpha=1 never consults pseudo-labels") {
        GridSegLearner l(data, cfg);
        l.refine(1.0, 3);
        CHECK(l.pseudo_regen_count() == 0);
    }
    SUBCASE("pseudo-labels regenerate once per stage and stay frozen within it") {
        GridSegLearner l(data, cfg);
        l.train_supervised(5);
        l.refine(0.5, 4);
        CHECK(l.pseudo_regen_count() == 1);
        const std::uint64_t after_stage = l.pseudo_checksum();
        l.refine(0.5, 4);
        CHECK(l.pseudo_regen_count() == 2);
        // the second stage regenerated from new weights
        CHECK(l.pseudo_labels().size() > 0);
        (void)after_stage;
    }
    SUBCASE("fixed seed gives bit-identical parameters across runs") {
        GridSegLearner a(data, cfg);
        GridSegLearner b(data, cfg);
        a.train_supervised(4);
        b.train_supervised(4);
        a.refine(0.5, 3);
        b.refine(0.5, 3);
        for (std::size_t i = 0; i < a.model().params().size(); ++i) {
            CHECK(max_abs_diff(a.model().params()[i].value, b.model().params()[i].value) == 0.0);
        }
        CHECK(a.pseudo_checksum() == b.pseudo_checksum());
    }
    SUBCASE("clones train independently and deterministically") {
        GridSegLearner l(data, cfg);
        l.train_supervised(4);
        auto c1 = l.clone();
        auto c2 = l.clone();
        c1->refine(0.0, 3);
        c2->refine(0.0, 3);
        auto* g1 = dynamic_cast<GridSegLearner*>(c1.get());
        auto* g2 = dynamic_cast<GridSegLearner*>(c2.get());
        for (std::size_t i = 0; i < g1->model().params().size(); ++i) {
            CHECK(max_abs_diff(g1->model().params()[i].value, g2->model().params()[i].value) == 0.0);
        }
        // and the original is untouched by its clones' refinement
        CHECK(l.pseudo_regen_count() == 0);
    }
    SUBCASE("add-ons run end to end") {
        SegLearnerConfig full = cfg;
        full.addons.consistency = true;
        full.addons.label_erase = true;
        full.addons.phi = 0.6;
        full.addons.soften = true;
        full.addons.beta_ts = 0.5;
        GridSegLearner l(data, full);
        l.train_supervised(3);
        l.refine(0.5, 3);
        CHECK(l.dev_score() >= 0.0);
        CHECK(l.pseudo_labels().fraction_ignored() >= 0.0);
    }
}

TEST_CASE("records_csv columns are frozen") {
    MockLearner l0(9);
    SearchResult r = fist_run(l0, 2, 0.5, 1);
    const std::string csv = r.records_csv();
    CHECK(csv.rfind("trial,stage,path_prefix,dev_score,test_score\n", 0) == 0);
}
