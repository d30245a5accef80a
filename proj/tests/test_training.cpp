#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "plbk/training.hpp"

#include "plbk/sampler.hpp"
#include "plbk/selfcheck.hpp"

#include <cmath>

using namespace plbk;
using namespace plbk::training;

namespace {

TrainConfig pretrain_config(int64_t total) {
    TrainConfig cfg;
    cfg.mode = Mode::pretrain;
    cfg.total_steps = total;
    cfg.warmup_steps = 0;
    cfg.peak_lr = 1e-3;
    cfg.batch_size = 4;
    cfg.seed = 3;
    cfg.max_seq_len = 48;
    cfg.checkpoint_every = 1000;
    return cfg;
}

model::ModelConfig small_model(int64_t vocab, int num_labels = 0) {
    model::ModelConfig cfg;
    cfg.enc_layers = 2;
    cfg.dec_layers = 2;
    cfg.d_model = 32;
    cfg.heads = 4;
    cfg.d_ff = 64;
    cfg.max_positions = 64;
    cfg.vocab_size = vocab;
    cfg.num_labels = num_labels;
    return cfg;
}

Vocabulary vocab_for(const std::map<std::string, std::vector<RawInstance>>& corpora) {
    std::vector<RawInstance> all;
    std::vector<std::string> langs;
    for (const auto& [lang, v] : corpora) {
        langs.push_back(lang);
        all.insert(all.end(), v.begin(), v.end());
    }
    auto vocab = Vocabulary::train(all, 300, 1.0, 2);
    vocab.add_language_ids(langs);
    return vocab;
}

} // namespace

TEST_CASE("learning-rate schedule: warmup peak, decay endpoint, zero warmup") {
    TrainConfig cfg;
    cfg.mode = Mode::finetune_generation;
    cfg.total_steps = 100000;
    cfg.warmup_steps = 2500;
    cfg.peak_lr = 3e-5;
    CHECK(lr_at(2500, cfg) == 3e-5);
    CHECK(lr_at(0, cfg) == 0.0);
    CHECK(lr_at(100000, cfg) == 0.0);
    // continuity across the warmup boundary
    CHECK(std::fabs(lr_at(2499, cfg) - lr_at(2501, cfg)) < 3e-8);
    // linearity of the decay
    CHECK(lr_at(51250, cfg) == doctest::Approx(1.5e-5).epsilon(1e-9));

    TrainConfig zero = cfg;
    zero.mode = Mode::pretrain;
    zero.warmup_steps = 0;
    zero.peak_lr = 5e-5;
    CHECK(lr_at(0, zero) == 5e-5);
}

TEST_CASE("dropout schedule: published breakpoints and desk scaling") {
    TrainConfig cfg;
    cfg.mode = Mode::pretrain;
    cfg.total_steps = 100000;
    CHECK(dropout_at(0, cfg) == 0.1);
    CHECK(dropout_at(49999, cfg) == 0.1);
    CHECK(dropout_at(50000, cfg) == 0.05);
    CHECK(dropout_at(79999, cfg) == 0.05);
    CHECK(dropout_at(80000, cfg) == 0.0);
    CHECK(dropout_at(100000, cfg) == 0.0);

    TrainConfig desk = cfg;
    desk.total_steps = 1000;
    CHECK(dropout_at(499, desk) == 0.1);
    CHECK(dropout_at(500, desk) == 0.05);
    CHECK(dropout_at(800, desk) == 0.0);

    TrainConfig fine = cfg;
    fine.mode = Mode::finetune_classification;
    CHECK(dropout_at(0, fine) == 0.1);
    CHECK(dropout_at(90000, fine) == 0.1);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.warmup_steps = cfg.total_steps;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = TrainConfig{};
    cfg.dropout_points = {{0.8, 0.05}, {0.5, 0.0}}; // not increasing
    CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("adam: zero gradients on a fresh state leave parameters unchanged") {
    const auto cfg = small_model(23);
    auto params = model::init_parameters<float>(cfg, 1);
    const auto before = params.tok_emb.data;
    auto state = AdamState::make(cfg);
    const auto grads = model::zeros_like<float>(cfg);
    adam_step(params, grads, state, 1e-3, 0.9, 0.98, 1e-6);
    CHECK(params.tok_emb.data == before);
    CHECK(state.step == 1);

    // non-zero moments decay by beta when the gradient goes quiet
    state.m.tok_emb.data[0] = 0.5f;
    adam_step(params, grads, state, 0.0, 0.9, 0.98, 1e-6); // lr 0 isolates the moments
    CHECK(state.m.tok_emb.data[0] == doctest::Approx(0.45f));
}

TEST_CASE("non-finite gradients abort naming the tensor") {
    const auto cfg = small_model(23);
    auto params = model::init_parameters<float>(cfg, 1);
    auto state = AdamState::make(cfg);
    auto grads = model::zeros_like<float>(cfg);
    grads.pos_emb.data[3] = std::numeric_limits<float>::quiet_NaN();
    try {
        adam_step(params, grads, state, 1e-3, 0.9, 0.98, 1e-6);
        FAIL("expected a non-finite gradient error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("pos_emb") != std::string::npos);
    }
}

TEST_CASE("generation example builder") {
    std::map<std::string, std::vector<RawInstance>> corpora;
    corpora["java"] = {{"int add(int a) { return a; }", "java", ""}};
    corpora["en_XX"] = {{"adds numbers quickly", "en_XX", ""}};
    auto vocab = vocab_for(corpora);

    const auto rows = build_generation_example("int add(int a) { return a; }",
                                               "adds numbers quickly", "java", "en_XX", vocab, 64);
    CHECK(rows.enc == vocab.encode("int add(int a) { return a; }"));
    CHECK(rows.dec.front() == vocab.language_id("en_XX"));
    CHECK(rows.tgt.back() == tok::kEos);
    REQUIRE(rows.dec.size() == rows.tgt.size());
    for (size_t i = 1; i < rows.dec.size(); ++i) CHECK(rows.dec[i] == rows.tgt[i - 1]);

    SUBCASE("an unseen target language id works once appended") {
        vocab.add_language_ids({"<cs>"});
        const auto cs = build_generation_example("int x", "y z", "java", "cs", vocab, 64);
        CHECK(cs.dec.front() == vocab.language_id("cs"));
    }
    SUBCASE("empty target is rejected") {
        CHECK_THROWS_AS(build_generation_example("code", "  ", "java", "en_XX", vocab, 64), Error);
    }
    SUBCASE("oversized target is rejected, oversized source truncates") {
        std::string longtext;
        for (int i = 0; i < 200; ++i) longtext += "adds ";
        CHECK_THROWS_AS(
            build_generation_example("int x", longtext, "java", "en_XX", vocab, 32), Error);
        const auto trunc = build_generation_example(longtext, "y z", "java", "en_XX", vocab, 32);
        CHECK(trunc.enc.size() == 32);
    }
}

TEST_CASE("classification example builder pins the eos layout") {
    std::map<std::string, std::vector<RawInstance>> corpora;
    corpora["mini"] = {{"alpha beta gamma delta", "mini", ""}};
    const auto vocab = vocab_for(corpora);

    const auto single = build_classification_example("alpha beta", std::nullopt, vocab);
    CHECK(std::count(single.begin(), single.end(), tok::kEos) == 1);
    CHECK(single.back() == tok::kEos);

    const auto pair = build_classification_example("alpha beta", std::optional<std::string>("gamma delta"), vocab);
    CHECK(std::count(pair.begin(), pair.end(), tok::kEos) == 2);
    CHECK(pair.back() == tok::kEos);
    // one eos separates the pair
    const auto sep = std::find(pair.begin(), pair.end(), tok::kEos);
    CHECK(sep != pair.end() - 1);

    CHECK_THROWS_AS(build_classification_example("  ", std::nullopt, vocab), Error);
}

TEST_CASE("best tracker returns the mid-run peak") {
    BestTracker tracker;
    CHECK(tracker.update(100, 0.4));
    CHECK(tracker.update(200, 0.9)); // mid-run peak
    CHECK_FALSE(tracker.update(300, 0.7));
    CHECK_FALSE(tracker.update(400, 0.9)); // ties keep the earlier step
    CHECK(tracker.best_step() == 200);
    CHECK(tracker.best_metric() == 0.9);
}

TEST_CASE("two identical pretraining runs produce bit-identical trajectories") {
    std::map<std::string, std::vector<RawInstance>> corpora;
    corpora["mini"] = selfcheck::toy_code_corpus(8, "mini");
    const auto vocab = vocab_for(corpora);
    const auto plan = compute_plan(compute_stats(corpora), 0.3);
    const NoiseConfig noise;
    const auto mcfg = small_model(vocab.size());
    const auto tcfg = pretrain_config(12);

    const auto a = pretrain(corpora, vocab, noise, plan, mcfg, tcfg);
    const auto b = pretrain(corpora, vocab, noise, plan, mcfg, tcfg);
    REQUIRE(a.log.size() == b.log.size());
    for (size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].loss == b.log[i].loss);
    CHECK(a.params.tok_emb.data == b.params.tok_emb.data);
}

TEST_CASE("noise ratio 0 collapses to a fast copy task") {
    std::map<std::string, std::vector<RawInstance>> corpora;
    corpora["mini"] = {
        {"return a + b ;", "mini", ""},
        {"while x > 0 { }", "mini", ""},
        {"fn f ( y )", "mini", ""},
        {"if c { return c ; }", "mini", ""},
    };
    const auto vocab = vocab_for(corpora);
    const auto plan = compute_plan(compute_stats(corpora), 0.3);
    NoiseConfig noise;
    noise.mask_ratio = 0.0;
    auto mcfg = small_model(vocab.size());
    mcfg.d_model = 64;
    mcfg.d_ff = 128;
    auto tcfg = pretrain_config(50);
    tcfg.peak_lr = 8e-3;
    tcfg.batch_size = 4;

    const auto result = pretrain(corpora, vocab, noise, plan, mcfg, tcfg);
    const double acc = denoising_token_accuracy(result.params, corpora, vocab, noise, 9, 48);
    CHECK(acc > 0.99);
}

TEST_CASE("single-language pretraining degenerates cleanly") {
    std::map<std::string, std::vector<RawInstance>> corpora;
    corpora["mini"] = selfcheck::toy_code_corpus(4, "mini");
    const auto vocab = vocab_for(corpora);
    const auto plan = compute_plan(compute_stats(corpora), 0.3);
    const auto result =
        pretrain(corpora, vocab, NoiseConfig{}, plan, small_model(vocab.size()),
                 pretrain_config(5));
    CHECK(result.log.size() == 5);
    for (const auto& entry : result.log) CHECK(std::isfinite(entry.loss));
}

TEST_CASE("fine-tune mode and metric mismatches are fatal") {
    std::map<std::string, std::vector<RawInstance>> corpora;
    corpora["mini"] = selfcheck::toy_code_corpus(4, "mini");
    corpora["en_XX"] = selfcheck::toy_text_corpus(4, "en_XX");
    const auto vocab = vocab_for(corpora);
    const auto init = model::init_parameters<float>(small_model(vocab.size()), 1);

    GenTask task;
    task.train.push_back({"fn a ( ) { }", "describes a", "mini", "en_XX"});
    task.metric = "accuracy"; // wrong for generation
    TrainConfig cfg;
    cfg.mode = Mode::finetune_generation;
    cfg.total_steps = 2;
    CHECK_THROWS_AS(finetune_generation(task, vocab, init, cfg), Error);

    task.metric = "bleu";
    cfg.mode = Mode::pretrain; // wrong mode
    CHECK_THROWS_AS(finetune_generation(task, vocab, init, cfg), Error);

    ClsTask cls;
    cls.train.push_back({"alpha one", std::nullopt, 0});
    cls.num_labels = 2;
    TrainConfig ccfg;
    ccfg.mode = Mode::finetune_classification;
    ccfg.total_steps = 2;
    CHECK_THROWS_AS(finetune_classification(cls, vocab, init, ccfg), Error); // head missing
}

TEST_CASE("tiny generation fine-tune reaches exact match on its own pairs") {
    GenTask task;
    task.metric = "em";
    task.train = {
        {"say alpha", "alpha out", "en_XX", "mini"},
        {"say beta", "beta out", "en_XX", "mini"},
        {"say gamma", "gamma out", "en_XX", "mini"},
        {"say delta", "delta out", "en_XX", "mini"},
    };
    std::map<std::string, std::vector<RawInstance>> corpora;
    for (const auto& ex : task.train) {
        corpora["en_XX"].push_back({ex.source_text, "en_XX", ""});
        corpora["mini"].push_back({ex.target_text, "mini", ""});
    }
    const auto vocab = vocab_for(corpora);

    TrainConfig cfg;
    cfg.mode = Mode::finetune_generation;
    cfg.total_steps = 250;
    cfg.warmup_steps = 10;
    cfg.peak_lr = 1e-3;
    cfg.batch_size = 4;
    cfg.seed = 4;
    cfg.dropout_start = 0.0;
    cfg.eval_every = 50;
    cfg.max_seq_len = 16;

    const auto init = model::init_parameters<float>(small_model(vocab.size()), 2);
    const auto result = finetune_generation(task, vocab, init, cfg);
    CHECK(result.best_metric == 1.0);
    CHECK(result.history.size() == 5);
}

TEST_CASE("tiny separable classification hits full accuracy") {
    ClsTask task;
    task.num_labels = 2;
    task.train = {
        {"left marker", std::optional<std::string>("alpha signal"), 0},
        {"right marker", std::optional<std::string>("omega signal"), 1},
        {"left note", std::optional<std::string>("alpha tone"), 0},
        {"right note", std::optional<std::string>("omega tone"), 1},
    };
    std::map<std::string, std::vector<RawInstance>> corpora;
    for (const auto& ex : task.train) {
        corpora["en_XX"].push_back({ex.text_a + " " + *ex.text_b, "en_XX", ""});
    }
    const auto vocab = vocab_for(corpora);

    TrainConfig cfg;
    cfg.mode = Mode::finetune_classification;
    cfg.total_steps = 120;
    cfg.warmup_steps = 10;
    cfg.peak_lr = 1e-3;
    cfg.batch_size = 4;
    cfg.seed = 5;
    cfg.dropout_start = 0.0;
    cfg.eval_every = 40;

    const auto init = model::init_parameters<float>(small_model(vocab.size(), 2), 3);
    const auto result = finetune_classification(task, vocab, init, cfg);
    CHECK(result.best_metric == 1.0);
}
