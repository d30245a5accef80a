#include "plbk/selfcheck.hpp"

#include "plbk/metrics.hpp"
#include "plbk/minilang.hpp"
#include "plbk/model.hpp"
#include "plbk/noising.hpp"
#include "plbk/sampler.hpp"
#include "plbk/tokenizer.hpp"
#include "plbk/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <sstream>

namespace plbk::selfcheck {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
}

struct Check {
    std::ostringstream detail;
    bool ok = true;

    void expect(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            detail << (detail.tellp() > 0 ? "; " : "") << "FAILED: " << what;
        }
    }
    void note(const std::string& what) {
        detail << (detail.tellp() > 0 ? "; " : "") << what;
    }
};

CheckResult run_check(const std::string& name, const std::function<void(Check&)>& body) {
    Check check;
    const auto t0 = Clock::now();
    try {
        body(check);
    } catch (const std::exception& e) {
        check.ok = false;
        check.note(std::string("exception: ") + e.what());
    }
    CheckResult result;
    result.name = name;
    result.pass = check.ok;
    result.detail = check.detail.str();
    result.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return result;
}

} // namespace

// ---------------------------------------------------------------------------
// toy fixtures
// ---------------------------------------------------------------------------

std::vector<RawInstance> toy_code_corpus(int n, const std::string& language) {
    static const char* kNames[] = {"get", "set", "sum", "max", "run"};
    static const char* kVars[] = {"x", "y", "count", "size", "val"};
    std::vector<RawInstance> out;
    for (int i = 0; i < n; ++i) {
        const char* name = kNames[i % 5];
        const char* a = kVars[i % 5];
        const char* b = kVars[(i + 2) % 5];
        std::ostringstream text;
        switch (i % 4) {
            case 0:
                text << "fn " << name << i << "(" << a << ") { return " << a << " + " << i % 7
                     << "; }";
                break;
            case 1:
                text << "fn " << name << i << "(" << a << ", " << b << ") { " << a << " = " << b
                     << " * 2; return " << a << "; }";
                break;
            case 2:
                text << "fn " << name << i << "(" << a << ") { if " << a << " > 0 { return " << a
                     << "; } else { return 0; } }";
                break;
            default:
                text << "fn " << name << i << "(" << a << ") { while " << a << " > 1 { " << a
                     << " = " << a << " - 1; } return " << a << "; }";
                break;
        }
        out.push_back({text.str(), language, "toy-code-" + std::to_string(i)});
    }
    return out;
}

std::vector<RawInstance> toy_text_corpus(int n, const std::string& language) {
    static const char* kSubjects[] = {"the parser", "the server", "this method", "the cache",
                                      "the loop"};
    static const char* kVerbs[] = {"returns", "updates", "clears", "counts", "checks"};
    static const char* kObjects[] = {"the buffer", "each value", "the result", "all items",
                                     "the index"};
    std::vector<RawInstance> out;
    for (int i = 0; i < n; ++i) {
        std::ostringstream text;
        text << kSubjects[i % 5] << " " << kVerbs[(i / 5) % 5] << " " << kObjects[(i / 25) % 5];
        out.push_back({text.str(), language, "toy-text-" + std::to_string(i)});
    }
    return out;
}

namespace {

Vocabulary toy_vocab(const std::map<std::string, std::vector<RawInstance>>& corpora,
                     int64_t vocab_size = 400) {
    std::vector<RawInstance> all;
    for (const auto& [lang, instances] : corpora) {
        all.insert(all.end(), instances.begin(), instances.end());
    }
    Vocabulary vocab = Vocabulary::train(all, vocab_size, 1.0, 7);
    std::vector<std::string> langs;
    for (const auto& [lang, instances] : corpora) langs.push_back(lang);
    vocab.add_language_ids(langs);
    return vocab;
}

// ---------------------------------------------------------------------------
// criteria
// ---------------------------------------------------------------------------

void check_noise_budget(Check& c) {
    Rng rng(11);
    std::vector<int> x(100);
    for (size_t i = 0; i < x.size(); ++i) x[i] = 10 + static_cast<int>(i % 50);

    int64_t infill_covered = 0;
    for (int iter = 0; iter < 10000; ++iter) {
        const auto masked = apply_token_masking(x, 0.35, rng);
        int64_t n_mask = 0;
        for (int id : masked) n_mask += id == tok::kMask ? 1 : 0;
        if (n_mask != 35) {
            c.expect(false, "masking produced " + std::to_string(n_mask) + " masks, want 35");
            return;
        }
        InfillStats stats;
        apply_token_infilling(x, 0.35, 3.5, rng, 10, &stats);
        infill_covered += stats.covered;
    }
    const double mean_fraction = static_cast<double>(infill_covered) / (10000.0 * 100.0);
    c.note("masking exact 35/100 on 10000 instances; infill mean coverage " + fmt(mean_fraction));
    c.expect(std::fabs(mean_fraction - 0.35) <= 0.01, "infill coverage outside 0.35 +/- 0.01");
}

void check_span_distribution(Check& c) {
    Rng rng(12);
    const int kDraws = 200000;
    const double lambda = 3.5;
    std::vector<int64_t> hist(64, 0);
    for (int i = 0; i < kDraws; ++i) {
        const int k = rng.poisson(lambda);
        if (k < 64) ++hist[static_cast<size_t>(k)];
    }
    // pmf by recurrence p(k) = p(k-1) * lambda / k
    double tv = 0.0;
    double p = std::exp(-lambda);
    for (size_t k = 0; k < hist.size(); ++k) {
        const double empirical = static_cast<double>(hist[k]) / kDraws;
        tv += std::fabs(empirical - p) * 0.5;
        p *= lambda / static_cast<double>(k + 1);
    }
    const double p3 = static_cast<double>(hist[3]) / kDraws;
    c.note("TV distance " + fmt(tv) + ", P(L=3) " + fmt(p3));
    c.expect(tv <= 0.01, "total variation vs Poisson(3.5) exceeds 0.01");
    c.expect(std::fabs(p3 - 0.21579) <= 0.005, "P(L=3) outside 0.2158 +/- 0.005");
}

void check_sampling_plan(Check& c) {
    CorpusStats stats;
    stats.counts["pl"] = 14;
    stats.counts["nl"] = 1;
    const SamplingPlan plan = compute_plan(stats, 0.3);
    // frozen from direct high-precision evaluation of the formula
    const double q_pl = 0.737357065181556;
    const double q_nl = 4.67700108745822;
    const double sel_pl = 0.688199927502786;
    const double sel_nl = 0.311800072497214;
    c.note("q = (" + fmt(plan.q.at("pl")) + ", " + fmt(plan.q.at("nl")) + ")");
    c.expect(std::fabs(plan.q.at("pl") - q_pl) < 1e-6, "q_pl deviates from the formula oracle");
    c.expect(std::fabs(plan.q.at("nl") - q_nl) < 1e-6, "q_nl deviates from the formula oracle");
    c.expect(std::fabs(plan.select.at("pl") - sel_pl) < 1e-6, "select_pl deviates");
    c.expect(std::fabs(plan.select.at("nl") - sel_nl) < 1e-6, "select_nl deviates");

    std::map<std::string, int64_t> sizes{{"pl", 140}, {"nl", 10}};
    BatchStream stream(plan, sizes, 1, 99);
    const int kDraws = 100000;
    int64_t pl_draws = 0;
    for (int i = 0; i < kDraws; ++i) {
        const auto draw = stream.next();
        if (stream.languages()[static_cast<size_t>(draw.language)] == "pl") ++pl_draws;
    }
    const double freq = static_cast<double>(pl_draws) / kDraws;
    c.note("stream pl frequency " + fmt(freq));
    c.expect(std::fabs(freq - sel_pl) <= 0.005, "stream frequency outside select +/- 0.005");
}

// central finite differences over every scalar of every tensor
template <typename LossFn>
double max_rel_grad_error(model::ParametersD& params, const model::ParametersD& grads,
                          const LossFn& loss_fn, std::string& worst) {
    const double step = 1e-5;
    double worst_err = 0.0;
    std::vector<std::pair<std::string, TensorD*>> tensors;
    params.visit([&](const std::string& n, TensorD& t) { tensors.emplace_back(n, &t); });
    std::vector<std::pair<std::string, const TensorD*>> grad_tensors;
    const_cast<model::ParametersD&>(grads).visit(
        [&](const std::string& n, TensorD& t) { grad_tensors.emplace_back(n, &t); });

    for (size_t ti = 0; ti < tensors.size(); ++ti) {
        TensorD& t = *tensors[ti].second;
        const TensorD& g = *grad_tensors[ti].second;
        for (size_t i = 0; i < t.size(); ++i) {
            const double saved = t.data[i];
            t.data[i] = saved + step;
            const double up = loss_fn();
            t.data[i] = saved - step;
            const double down = loss_fn();
            t.data[i] = saved;
            const double fd = (up - down) / (2.0 * step);
            const double analytic = g.data[i];
            const double err = std::fabs(analytic - fd) /
                               std::max(1.0, std::fabs(analytic) + std::fabs(fd));
            if (err > worst_err) {
                worst_err = err;
                worst = tensors[ti].first + "[" + std::to_string(i) + "]";
            }
        }
    }
    return worst_err;
}

void check_gradients(Check& c) {
    model::ModelConfig cfg;
    cfg.enc_layers = 2;
    cfg.dec_layers = 2;
    cfg.d_model = 8;
    cfg.heads = 2;
    cfg.d_ff = 16;
    cfg.max_positions = 16;
    cfg.vocab_size = 11;
    cfg.final_layer_norm = true;

    // seq2seq loss over all tensors
    {
        auto params = model::init_parameters<double>(cfg, 21);
        // scale weights up so layer activations are informative
        params.visit([](const std::string&, TensorD& t) {
            for (auto& v : t.data) v *= 5.0;
        });
        const model::Batch batch = model::make_batch({{5, 6, 7, 4}, {8, 9, 3}},
                                                     {{10, 5, 6, 7}, {10, 8, 9}},
                                                     {{5, 6, 7, 2}, {8, 9, 2}}, 1);
        const auto lg = model::loss_and_grads(params, batch);
        std::string worst;
        const double err = max_rel_grad_error(
            params, lg.grads, [&] { return model::loss_only(params, batch); }, worst);
        c.note("seq2seq max rel err " + fmt(err) + " at " + worst);
        c.expect(err < 1e-4, "seq2seq gradient error >= 1e-4");
    }

    // classification head and the path through the readout
    {
        model::ModelConfig cls_cfg = cfg;
        cls_cfg.enc_layers = 1;
        cls_cfg.dec_layers = 1;
        cls_cfg.num_labels = 3;
        auto params = model::init_parameters<double>(cls_cfg, 22);
        params.visit([](const std::string&, TensorD& t) {
            for (auto& v : t.data) v *= 5.0;
        });
        const std::vector<std::vector<int>> rows = {{5, 6, 2}, {7, 8, 9, 2}};
        const std::vector<int> labels = {0, 2};
        const auto lg = model::classify_loss_and_grads(params, rows, labels, 1);
        std::string worst;
        const double err = max_rel_grad_error(
            params, lg.grads,
            [&] { return model::classify_loss_only(params, rows, labels, 1); }, worst);
        c.note("classification max rel err " + fmt(err) + " at " + worst);
        c.expect(err < 1e-4, "classification gradient error >= 1e-4");
    }
}

std::map<std::string, std::vector<RawInstance>> overfit_corpora() {
    std::map<std::string, std::vector<RawInstance>> corpora;
    corpora["mini"] = toy_code_corpus(24, "mini");
    corpora["en_XX"] = toy_text_corpus(8, "en_XX");
    return corpora;
}

void check_pretrain_overfit(Check& c) {
    const auto corpora = overfit_corpora();
    const Vocabulary vocab = toy_vocab(corpora);

    model::ModelConfig mcfg;
    mcfg.enc_layers = 2;
    mcfg.dec_layers = 2;
    mcfg.d_model = 64;
    mcfg.heads = 4;
    mcfg.d_ff = 128;
    mcfg.max_positions = 256;
    mcfg.vocab_size = vocab.size();

    training::TrainConfig tcfg;
    tcfg.mode = training::Mode::pretrain;
    tcfg.total_steps = 300;
    tcfg.warmup_steps = 0;
    tcfg.peak_lr = 5e-3;
    tcfg.batch_size = 8;
    tcfg.seed = 5;
    tcfg.max_seq_len = 64;
    tcfg.checkpoint_every = 1000;

    NoiseConfig noise;
    const SamplingPlan plan = compute_plan(compute_stats(corpora), 0.3);
    const auto result = training::pretrain(corpora, vocab, noise, plan, mcfg, tcfg);

    const double acc =
        training::denoising_token_accuracy(result.params, corpora, vocab, noise, 123, 64);
    c.note("denoising token accuracy " + fmt(acc));
    c.expect(acc > 0.95, "token accuracy <= 95%");

    // smoothed (window 20) loss must not rise by more than 10% over any
    // 100-step span
    std::vector<double> smooth;
    for (size_t i = 19; i < result.log.size(); ++i) {
        double s = 0.0;
        for (size_t j = i + 1 - 20; j <= i; ++j) s += result.log[j].loss;
        smooth.push_back(s / 20.0);
    }
    bool monotone = true;
    for (size_t i = 0; i + 100 < smooth.size(); ++i) {
        if (smooth[i + 100] > smooth[i] * 1.10) {
            monotone = false;
            break;
        }
    }
    c.expect(monotone, "smoothed loss rose more than 10% over a 100-step span");
}

void check_finetune_generation(Check& c) {
    // 16 parallel pairs with short distinct targets
    static const char* kNums[] = {"one", "two",   "three", "four", "five", "six", "seven",
                                  "eight", "nine", "ten",   "zero", "plus", "minus", "times",
                                  "over",  "half"};
    training::GenTask task;
    task.metric = "em";
    for (int i = 0; i < 16; ++i) {
        training::GenExample ex;
        ex.source_text = std::string("map ") + kNums[i] + " " + kNums[(i + 3) % 16];
        ex.target_text = std::string(kNums[(i + 1) % 16]) + " " + kNums[i];
        ex.source_lang = "en_XX";
        ex.target_lang = "mini";
        task.train.push_back(ex);
    }

    std::map<std::string, std::vector<RawInstance>> corpora;
    for (const auto& ex : task.train) {
        corpora["en_XX"].push_back({ex.source_text, "en_XX", ""});
        corpora["mini"].push_back({ex.target_text, "mini", ""});
    }
    const Vocabulary vocab = toy_vocab(corpora, 300);

    model::ModelConfig mcfg;
    mcfg.enc_layers = 2;
    mcfg.dec_layers = 2;
    mcfg.d_model = 64;
    mcfg.heads = 4;
    mcfg.d_ff = 128;
    mcfg.max_positions = 64;
    mcfg.vocab_size = vocab.size();

    training::TrainConfig tcfg;
    tcfg.mode = training::Mode::finetune_generation;
    tcfg.total_steps = 400;
    tcfg.warmup_steps = 40;
    tcfg.peak_lr = 1e-3;
    tcfg.batch_size = 8;
    tcfg.seed = 6;
    tcfg.dropout_start = 0.0;
    tcfg.max_seq_len = 32;
    tcfg.eval_every = 100;

    const auto init = model::init_parameters<float>(mcfg, 31);
    const auto result = training::finetune_generation(task, vocab, init, tcfg);
    c.note("best exact match " + fmt(result.best_metric) + " at step " +
           std::to_string(result.best_step));
    c.expect(result.best_metric >= 1.0, "training-set exact match below 100%");
}

void check_finetune_classification(Check& c) {
    // class 0 mentions "alpha", class 1 mentions "omega": linearly separable
    training::ClsTask task;
    task.num_labels = 2;
    static const char* kFill[] = {"buffer", "cursor", "stream", "widget"};
    for (int i = 0; i < 16; ++i) {
        training::ClsExample ex;
        const char* fill = kFill[i % 4];
        const bool positive = i % 2 == 1;
        ex.text_a = std::string("check the ") + fill;
        ex.text_b = std::string("status ") + (positive ? "omega" : "alpha") + " " + fill;
        ex.label = positive ? 1 : 0;
        task.train.push_back(ex);
    }

    std::map<std::string, std::vector<RawInstance>> corpora;
    for (const auto& ex : task.train) {
        corpora["en_XX"].push_back({ex.text_a + " " + *ex.text_b, "en_XX", ""});
    }
    const Vocabulary vocab = toy_vocab(corpora, 200);

    model::ModelConfig mcfg;
    mcfg.enc_layers = 2;
    mcfg.dec_layers = 2;
    mcfg.d_model = 64;
    mcfg.heads = 4;
    mcfg.d_ff = 128;
    mcfg.max_positions = 64;
    mcfg.vocab_size = vocab.size();
    mcfg.num_labels = 2;

    training::TrainConfig tcfg;
    tcfg.mode = training::Mode::finetune_classification;
    tcfg.total_steps = 200;
    tcfg.warmup_steps = 20;
    tcfg.peak_lr = 3e-4;
    tcfg.batch_size = 8;
    tcfg.seed = 8;
    tcfg.dropout_start = 0.0;
    tcfg.eval_every = 50;

    const auto init = model::init_parameters<float>(mcfg, 41);
    const auto result = training::finetune_classification(task, vocab, init, tcfg);
    c.note("best accuracy " + fmt(result.best_metric) + " at step " +
           std::to_string(result.best_step));
    c.expect(result.best_metric >= 1.0, "training-set accuracy below 100%");
}

void check_metric_oracles(Check& c) {
    using metrics::corpus_bleu;
    auto toks = [](const std::string& s) { return whitespace_split(s); };

    c.expect(std::fabs(corpus_bleu({toks("the cat sat")}, {toks("the cat sat")}) - 100.0) < 1e-4,
             "identity BLEU != 100");
    c.expect(corpus_bleu({toks("the the the the")}, {toks("the cat")}) == 0.0,
             "clipped-unigram fixture BLEU != 0");
    const double bp_case =
        corpus_bleu({toks("the cat sat on")}, {toks("the cat sat on the mat")});
    c.expect(std::fabs(bp_case - 100.0 * std::exp(-0.5)) < 1e-4,
             "brevity-penalty fixture deviates from 100*e^-0.5");

    c.expect(std::fabs(metrics::smoothed_bleu4(toks("a b c"), toks("a b c")) - 100.0) < 1e-9,
             "smoothed identity != 100");
    // (2/3 * 2/3 * 1/2 * 1)^(1/4) from the hand-derived counts
    const double smoothed = metrics::smoothed_bleu4(toks("a b c"), toks("a b d"));
    c.expect(std::fabs(smoothed - 100.0 * std::pow(2.0 / 9.0, 0.25)) < 1e-9,
             "smoothed fixture deviates");
    c.expect(metrics::smoothed_bleu4(toks("x y z"), toks("a b c")) == 0.0,
             "disjoint-vocab smoothed BLEU != 0");

    c.expect(metrics::exact_match({"a", "b", "c", "d"}, {"a", "x", "y", "z"}) == 0.25,
             "exact match 1/4 fixture");

    const std::string ref = "fn f(x) { y = x; return y; }";
    const std::string renamed = "fn f(a) { b = a; return b; }";
    const auto report = metrics::codebleu(renamed, ref, minilang::mini_profile());
    const double recombined = 0.25 * report.components.at("ngram") +
                              0.25 * report.components.at("weighted_ngram") +
                              0.25 * report.components.at("ast_match") +
                              0.25 * report.components.at("dataflow_match");
    c.expect(std::fabs(report.value - recombined) < 1e-9,
             "composite != weighted component sum");
    c.expect(report.components.at("dataflow_match") == 1.0,
             "renamed-variable dataflow_match != 1");
    c.expect(report.components.at("ast_match") == 1.0, "renamed-variable ast_match != 1");
    c.expect(report.components.at("ngram") < 1.0, "renamed-variable ngram component not < 1");

    const auto identical = metrics::codebleu(ref, ref, minilang::mini_profile());
    c.expect(identical.value == 1.0, "identical codebleu != 1");
}

void check_schedules(Check& c) {
    training::TrainConfig pre;
    pre.mode = training::Mode::pretrain;
    pre.total_steps = 100000;
    pre.warmup_steps = 0;
    pre.peak_lr = 5e-5;
    c.expect(training::dropout_at(49999, pre) == 0.1, "dropout_at(49999) != 0.1");
    c.expect(training::dropout_at(50000, pre) == 0.05, "dropout_at(50000) != 0.05");
    c.expect(training::dropout_at(80000, pre) == 0.0, "dropout_at(80000) != 0");
    c.expect(training::lr_at(0, pre) == pre.peak_lr, "warmup-0 lr_at(0) != peak");
    c.expect(training::lr_at(pre.total_steps, pre) == 0.0, "lr_at(total) != 0");

    training::TrainConfig fine;
    fine.mode = training::Mode::finetune_generation;
    fine.total_steps = 100000;
    fine.warmup_steps = 2500;
    fine.peak_lr = 3e-5;
    c.expect(training::lr_at(2500, fine) == 3e-5, "lr_at(warmup) != peak");
    c.expect(training::lr_at(100000, fine) == 0.0, "lr_at(total) != 0");
    c.expect(training::dropout_at(90000, fine) == 0.1, "fine-tune dropout not constant 0.1");
}

void check_determinism(Check& c, const std::string& scratch) {
    namespace fs = std::filesystem;

    // tokenizer determinism: byte-identical serialization
    const auto corpus = toy_code_corpus(40, "mini");
    const Vocabulary v1 = Vocabulary::train(corpus, 300, 0.5, 13);
    const Vocabulary v2 = Vocabulary::train(corpus, 300, 0.5, 13);
    c.expect(v1.to_json() == v2.to_json(), "tokenizer retrain not byte-identical");

    // split determinism
    const auto s1 = split_corpus(corpus, 0.25, 17);
    const auto s2 = split_corpus(corpus, 0.25, 17);
    const auto s3 = split_corpus(corpus, 0.25, 18);
    auto texts = [](const std::vector<RawInstance>& v) {
        std::vector<std::string> out;
        for (const auto& inst : v) out.push_back(inst.text);
        return out;
    };
    c.expect(texts(s1.train) == texts(s2.train) && texts(s1.valid) == texts(s2.valid),
             "same-seed split differs");
    c.expect(texts(s1.train) != texts(s3.train), "different-seed split identical");

    // checkpoint save/load bit identity, observed through forward
    auto corpora = overfit_corpora();
    const Vocabulary vocab = toy_vocab(corpora);
    model::ModelConfig mcfg;
    mcfg.enc_layers = 2;
    mcfg.dec_layers = 2;
    mcfg.d_model = 32;
    mcfg.heads = 4;
    mcfg.d_ff = 64;
    mcfg.max_positions = 64;
    mcfg.vocab_size = vocab.size();

    const auto params = model::init_parameters<float>(mcfg, 77);
    const std::string ckpt = scratch + "/selfcheck_ckpt.plbk";
    fs::create_directories(scratch);
    model::save_checkpoint(ckpt, params);
    const auto loaded = model::load_checkpoint(ckpt);

    const std::vector<int> probe = vocab.encode(corpora["mini"][0].text);
    const model::Batch batch = model::make_batch({probe}, {probe}, {probe}, tok::kPad);
    const TensorF a = model::forward(params, batch);
    const TensorF b = model::forward(loaded, batch);
    c.expect(a.data == b.data, "save/load forward not bit-identical");

    // resume bit identity: k steps + resume to n == straight n steps
    NoiseConfig noise;
    const SamplingPlan plan = compute_plan(compute_stats(corpora), 0.3);
    training::TrainConfig tcfg;
    tcfg.mode = training::Mode::pretrain;
    tcfg.total_steps = 40;
    tcfg.batch_size = 4;
    tcfg.seed = 19;
    tcfg.max_seq_len = 48;
    tcfg.checkpoint_every = 20;

    const std::string dir_a = scratch + "/resume_a";
    const std::string dir_b = scratch + "/resume_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);

    const auto straight = training::pretrain(corpora, vocab, noise, plan, mcfg, tcfg, dir_a);

    // same 40-step schedule, interrupted at step 20, then resumed
    training::pretrain(corpora, vocab, noise, plan, mcfg, tcfg, dir_b, /*resume=*/false,
                       /*halt_after_steps=*/20);
    const auto resumed = training::pretrain(corpora, vocab, noise, plan, mcfg, tcfg, dir_b,
                                            /*resume=*/true);

    bool identical = true;
    std::vector<const TensorF*> lhs, rhs;
    straight.params.visit([&](const std::string&, const TensorF& t) { lhs.push_back(&t); });
    resumed.params.visit([&](const std::string&, const TensorF& t) { rhs.push_back(&t); });
    for (size_t i = 0; i < lhs.size(); ++i) {
        if (lhs[i]->data != rhs[i]->data) {
            identical = false;
            break;
        }
    }
    c.expect(identical, "resumed run differs bitwise from straight run");
}

} // namespace

std::vector<CheckResult> run_all(const std::string& scratch_dir) {
    std::vector<CheckResult> results;
    results.push_back(run_check("noise-budget", check_noise_budget));
    results.push_back(run_check("span-distribution", check_span_distribution));
    results.push_back(run_check("sampling-plan", check_sampling_plan));
    results.push_back(run_check("gradient-check", check_gradients));
    results.push_back(run_check("pretrain-overfit", check_pretrain_overfit));
    results.push_back(run_check("finetune-generation-overfit", check_finetune_generation));
    results.push_back(run_check("finetune-classification", check_finetune_classification));
    results.push_back(run_check("metric-oracles", check_metric_oracles));
    results.push_back(run_check("schedules", check_schedules));
    results.push_back(
        run_check("determinism-persistence", [&](Check& c) { check_determinism(c, scratch_dir); }));
    return results;
}

} // namespace plbk::selfcheck
