#include "plbk/training.hpp"

#include "plbk/kernels.hpp"
#include "plbk/metrics.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace plbk::training {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

const char* mode_name(Mode mode) {
    switch (mode) {
        case Mode::pretrain: return "pretrain";
        case Mode::finetune_generation: return "finetune-generation";
        case Mode::finetune_classification: return "finetune-classification";
    }
    return "?";
}

void TrainConfig::validate() const {
    if (total_steps < 1) throw Error("total_steps must be >= 1");
    if (warmup_steps < 0 || warmup_steps >= total_steps) {
        throw Error("warmup_steps must be in [0, total_steps)");
    }
    if (!(peak_lr > 0.0)) throw Error("peak_lr must be positive");
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    if (max_seq_len < 2) throw Error("max_seq_len must be >= 2");
    double prev = 0.0;
    for (const auto& [frac, value] : dropout_points) {
        if (!(frac >= 0.0 && frac < 1.0)) throw Error("dropout fractions must be in [0, 1)");
        if (frac <= prev && prev != 0.0) throw Error("dropout fractions must increase");
        if (!(value >= 0.0 && value < 1.0)) throw Error("dropout values must be in [0, 1)");
        prev = frac;
    }
}

double lr_at(int64_t step, const TrainConfig& config) {
    if (step < 0 || step > config.total_steps) throw Error("lr_at: step out of range");
    if (config.warmup_steps > 0 && step <= config.warmup_steps) {
        return config.peak_lr * (static_cast<double>(step) /
                                 static_cast<double>(config.warmup_steps));
    }
    const double remaining = static_cast<double>(config.total_steps - step);
    const double span = static_cast<double>(config.total_steps - config.warmup_steps);
    return config.peak_lr * (remaining / span);
}

double dropout_at(int64_t step, const TrainConfig& config) {
    if (step < 0 || step > config.total_steps) throw Error("dropout_at: step out of range");
    if (config.mode != Mode::pretrain) return config.dropout_start;
    double value = config.dropout_start;
    for (const auto& [frac, v] : config.dropout_points) {
        if (static_cast<double>(step) >= frac * static_cast<double>(config.total_steps)) {
            value = v;
        }
    }
    return value;
}

AdamState AdamState::make(const model::ModelConfig& config) {
    AdamState state;
    state.m = model::zeros_like<float>(config);
    state.v = model::zeros_like<float>(config);
    return state;
}

void adam_step(model::ParametersF& params, const model::ParametersF& grads, AdamState& state,
               double lr, double beta1, double beta2, double eps) {
    state.step += 1;
    const float bc1 = 1.0f - static_cast<float>(std::pow(beta1, static_cast<double>(state.step)));
    const float bc2 = 1.0f - static_cast<float>(std::pow(beta2, static_cast<double>(state.step)));

    // collect aligned tensor lists through the visitor
    std::vector<std::pair<std::string, TensorF*>> p_list, m_list, v_list;
    std::vector<std::pair<std::string, const TensorF*>> g_list;
    params.visit([&](const std::string& n, TensorF& t) { p_list.emplace_back(n, &t); });
    const_cast<model::ParametersF&>(grads).visit(
        [&](const std::string& n, TensorF& t) { g_list.emplace_back(n, &t); });
    state.m.visit([&](const std::string& n, TensorF& t) { m_list.emplace_back(n, &t); });
    state.v.visit([&](const std::string& n, TensorF& t) { v_list.emplace_back(n, &t); });
    if (p_list.size() != g_list.size()) throw Error("adam_step: parameter/gradient mismatch");

    for (size_t i = 0; i < p_list.size(); ++i) {
        const auto& [name, g] = g_list[i];
        for (const float x : g->data) {
            if (!std::isfinite(x)) {
                throw Error("non-finite gradient in tensor '" + name + "'");
            }
        }
        kern::adam_update(p_list[i].second->data.data(), g->data.data(),
                          m_list[i].second->data.data(), v_list[i].second->data.data(),
                          g->size(), static_cast<float>(lr), static_cast<float>(beta1),
                          static_cast<float>(beta2), static_cast<float>(eps), bc1, bc2);
    }
}

// ---------------------------------------------------------------------------
// input builders
// ---------------------------------------------------------------------------

GenerationRows build_generation_example(const std::string& source_text,
                                        const std::string& target_text,
                                        const std::string& source_lang,
                                        const std::string& target_lang, const Vocabulary& vocab,
                                        int64_t max_positions) {
    if (normalize_whitespace(source_text).empty()) throw Error("empty source text");
    if (normalize_whitespace(target_text).empty()) throw Error("empty target text");
    if (!vocab.has_language(source_lang)) throw Error("unregistered language: " + source_lang);
    const int tgt_lang_id = vocab.language_id(target_lang);

    GenerationRows rows;
    rows.enc = vocab.encode(source_text);
    if (static_cast<int64_t>(rows.enc.size()) > max_positions) {
        rows.enc.resize(static_cast<size_t>(max_positions)); // sources truncate
    }
    std::vector<int> tgt = vocab.encode(target_text);
    if (static_cast<int64_t>(tgt.size()) + 1 > max_positions) {
        // targets are labels: refusing beats silently training on a prefix
        throw Error("target length " + std::to_string(tgt.size() + 1) + " exceeds max_positions " +
                    std::to_string(max_positions));
    }
    rows.dec.push_back(tgt_lang_id);
    rows.dec.insert(rows.dec.end(), tgt.begin(), tgt.end());
    rows.tgt = tgt;
    rows.tgt.push_back(tok::kEos);
    return rows;
}

std::vector<int> build_classification_example(const std::string& text_a,
                                              const std::optional<std::string>& text_b,
                                              const Vocabulary& vocab) {
    if (normalize_whitespace(text_a).empty()) throw Error("empty classification input");
    std::vector<int> ids = vocab.encode(text_a);
    ids.push_back(tok::kEos);
    if (text_b) {
        const std::vector<int> b = vocab.encode(*text_b);
        ids.insert(ids.end(), b.begin(), b.end());
        ids.push_back(tok::kEos);
    }
    return ids;
}

bool BestTracker::update(int64_t step, double metric) {
    if (metric > best_metric_) {
        best_metric_ = metric;
        best_step_ = step;
        return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// shared loop plumbing
// ---------------------------------------------------------------------------

namespace {

struct TrainerIo {
    std::string out_dir;
    std::ofstream log_file;

    explicit TrainerIo(const std::string& dir, bool append) : out_dir(dir) {
        if (out_dir.empty()) return;
        fs::create_directories(out_dir);
        log_file.open(out_dir + "/train_log.jsonl", append ? std::ios::app : std::ios::out);
        if (!log_file) throw Error("cannot open training log in " + out_dir);
    }

    void log_step(const StepLog& entry) {
        if (!log_file.is_open()) return;
        ordered_json line;
        line["step"] = entry.step;
        line["loss"] = entry.loss;
        line["lr"] = entry.lr;
        line["dropout"] = entry.dropout;
        log_file << line.dump() << "\n";
        log_file.flush();
    }
};

struct RngBundle {
    Rng sampler, noise, dropout;

    explicit RngBundle(uint64_t seed) {
        Rng master(seed);
        sampler = master.fork();
        noise = master.fork();
        dropout = master.fork();
    }
};

void save_train_state(const std::string& dir, const AdamState& state, const RngBundle& rngs,
                      int64_t next_step) {
    model::save_checkpoint(dir + "/adam_m.plbk", state.m);
    model::save_checkpoint(dir + "/adam_v.plbk", state.v);
    ordered_json obj;
    obj["next_step"] = next_step;
    obj["adam_step"] = state.step;
    auto dump_state = [](const std::array<uint64_t, 4>& s) {
        return std::vector<uint64_t>(s.begin(), s.end());
    };
    obj["rng_sampler"] = dump_state(rngs.sampler.state());
    obj["rng_noise"] = dump_state(rngs.noise.state());
    obj["rng_dropout"] = dump_state(rngs.dropout.state());
    std::ofstream out(dir + "/train_state.json");
    if (!out) throw Error("cannot write train state in " + dir);
    out << obj.dump(2) << "\n";
}

int64_t load_train_state(const std::string& dir, AdamState& state, RngBundle& rngs) {
    std::ifstream in(dir + "/train_state.json");
    if (!in) throw Error("no train state to resume in " + dir);
    json obj = json::parse(in, nullptr, false);
    if (obj.is_discarded()) throw Error("corrupt train state in " + dir);
    state.m = model::load_checkpoint(dir + "/adam_m.plbk");
    state.v = model::load_checkpoint(dir + "/adam_v.plbk");
    state.step = obj["adam_step"].get<int64_t>();
    auto read_state = [&](const char* key, Rng& rng) {
        const auto vec = obj[key].get<std::vector<uint64_t>>();
        if (vec.size() != 4) throw Error("corrupt rng state in " + dir);
        rng.set_state({vec[0], vec[1], vec[2], vec[3]});
    };
    read_state("rng_sampler", rngs.sampler);
    read_state("rng_noise", rngs.noise);
    read_state("rng_dropout", rngs.dropout);
    return obj["next_step"].get<int64_t>();
}

} // namespace

// ---------------------------------------------------------------------------
// pre-training
// ---------------------------------------------------------------------------

PretrainResult pretrain(const std::map<std::string, std::vector<RawInstance>>& corpora,
                        const Vocabulary& vocab, const NoiseConfig& noise,
                        const SamplingPlan& plan, const model::ModelConfig& model_config,
                        const TrainConfig& train_config, const std::string& out_dir,
                        bool resume, int64_t halt_after_steps) {
    train_config.validate();
    noise.validate();
    model_config.validate();
    if (train_config.mode != Mode::pretrain) throw Error("pretrain: config mode mismatch");

    // tokenize once; empty encodings cannot be corrupted and are dropped
    std::vector<std::string> languages;
    std::vector<std::vector<std::vector<int>>> token_sets;
    std::map<std::string, int64_t> sizes;
    for (const auto& [lang, instances] : corpora) {
        std::vector<std::vector<int>> toks;
        for (const auto& inst : instances) {
            auto ids = vocab.encode(inst.text);
            if (!ids.empty()) toks.push_back(std::move(ids));
        }
        sizes[lang] = static_cast<int64_t>(toks.size());
        languages.push_back(lang);
        token_sets.push_back(std::move(toks));
    }

    const int64_t max_len = std::min<int64_t>(train_config.max_seq_len,
                                              model_config.max_positions - 1);

    RngBundle rngs(train_config.seed);
    BatchStream stream(plan, sizes, train_config.batch_size, rngs.sampler.next_u64());

    model::ParametersF params = model::init_parameters<float>(model_config, rngs.sampler.next_u64());
    AdamState adam = AdamState::make(model_config);
    int64_t start_step = 0;

    if (resume) {
        if (out_dir.empty()) throw Error("resume requires an output directory");
        params = model::load_checkpoint(out_dir + "/ckpt_last.plbk");
        start_step = load_train_state(out_dir, adam, rngs);
        stream.set_rng_state(rngs.sampler.state()); // sampler stream state piggybacks
    } else {
        stream.set_rng_state(rngs.sampler.state());
    }

    TrainerIo io(out_dir, resume);
    PretrainResult result;

    for (int64_t step = start_step; step < train_config.total_steps; ++step) {
        const double lr = lr_at(step, train_config);
        const double rate = dropout_at(step, train_config);

        std::vector<std::vector<int>> enc_rows, dec_rows, tgt_rows;
        for (const auto& draw : stream.next_batch()) {
            const auto& lang = languages[static_cast<size_t>(draw.language)];
            const auto& x = token_sets[static_cast<size_t>(draw.language)]
                                      [static_cast<size_t>(draw.instance)];
            TrainingTriple triple = corrupt(x, lang, noise, vocab, rngs.noise, max_len);
            enc_rows.push_back(std::move(triple.encoder_input));
            dec_rows.push_back(std::move(triple.decoder_input));
            tgt_rows.push_back(std::move(triple.target));
        }
        const model::Batch batch = model::make_batch(enc_rows, dec_rows, tgt_rows, tok::kPad);

        auto lg = model::loss_and_grads(params, batch, rate, rate > 0.0 ? &rngs.dropout : nullptr);
        adam_step(params, lg.grads, adam, lr, train_config.beta1, train_config.beta2,
                  train_config.adam_eps);

        const StepLog entry{step, static_cast<double>(lg.loss), lr, rate};
        result.log.push_back(entry);
        io.log_step(entry); // one JSON line per step
        // sampler rng state must track the stream for resume
        rngs.sampler.set_state(stream.rng_state());
        const bool halting = step + 1 == halt_after_steps;
        if (!out_dir.empty() && ((step + 1) % train_config.checkpoint_every == 0 ||
                                 step + 1 == train_config.total_steps || halting)) {
            model::save_checkpoint(out_dir + "/ckpt_last.plbk", params);
            save_train_state(out_dir, adam, rngs, step + 1);
        }
        if (halting) break;
    }

    if (!out_dir.empty()) result.checkpoint_path = out_dir + "/ckpt_last.plbk";
    result.params = std::move(params);
    return result;
}

double denoising_token_accuracy(const model::ParametersF& params,
                                const std::map<std::string, std::vector<RawInstance>>& corpora,
                                const Vocabulary& vocab, const NoiseConfig& noise, uint64_t seed,
                                int64_t max_seq_len) {
    Rng rng(seed);
    const int64_t max_len = std::min<int64_t>(max_seq_len, params.config.max_positions - 1);
    int64_t correct = 0, total = 0;
    for (const auto& [lang, instances] : corpora) {
        for (const auto& inst : instances) {
            const auto x = vocab.encode(inst.text);
            if (x.empty()) continue;
            TrainingTriple triple = corrupt(x, lang, noise, vocab, rng, max_len);
            const model::Batch batch = model::make_batch({triple.encoder_input},
                                                         {triple.decoder_input}, {triple.target},
                                                         tok::kPad);
            const TensorF logits = model::forward(params, batch);
            for (int64_t t = 0; t < batch.tgt_len; ++t) {
                if (!batch.dec_mask[static_cast<size_t>(t)]) continue;
                const float* row = logits.row(t);
                int argmax = 0;
                for (int64_t j = 1; j < logits.cols; ++j) {
                    if (row[j] > row[argmax]) argmax = static_cast<int>(j);
                }
                correct += argmax == batch.tgt_ids[static_cast<size_t>(t)] ? 1 : 0;
                ++total;
            }
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// fine-tuning
// ---------------------------------------------------------------------------

std::vector<std::string> decode_generation(const model::ParametersF& params,
                                           const Vocabulary& vocab,
                                           const std::vector<GenExample>& examples,
                                           int beam_size) {
    std::vector<std::string> out;
    out.reserve(examples.size());
    for (const auto& ex : examples) {
        std::vector<int> src = vocab.encode(ex.source_text);
        if (static_cast<int64_t>(src.size()) > params.config.max_positions) {
            src.resize(static_cast<size_t>(params.config.max_positions));
        }
        const auto gen = model::generate(params, src, vocab.language_id(ex.target_lang),
                                         beam_size, params.config.max_positions - 1, tok::kPad,
                                         tok::kEos);
        out.push_back(vocab.decode(gen.ids));
    }
    return out;
}

double evaluate_generation_metric(const model::ParametersF& params, const Vocabulary& vocab,
                                  const std::vector<GenExample>& examples,
                                  const std::string& metric) {
    if (metric != "bleu" && metric != "em") {
        throw Error("generation fine-tuning expects metric 'bleu' or 'em', got '" + metric + "'");
    }
    const auto decoded = decode_generation(params, vocab, examples, 1);
    if (metric == "em") {
        std::vector<std::string> refs;
        for (const auto& ex : examples) refs.push_back(normalize_whitespace(ex.target_text));
        return metrics::exact_match(decoded, refs);
    }
    std::vector<std::vector<std::string>> hyps, refs;
    for (size_t i = 0; i < examples.size(); ++i) {
        hyps.push_back(whitespace_split(decoded[i]));
        refs.push_back(whitespace_split(examples[i].target_text));
    }
    return metrics::corpus_bleu(hyps, refs);
}

double evaluate_classification_accuracy(const model::ParametersF& params, const Vocabulary& vocab,
                                        const std::vector<ClsExample>& examples) {
    std::vector<int> predictions, gold;
    for (const auto& ex : examples) {
        const auto ids = build_classification_example(ex.text_a, ex.text_b, vocab);
        const TensorF logits = model::classify(params, {ids}, tok::kPad);
        int argmax = 0;
        for (int64_t j = 1; j < logits.cols; ++j) {
            if (logits(0, j) > logits(0, argmax)) argmax = static_cast<int>(j);
        }
        predictions.push_back(argmax);
        gold.push_back(ex.label);
    }
    return metrics::accuracy(predictions, gold);
}

namespace {

template <typename StepFn, typename EvalFn>
FinetuneResult finetune_loop(const model::ParametersF& init, const TrainConfig& config,
                             const std::string& out_dir, StepFn&& run_step, EvalFn&& evaluate) {
    RngBundle rngs(config.seed);
    model::ParametersF params = init;
    AdamState adam = AdamState::make(params.config);
    TrainerIo io(out_dir, false);

    FinetuneResult result;
    result.best_params = params;
    BestTracker tracker;

    for (int64_t step = 0; step < config.total_steps; ++step) {
        const double lr = lr_at(step, config);
        const double rate = dropout_at(step, config);
        const double loss = run_step(params, adam, rngs, lr, rate);
        const StepLog entry{step, loss, lr, rate};
        result.log.push_back(entry);
        io.log_step(entry);

        if ((step + 1) % config.eval_every == 0 || step + 1 == config.total_steps) {
            const double metric = evaluate(params);
            result.history.push_back({step + 1, metric});
            if (tracker.update(step + 1, metric)) {
                result.best_params = params;
            }
        }
    }
    result.best_metric = tracker.best_metric();
    result.best_step = tracker.best_step();
    if (!out_dir.empty()) {
        result.checkpoint_path = out_dir + "/ckpt_best.plbk";
        model::save_checkpoint(result.checkpoint_path, result.best_params);
    }
    return result;
}

} // namespace

FinetuneResult finetune_generation(const GenTask& task, const Vocabulary& vocab,
                                   const model::ParametersF& init, const TrainConfig& config,
                                   const std::string& out_dir) {
    config.validate();
    if (config.mode != Mode::finetune_generation) throw Error("finetune_generation: mode mismatch");
    if (task.metric != "bleu" && task.metric != "em") {
        throw Error("generation task metric must be 'bleu' or 'em', got '" + task.metric + "'");
    }
    if (task.train.empty()) throw Error("finetune needs training examples");
    const auto& valid = task.valid.empty() ? task.train : task.valid;

    // rows are deterministic; build them once
    std::vector<GenerationRows> rows;
    rows.reserve(task.train.size());
    for (const auto& ex : task.train) {
        rows.push_back(build_generation_example(ex.source_text, ex.target_text, ex.source_lang,
                                                ex.target_lang, vocab,
                                                std::min<int64_t>(config.max_seq_len,
                                                                  init.config.max_positions)));
    }

    auto run_step = [&](model::ParametersF& params, AdamState& adam, RngBundle& rngs, double lr,
                        double rate) {
        std::vector<std::vector<int>> enc_rows, dec_rows, tgt_rows;
        for (int64_t i = 0; i < config.batch_size; ++i) {
            const auto& r = rows[rngs.sampler.below(rows.size())];
            enc_rows.push_back(r.enc);
            dec_rows.push_back(r.dec);
            tgt_rows.push_back(r.tgt);
        }
        const model::Batch batch = model::make_batch(enc_rows, dec_rows, tgt_rows, tok::kPad);
        auto lg = model::loss_and_grads(params, batch, rate, rate > 0.0 ? &rngs.dropout : nullptr);
        adam_step(params, lg.grads, adam, lr, config.beta1, config.beta2, config.adam_eps);
        return static_cast<double>(lg.loss);
    };
    auto evaluate = [&](const model::ParametersF& params) {
        return evaluate_generation_metric(params, vocab, valid, task.metric);
    };
    return finetune_loop(init, config, out_dir, run_step, evaluate);
}

FinetuneResult finetune_classification(const ClsTask& task, const Vocabulary& vocab,
                                       const model::ParametersF& init, const TrainConfig& config,
                                       const std::string& out_dir) {
    config.validate();
    if (config.mode != Mode::finetune_classification) {
        throw Error("finetune_classification: mode mismatch");
    }
    if (task.metric != "accuracy") {
        throw Error("classification task metric must be 'accuracy', got '" + task.metric + "'");
    }
    if (init.config.num_labels != task.num_labels) {
        throw Error("model head has " + std::to_string(init.config.num_labels) +
                    " labels, task declares " + std::to_string(task.num_labels));
    }
    if (task.train.empty()) throw Error("finetune needs training examples");
    const auto& valid = task.valid.empty() ? task.train : task.valid;

    std::vector<std::vector<int>> rows;
    std::vector<int> labels;
    for (const auto& ex : task.train) {
        rows.push_back(build_classification_example(ex.text_a, ex.text_b, vocab));
        labels.push_back(ex.label);
    }

    auto run_step = [&](model::ParametersF& params, AdamState& adam, RngBundle& rngs, double lr,
                        double rate) {
        std::vector<std::vector<int>> batch_rows;
        std::vector<int> batch_labels;
        for (int64_t i = 0; i < config.batch_size; ++i) {
            const size_t idx = rngs.sampler.below(rows.size());
            batch_rows.push_back(rows[idx]);
            batch_labels.push_back(labels[idx]);
        }
        auto lg = model::classify_loss_and_grads(params, batch_rows, batch_labels, tok::kPad,
                                                 rate, rate > 0.0 ? &rngs.dropout : nullptr);
        adam_step(params, lg.grads, adam, lr, config.beta1, config.beta2, config.adam_eps);
        return static_cast<double>(lg.loss);
    };
    auto evaluate = [&](const model::ParametersF& params) {
        return evaluate_classification_accuracy(params, vocab, valid);
    };
    return finetune_loop(init, config, out_dir, run_step, evaluate);
}

} // namespace plbk::training
