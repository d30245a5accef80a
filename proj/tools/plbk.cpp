// Command-line entry point: corpus stats, tokenizer training, sampling
// plans, noise previews, pre-training, fine-tuning, generation, metric
// evaluation, and the selfcheck suite.

#include "plbk/config.hpp"
#include "plbk/corpus.hpp"
#include "plbk/kernels.hpp"
#include "plbk/manifest.hpp"
#include "plbk/metrics.hpp"
#include "plbk/minilang.hpp"
#include "plbk/model.hpp"
#include "plbk/noising.hpp"
#include "plbk/sampler.hpp"
#include "plbk/selfcheck.hpp"
#include "plbk/tokenizer.hpp"
#include "plbk/training.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

bool g_json_errors = false;

void emit_error(const std::string& message) {
    if (g_json_errors) {
        ordered_json obj;
        obj["error"] = message;
        std::cerr << obj.dump() << std::endl;
    } else {
        std::cerr << "error: " << message << std::endl;
    }
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw plbk::Error("file not found: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

void write_manifest(const plbk::RunManifest& manifest, const std::string& out_dir,
                    const std::string& explicit_path) {
    if (!explicit_path.empty()) {
        manifest.write(explicit_path);
    } else if (!out_dir.empty()) {
        manifest.write(out_dir + "/manifest.json");
    }
}

// corpus flags come as lang=path pairs
std::map<std::string, std::string> parse_corpus_args(const std::vector<std::string>& specs) {
    std::map<std::string, std::string> out;
    for (const auto& spec : specs) {
        const size_t eq = spec.find('=');
        if (eq == std::string::npos) {
            throw plbk::Error("corpus spec must be <language>=<path>, got: " + spec);
        }
        out[spec.substr(0, eq)] = spec.substr(eq + 1);
    }
    if (out.empty()) throw plbk::Error("at least one --corpus <language>=<path> is required");
    return out;
}

std::map<std::string, std::vector<plbk::RawInstance>> load_corpora(
    const std::map<std::string, std::string>& paths, plbk::RunManifest& manifest,
    int64_t* total_skipped = nullptr) {
    std::map<std::string, std::vector<plbk::RawInstance>> corpora;
    for (const auto& [lang, path] : paths) {
        auto result = plbk::ingest_jsonl(path, lang);
        if (result.skipped > 0) {
            std::cerr << "note: skipped " << result.skipped << " malformed line(s) in " << path
                      << std::endl;
        }
        if (total_skipped) *total_skipped += result.skipped;
        manifest.add_input(path);
        corpora[lang] = std::move(result.instances);
    }
    return corpora;
}

plbk::model::ModelConfig model_config_from(const plbk::KVConfig& kv, int64_t vocab_size,
                                           int num_labels = 0) {
    plbk::model::ModelConfig cfg;
    cfg.enc_layers = static_cast<int>(kv.get_int("model.enc_layers", 2));
    cfg.dec_layers = static_cast<int>(kv.get_int("model.dec_layers", 2));
    cfg.d_model = static_cast<int>(kv.get_int("model.d_model", 64));
    cfg.heads = static_cast<int>(kv.get_int("model.heads", 4));
    cfg.d_ff = static_cast<int>(kv.get_int("model.d_ff", 128));
    cfg.max_positions = static_cast<int>(kv.get_int("model.max_positions", 256));
    cfg.dropout = kv.get_real("model.dropout", 0.1);
    cfg.final_layer_norm = kv.get_bool("model.final_layer_norm", true);
    cfg.vocab_size = vocab_size;
    cfg.num_labels = num_labels;
    cfg.validate();
    return cfg;
}

plbk::NoiseConfig noise_config_from(const plbk::KVConfig& kv) {
    plbk::NoiseConfig cfg;
    cfg.mask_ratio = kv.get_real("noise.mask_ratio", 0.35);
    cfg.poisson_lambda = kv.get_real("noise.poisson_lambda", 3.5);
    cfg.w_masking = kv.get_real("noise.w_masking", 1.0);
    cfg.w_deletion = kv.get_real("noise.w_deletion", 1.0);
    cfg.w_infilling = kv.get_real("noise.w_infilling", 1.0);
    cfg.max_span_attempts_factor =
        static_cast<int>(kv.get_int("noise.max_span_attempts_factor", 10));
    cfg.validate();
    return cfg;
}

plbk::training::TrainConfig train_config_from(const plbk::KVConfig& kv,
                                              plbk::training::Mode mode) {
    plbk::training::TrainConfig cfg;
    cfg.mode = mode;
    cfg.total_steps = kv.get_int("train.total_steps", 300);
    cfg.warmup_steps = kv.get_int("train.warmup_steps", 0);
    cfg.peak_lr = kv.get_real("train.peak_lr", 3e-4);
    cfg.beta1 = kv.get_real("train.beta1", 0.9);
    cfg.beta2 = kv.get_real("train.beta2", 0.98);
    cfg.adam_eps = kv.get_real("train.adam_eps", 1e-6);
    cfg.batch_size = kv.get_int("train.batch_size", 8);
    cfg.seed = static_cast<uint64_t>(kv.get_int("train.seed", 1));
    cfg.dropout_start = kv.get_real("train.dropout_start", 0.1);
    cfg.max_seq_len = kv.get_int("train.max_seq_len", 512);
    cfg.checkpoint_every = kv.get_int("train.checkpoint_every", 100);
    cfg.eval_every = kv.get_int("train.eval_every", 50);
    cfg.log_every = kv.get_int("train.log_every", 10);

    cfg.dropout_points.clear();
    const std::string points = kv.get_string("train.dropout_points", "0.5:0.05,0.8:0.0");
    std::istringstream in(points);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (item.empty()) continue;
        const size_t colon = item.find(':');
        if (colon == std::string::npos) {
            throw plbk::Error("dropout_points entries must be fraction:value, got: " + item);
        }
        cfg.dropout_points.emplace_back(std::stod(item.substr(0, colon)),
                                        std::stod(item.substr(colon + 1)));
    }
    cfg.validate();
    return cfg;
}

const std::set<std::string> kConfigSchema = {
    "model.enc_layers", "model.dec_layers", "model.d_model", "model.heads", "model.d_ff",
    "model.max_positions", "model.dropout", "model.final_layer_norm",
    "tokenizer.vocab_size", "tokenizer.sample_fraction",
    "noise.mask_ratio", "noise.poisson_lambda", "noise.w_masking", "noise.w_deletion",
    "noise.w_infilling", "noise.max_span_attempts_factor",
    "sample.alpha",
    "train.total_steps", "train.warmup_steps", "train.peak_lr", "train.beta1", "train.beta2",
    "train.adam_eps", "train.batch_size", "train.seed", "train.dropout_start",
    "train.dropout_points", "train.max_seq_len", "train.checkpoint_every", "train.eval_every",
    "train.log_every",
    "data.languages", "data.corpus.*", "data.vocab", "data.task.*", "task.num_labels",
};

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_stats(const std::vector<std::string>& corpus_specs, const std::string& vocab_path,
              const std::string& out_path, const std::string& manifest_path) {
    plbk::RunManifest manifest;
    manifest.command = "stats";
    const auto corpora = load_corpora(parse_corpus_args(corpus_specs), manifest);
    std::optional<plbk::Vocabulary> vocab;
    if (!vocab_path.empty()) {
        vocab = plbk::Vocabulary::load(vocab_path);
        manifest.add_input(vocab_path);
    }
    const auto stats = plbk::compute_stats(corpora, vocab ? &*vocab : nullptr);
    const std::string json_text = stats.to_json();
    if (out_path.empty()) {
        std::cout << json_text << std::endl;
    } else {
        std::ofstream out(out_path);
        if (!out) throw plbk::Error("cannot open for writing: " + out_path);
        out << json_text << "\n";
        manifest.outputs.push_back(out_path);
    }
    write_manifest(manifest, "", manifest_path);
    return 0;
}

int cmd_train_tokenizer(const std::vector<std::string>& corpus_specs, int64_t vocab_size,
                        double sample_fraction, uint64_t seed,
                        const std::vector<std::string>& languages, const std::string& out_path,
                        const std::string& manifest_path) {
    plbk::RunManifest manifest;
    manifest.command = "train-tokenizer";
    manifest.seed = seed;
    manifest.config["vocab_size"] = std::to_string(vocab_size);
    manifest.config["sample_fraction"] = std::to_string(sample_fraction);

    const auto corpora = load_corpora(parse_corpus_args(corpus_specs), manifest);
    std::vector<plbk::RawInstance> all;
    for (const auto& [lang, instances] : corpora) {
        all.insert(all.end(), instances.begin(), instances.end());
    }
    // language-id order defaults to the corpus languages in map order
    std::vector<std::string> langs = languages;
    if (langs.empty()) {
        for (const auto& [lang, instances] : corpora) langs.push_back(lang);
    }

    plbk::Vocabulary vocab = plbk::Vocabulary::train(all, vocab_size, sample_fraction, seed);
    vocab.add_language_ids(langs);
    vocab.save(out_path);
    manifest.outputs.push_back(out_path);
    std::cout << "vocabulary: " << vocab.size() << " ids (" << vocab.base_size()
              << " base + " << vocab.language_symbols().size() << " language ids) -> " << out_path
              << std::endl;
    write_manifest(manifest, fs::path(out_path).parent_path().string(), manifest_path);
    return 0;
}

int cmd_plan(const std::string& stats_path, double alpha, const std::string& manifest_path) {
    plbk::RunManifest manifest;
    manifest.command = "plan";
    manifest.config["alpha"] = std::to_string(alpha);
    std::ifstream in(stats_path);
    if (!in) throw plbk::Error("stats file not found: " + stats_path);
    std::stringstream ss;
    ss << in.rdbuf();
    manifest.add_input(stats_path);
    const auto stats = plbk::CorpusStats::from_json(ss.str());
    const auto plan = plbk::compute_plan(stats, alpha);
    std::cout << plan.to_json() << std::endl;
    write_manifest(manifest, "", manifest_path);
    return 0;
}

int cmd_noise_preview(const std::string& corpus_path, const std::string& language,
                      const std::string& vocab_path, const std::string& config_path,
                      uint64_t seed, int64_t count, const std::string& manifest_path) {
    plbk::RunManifest manifest;
    manifest.command = "noise-preview";
    manifest.seed = seed;
    const auto vocab = plbk::Vocabulary::load(vocab_path);
    manifest.add_input(vocab_path);

    plbk::KVConfig kv;
    if (!config_path.empty()) {
        kv = plbk::KVConfig::parse_file(config_path);
        kv.validate_keys(kConfigSchema);
        manifest.add_input(config_path);
    }
    const auto noise = noise_config_from(kv);
    const int64_t max_len = kv.get_int("train.max_seq_len", 512);

    auto ingest = plbk::ingest_jsonl(corpus_path, language);
    manifest.add_input(corpus_path);
    plbk::Rng rng(seed);
    int64_t emitted = 0;
    for (const auto& inst : ingest.instances) {
        if (emitted >= count) break;
        const auto ids = vocab.encode(inst.text);
        if (ids.empty()) continue;
        const auto triple = plbk::corrupt(ids, language, noise, vocab, rng, max_len);
        ordered_json record;
        record["original"] = {{"ids", ids}, {"text", vocab.decode(ids)}};
        record["encoder_input"] = {{"ids", triple.encoder_input},
                                   {"text", vocab.decode(triple.encoder_input)}};
        record["decoder_input"] = {{"ids", triple.decoder_input},
                                   {"text", vocab.decode(triple.decoder_input)}};
        record["target"] = {{"ids", triple.target}, {"text", vocab.decode(triple.target)}};
        std::cout << record.dump() << "\n";
        ++emitted;
    }
    write_manifest(manifest, "", manifest_path);
    return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& out_dir, bool resume,
                 const std::string& manifest_path) {
    plbk::RunManifest manifest;
    manifest.command = "pretrain";
    const auto kv = plbk::KVConfig::parse_file(config_path);
    kv.validate_keys(kConfigSchema);
    manifest.add_input(config_path);
    for (const auto& [k, v] : kv.entries()) manifest.config[k] = v;

    const auto languages = kv.get_list("data.languages");
    if (languages.empty()) throw plbk::Error("config needs data.languages");
    std::map<std::string, std::string> corpus_paths;
    for (const auto& lang : languages) {
        corpus_paths[lang] = kv.require_string("data.corpus." + lang);
    }
    const auto corpora = load_corpora(corpus_paths, manifest);

    const std::string vocab_path = kv.require_string("data.vocab");
    const auto vocab = plbk::Vocabulary::load(vocab_path);
    manifest.add_input(vocab_path);
    for (const auto& lang : languages) {
        if (!vocab.has_language(lang)) {
            throw plbk::Error("vocabulary lacks language id for '" + lang + "'");
        }
    }

    const auto noise = noise_config_from(kv);
    const auto tcfg = train_config_from(kv, plbk::training::Mode::pretrain);
    manifest.seed = tcfg.seed;
    const auto mcfg = model_config_from(kv, vocab.size());
    const auto plan = plbk::compute_plan(plbk::compute_stats(corpora), kv.get_real("sample.alpha", 0.3));

    std::cout << "pretraining " << plbk::model::expected_parameter_count(mcfg)
              << " parameters for " << tcfg.total_steps << " steps" << std::endl;
    const auto result =
        plbk::training::pretrain(corpora, vocab, noise, plan, mcfg, tcfg, out_dir, resume);
    for (const auto& entry : result.log) {
        if (entry.step % tcfg.log_every == 0 || entry.step + 1 == tcfg.total_steps) {
            std::cout << "step " << entry.step << " loss " << entry.loss << " lr " << entry.lr
                      << " dropout " << entry.dropout << std::endl;
        }
    }
    manifest.outputs.push_back(result.checkpoint_path);
    write_manifest(manifest, out_dir, manifest_path);
    std::cout << "checkpoint: " << result.checkpoint_path << std::endl;
    return 0;
}

plbk::training::GenTask load_generation_task(const plbk::KVConfig& kv,
                                             plbk::RunManifest& manifest) {
    // task file: JSONL with {"source","target"} plus languages from config
    plbk::training::GenTask task;
    const std::string train_path = kv.require_string("data.task.train");
    const std::string valid_path = kv.get_string("data.task.valid", "");
    const std::string src_lang = kv.require_string("data.task.source_lang");
    const std::string tgt_lang = kv.require_string("data.task.target_lang");
    task.metric = kv.get_string("data.task.metric", "bleu");

    auto load = [&](const std::string& path, std::vector<plbk::training::GenExample>& out) {
        manifest.add_input(path);
        for (const auto& line : read_lines(path)) {
            if (line.empty()) continue;
            auto obj = nlohmann::json::parse(line, nullptr, false);
            if (obj.is_discarded() || !obj.contains("source") || !obj.contains("target")) {
                throw plbk::Error("task line needs {\"source\",\"target\"}: " + path);
            }
            out.push_back({obj["source"].get<std::string>(), obj["target"].get<std::string>(),
                           src_lang, tgt_lang});
        }
    };
    load(train_path, task.train);
    if (!valid_path.empty()) load(valid_path, task.valid);
    return task;
}

plbk::training::ClsTask load_classification_task(const plbk::KVConfig& kv, bool pair,
                                                 plbk::RunManifest& manifest) {
    plbk::training::ClsTask task;
    task.num_labels = static_cast<int>(kv.get_int("task.num_labels", 2));
    const std::string train_path = kv.require_string("data.task.train");
    const std::string valid_path = kv.get_string("data.task.valid", "");
    auto load = [&](const std::string& path, std::vector<plbk::training::ClsExample>& out) {
        manifest.add_input(path);
        for (const auto& line : read_lines(path)) {
            if (line.empty()) continue;
            auto obj = nlohmann::json::parse(line, nullptr, false);
            if (obj.is_discarded() || !obj.contains("text") || !obj.contains("label")) {
                throw plbk::Error("task line needs {\"text\",[\"text_b\"],\"label\"}: " + path);
            }
            plbk::training::ClsExample ex;
            ex.text_a = obj["text"].get<std::string>();
            if (pair) {
                if (!obj.contains("text_b")) {
                    throw plbk::Error("classify-pair task lines need \"text_b\": " + path);
                }
                ex.text_b = obj["text_b"].get<std::string>();
            }
            ex.label = obj["label"].get<int>();
            out.push_back(std::move(ex));
        }
    };
    load(train_path, task.train);
    if (!valid_path.empty()) load(valid_path, task.valid);
    return task;
}

int cmd_finetune(const std::string& task_kind, const std::string& config_path,
                 const std::string& init_ckpt, const std::string& out_dir,
                 const std::string& manifest_path) {
    plbk::RunManifest manifest;
    manifest.command = "finetune";
    const auto kv = plbk::KVConfig::parse_file(config_path);
    kv.validate_keys(kConfigSchema);
    manifest.add_input(config_path);
    for (const auto& [k, v] : kv.entries()) manifest.config[k] = v;

    const std::string vocab_path = kv.require_string("data.vocab");
    const auto vocab = plbk::Vocabulary::load(vocab_path);
    manifest.add_input(vocab_path);

    plbk::training::FinetuneResult result;
    if (task_kind == "generation") {
        const auto tcfg = train_config_from(kv, plbk::training::Mode::finetune_generation);
        manifest.seed = tcfg.seed;
        auto task = load_generation_task(kv, manifest);
        plbk::model::ParametersF init = [&] {
            if (!init_ckpt.empty()) {
                manifest.add_input(init_ckpt);
                return plbk::model::load_checkpoint(init_ckpt);
            }
            return plbk::model::init_parameters<float>(model_config_from(kv, vocab.size()),
                                                       tcfg.seed);
        }();
        result = plbk::training::finetune_generation(task, vocab, init, tcfg, out_dir);
    } else if (task_kind == "classify-single" || task_kind == "classify-pair") {
        const auto tcfg = train_config_from(kv, plbk::training::Mode::finetune_classification);
        manifest.seed = tcfg.seed;
        auto task = load_classification_task(kv, task_kind == "classify-pair", manifest);
        plbk::model::ParametersF init = [&] {
            if (!init_ckpt.empty()) {
                manifest.add_input(init_ckpt);
                auto loaded = plbk::model::load_checkpoint(init_ckpt);
                if (loaded.config.num_labels != task.num_labels) {
                    // pre-trained checkpoints carry no head; graft one on
                    auto cfg = loaded.config;
                    cfg.num_labels = task.num_labels;
                    auto with_head = plbk::model::init_parameters<float>(cfg, tcfg.seed);
                    std::map<std::string, plbk::TensorF*> dst;
                    with_head.visit(
                        [&](const std::string& n, plbk::TensorF& t) { dst[n] = &t; });
                    loaded.visit([&](const std::string& n, plbk::TensorF& t) {
                        if (dst.count(n)) dst[n]->data = t.data;
                    });
                    return with_head;
                }
                return loaded;
            }
            return plbk::model::init_parameters<float>(
                model_config_from(kv, vocab.size(), task.num_labels), tcfg.seed);
        }();
        result = plbk::training::finetune_classification(task, vocab, init, tcfg, out_dir);
    } else {
        throw plbk::Error("unknown task '" + task_kind +
                          "' (expected generation|classify-single|classify-pair)");
    }

    std::cout << "best validation " << result.best_metric << " at step " << result.best_step
              << std::endl;
    for (const auto& point : result.history) {
        std::cout << "  step " << point.step << ": " << point.metric << std::endl;
    }
    if (!result.checkpoint_path.empty()) {
        manifest.outputs.push_back(result.checkpoint_path);
        std::cout << "checkpoint: " << result.checkpoint_path << std::endl;
    }
    write_manifest(manifest, out_dir, manifest_path);
    return 0;
}

int cmd_generate(const std::string& ckpt_path, const std::string& vocab_path,
                 const std::string& target_lang, int beam, int64_t max_len,
                 const std::string& input_path, const std::string& manifest_path) {
    plbk::RunManifest manifest;
    manifest.command = "generate";
    const auto params = plbk::model::load_checkpoint(ckpt_path);
    const auto vocab = plbk::Vocabulary::load(vocab_path);
    manifest.add_input(ckpt_path);
    manifest.add_input(vocab_path);
    manifest.add_input(input_path);

    const int lang_id = vocab.language_id(target_lang);
    for (const auto& line : read_lines(input_path)) {
        std::vector<int> src = vocab.encode(line);
        if (static_cast<int64_t>(src.size()) > params.config.max_positions) {
            src.resize(static_cast<size_t>(params.config.max_positions));
        }
        const auto gen = plbk::model::generate(params, src, lang_id, beam,
                                               max_len > 0 ? max_len
                                                           : params.config.max_positions - 1,
                                               plbk::tok::kPad, plbk::tok::kEos);
        std::cout << vocab.decode(gen.ids) << "\n";
    }
    write_manifest(manifest, "", manifest_path);
    return 0;
}

int cmd_evaluate(const std::string& metric, const std::string& hyp_path,
                 const std::string& ref_path, const std::string& lang_profile,
                 const std::string& manifest_path) {
    plbk::RunManifest manifest;
    manifest.command = "evaluate";
    manifest.config["metric"] = metric;
    const auto hyp_lines = read_lines(hyp_path);
    const auto ref_lines = read_lines(ref_path);
    manifest.add_input(hyp_path);
    manifest.add_input(ref_path);
    if (hyp_lines.size() != ref_lines.size()) {
        throw plbk::Error("hypothesis and reference line counts differ: " +
                          std::to_string(hyp_lines.size()) + " vs " +
                          std::to_string(ref_lines.size()));
    }

    plbk::metrics::MetricReport report;
    report.task = "evaluate";
    report.metric = metric;
    if (metric == "bleu") {
        std::vector<std::vector<std::string>> hyps, refs;
        for (size_t i = 0; i < hyp_lines.size(); ++i) {
            hyps.push_back(plbk::metrics::tokenize_for_bleu(hyp_lines[i]));
            refs.push_back(plbk::metrics::tokenize_for_bleu(ref_lines[i]));
        }
        report.value = plbk::metrics::corpus_bleu(hyps, refs);
    } else if (metric == "smoothed-bleu4") {
        // mean sentence-level smoothed BLEU-4
        double sum = 0.0;
        for (size_t i = 0; i < hyp_lines.size(); ++i) {
            sum += plbk::metrics::smoothed_bleu4(plbk::metrics::tokenize_for_bleu(hyp_lines[i]),
                                                 plbk::metrics::tokenize_for_bleu(ref_lines[i]));
        }
        report.value = hyp_lines.empty() ? 0.0 : sum / static_cast<double>(hyp_lines.size());
    } else if (metric == "em") {
        report.value = plbk::metrics::exact_match(hyp_lines, ref_lines);
    } else if (metric == "codebleu") {
        const auto* profile = plbk::minilang::find_profile(lang_profile);
        if (!profile) throw plbk::Error("unknown language profile: " + lang_profile);
        double sum = 0.0;
        std::map<std::string, double> comps;
        for (size_t i = 0; i < hyp_lines.size(); ++i) {
            const auto r = plbk::metrics::codebleu(hyp_lines[i], ref_lines[i], *profile);
            sum += r.value;
            for (const auto& [k, v] : r.components) comps[k] += v;
        }
        const double n = hyp_lines.empty() ? 1.0 : static_cast<double>(hyp_lines.size());
        report.value = sum / n;
        for (auto& [k, v] : comps) report.components[k] = v / n;
    } else {
        throw plbk::Error("unknown metric '" + metric +
                          "' (expected bleu|smoothed-bleu4|em|codebleu)");
    }
    std::cout << report.to_json() << std::endl;
    write_manifest(manifest, "", manifest_path);
    return 0;
}

int cmd_selfcheck(const std::string& scratch_dir) {
    const auto results = plbk::selfcheck::run_all(scratch_dir);
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("[%s] %-28s (%.2fs)%s%s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                    r.seconds, r.detail.empty() ? "" : " ", r.detail.c_str());
        all_pass = all_pass && r.pass;
    }
    std::printf("%s\n", all_pass ? "selfcheck: all checks passed" : "selfcheck: FAILURES");
    return all_pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"denoising seq2seq pre-training for program and natural language"};
    app.require_subcommand(1);

    int threads = 0;
    std::string manifest_path;
    app.add_flag("--json-errors", g_json_errors, "machine-readable errors on stderr");
    app.add_option("--threads", threads, "kernel threads (default: PLBK_THREADS or 1)");
    app.add_option("--manifest", manifest_path, "explicit run-manifest output path");

    // stats
    auto* stats = app.add_subcommand("stats", "per-language corpus statistics as JSON");
    std::vector<std::string> stats_corpora;
    std::string stats_vocab, stats_out;
    stats->add_option("--corpus", stats_corpora, "<language>=<jsonl-path>")->required();
    stats->add_option("--vocab", stats_vocab, "count subwords with this vocabulary");
    stats->add_option("--out", stats_out, "write JSON here instead of stdout");

    // train-tokenizer
    auto* traintok = app.add_subcommand("train-tokenizer", "learn the subword vocabulary");
    std::vector<std::string> tok_corpora, tok_langs;
    int64_t tok_vocab_size = 2000;
    double tok_fraction = 0.2;
    uint64_t tok_seed = 1;
    std::string tok_out;
    traintok->add_option("--corpus", tok_corpora, "<language>=<jsonl-path>")->required();
    traintok->add_option("--vocab-size", tok_vocab_size, "learned piece budget");
    traintok->add_option("--sample-fraction", tok_fraction, "training sample fraction");
    traintok->add_option("--seed", tok_seed, "sampling seed");
    traintok->add_option("--languages", tok_langs, "language-id order (default: corpus order)");
    traintok->add_option("--out", tok_out, "vocabulary JSON path")->required();

    // plan
    auto* plan = app.add_subcommand("plan", "smoothed multinomial sampling plan");
    std::string plan_stats;
    double plan_alpha = 0.3;
    plan->add_option("--stats", plan_stats, "stats JSON path")->required();
    plan->add_option("--alpha", plan_alpha, "smoothing exponent");

    // noise-preview
    auto* preview = app.add_subcommand("noise-preview", "corrupted training triples as JSONL");
    std::string pv_corpus, pv_lang, pv_vocab, pv_config;
    uint64_t pv_seed = 1;
    int64_t pv_count = 5;
    preview->add_option("--corpus", pv_corpus, "JSONL corpus path")->required();
    preview->add_option("--language", pv_lang, "language tag")->required();
    preview->add_option("--vocab", pv_vocab, "vocabulary path")->required();
    preview->add_option("--config", pv_config, "run config (noise.* keys)");
    preview->add_option("--seed", pv_seed, "rng seed");
    preview->add_option("-n,--count", pv_count, "instances to preview");

    // pretrain
    auto* pretrain = app.add_subcommand("pretrain", "denoising pre-training");
    std::string pt_config, pt_out;
    bool pt_resume = false;
    pretrain->add_option("--config", pt_config, "run config path")->required();
    pretrain->add_option("--out", pt_out, "output directory")->required();
    pretrain->add_flag("--resume", pt_resume, "continue from --out's last checkpoint");

    // finetune
    auto* finetune = app.add_subcommand("finetune", "task fine-tuning");
    std::string ft_task, ft_config, ft_init, ft_out;
    finetune->add_option("--task", ft_task, "generation|classify-single|classify-pair")
        ->required();
    finetune->add_option("--config", ft_config, "run config path")->required();
    finetune->add_option("--init", ft_init, "initial checkpoint (default: fresh init)");
    finetune->add_option("--out", ft_out, "output directory")->required();

    // generate
    auto* generate = app.add_subcommand("generate", "decode with a trained model");
    std::string gen_ckpt, gen_vocab, gen_lang, gen_input;
    int gen_beam = 5;
    int64_t gen_max_len = 0;
    generate->add_option("--ckpt", gen_ckpt, "checkpoint path")->required();
    generate->add_option("--vocab", gen_vocab, "vocabulary path")->required();
    generate->add_option("--target-lang", gen_lang, "decoder language id")->required();
    generate->add_option("--beam", gen_beam, "beam size (1 = greedy)");
    generate->add_option("--max-len", gen_max_len, "generation cap (default model limit)");
    generate->add_option("--input", gen_input, "one source per line")->required();

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "generation metrics");
    std::string ev_metric, ev_hyp, ev_ref, ev_profile = "mini";
    evaluate->add_option("--metric", ev_metric, "bleu|smoothed-bleu4|em|codebleu")->required();
    evaluate->add_option("--hyp", ev_hyp, "hypothesis file, one per line")->required();
    evaluate->add_option("--ref", ev_ref, "reference file, one per line")->required();
    evaluate->add_option("--lang-profile", ev_profile, "code profile for codebleu");

    // selfcheck
    auto* selfcheck = app.add_subcommand("selfcheck", "acceptance property suite");
    std::string sc_scratch = "selfcheck_scratch";
    selfcheck->add_option("--scratch", sc_scratch, "scratch directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (threads > 0) {
            plbk::kern::set_threads(threads);
        }
        if (stats->parsed()) {
            return cmd_stats(stats_corpora, stats_vocab, stats_out, manifest_path);
        }
        if (traintok->parsed()) {
            return cmd_train_tokenizer(tok_corpora, tok_vocab_size, tok_fraction, tok_seed,
                                       tok_langs, tok_out, manifest_path);
        }
        if (plan->parsed()) return cmd_plan(plan_stats, plan_alpha, manifest_path);
        if (preview->parsed()) {
            return cmd_noise_preview(pv_corpus, pv_lang, pv_vocab, pv_config, pv_seed, pv_count,
                                     manifest_path);
        }
        if (pretrain->parsed()) return cmd_pretrain(pt_config, pt_out, pt_resume, manifest_path);
        if (finetune->parsed()) {
            return cmd_finetune(ft_task, ft_config, ft_init, ft_out, manifest_path);
        }
        if (generate->parsed()) {
            return cmd_generate(gen_ckpt, gen_vocab, gen_lang, gen_beam, gen_max_len, gen_input,
                                manifest_path);
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(ev_metric, ev_hyp, ev_ref, ev_profile, manifest_path);
        }
        if (selfcheck->parsed()) return cmd_selfcheck(sc_scratch);
    } catch (const std::exception& e) {
        emit_error(e.what());
        return 1;
    }
    return 0;
}
