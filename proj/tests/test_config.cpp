#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "plbk/config.hpp"
#include "plbk/manifest.hpp"
#include "plbk/tokenizer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace plbk;
namespace fs = std::filesystem;

TEST_CASE("key-value parsing with comments and overrides") {
    const auto cfg = KVConfig::parse_text(
        "# a comment\n"
        "model.d_model = 64\n"
        "\n"
        "train.peak_lr = 3e-4\n"
        "model.d_model = 128\n" // later wins
        "flags.on = true\n");
    CHECK(cfg.get_int("model.d_model", 0) == 128);
    CHECK(cfg.get_real("train.peak_lr", 0) == 3e-4);
    CHECK(cfg.get_bool("flags.on", false));
    CHECK(cfg.get_string("missing", "fallback") == "fallback");
    CHECK_THROWS_AS(cfg.require_string("missing"), Error);
}

TEST_CASE("malformed lines and bad types are errors") {
    CHECK_THROWS_AS(KVConfig::parse_text("just words\n"), Error);
    CHECK_THROWS_AS(KVConfig::parse_text("= value\n"), Error);
    const auto cfg = KVConfig::parse_text("k = not_a_number\n");
    CHECK_THROWS_AS(cfg.get_int("k", 0), Error);
    CHECK_THROWS_AS(cfg.get_real("k", 0), Error);
    CHECK_THROWS_AS(cfg.get_bool("k", false), Error);
}

TEST_CASE("presets expand in place and later keys override them") {
    const auto cfg = KVConfig::parse_text(
        "preset = desk\n"
        "train.total_steps = 77\n");
    CHECK(cfg.get_int("model.d_model", 0) == 64);       // from the preset
    CHECK(cfg.get_int("train.total_steps", 0) == 77);   // overridden
    CHECK(cfg.get_real("noise.mask_ratio", 0) == 0.35);

    const auto paper = KVConfig::parse_text("preset = paper-pretrain\n");
    CHECK(paper.get_int("model.enc_layers", 0) == 6);
    CHECK(paper.get_int("model.d_model", 0) == 768);
    CHECK(paper.get_int("model.heads", 0) == 12);
    CHECK(paper.get_int("model.d_ff", 0) == 3072);
    CHECK(paper.get_int("train.total_steps", 0) == 100000);
    CHECK(paper.get_int("train.batch_size", 0) == 2048);
    CHECK(paper.get_real("train.beta2", 0) == 0.98);
    CHECK(paper.get_real("train.adam_eps", 0) == 1e-6);
    CHECK(paper.get_int("tokenizer.vocab_size", 0) == 50000);

    const auto fine = KVConfig::parse_text("preset = paper-finetune\n");
    CHECK(fine.get_int("train.warmup_steps", 0) == 2500);
    CHECK(fine.get_real("train.peak_lr", 0) == 3e-5);
    CHECK(fine.get_int("train.batch_size", 0) == 32);

    CHECK_THROWS_AS(KVConfig::parse_text("preset = no-such-preset\n"), Error);
}

TEST_CASE("comma lists and key validation") {
    const auto cfg = KVConfig::parse_text(
        "data.languages = java, python ,en_XX\n"
        "data.corpus.java = a.jsonl\n");
    const auto langs = cfg.get_list("data.languages");
    REQUIRE(langs.size() == 3);
    CHECK(langs[0] == "java");
    CHECK(langs[1] == "python");
    CHECK(langs[2] == "en_XX");

    cfg.validate_keys({"data.languages", "data.corpus.*"});
    CHECK_THROWS_AS(cfg.validate_keys({"data.languages"}), Error);
}

TEST_CASE("file digests are stable for content, different for different content") {
    const auto p1 = (fs::temp_directory_path() / "plbk_digest1.txt").string();
    const auto p2 = (fs::temp_directory_path() / "plbk_digest2.txt").string();
    {
        std::ofstream(p1) << "identical bytes";
        std::ofstream(p2) << "identical bytes";
    }
    CHECK(fnv1a64_file(p1) == fnv1a64_file(p2));
    {
        std::ofstream(p2) << "different bytes";
    }
    CHECK(fnv1a64_file(p1) != fnv1a64_file(p2));
    std::remove(p1.c_str());
    std::remove(p2.c_str());
    CHECK_THROWS_AS(fnv1a64_file("/no/such/file"), Error);
}

TEST_CASE("manifest serializes command, seed, config, digests, outputs") {
    const auto p = (fs::temp_directory_path() / "plbk_manifest_input.txt").string();
    std::ofstream(p) << "input";
    RunManifest manifest;
    manifest.command = "train-tokenizer";
    manifest.seed = 42;
    manifest.config["vocab_size"] = "2000";
    manifest.add_input(p);
    manifest.outputs.push_back("vocab.json");
    const auto json = manifest.to_json();
    std::remove(p.c_str());
    CHECK(json.find("\"train-tokenizer\"") != std::string::npos);
    CHECK(json.find("\"seed\": 42") != std::string::npos);
    CHECK(json.find("vocab.json") != std::string::npos);
    CHECK(json.find(p) != std::string::npos);
}

TEST_CASE("identical manifests imply identical artifacts for the tokenizer") {
    // the reproducibility contract behind the manifest: same inputs + same
    // seed give byte-identical serialized vocabularies
    std::vector<RawInstance> corpus;
    for (int i = 0; i < 30; ++i) {
        corpus.push_back({"line number " + std::to_string(i % 7), "x", ""});
    }
    const auto v1 = Vocabulary::train(corpus, 100, 0.5, 9);
    const auto v2 = Vocabulary::train(corpus, 100, 0.5, 9);
    CHECK(v1.to_json() == v2.to_json());
}
