#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "plbk/corpus.hpp"
#include "plbk/tokenizer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

using namespace plbk;
namespace fs = std::filesystem;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name, const std::string& content)
        : path((fs::temp_directory_path() / name).string()) {
        std::ofstream out(path);
        out << content;
    }
    ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("ingest reads one instance per line in order") {
    TempFile f("plbk_ingest1.jsonl",
               "{\"text\":\"def f(): return 1\"}\n{\"text\":\"def g(): pass\"}\n");
    const auto result = ingest_jsonl(f.path, "python");
    REQUIRE(result.instances.size() == 2);
    CHECK(result.skipped == 0);
    CHECK(result.instances[0].text == "def f(): return 1");
    CHECK(result.instances[1].text == "def g(): pass");
    CHECK(result.instances[0].language == "python");
}

TEST_CASE("ingest of an empty file is an empty sequence with zero skips") {
    TempFile f("plbk_ingest2.jsonl", "");
    const auto result = ingest_jsonl(f.path, "java");
    CHECK(result.instances.empty());
    CHECK(result.skipped == 0);
}

TEST_CASE("malformed lines are counted and skipped") {
    TempFile f("plbk_ingest3.jsonl",
               "{\"text\":\"a\"}\nnot json at all\n{\"text\":\"b\"}\n");
    const auto result = ingest_jsonl(f.path, "java");
    CHECK(result.instances.size() == 2);
    CHECK(result.skipped == 1);
}

TEST_CASE("all lines malformed is fatal, missing file is fatal") {
    TempFile f("plbk_ingest4.jsonl", "garbage\n{\"no_text\":1}\n");
    CHECK_THROWS_AS(ingest_jsonl(f.path, "java"), Error);
    CHECK_THROWS_AS(ingest_jsonl("/nonexistent/path.jsonl", "java"), Error);
}

TEST_CASE("write/ingest round trip preserves texts") {
    std::vector<RawInstance> instances = {
        {"fn a() { return 1; }", "mini", "id-1"},
        {"text with \"quotes\" and \\ slashes", "mini", "id-2"},
        {"unicode \xe2\x96\x81 marker", "mini", "id-3"},
    };
    const std::string path = (fs::temp_directory_path() / "plbk_roundtrip.jsonl").string();
    write_jsonl(path, instances);
    const auto result = ingest_jsonl(path, "mini");
    std::remove(path.c_str());
    REQUIRE(result.instances.size() == instances.size());
    for (size_t i = 0; i < instances.size(); ++i) {
        CHECK(result.instances[i].text == instances[i].text);
        CHECK(result.instances[i].source_id == instances[i].source_id);
    }
}

TEST_CASE("compute_stats counts instances per language") {
    std::map<std::string, std::vector<RawInstance>> corpora;
    for (int i = 0; i < 3; ++i) corpora["java"].push_back({"x " + std::to_string(i), "java", ""});
    corpora["en_XX"].push_back({"hello world", "en_XX", ""});
    const auto stats = compute_stats(corpora);
    CHECK(stats.counts.at("java") == 3);
    CHECK(stats.counts.at("en_XX") == 1);
    CHECK(stats.token_counts.at("en_XX") == 2); // whitespace tokens without a vocabulary
}

TEST_CASE("stats with a vocabulary counts subwords instead of whitespace tokens") {
    std::map<std::string, std::vector<RawInstance>> corpora;
    corpora["x"] = {{"alpha beta", "x", ""}};
    const auto vocab = Vocabulary::train(corpora["x"], 60, 1.0, 1);
    const auto plain = compute_stats(corpora);
    const auto subword = compute_stats(corpora, &vocab);
    CHECK(plain.token_counts.at("x") == 2);
    CHECK(subword.token_counts.at("x") ==
          static_cast<int64_t>(vocab.encode("alpha beta").size()));
    CHECK(subword.counts == plain.counts);
}

TEST_CASE("the 14:1 PL:NL fixture survives stats and serialization") {
    std::map<std::string, std::vector<RawInstance>> corpora;
    for (int i = 0; i < 14; ++i) corpora["pl"].push_back({"code " + std::to_string(i), "pl", ""});
    corpora["nl"].push_back({"a post", "nl", ""});
    const auto stats = compute_stats(corpora);
    CHECK(stats.counts.at("pl") == 14 * stats.counts.at("nl"));
    const auto reparsed = CorpusStats::from_json(stats.to_json());
    CHECK(reparsed.counts == stats.counts);
    CHECK(reparsed.token_counts == stats.token_counts);
}

TEST_CASE("truncate keeps the first min(len, max) ids and is idempotent") {
    std::vector<int> ids(600);
    for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
    const auto cut = truncate_ids(ids, 512);
    REQUIRE(cut.size() == 512);
    CHECK(cut.front() == 0);
    CHECK(cut.back() == 511);
    CHECK(truncate_ids(cut, 512) == cut);

    const std::vector<int> small(10, 3);
    CHECK(truncate_ids(small, 512) == small);
    CHECK(truncate_ids({}, 512).empty());
    CHECK_THROWS_AS(truncate_ids(small, 0), Error);
}

TEST_CASE("split is deterministic, sized by floor, and a disjoint union") {
    std::vector<RawInstance> instances;
    for (int i = 0; i < 10; ++i) instances.push_back({"t" + std::to_string(i), "x", ""});

    const auto a = split_corpus(instances, 0.2, 7);
    CHECK(a.train.size() == 8);
    CHECK(a.valid.size() == 2);

    std::multiset<std::string> all;
    for (const auto& r : a.train) all.insert(r.text);
    for (const auto& r : a.valid) all.insert(r.text);
    std::multiset<std::string> want;
    for (const auto& r : instances) want.insert(r.text);
    CHECK(all == want);

    const auto b = split_corpus(instances, 0.2, 7);
    CHECK(a.train.size() == b.train.size());
    for (size_t i = 0; i < a.train.size(); ++i) CHECK(a.train[i].text == b.train[i].text);

    const auto c = split_corpus(instances, 0.0, 7);
    CHECK(c.train.size() == 10);
    CHECK(c.valid.empty());

    const auto d = split_corpus(instances, 0.2, 8);
    bool differs = false;
    for (size_t i = 0; i < a.train.size() && i < d.train.size(); ++i) {
        if (a.train[i].text != d.train[i].text) differs = true;
    }
    CHECK(differs);

    CHECK_THROWS_AS(split_corpus(instances, 1.0, 7), Error);
}

TEST_CASE("mini-language fixture splitter cuts on top-level functions") {
    const std::string source =
        "fn one(x) { return x; }\n\nfn two(a, b) { if a > b { return a; } return b; }\n";
    const auto funcs = split_mini_functions(source);
    REQUIRE(funcs.size() == 2);
    CHECK(funcs[0] == "fn one(x) { return x; }");
    CHECK(funcs[1].find("fn two") == 0);
    CHECK(funcs[1].back() == '}');
}
