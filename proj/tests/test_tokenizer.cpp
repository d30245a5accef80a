#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "plbk/tokenizer.hpp"

#include <algorithm>
#include <set>

using namespace plbk;

namespace {

std::vector<RawInstance> corpus_of(const std::vector<std::string>& texts) {
    std::vector<RawInstance> out;
    for (const auto& t : texts) out.push_back({t, "x", ""});
    return out;
}

} // namespace

TEST_CASE("repeated 'ab' corpus merges ab pieces; encoding shrinks") {
    const auto vocab = Vocabulary::train(corpus_of({"ababab"}), 30, 1.0, 1);
    const auto ids = vocab.encode("ababab");
    CHECK(ids.size() < 6); // pair-frequency oracle: (a,b) merges first
    // id space stays contiguous and decodable
    for (int id : ids) {
        CHECK(id >= tok::kFirstPieceId);
        CHECK(id < vocab.size());
    }
    CHECK(vocab.decode(ids) == "ababab");
}

TEST_CASE("encode of the empty string is empty") {
    const auto vocab = Vocabulary::train(corpus_of({"abc"}), 20, 1.0, 1);
    CHECK(vocab.encode("").empty());
    CHECK(vocab.encode("   \t\n").empty());
}

TEST_CASE("round trip under declared whitespace normalization") {
    const auto vocab =
        Vocabulary::train(corpus_of({"return x + 1;", "return y + 2;", "while x > 0"}), 200, 1.0, 1);
    CHECK(vocab.decode(vocab.encode("return x + 1;")) == "return x + 1;");
    CHECK(vocab.decode(vocab.encode("  return   x  ")) == "return x");
}

TEST_CASE("a whole-word piece encodes to exactly one id") {
    const auto vocab = Vocabulary::train(corpus_of({"foo foo foo foo"}), 40, 1.0, 1);
    const auto ids = vocab.encode("foo");
    REQUIRE(ids.size() == 1);
    CHECK(vocab.piece(ids[0]) == std::string(tok::kWordMarker) + "foo");
}

TEST_CASE("unknown characters map through the fallback, never dropped") {
    const auto vocab = Vocabulary::train(corpus_of({"plain ascii text"}), 100, 1.0, 1);
    const auto ids = vocab.encode("plain \xCF\x88 text"); // psi never seen in training
    CHECK(std::count(ids.begin(), ids.end(), tok::kUnk) == 1);
    // no specials besides unk, no language ids
    for (int id : ids) {
        CHECK(id != tok::kPad);
        CHECK(id != tok::kBos);
        CHECK(id != tok::kEos);
        CHECK(id != tok::kMask);
        CHECK_FALSE(vocab.is_language_id(id));
    }
}

TEST_CASE("language ids append after all base pieces in order") {
    auto vocab = Vocabulary::train(corpus_of({"some corpus text"}), 100, 1.0, 1);
    const int64_t base = vocab.size();
    vocab.add_language_ids({"java", "python", "en_XX"});
    CHECK(vocab.language_id("java") == base);
    CHECK(vocab.language_id("python") == base + 1);
    CHECK(vocab.language_id("en_XX") == base + 2);
    CHECK(vocab.piece(static_cast<int>(base)) == "<java>");

    SUBCASE("appending nothing changes nothing") {
        const std::string before = vocab.to_json();
        vocab.add_language_ids({});
        CHECK(vocab.to_json() == before);
    }
    SUBCASE("duplicates are fatal") {
        CHECK_THROWS_AS(vocab.add_language_ids({"java"}), Error);
        CHECK_THROWS_AS(vocab.add_language_ids({"<python>"}), Error);
    }
    SUBCASE("a later language is usable as a decoder prefix") {
        vocab.add_language_ids({"<ruby>"});
        CHECK(vocab.language_id("ruby") == base + 3);
        CHECK(vocab.is_language_id(static_cast<int>(base + 3)));
    }
}

TEST_CASE("special token layout is pinned") {
    const auto vocab = Vocabulary::train(corpus_of({"x"}), 10, 1.0, 1);
    CHECK(vocab.piece(tok::kBos) == "<s>");
    CHECK(vocab.piece(tok::kPad) == "<pad>");
    CHECK(vocab.piece(tok::kEos) == "</s>");
    CHECK(vocab.piece(tok::kUnk) == "<unk>");
    CHECK(vocab.piece(tok::kMask) == "<mask>");
}

TEST_CASE("training is deterministic: byte-identical serialization") {
    const auto corpus = corpus_of({"the quick brown fox", "the slow brown dog",
                                   "a quick brown cat", "fn f(x) { return x; }"});
    const auto v1 = Vocabulary::train(corpus, 60, 0.8, 42);
    const auto v2 = Vocabulary::train(corpus, 60, 0.8, 42);
    CHECK(v1.to_json() == v2.to_json());
    const auto v3 = Vocabulary::train(corpus, 60, 0.8, 43);
    CHECK(v3.size() > 0); // different seed may sample differently; must still train
}

TEST_CASE("serialization round trip preserves behavior byte-for-byte") {
    auto vocab = Vocabulary::train(corpus_of({"serialize me carefully", "with merges included"}),
                                   80, 1.0, 9);
    vocab.add_language_ids({"java"});
    const std::string json1 = vocab.to_json();
    const Vocabulary reloaded = Vocabulary::from_json(json1);
    CHECK(reloaded.to_json() == json1);
    CHECK(reloaded.encode("serialize me") == vocab.encode("serialize me"));
    CHECK(reloaded.language_id("java") == vocab.language_id("java"));
}

TEST_CASE("larger vocab budget never lengthens a training sentence") {
    const std::vector<std::string> sentences = {"abra cadabra abra", "cadabra abra banana",
                                                "banana abra cadabra"};
    const auto corpus = corpus_of(sentences);
    const auto small = Vocabulary::train(corpus, 20, 1.0, 3);
    const auto large = Vocabulary::train(corpus, 60, 1.0, 3);
    for (const auto& s : sentences) {
        CHECK(large.encode(s).size() <= small.encode(s).size());
    }
    // learned pieces never exceed the requested budget
    CHECK(small.base_size() - tok::kFirstPieceId <= 20);
    CHECK(large.base_size() - tok::kFirstPieceId <= 60);
}

TEST_CASE("ids stay below V and every id decodes") {
    auto vocab = Vocabulary::train(corpus_of({"coverage check for ids"}), 60, 1.0, 4);
    vocab.add_language_ids({"mini"});
    for (int id = 0; id < vocab.size(); ++id) {
        CHECK_FALSE(vocab.piece(id).empty());
    }
    CHECK_THROWS_AS(vocab.piece(static_cast<int>(vocab.size())), Error);
    for (int id : vocab.encode("coverage check unseen wording")) {
        CHECK(id < vocab.size());
    }
}

TEST_CASE("vocab budget below specials plus alphabet is fatal") {
    CHECK_THROWS_AS(Vocabulary::train(corpus_of({"abcdefghij"}), 3, 1.0, 1), Error);
}

TEST_CASE("training on an empty corpus is fatal") {
    CHECK_THROWS_AS(Vocabulary::train({}, 100, 1.0, 1), Error);
    CHECK_THROWS_AS(Vocabulary::train(corpus_of({"x"}), 100, 0.0, 1), Error);
}

TEST_CASE("seeded sample fraction controls what training sees") {
    // fraction 0.2 of 100 instances: exactly 20 sampled, seeded
    std::vector<RawInstance> corpus;
    for (int i = 0; i < 100; ++i) corpus.push_back({"word" + std::to_string(i), "x", ""});
    const auto v1 = Vocabulary::train(corpus, 3000, 0.2, 5);
    const auto v2 = Vocabulary::train(corpus, 3000, 0.2, 5);
    CHECK(v1.to_json() == v2.to_json());
    // with 100 distinct words and only 20 sampled, full-corpus training
    // must see strictly more alphabet or merges
    const auto vfull = Vocabulary::train(corpus, 3000, 1.0, 5);
    CHECK(vfull.base_size() > v1.base_size());
}
