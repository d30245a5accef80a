#pragma once

#include "plbk/corpus.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace plbk {

// Fixed special-token layout; base pieces start at kFirstPieceId and
// language-id symbols occupy the highest id range.
namespace tok {
constexpr int kBos = 0;  // <s>
constexpr int kPad = 1;  // <pad>
constexpr int kEos = 2;  // </s>
constexpr int kUnk = 3;  // <unk>
constexpr int kMask = 4; // <mask>
constexpr int kFirstPieceId = 5;
constexpr const char* kSpecialNames[5] = {"<s>", "<pad>", "</s>", "<unk>", "<mask>"};
// Marks word-initial pieces; pre-tokenization splits on whitespace and
// prefixes this to every word, which makes detokenization reversible.
constexpr const char* kWordMarker = "\xe2\x96\x81"; // U+2581
} // namespace tok

// Subword vocabulary learned by greedy byte-pair merging. Ties on pair
// frequency go to the lexicographically smallest (left, right) pair, so
// training is fully deterministic given (corpus, vocab_size, fraction, seed).
class Vocabulary {
public:
    Vocabulary() = default;

    // vocab_size bounds the learned pieces (alphabet + merges). Training
    // runs on a seeded sample of ceil-free floor(fraction * n) instances
    // (at least one).
    static Vocabulary train(const std::vector<RawInstance>& corpus, int64_t vocab_size,
                            double sample_fraction, uint64_t seed);

    std::vector<int> encode(const std::string& text) const;
    std::string decode(const std::vector<int>& ids) const;

    // Appends language-id symbols (e.g. "<java>") after all base pieces,
    // in the given order. Tags may be bare ("java") or bracketed.
    void add_language_ids(const std::vector<std::string>& languages);

    int language_id(const std::string& language) const; // throws if missing
    bool is_language_id(int id) const;
    bool has_language(const std::string& language) const;

    int64_t size() const { return static_cast<int64_t>(id_to_piece_.size()); }
    int64_t base_size() const { return base_size_; }
    const std::string& piece(int id) const;
    const std::vector<std::string>& language_symbols() const { return language_symbols_; }

    std::string to_json() const; // stable ordering: re-serialization is byte-identical
    static Vocabulary from_json(const std::string& json_text);

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);

private:
    // id_to_piece_: specials, then alphabet (sorted), then merge products,
    // then language ids.
    std::vector<std::string> id_to_piece_;
    std::unordered_map<std::string, int> piece_to_id_;
    std::vector<std::pair<std::string, std::string>> merges_;
    std::unordered_map<std::string, int> merge_rank_; // "left\x01right" -> rank
    std::vector<std::string> language_symbols_;
    int64_t base_size_ = 0; // specials + learned pieces (language ids excluded)

    void rebuild_indexes();
    std::vector<std::string> segment_word(const std::string& word) const;
};

// Splits on whitespace runs; the declared normalization collapses internal
// whitespace to single spaces and trims the ends.
std::vector<std::string> whitespace_split(const std::string& text);
std::string normalize_whitespace(const std::string& text);

// UTF-8 code points as individual strings (invalid bytes pass through as
// single-byte strings).
std::vector<std::string> utf8_chars(const std::string& s);

std::string language_symbol(const std::string& tag);

} // namespace plbk
