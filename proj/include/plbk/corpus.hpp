#pragma once

#include "plbk/rng.hpp"
#include "plbk/tensor.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace plbk {

class Vocabulary;

// One language-tagged text record: a function body or an NL passage.
struct RawInstance {
    std::string text;
    std::string language;
    std::string source_id;
};

struct CorpusStats {
    std::map<std::string, int64_t> counts;
    std::map<std::string, int64_t> token_counts;

    std::string to_json() const;
    static CorpusStats from_json(const std::string& json_text);
};

struct IngestResult {
    std::vector<RawInstance> instances;
    int64_t skipped = 0; // malformed lines recorded, not fatal
};

// Reads UTF-8 JSONL, one object per line, required key "text", optional
// "id". Preserves file order. Fails only when the file is missing or every
// line is malformed.
IngestResult ingest_jsonl(const std::string& path, const std::string& language);

void write_jsonl(const std::string& path, const std::vector<RawInstance>& instances);

// token_counts are subword counts when a vocabulary is supplied, otherwise
// whitespace-token counts.
CorpusStats compute_stats(const std::map<std::string, std::vector<RawInstance>>& corpora,
                          const Vocabulary* vocab = nullptr);

std::vector<int> truncate_ids(const std::vector<int>& ids, int64_t max_len);

// Seeded shuffle, then the first floor(n * valid_fraction) records become
// the validation split.
struct SplitResult {
    std::vector<RawInstance> train;
    std::vector<RawInstance> valid;
};
SplitResult split_corpus(const std::vector<RawInstance>& instances, double valid_fraction,
                         uint64_t seed);

// Fixture helper: cuts a source file of the bundled mini language into one
// instance per top-level `fn` declaration (brace counting, no full parse).
std::vector<std::string> split_mini_functions(const std::string& source);

} // namespace plbk
