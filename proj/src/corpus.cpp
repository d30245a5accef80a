#include "plbk/corpus.hpp"

#include "plbk/tokenizer.hpp"

#include "json.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace plbk {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int64_t count_ws_tokens(const std::string& s) {
    std::istringstream iss(s);
    std::string tok;
    int64_t n = 0;
    while (iss >> tok) ++n;
    return n;
}

} // namespace

IngestResult ingest_jsonl(const std::string& path, const std::string& language) {
    std::ifstream in(path);
    if (!in) throw Error("corpus file not found: " + path);

    IngestResult out;
    std::string line;
    int64_t line_no = 0;
    int64_t total_lines = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue; // blank lines are not records
        ++total_lines;
        json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (obj.is_discarded() || !obj.is_object() || !obj.contains("text") ||
            !obj["text"].is_string()) {
            ++out.skipped;
            continue;
        }
        std::string text = obj["text"].get<std::string>();
        if (trim(text).empty()) {
            ++out.skipped;
            continue;
        }
        RawInstance inst;
        inst.text = std::move(text);
        inst.language = language;
        inst.source_id = obj.contains("id") && obj["id"].is_string()
                             ? obj["id"].get<std::string>()
                             : path + ":" + std::to_string(line_no);
        out.instances.push_back(std::move(inst));
    }
    if (total_lines > 0 && out.instances.empty()) {
        throw Error("all " + std::to_string(total_lines) + " lines malformed in " + path);
    }
    return out;
}

void write_jsonl(const std::string& path, const std::vector<RawInstance>& instances) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    for (const auto& inst : instances) {
        ordered_json obj;
        obj["text"] = inst.text;
        if (!inst.source_id.empty()) obj["id"] = inst.source_id;
        out << obj.dump() << "\n";
    }
}

CorpusStats compute_stats(const std::map<std::string, std::vector<RawInstance>>& corpora,
                          const Vocabulary* vocab) {
    CorpusStats stats;
    for (const auto& [lang, instances] : corpora) {
        stats.counts[lang] = static_cast<int64_t>(instances.size());
        int64_t toks = 0;
        for (const auto& inst : instances) {
            toks += vocab ? static_cast<int64_t>(vocab->encode(inst.text).size())
                          : count_ws_tokens(inst.text);
        }
        stats.token_counts[lang] = toks;
    }
    return stats;
}

std::string CorpusStats::to_json() const {
    ordered_json obj;
    obj["counts"] = ordered_json::object();
    obj["token_counts"] = ordered_json::object();
    for (const auto& [k, v] : counts) obj["counts"][k] = v;
    for (const auto& [k, v] : token_counts) obj["token_counts"][k] = v;
    return obj.dump(2);
}

CorpusStats CorpusStats::from_json(const std::string& json_text) {
    json obj = json::parse(json_text, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("counts")) {
        throw Error("invalid stats JSON: expected object with \"counts\"");
    }
    CorpusStats stats;
    for (const auto& [k, v] : obj["counts"].items()) stats.counts[k] = v.get<int64_t>();
    if (obj.contains("token_counts")) {
        for (const auto& [k, v] : obj["token_counts"].items()) {
            stats.token_counts[k] = v.get<int64_t>();
        }
    }
    return stats;
}

std::vector<int> truncate_ids(const std::vector<int>& ids, int64_t max_len) {
    if (max_len < 1) throw Error("truncate: max_len must be >= 1");
    if (static_cast<int64_t>(ids.size()) <= max_len) return ids;
    return std::vector<int>(ids.begin(), ids.begin() + max_len);
}

SplitResult split_corpus(const std::vector<RawInstance>& instances, double valid_fraction,
                         uint64_t seed) {
    if (!(valid_fraction >= 0.0 && valid_fraction < 1.0)) {
        throw Error("split: valid_fraction must be in [0, 1)");
    }
    std::vector<size_t> order(instances.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    for (size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.below(i)]);
    }
    const size_t n_valid = static_cast<size_t>(static_cast<double>(instances.size()) * valid_fraction);
    SplitResult result;
    result.valid.reserve(n_valid);
    result.train.reserve(instances.size() - n_valid);
    for (size_t i = 0; i < order.size(); ++i) {
        (i < n_valid ? result.valid : result.train).push_back(instances[order[i]]);
    }
    return result;
}

std::vector<std::string> split_mini_functions(const std::string& source) {
    std::vector<std::string> out;
    size_t i = 0;
    const size_t n = source.size();
    while (i < n) {
        size_t start = source.find("fn", i);
        // must be a token boundary, not a substring of an identifier
        while (start != std::string::npos) {
            const bool left_ok = start == 0 || std::isspace(static_cast<unsigned char>(source[start - 1])) ||
                                 source[start - 1] == '}';
            const bool right_ok = start + 2 < n && (std::isspace(static_cast<unsigned char>(source[start + 2])));
            if (left_ok && right_ok) break;
            start = source.find("fn", start + 2);
        }
        if (start == std::string::npos) break;
        size_t brace = source.find('{', start);
        if (brace == std::string::npos) break;
        int depth = 0;
        size_t end = brace;
        for (; end < n; ++end) {
            if (source[end] == '{') ++depth;
            if (source[end] == '}') {
                --depth;
                if (depth == 0) break;
            }
        }
        if (end >= n) break;
        out.push_back(trim(source.substr(start, end - start + 1)));
        i = end + 1;
    }
    return out;
}

} // namespace plbk
