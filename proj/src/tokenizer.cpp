#include "plbk/tokenizer.hpp"

#include "json.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace plbk {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<std::string> whitespace_split(const std::string& text) {
    std::vector<std::string> words;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        size_t b = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > b) words.push_back(text.substr(b, i - b));
    }
    return words;
}

std::string normalize_whitespace(const std::string& text) {
    std::string out;
    for (const auto& w : whitespace_split(text)) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

std::vector<std::string> utf8_chars(const std::string& s) {
    std::vector<std::string> chars;
    size_t i = 0;
    while (i < s.size()) {
        const unsigned char c = static_cast<unsigned char>(s[i]);
        size_t len = 1;
        if ((c & 0xE0) == 0xC0) len = 2;
        else if ((c & 0xF0) == 0xE0) len = 3;
        else if ((c & 0xF8) == 0xF0) len = 4;
        if (i + len > s.size()) len = 1;
        // continuation bytes must match or we fall back to a single byte
        for (size_t k = 1; k < len; ++k) {
            if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) {
                len = 1;
                break;
            }
        }
        chars.push_back(s.substr(i, len));
        i += len;
    }
    return chars;
}

std::string language_symbol(const std::string& tag) {
    if (!tag.empty() && tag.front() == '<' && tag.back() == '>') return tag;
    return "<" + tag + ">";
}

namespace {

constexpr char kPairSep = '\x01';

std::string pair_key(const std::string& a, const std::string& b) {
    return a + kPairSep + b;
}

} // namespace

Vocabulary Vocabulary::train(const std::vector<RawInstance>& corpus, int64_t vocab_size,
                             double sample_fraction, uint64_t seed) {
    if (corpus.empty()) throw Error("tokenizer training requires a non-empty corpus");
    if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) {
        throw Error("sample_fraction must be in (0, 1]");
    }

    // seeded sample of floor(fraction * n) instances, at least one
    std::vector<size_t> order(corpus.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    size_t n_sample = static_cast<size_t>(static_cast<double>(corpus.size()) * sample_fraction);
    if (n_sample == 0) n_sample = 1;
    if (n_sample > corpus.size()) n_sample = corpus.size();

    // word frequency table over the sample, with the word marker prefixed
    std::map<std::vector<std::string>, int64_t> words; // symbol sequence -> freq
    std::set<std::string> alphabet;
    for (size_t si = 0; si < n_sample; ++si) {
        const auto& inst = corpus[order[si]];
        for (const auto& w : whitespace_split(inst.text)) {
            std::vector<std::string> syms;
            syms.push_back(tok::kWordMarker);
            for (auto& ch : utf8_chars(w)) syms.push_back(std::move(ch));
            for (const auto& s : syms) alphabet.insert(s);
            words[std::move(syms)] += 1;
        }
    }

    const int64_t n_specials = tok::kFirstPieceId;
    if (vocab_size < static_cast<int64_t>(alphabet.size()) + n_specials) {
        throw Error("vocab_size " + std::to_string(vocab_size) + " too small: needs at least " +
                    std::to_string(alphabet.size() + n_specials) +
                    " (specials + single-character alphabet)");
    }

    Vocabulary vocab;
    for (const char* s : tok::kSpecialNames) vocab.id_to_piece_.emplace_back(s);
    for (const auto& ch : alphabet) vocab.id_to_piece_.push_back(ch); // sorted by std::set

    std::set<std::string> piece_set(vocab.id_to_piece_.begin(), vocab.id_to_piece_.end());
    const int64_t max_learned = vocab_size;
    int64_t learned = static_cast<int64_t>(alphabet.size());

    while (learned < max_learned) {
        // count adjacent pairs weighted by word frequency
        std::map<std::pair<std::string, std::string>, int64_t> pair_counts;
        for (const auto& [syms, freq] : words) {
            for (size_t i = 0; i + 1 < syms.size(); ++i) {
                pair_counts[{syms[i], syms[i + 1]}] += freq;
            }
        }
        if (pair_counts.empty()) break;
        // max count; ties -> lexicographically smallest pair. std::map
        // iterates pairs in sorted order, so the first maximum wins.
        auto best = pair_counts.begin();
        for (auto it = pair_counts.begin(); it != pair_counts.end(); ++it) {
            if (it->second > best->second) best = it;
        }
        if (best->second < 2) break; // merging singletons gains nothing

        const auto [left, right] = best->first;
        const std::string merged = left + right;
        vocab.merges_.emplace_back(left, right);
        if (!piece_set.count(merged)) {
            vocab.id_to_piece_.push_back(merged);
            piece_set.insert(merged);
            ++learned;
        }

        // apply the merge to every word
        std::map<std::vector<std::string>, int64_t> next;
        for (const auto& [syms, freq] : words) {
            std::vector<std::string> out;
            out.reserve(syms.size());
            size_t i = 0;
            while (i < syms.size()) {
                if (i + 1 < syms.size() && syms[i] == left && syms[i + 1] == right) {
                    out.push_back(merged);
                    i += 2;
                } else {
                    out.push_back(syms[i]);
                    ++i;
                }
            }
            next[std::move(out)] += freq;
        }
        words = std::move(next);
    }

    vocab.base_size_ = static_cast<int64_t>(vocab.id_to_piece_.size());
    vocab.rebuild_indexes();
    return vocab;
}

void Vocabulary::rebuild_indexes() {
    piece_to_id_.clear();
    for (size_t i = 0; i < id_to_piece_.size(); ++i) {
        piece_to_id_[id_to_piece_[i]] = static_cast<int>(i);
    }
    merge_rank_.clear();
    for (size_t r = 0; r < merges_.size(); ++r) {
        merge_rank_[pair_key(merges_[r].first, merges_[r].second)] = static_cast<int>(r);
    }
}

std::vector<std::string> Vocabulary::segment_word(const std::string& word) const {
    std::vector<std::string> syms;
    syms.push_back(tok::kWordMarker);
    for (auto& ch : utf8_chars(word)) syms.push_back(std::move(ch));

    // standard BPE encode: repeatedly apply the lowest-ranked merge present
    while (syms.size() >= 2) {
        int best_rank = -1;
        size_t best_pos = 0;
        for (size_t i = 0; i + 1 < syms.size(); ++i) {
            auto it = merge_rank_.find(pair_key(syms[i], syms[i + 1]));
            if (it == merge_rank_.end()) continue;
            if (best_rank < 0 || it->second < best_rank) {
                best_rank = it->second;
                best_pos = i;
            }
        }
        if (best_rank < 0) break;
        const std::string merged = syms[best_pos] + syms[best_pos + 1];
        syms[best_pos] = merged;
        syms.erase(syms.begin() + static_cast<ptrdiff_t>(best_pos) + 1);
    }
    return syms;
}

std::vector<int> Vocabulary::encode(const std::string& text) const {
    if (id_to_piece_.empty()) throw Error("vocabulary is not trained");
    std::vector<int> ids;
    for (const auto& word : whitespace_split(text)) {
        for (const auto& piece : segment_word(word)) {
            // encode emits only learned pieces plus <unk>; text that spells
            // a special or language-id symbol maps through the fallback
            auto it = piece_to_id_.find(piece);
            if (it != piece_to_id_.end() && it->second >= tok::kFirstPieceId &&
                !is_language_id(it->second)) {
                ids.push_back(it->second);
            } else {
                ids.push_back(tok::kUnk);
            }
        }
    }
    return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string joined;
    for (int id : ids) {
        if (id == tok::kPad) continue;
        joined += piece(id);
    }
    // marker -> space, then trim the leading one
    std::string out;
    size_t i = 0;
    const std::string marker = tok::kWordMarker;
    while (i < joined.size()) {
        if (joined.compare(i, marker.size(), marker) == 0) {
            if (!out.empty()) out += ' ';
            i += marker.size();
        } else {
            out += joined[i];
            ++i;
        }
    }
    return out;
}

void Vocabulary::add_language_ids(const std::vector<std::string>& languages) {
    std::set<std::string> seen;
    for (const auto& lang : languages) {
        const std::string sym = language_symbol(lang);
        if (seen.count(sym) || piece_to_id_.count(sym)) {
            throw Error("duplicate language id: " + sym);
        }
        seen.insert(sym);
    }
    for (const auto& lang : languages) {
        const std::string sym = language_symbol(lang);
        piece_to_id_[sym] = static_cast<int>(id_to_piece_.size());
        id_to_piece_.push_back(sym);
        language_symbols_.push_back(sym);
    }
}

int Vocabulary::language_id(const std::string& language) const {
    const std::string sym = language_symbol(language);
    auto it = piece_to_id_.find(sym);
    if (it == piece_to_id_.end() || !is_language_id(it->second)) {
        throw Error("language id not registered: " + sym);
    }
    return it->second;
}

bool Vocabulary::is_language_id(int id) const {
    return id >= base_size_ && id < static_cast<int64_t>(id_to_piece_.size());
}

bool Vocabulary::has_language(const std::string& language) const {
    auto it = piece_to_id_.find(language_symbol(language));
    return it != piece_to_id_.end() && is_language_id(it->second);
}

const std::string& Vocabulary::piece(int id) const {
    if (id < 0 || id >= static_cast<int>(id_to_piece_.size())) {
        throw Error("token id out of range: " + std::to_string(id));
    }
    return id_to_piece_[static_cast<size_t>(id)];
}

std::string Vocabulary::to_json() const {
    ordered_json obj;
    obj["version"] = 1;
    obj["specials"] = ordered_json::object();
    for (int i = 0; i < tok::kFirstPieceId; ++i) obj["specials"][tok::kSpecialNames[i]] = i;
    obj["pieces"] = ordered_json::array();
    for (int64_t i = tok::kFirstPieceId; i < base_size_; ++i) {
        obj["pieces"].push_back(id_to_piece_[static_cast<size_t>(i)]);
    }
    obj["merges"] = ordered_json::array();
    for (const auto& [l, r] : merges_) obj["merges"].push_back(ordered_json::array({l, r}));
    obj["language_ids"] = language_symbols_;
    return obj.dump(2);
}

Vocabulary Vocabulary::from_json(const std::string& json_text) {
    json obj = json::parse(json_text, nullptr, false);
    if (obj.is_discarded() || !obj.is_object() || !obj.contains("pieces")) {
        throw Error("invalid vocabulary JSON");
    }
    Vocabulary vocab;
    for (const char* s : tok::kSpecialNames) vocab.id_to_piece_.emplace_back(s);
    for (const auto& p : obj["pieces"]) vocab.id_to_piece_.push_back(p.get<std::string>());
    vocab.base_size_ = static_cast<int64_t>(vocab.id_to_piece_.size());
    if (obj.contains("merges")) {
        for (const auto& m : obj["merges"]) {
            vocab.merges_.emplace_back(m[0].get<std::string>(), m[1].get<std::string>());
        }
    }
    vocab.rebuild_indexes();
    if (obj.contains("language_ids")) {
        std::vector<std::string> langs;
        for (const auto& l : obj["language_ids"]) langs.push_back(l.get<std::string>());
        vocab.add_language_ids(langs);
    }
    return vocab;
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot open for writing: " + path);
    out << to_json() << "\n";
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("vocabulary file not found: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

} // namespace plbk
