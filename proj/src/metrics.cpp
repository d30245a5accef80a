#include "plbk/metrics.hpp"

#include "plbk/tokenizer.hpp"

#include <cmath>
#include <cstdio>
#include <map>

namespace plbk::metrics {

namespace {

constexpr int kMaxOrder = 4;

// n-grams joined with \x01 so multi-token grams hash as strings
std::map<std::string, int64_t> ngram_counts(const std::vector<std::string>& tokens, int n) {
    std::map<std::string, int64_t> counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (size_t i = 0; i + static_cast<size_t>(n) <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (int j = 1; j < n; ++j) {
            key += '\x01';
            key += tokens[i + static_cast<size_t>(j)];
        }
        counts[key] += 1;
    }
    return counts;
}

double brevity_penalty(int64_t hyp_len, int64_t ref_len) {
    if (hyp_len >= ref_len) return 1.0;
    if (hyp_len == 0) return 0.0;
    return std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
}

bool gram_has_keyword(const std::string& key, const std::set<std::string>& keywords) {
    size_t b = 0;
    for (;;) {
        const size_t e = key.find('\x01', b);
        const std::string tok = key.substr(b, e == std::string::npos ? e : e - b);
        if (keywords.count(tok)) return true;
        if (e == std::string::npos) return false;
        b = e + 1;
    }
}

} // namespace

std::vector<std::string> tokenize_for_bleu(const std::string& line) {
    return whitespace_split(line);
}

double corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                   const std::vector<std::vector<std::string>>& references) {
    if (hypotheses.empty()) throw Error("corpus_bleu: empty hypothesis list");
    if (hypotheses.size() != references.size()) {
        throw Error("corpus_bleu: hypothesis/reference count mismatch");
    }
    int64_t matched[kMaxOrder] = {0};
    int64_t total[kMaxOrder] = {0};
    int64_t hyp_len = 0, ref_len = 0;
    for (size_t i = 0; i < hypotheses.size(); ++i) {
        const auto& hyp = hypotheses[i];
        const auto& ref = references[i];
        hyp_len += static_cast<int64_t>(hyp.size());
        ref_len += static_cast<int64_t>(ref.size());
        for (int n = 1; n <= kMaxOrder; ++n) {
            const auto hyp_grams = ngram_counts(hyp, n);
            const auto ref_grams = ngram_counts(ref, n);
            for (const auto& [gram, count] : hyp_grams) {
                total[n - 1] += count;
                auto it = ref_grams.find(gram);
                if (it != ref_grams.end()) matched[n - 1] += std::min(count, it->second);
            }
        }
    }
    double log_precision = 0.0;
    int orders_used = 0;
    for (int n = 0; n < kMaxOrder; ++n) {
        if (total[n] == 0) continue; // corpus too short for this order: vacuous
        if (matched[n] == 0) return 0.0;
        log_precision += std::log(static_cast<double>(matched[n]) / static_cast<double>(total[n]));
        ++orders_used;
    }
    if (orders_used == 0) return 0.0; // nothing but empty hypotheses
    return 100.0 * brevity_penalty(hyp_len, ref_len) *
           std::exp(log_precision / static_cast<double>(orders_used));
}

double smoothed_bleu4(const std::vector<std::string>& hypothesis,
                      const std::vector<std::string>& reference) {
    if (reference.empty()) throw Error("smoothed_bleu4: empty reference");
    if (hypothesis.empty()) return 0.0;
    double log_precision = 0.0;
    for (int n = 1; n <= kMaxOrder; ++n) {
        const auto hyp_grams = ngram_counts(hypothesis, n);
        const auto ref_grams = ngram_counts(reference, n);
        int64_t matched = 0, total = 0;
        for (const auto& [gram, count] : hyp_grams) {
            total += count;
            auto it = ref_grams.find(gram);
            if (it != ref_grams.end()) matched += std::min(count, it->second);
        }
        double p;
        if (n == 1) {
            if (matched == 0) return 0.0; // unigram precision stays unsmoothed
            p = static_cast<double>(matched) / static_cast<double>(total);
        } else if (total == 0) {
            p = 1.0; // hypothesis shorter than n: vacuous order
        } else {
            p = static_cast<double>(matched + 1) / static_cast<double>(total + 1);
        }
        log_precision += std::log(p);
    }
    const double bp = brevity_penalty(static_cast<int64_t>(hypothesis.size()),
                                      static_cast<int64_t>(reference.size()));
    return 100.0 * bp * std::exp(log_precision / kMaxOrder);
}

double exact_match(const std::vector<std::string>& hypotheses,
                   const std::vector<std::string>& references) {
    if (hypotheses.size() != references.size()) {
        throw Error("exact_match: hypothesis/reference count mismatch");
    }
    if (hypotheses.empty()) return 0.0;
    int64_t equal = 0;
    for (size_t i = 0; i < hypotheses.size(); ++i) {
        if (normalize_whitespace(hypotheses[i]) == normalize_whitespace(references[i])) ++equal;
    }
    return static_cast<double>(equal) / static_cast<double>(hypotheses.size());
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& gold) {
    if (predictions.size() != gold.size()) throw Error("accuracy: size mismatch");
    if (predictions.empty()) return 0.0;
    int64_t hit = 0;
    for (size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == gold[i]) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(predictions.size());
}

double weighted_ngram_match(const std::vector<std::string>& hyp_tokens,
                            const std::vector<std::string>& ref_tokens,
                            const std::set<std::string>& keywords, double keyword_weight) {
    if (keyword_weight < 1.0) throw Error("keyword_weight must be >= 1");
    if (hyp_tokens.empty()) return 0.0;
    double log_precision = 0.0;
    for (int n = 1; n <= kMaxOrder; ++n) {
        const auto hyp_grams = ngram_counts(hyp_tokens, n);
        const auto ref_grams = ngram_counts(ref_tokens, n);
        double matched = 0.0, total = 0.0;
        for (const auto& [gram, count] : hyp_grams) {
            const double w = gram_has_keyword(gram, keywords) ? keyword_weight : 1.0;
            total += w * static_cast<double>(count);
            auto it = ref_grams.find(gram);
            if (it != ref_grams.end()) {
                matched += w * static_cast<double>(std::min(count, it->second));
            }
        }
        double p;
        if (n == 1) {
            if (matched == 0.0) return 0.0;
            p = matched / total;
        } else if (total == 0.0) {
            p = 1.0;
        } else {
            p = (matched + 1.0) / (total + 1.0);
        }
        log_precision += std::log(p);
    }
    return std::exp(log_precision / kMaxOrder);
}

void CodeBleuWeights::validate() const {
    if (ngram < 0 || weighted_ngram < 0 || ast < 0 || dataflow < 0) {
        throw Error("codebleu weights must be non-negative");
    }
    const double sum = ngram + weighted_ngram + ast + dataflow;
    if (std::fabs(sum - 1.0) > 1e-12) {
        throw Error("codebleu weights must sum to 1");
    }
}

MetricReport codebleu(const std::string& hypothesis, const std::string& reference,
                      const minilang::LanguageProfile& profile, const CodeBleuWeights& weights,
                      double keyword_weight) {
    weights.validate();
    const auto hyp_tokens = profile.tokenize(hypothesis);
    const auto ref_tokens = profile.tokenize(reference);

    const double ngram = weighted_ngram_match(hyp_tokens, ref_tokens, {}, 1.0);
    const double weighted =
        weighted_ngram_match(hyp_tokens, ref_tokens, profile.keywords(), keyword_weight);

    const auto ref_ast = profile.try_parse(reference);
    if (!ref_ast) throw Error("codebleu: reference does not parse");
    const auto hyp_ast = profile.try_parse(hypothesis);

    double ast = 0.0, dataflow = 0.0;
    if (hyp_ast) {
        ast = ast_match(*hyp_ast, *ref_ast);
        dataflow = dataflow_match(minilang::extract_dataflow(*hyp_ast),
                                  minilang::extract_dataflow(*ref_ast));
    }

    MetricReport report;
    report.metric = "codebleu";
    report.components["ngram"] = ngram;
    report.components["weighted_ngram"] = weighted;
    report.components["ast_match"] = ast;
    report.components["dataflow_match"] = dataflow;
    report.value = weights.ngram * ngram + weights.weighted_ngram * weighted + weights.ast * ast +
                   weights.dataflow * dataflow;
    return report;
}

std::string MetricReport::to_json() const {
    auto fmt = [](double v) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        return std::string(buf);
    };
    std::string out = "{\n";
    out += "  \"task\": \"" + task + "\",\n";
    out += "  \"metric\": \"" + metric + "\",\n";
    out += "  \"value\": " + fmt(value);
    if (!components.empty()) {
        out += ",\n  \"components\": {";
        bool first = true;
        for (const auto& [k, v] : components) {
            out += first ? "\n" : ",\n";
            out += "    \"" + k + "\": " + fmt(v);
            first = false;
        }
        out += "\n  }";
    }
    out += "\n}";
    return out;
}

} // namespace plbk::metrics
