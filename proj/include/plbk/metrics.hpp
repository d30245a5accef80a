#pragma once

#include "plbk/minilang.hpp"
#include "plbk/tensor.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace plbk::metrics {

// BLEU-family values use the percent convention [0, 100]; match ratios,
// accuracy, and CodeBLEU components live in [0, 1].
struct MetricReport {
    std::string task;
    std::string metric;
    double value = 0.0;
    std::map<std::string, double> components;

    std::string to_json() const; // 6 decimal places
};

// Corpus-level BLEU-4: geometric mean of clipped 1..4-gram precisions with
// brevity penalty, no smoothing. Tokens are whitespace-split text.
double corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                   const std::vector<std::vector<std::string>>& references);

// Sentence-level BLEU-4 with add-one smoothing on the n >= 2 precisions;
// an order with no hypothesis n-grams contributes precision 1.
double smoothed_bleu4(const std::vector<std::string>& hypothesis,
                      const std::vector<std::string>& reference);

// Fraction of pairs equal after whitespace normalization.
double exact_match(const std::vector<std::string>& hypotheses,
                   const std::vector<std::string>& references);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& gold);

// Clipped n-gram precision where an n-gram containing a keyword counts with
// weight keyword_weight; geometric mean over n=1..4, add-one smoothing for
// n >= 2, in [0, 1]. keyword_weight 1 gives the plain n-gram component.
double weighted_ngram_match(const std::vector<std::string>& hyp_tokens,
                            const std::vector<std::string>& ref_tokens,
                            const std::set<std::string>& keywords, double keyword_weight);

struct CodeBleuWeights {
    double ngram = 0.25;
    double weighted_ngram = 0.25;
    double ast = 0.25;
    double dataflow = 0.25;

    void validate() const; // non-negative, sum 1 within 1e-12
};

// Composite: w1*ngram + w2*weighted_ngram + w3*ast_match + w4*dataflow_match.
// An unparseable hypothesis zeroes the ast and dataflow components; the
// reference must parse.
MetricReport codebleu(const std::string& hypothesis, const std::string& reference,
                      const minilang::LanguageProfile& profile,
                      const CodeBleuWeights& weights = {}, double keyword_weight = 5.0);

std::vector<std::string> tokenize_for_bleu(const std::string& line);

} // namespace plbk::metrics
