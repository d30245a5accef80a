#pragma once

#include "plbk/rng.hpp"
#include "plbk/tokenizer.hpp"

#include <string>
#include <vector>

namespace plbk {

struct NoiseConfig {
    double mask_ratio = 0.35;
    double poisson_lambda = 3.5;
    // (masking, deletion, infilling); one strategy is drawn per instance
    double w_masking = 1.0;
    double w_deletion = 1.0;
    double w_infilling = 1.0;
    int max_span_attempts_factor = 10;

    void validate() const;
};

// (corrupted source, decoder input, target). decoder_input = [lang_id] ++ x,
// target = x ++ [eos]; the encoder side never carries language ids.
struct TrainingTriple {
    std::vector<int> encoder_input;
    std::vector<int> decoder_input;
    std::vector<int> target;
};

// round-half-up budget: exactly round(ratio * |x|) positions
int64_t noise_budget(size_t n, double ratio);

std::vector<int> apply_token_masking(const std::vector<int>& x, double ratio, Rng& rng);
std::vector<int> apply_token_deletion(const std::vector<int>& x, double ratio, Rng& rng);

struct InfillStats {
    int64_t covered = 0;        // original tokens replaced by span masks
    int64_t spans = 0;          // applied spans of length >= 1
    int64_t insertions = 0;     // zero-length draws (mask inserted, no budget)
    int64_t draws = 0;          // all Poisson draws, accepted or not
    int64_t sum_drawn_length = 0; // sum over all draws before truncation
};

// Spans of Poisson(lambda) length are replaced by a single mask token; a
// zero-length draw inserts a mask. A drawn span is truncated to the
// remaining budget so coverage lands exactly on round(ratio * |x|) unless
// the attempt cap trips first. Spans never overlap.
std::vector<int> apply_token_infilling(const std::vector<int>& x, double ratio, double lambda,
                                       Rng& rng, int max_span_attempts_factor = 10,
                                       InfillStats* stats = nullptr);

// Truncates x to max_len, draws one strategy by normalized weights, and
// assembles the triple.
TrainingTriple corrupt(const std::vector<int>& x, const std::string& language,
                       const NoiseConfig& config, const Vocabulary& vocab, Rng& rng,
                       int64_t max_len = 512);

} // namespace plbk
