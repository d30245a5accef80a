#include "plbk/noising.hpp"

#include "plbk/corpus.hpp"

#include <algorithm>
#include <cmath>

namespace plbk {

void NoiseConfig::validate() const {
    if (!(mask_ratio >= 0.0 && mask_ratio <= 1.0)) throw Error("mask_ratio must be in [0, 1]");
    if (!(poisson_lambda > 0.0)) throw Error("poisson_lambda must be positive");
    if (w_masking < 0 || w_deletion < 0 || w_infilling < 0 ||
        w_masking + w_deletion + w_infilling <= 0.0) {
        throw Error("strategy weights must be non-negative with positive sum");
    }
    if (max_span_attempts_factor < 1) throw Error("max_span_attempts_factor must be >= 1");
}

int64_t noise_budget(size_t n, double ratio) {
    return static_cast<int64_t>(std::floor(ratio * static_cast<double>(n) + 0.5));
}

namespace {

// first k of a seeded partial Fisher-Yates, i.e. k positions sampled
// without replacement
std::vector<size_t> sample_positions(size_t n, int64_t k, Rng& rng) {
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    for (int64_t i = 0; i < k; ++i) {
        const size_t j = static_cast<size_t>(i) + rng.below(n - static_cast<size_t>(i));
        std::swap(idx[static_cast<size_t>(i)], idx[j]);
    }
    idx.resize(static_cast<size_t>(k));
    return idx;
}

} // namespace

std::vector<int> apply_token_masking(const std::vector<int>& x, double ratio, Rng& rng) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error("mask ratio must be in [0, 1]");
    std::vector<int> out = x;
    const int64_t k = noise_budget(x.size(), ratio);
    for (size_t pos : sample_positions(x.size(), k, rng)) out[pos] = tok::kMask;
    return out;
}

std::vector<int> apply_token_deletion(const std::vector<int>& x, double ratio, Rng& rng) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error("deletion ratio must be in [0, 1]");
    const int64_t k = noise_budget(x.size(), ratio);
    auto drop = sample_positions(x.size(), k, rng);
    std::vector<bool> dead(x.size(), false);
    for (size_t pos : drop) dead[pos] = true;
    std::vector<int> out;
    out.reserve(x.size() - static_cast<size_t>(k));
    for (size_t i = 0; i < x.size(); ++i) {
        if (!dead[i]) out.push_back(x[i]);
    }
    return out;
}

std::vector<int> apply_token_infilling(const std::vector<int>& x, double ratio, double lambda,
                                       Rng& rng, int max_span_attempts_factor,
                                       InfillStats* stats) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error("infill ratio must be in [0, 1]");
    if (!(lambda > 0.0)) throw Error("poisson lambda must be positive");

    const size_t n = x.size();
    const int64_t budget = noise_budget(n, ratio);
    InfillStats local;
    InfillStats& st = stats ? *stats : local;
    st = InfillStats{};

    std::vector<bool> covered(n, false);
    std::vector<bool> span_start(n, false);
    std::vector<int> inserted_at(n + 1, 0); // masks inserted before position i

    const int64_t expected_spans =
        std::max<int64_t>(1, static_cast<int64_t>(std::ceil(static_cast<double>(budget) / lambda)));
    const int64_t max_attempts = static_cast<int64_t>(max_span_attempts_factor) * expected_spans;

    int64_t attempts = 0;
    while (st.covered < budget && attempts < max_attempts) {
        ++attempts;
        const int64_t drawn = rng.poisson(lambda);
        ++st.draws;
        st.sum_drawn_length += drawn;
        if (drawn == 0) {
            const size_t gap = static_cast<size_t>(rng.below(n + 1));
            ++inserted_at[gap];
            ++st.insertions;
            continue;
        }
        const int64_t len = std::min<int64_t>(drawn, budget - st.covered); // truncate to budget
        const size_t start = static_cast<size_t>(rng.below(n - static_cast<size_t>(len) + 1));
        bool overlap = false;
        for (size_t i = start; i < start + static_cast<size_t>(len); ++i) {
            if (covered[i]) {
                overlap = true;
                break;
            }
        }
        if (overlap) continue; // rejection-style against already-covered positions
        for (size_t i = start; i < start + static_cast<size_t>(len); ++i) covered[i] = true;
        span_start[start] = true;
        st.covered += len;
        ++st.spans;
    }

    std::vector<int> out;
    out.reserve(n + static_cast<size_t>(st.insertions));
    for (size_t i = 0; i <= n; ++i) {
        for (int k = 0; k < inserted_at[i]; ++k) out.push_back(tok::kMask);
        if (i == n) break;
        if (span_start[i]) out.push_back(tok::kMask);
        if (!covered[i]) out.push_back(x[i]);
    }
    return out;
}

TrainingTriple corrupt(const std::vector<int>& x, const std::string& language,
                       const NoiseConfig& config, const Vocabulary& vocab, Rng& rng,
                       int64_t max_len) {
    config.validate();
    if (x.empty()) throw Error("corrupt: empty token sequence");
    const int lang_id = vocab.language_id(language);

    const std::vector<int> clean = truncate_ids(x, max_len);

    // one strategy per instance, drawn by normalized weights
    const double total = config.w_masking + config.w_deletion + config.w_infilling;
    const double u = rng.uniform() * total;
    std::vector<int> noisy;
    if (u < config.w_masking) {
        noisy = apply_token_masking(clean, config.mask_ratio, rng);
    } else if (u < config.w_masking + config.w_deletion) {
        noisy = apply_token_deletion(clean, config.mask_ratio, rng);
    } else {
        noisy = apply_token_infilling(clean, config.mask_ratio, config.poisson_lambda, rng,
                                      config.max_span_attempts_factor);
    }
    if (static_cast<int64_t>(noisy.size()) > max_len) noisy.resize(static_cast<size_t>(max_len));

    TrainingTriple triple;
    triple.encoder_input = std::move(noisy);
    triple.decoder_input.reserve(clean.size() + 1);
    triple.decoder_input.push_back(lang_id);
    triple.decoder_input.insert(triple.decoder_input.end(), clean.begin(), clean.end());
    triple.target = clean;
    triple.target.push_back(tok::kEos);
    return triple;
}

} // namespace plbk
