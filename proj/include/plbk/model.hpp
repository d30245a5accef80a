#pragma once

#include "plbk/rng.hpp"
#include "plbk/tensor.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace plbk::model {

struct ModelConfig {
    int enc_layers = 2;
    int dec_layers = 2;
    int d_model = 64;
    int heads = 4;
    int d_ff = 128;
    int max_positions = 256;
    int64_t vocab_size = 0;
    double dropout = 0.1;
    bool final_layer_norm = true; // extra norms on encoder and decoder outputs
    int num_labels = 0;           // > 0 adds the classification head

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& json_text);
};

template <typename T>
struct AttentionWeights {
    Tensor<T> wq, wk, wv, wo; // d x d
    Tensor<T> bq, bk, bv, bo; // 1 x d
};

template <typename T>
struct LayerNormWeights {
    Tensor<T> gain, bias; // 1 x d
};

template <typename T>
struct FeedForwardWeights {
    Tensor<T> w1; // d x ff
    Tensor<T> b1; // 1 x ff
    Tensor<T> w2; // ff x d
    Tensor<T> b2; // 1 x d
};

template <typename T>
struct EncoderLayerWeights {
    AttentionWeights<T> self_attn;
    LayerNormWeights<T> ln_attn;
    FeedForwardWeights<T> ffn;
    LayerNormWeights<T> ln_ffn;
};

template <typename T>
struct DecoderLayerWeights {
    AttentionWeights<T> self_attn;
    LayerNormWeights<T> ln_self;
    AttentionWeights<T> cross_attn;
    LayerNormWeights<T> ln_cross;
    FeedForwardWeights<T> ffn;
    LayerNormWeights<T> ln_ffn;
};

// The trainable tensors. The token embedding is shared by the encoder
// input, decoder input, and output projection.
template <typename T>
struct Parameters {
    ModelConfig config;
    Tensor<T> tok_emb; // vocab x d
    Tensor<T> pos_emb; // max_positions x d
    std::vector<EncoderLayerWeights<T>> enc;
    std::vector<DecoderLayerWeights<T>> dec;
    LayerNormWeights<T> enc_final_ln; // allocated iff config.final_layer_norm
    LayerNormWeights<T> dec_final_ln;
    Tensor<T> cls_w; // d x num_labels, iff num_labels > 0
    Tensor<T> cls_b; // 1 x num_labels

    // Visits every tensor with its canonical name, in declaration order.
    void visit(const std::function<void(const std::string&, Tensor<T>&)>& fn);
    void visit(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const;
};

using ParametersF = Parameters<float>;
using ParametersD = Parameters<double>;

// All-zero tensors shaped like the config; used for gradients and moments.
template <typename T>
Parameters<T> zeros_like(const ModelConfig& config);

// Zero-mean normal, scale 0.02, for weights and embeddings; layer-norm
// gains 1, all biases 0. Deterministic under the seed.
template <typename T>
Parameters<T> init_parameters(const ModelConfig& config, uint64_t seed);

template <typename T>
int64_t parameter_count(const Parameters<T>& params);
int64_t expected_parameter_count(const ModelConfig& config);

// Padded batch. Masks are 1 for real tokens, 0 for pad.
struct Batch {
    int64_t b = 0, src_len = 0, tgt_len = 0;
    int pad_id = 1;
    std::vector<int> enc_ids;  // b x src_len
    std::vector<uint8_t> enc_mask;
    std::vector<int> dec_ids;  // b x tgt_len
    std::vector<uint8_t> dec_mask;
    std::vector<int> tgt_ids;  // b x tgt_len, pad id at padding
};

Batch make_batch(const std::vector<std::vector<int>>& enc_rows,
                 const std::vector<std::vector<int>>& dec_rows,
                 const std::vector<std::vector<int>>& tgt_rows, int pad_id);

// Logits over the vocabulary, (b*tgt_len) x vocab. Dropout is live only
// when an rng is supplied and rate > 0.
template <typename T>
Tensor<T> forward(const Parameters<T>& params, const Batch& batch, double dropout_rate = 0.0,
                  Rng* rng = nullptr);

template <typename T>
struct LossGrads {
    T loss;
    Parameters<T> grads;
};

// Mean token-level negative log-likelihood over non-pad targets, with
// gradients for every parameter tensor.
template <typename T>
LossGrads<T> loss_and_grads(const Parameters<T>& params, const Batch& batch,
                            double dropout_rate = 0.0, Rng* rng = nullptr);

// Loss only (no backward pass); the finite-difference checks lean on this
// staying independent of the gradient code.
template <typename T>
T loss_only(const Parameters<T>& params, const Batch& batch);

struct GenerateResult {
    std::vector<int> ids;  // language id stripped, eos stripped, no pad
    double score;          // length-normalized log-probability
    double log_prob;       // raw sum of token log-probabilities
};

// Decoding starts from [target_lang_id]; beam 1 is exact greedy argmax.
// Finished hypotheses are ranked by log-prob / length.
template <typename T>
GenerateResult generate(const Parameters<T>& params, const std::vector<int>& source_ids,
                        int target_lang_id, int beam_size, int64_t max_len, int pad_id,
                        int eos_id);

// Classification readout: the same ids feed encoder and decoder; the final
// decoder state at the last non-pad position goes through the linear head.
template <typename T>
Tensor<T> classify(const Parameters<T>& params, const std::vector<std::vector<int>>& rows,
                   int pad_id);

template <typename T>
struct ClassifyLossGrads {
    T loss;
    Tensor<T> logits; // b x num_labels
    Parameters<T> grads;
};

template <typename T>
ClassifyLossGrads<T> classify_loss_and_grads(const Parameters<T>& params,
                                             const std::vector<std::vector<int>>& rows,
                                             const std::vector<int>& labels, int pad_id,
                                             double dropout_rate = 0.0, Rng* rng = nullptr);

template <typename T>
T classify_loss_only(const Parameters<T>& params, const std::vector<std::vector<int>>& rows,
                     const std::vector<int>& labels, int pad_id);

// Checkpoint: magic "PLBK", version u32, length-prefixed JSON ModelConfig,
// then tensors in sorted-name order as (name, shape, row-major LE f32).
void save_checkpoint(const std::string& path, const ParametersF& params);
ParametersF load_checkpoint(const std::string& path);

} // namespace plbk::model
