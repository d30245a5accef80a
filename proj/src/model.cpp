#include "plbk/model.hpp"

#include "plbk/kernels.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace plbk::model {

using nlohmann::json;
using nlohmann::ordered_json;

void ModelConfig::validate() const {
    if (enc_layers < 1 || dec_layers < 1) throw Error("layer counts must be >= 1");
    if (d_model < 1 || heads < 1 || d_ff < 1) throw Error("model dims must be >= 1");
    if (d_model % heads != 0) throw Error("d_model must be divisible by heads");
    if (max_positions < 2) throw Error("max_positions must be >= 2");
    if (vocab_size < 1) throw Error("vocab_size must be set");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout must be in [0, 1)");
    if (num_labels < 0) throw Error("num_labels must be >= 0");
}

std::string ModelConfig::to_json() const {
    ordered_json obj;
    obj["enc_layers"] = enc_layers;
    obj["dec_layers"] = dec_layers;
    obj["d_model"] = d_model;
    obj["heads"] = heads;
    obj["d_ff"] = d_ff;
    obj["max_positions"] = max_positions;
    obj["vocab_size"] = vocab_size;
    obj["dropout"] = dropout;
    obj["final_layer_norm"] = final_layer_norm;
    obj["num_labels"] = num_labels;
    return obj.dump();
}

ModelConfig ModelConfig::from_json(const std::string& json_text) {
    json obj = json::parse(json_text, nullptr, false);
    if (obj.is_discarded()) throw Error("invalid model config JSON");
    ModelConfig c;
    c.enc_layers = obj.value("enc_layers", c.enc_layers);
    c.dec_layers = obj.value("dec_layers", c.dec_layers);
    c.d_model = obj.value("d_model", c.d_model);
    c.heads = obj.value("heads", c.heads);
    c.d_ff = obj.value("d_ff", c.d_ff);
    c.max_positions = obj.value("max_positions", c.max_positions);
    c.vocab_size = obj.value("vocab_size", c.vocab_size);
    c.dropout = obj.value("dropout", c.dropout);
    c.final_layer_norm = obj.value("final_layer_norm", c.final_layer_norm);
    c.num_labels = obj.value("num_labels", c.num_labels);
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// parameter structure
// ---------------------------------------------------------------------------

namespace {

template <typename T, typename Fn>
void visit_attn(const std::string& prefix, AttentionWeights<T>& a, Fn&& fn) {
    fn(prefix + ".wq", a.wq);
    fn(prefix + ".wk", a.wk);
    fn(prefix + ".wv", a.wv);
    fn(prefix + ".wo", a.wo);
    fn(prefix + ".bq", a.bq);
    fn(prefix + ".bk", a.bk);
    fn(prefix + ".bv", a.bv);
    fn(prefix + ".bo", a.bo);
}

template <typename T, typename Fn>
void visit_ln(const std::string& prefix, LayerNormWeights<T>& ln, Fn&& fn) {
    fn(prefix + ".gain", ln.gain);
    fn(prefix + ".bias", ln.bias);
}

template <typename T, typename Fn>
void visit_ffn(const std::string& prefix, FeedForwardWeights<T>& f, Fn&& fn) {
    fn(prefix + ".w1", f.w1);
    fn(prefix + ".b1", f.b1);
    fn(prefix + ".w2", f.w2);
    fn(prefix + ".b2", f.b2);
}

template <typename T, typename Fn>
void visit_all(Parameters<T>& p, Fn&& fn) {
    fn("tok_emb", p.tok_emb);
    fn("pos_emb", p.pos_emb);
    for (size_t i = 0; i < p.enc.size(); ++i) {
        const std::string base = "enc." + std::to_string(i);
        visit_attn(base + ".self", p.enc[i].self_attn, fn);
        visit_ln(base + ".ln_attn", p.enc[i].ln_attn, fn);
        visit_ffn(base + ".ffn", p.enc[i].ffn, fn);
        visit_ln(base + ".ln_ffn", p.enc[i].ln_ffn, fn);
    }
    for (size_t i = 0; i < p.dec.size(); ++i) {
        const std::string base = "dec." + std::to_string(i);
        visit_attn(base + ".self", p.dec[i].self_attn, fn);
        visit_ln(base + ".ln_self", p.dec[i].ln_self, fn);
        visit_attn(base + ".cross", p.dec[i].cross_attn, fn);
        visit_ln(base + ".ln_cross", p.dec[i].ln_cross, fn);
        visit_ffn(base + ".ffn", p.dec[i].ffn, fn);
        visit_ln(base + ".ln_ffn", p.dec[i].ln_ffn, fn);
    }
    if (p.config.final_layer_norm) {
        visit_ln("enc_final_ln", p.enc_final_ln, fn);
        visit_ln("dec_final_ln", p.dec_final_ln, fn);
    }
    if (p.config.num_labels > 0) {
        fn("cls.w", p.cls_w);
        fn("cls.b", p.cls_b);
    }
}

} // namespace

template <typename T>
void Parameters<T>::visit(const std::function<void(const std::string&, Tensor<T>&)>& fn) {
    visit_all(*this, fn);
}

template <typename T>
void Parameters<T>::visit(const std::function<void(const std::string&, const Tensor<T>&)>& fn) const {
    visit_all(const_cast<Parameters<T>&>(*this),
              [&](const std::string& name, Tensor<T>& t) { fn(name, t); });
}

template <typename T>
Parameters<T> zeros_like(const ModelConfig& config) {
    config.validate();
    const int d = config.d_model;
    const int ff = config.d_ff;
    Parameters<T> p;
    p.config = config;
    p.tok_emb = Tensor<T>(config.vocab_size, d);
    p.pos_emb = Tensor<T>(config.max_positions, d);
    auto make_attn = [&] {
        AttentionWeights<T> a;
        a.wq = Tensor<T>(d, d);
        a.wk = Tensor<T>(d, d);
        a.wv = Tensor<T>(d, d);
        a.wo = Tensor<T>(d, d);
        a.bq = Tensor<T>(1, d);
        a.bk = Tensor<T>(1, d);
        a.bv = Tensor<T>(1, d);
        a.bo = Tensor<T>(1, d);
        return a;
    };
    auto make_ln = [&] {
        LayerNormWeights<T> ln;
        ln.gain = Tensor<T>(1, d);
        ln.bias = Tensor<T>(1, d);
        return ln;
    };
    auto make_ffn = [&] {
        FeedForwardWeights<T> f;
        f.w1 = Tensor<T>(d, ff);
        f.b1 = Tensor<T>(1, ff);
        f.w2 = Tensor<T>(ff, d);
        f.b2 = Tensor<T>(1, d);
        return f;
    };
    p.enc.resize(static_cast<size_t>(config.enc_layers));
    for (auto& l : p.enc) {
        l.self_attn = make_attn();
        l.ln_attn = make_ln();
        l.ffn = make_ffn();
        l.ln_ffn = make_ln();
    }
    p.dec.resize(static_cast<size_t>(config.dec_layers));
    for (auto& l : p.dec) {
        l.self_attn = make_attn();
        l.ln_self = make_ln();
        l.cross_attn = make_attn();
        l.ln_cross = make_ln();
        l.ffn = make_ffn();
        l.ln_ffn = make_ln();
    }
    if (config.final_layer_norm) {
        p.enc_final_ln = make_ln();
        p.dec_final_ln = make_ln();
    }
    if (config.num_labels > 0) {
        p.cls_w = Tensor<T>(d, config.num_labels);
        p.cls_b = Tensor<T>(1, config.num_labels);
    }
    return p;
}

template <typename T>
Parameters<T> init_parameters(const ModelConfig& config, uint64_t seed) {
    Parameters<T> p = zeros_like<T>(config);
    Rng rng(seed);
    constexpr double kScale = 0.02;
    p.visit([&](const std::string& name, Tensor<T>& t) {
        const bool is_gain = name.size() >= 5 && name.compare(name.size() - 5, 5, ".gain") == 0;
        const bool is_bias_vec = t.rows == 1; // all 1 x n tensors are biases here
        if (is_gain) {
            std::fill(t.data.begin(), t.data.end(), T(1));
        } else if (is_bias_vec) {
            // already zero
        } else {
            for (auto& v : t.data) v = static_cast<T>(rng.normal() * kScale);
        }
    });
    return p;
}

template <typename T>
int64_t parameter_count(const Parameters<T>& params) {
    int64_t n = 0;
    params.visit([&](const std::string&, const Tensor<T>& t) { n += static_cast<int64_t>(t.size()); });
    return n;
}

int64_t expected_parameter_count(const ModelConfig& c) {
    const int64_t d = c.d_model;
    const int64_t ff = c.d_ff;
    const int64_t attn = 4 * d * d + 4 * d;
    const int64_t ln = 2 * d;
    const int64_t ffn = d * ff + ff + ff * d + d;
    int64_t n = c.vocab_size * d + static_cast<int64_t>(c.max_positions) * d;
    n += c.enc_layers * (attn + ln + ffn + ln);
    n += c.dec_layers * (2 * attn + 3 * ln + ffn);
    if (c.final_layer_norm) n += 2 * ln;
    if (c.num_labels > 0) n += d * c.num_labels + c.num_labels;
    return n;
}

// ---------------------------------------------------------------------------
// batch assembly
// ---------------------------------------------------------------------------

Batch make_batch(const std::vector<std::vector<int>>& enc_rows,
                 const std::vector<std::vector<int>>& dec_rows,
                 const std::vector<std::vector<int>>& tgt_rows, int pad_id) {
    if (enc_rows.size() != dec_rows.size() || dec_rows.size() != tgt_rows.size()) {
        throw Error("batch rows must align");
    }
    if (enc_rows.empty()) throw Error("batch must contain at least one example");
    Batch batch;
    batch.b = static_cast<int64_t>(enc_rows.size());
    batch.pad_id = pad_id;
    for (size_t i = 0; i < dec_rows.size(); ++i) {
        if (dec_rows[i].size() != tgt_rows[i].size()) {
            throw Error("decoder input and target must have equal length");
        }
    }
    int64_t s = 1, t = 1;
    for (const auto& r : enc_rows) s = std::max<int64_t>(s, static_cast<int64_t>(r.size()));
    for (const auto& r : dec_rows) t = std::max<int64_t>(t, static_cast<int64_t>(r.size()));
    batch.src_len = s;
    batch.tgt_len = t;
    batch.enc_ids.assign(static_cast<size_t>(batch.b * s), pad_id);
    batch.enc_mask.assign(static_cast<size_t>(batch.b * s), 0);
    batch.dec_ids.assign(static_cast<size_t>(batch.b * t), pad_id);
    batch.dec_mask.assign(static_cast<size_t>(batch.b * t), 0);
    batch.tgt_ids.assign(static_cast<size_t>(batch.b * t), pad_id);
    for (int64_t i = 0; i < batch.b; ++i) {
        const auto& er = enc_rows[static_cast<size_t>(i)];
        for (size_t j = 0; j < er.size(); ++j) {
            batch.enc_ids[static_cast<size_t>(i * s) + j] = er[j];
            batch.enc_mask[static_cast<size_t>(i * s) + j] = 1;
        }
        const auto& dr = dec_rows[static_cast<size_t>(i)];
        const auto& tr = tgt_rows[static_cast<size_t>(i)];
        for (size_t j = 0; j < dr.size(); ++j) {
            batch.dec_ids[static_cast<size_t>(i * t) + j] = dr[j];
            batch.dec_mask[static_cast<size_t>(i * t) + j] = 1;
            batch.tgt_ids[static_cast<size_t>(i * t) + j] = tr[j];
        }
    }
    return batch;
}

// ---------------------------------------------------------------------------
// forward / backward machinery
// ---------------------------------------------------------------------------

namespace {

template <typename T>
using Mask = std::vector<T>; // dropout multipliers, empty = identity

template <typename T>
void apply_dropout(Tensor<T>& x, double rate, Rng* rng, Mask<T>& mask) {
    mask.clear();
    if (rate <= 0.0 || rng == nullptr) return;
    mask.resize(x.size());
    const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
    for (size_t i = 0; i < x.size(); ++i) {
        mask[i] = rng->uniform() < rate ? T(0) : keep_scale;
        x.data[i] *= mask[i];
    }
}

template <typename T>
void dropout_backward(Tensor<T>& dx, const Mask<T>& mask) {
    if (mask.empty()) return;
    for (size_t i = 0; i < dx.size(); ++i) dx.data[i] *= mask[i];
}

template <typename T>
void add_bias_rows(Tensor<T>& y, const Tensor<T>& b) {
    for (int64_t i = 0; i < y.rows; ++i) {
        kern::add_inplace(y.row(i), b.row(0), static_cast<size_t>(y.cols));
    }
}

template <typename T>
Tensor<T> linear_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* b) {
    Tensor<T> y(x.rows, w.cols);
    kern::gemm_nn(static_cast<int>(x.rows), static_cast<int>(x.cols), static_cast<int>(w.cols),
                  x.data.data(), w.data.data(), y.data.data(), false);
    if (b) add_bias_rows(y, *b);
    return y;
}

// dX += dY W^T, dW += X^T dY, db += colsum(dY)
template <typename T>
void linear_bwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, Tensor<T>* dx,
                Tensor<T>& dw, Tensor<T>* db) {
    if (dx) {
        kern::gemm_nt(static_cast<int>(dy.rows), static_cast<int>(dy.cols),
                      static_cast<int>(w.rows), dy.data.data(), w.data.data(), dx->data.data(),
                      true);
    }
    kern::gemm_tn(static_cast<int>(x.cols), static_cast<int>(x.rows), static_cast<int>(dy.cols),
                  x.data.data(), dy.data.data(), dw.data.data(), true);
    if (db) {
        for (int64_t i = 0; i < dy.rows; ++i) {
            kern::add_inplace(db->row(0), dy.row(i), static_cast<size_t>(dy.cols));
        }
    }
}

template <typename T>
struct SublayerCache {
    Tensor<T> ln_in; // residual sum fed to layer norm
    std::vector<T> mean, rstd;
    Mask<T> drop;
};

// y = LN(x + dropout(sub)); caches what backward needs
template <typename T>
Tensor<T> residual_norm_fwd(const Tensor<T>& x, Tensor<T>&& sub, const LayerNormWeights<T>& ln,
                            double rate, Rng* rng, SublayerCache<T>& cache) {
    apply_dropout(sub, rate, rng, cache.drop);
    kern::add_inplace(sub.data.data(), x.data.data(), x.size());
    cache.ln_in = std::move(sub);
    cache.mean.resize(static_cast<size_t>(cache.ln_in.rows));
    cache.rstd.resize(static_cast<size_t>(cache.ln_in.rows));
    Tensor<T> y(cache.ln_in.rows, cache.ln_in.cols);
    kern::layernorm_fwd(cache.ln_in.data.data(), ln.gain.data.data(), ln.bias.data.data(),
                        y.data.data(), cache.mean.data(), cache.rstd.data(),
                        static_cast<int>(y.rows), static_cast<int>(y.cols), static_cast<T>(1e-5));
    return y;
}

// returns dR (gradient w.r.t. the residual sum); caller adds it to the
// residual branch and pushes dropout-masked copy into the sublayer
template <typename T>
Tensor<T> residual_norm_bwd(const Tensor<T>& dy, const LayerNormWeights<T>& ln,
                            const SublayerCache<T>& cache, LayerNormWeights<T>& dln) {
    Tensor<T> dr(dy.rows, dy.cols);
    kern::layernorm_bwd(cache.ln_in.data.data(), ln.gain.data.data(), dy.data.data(),
                        cache.mean.data(), cache.rstd.data(), dr.data.data(),
                        dln.gain.data.data(), dln.bias.data.data(), static_cast<int>(dy.rows),
                        static_cast<int>(dy.cols));
    return dr;
}

template <typename T>
struct AttnCache {
    Tensor<T> xq, xkv;            // projection inputs
    Tensor<T> q, k, v;            // (b*lq x d), (b*lkv x d)
    Tensor<T> ctx;                // concatenated head outputs
    std::vector<Tensor<T>> probs; // per (example, head): lq x lkv
};

template <typename T>
void copy_head(const Tensor<T>& src, int64_t row0, int64_t rows, int head, int dh, Tensor<T>& dst) {
    for (int64_t i = 0; i < rows; ++i) {
        std::memcpy(dst.row(i), src.row(row0 + i) + static_cast<int64_t>(head) * dh,
                    sizeof(T) * static_cast<size_t>(dh));
    }
}

template <typename T>
void add_head_back(const Tensor<T>& src, int64_t row0, int64_t rows, int head, int dh,
                   Tensor<T>& dst) {
    for (int64_t i = 0; i < rows; ++i) {
        T* out = dst.row(row0 + i) + static_cast<int64_t>(head) * dh;
        const T* in = src.row(i);
        for (int j = 0; j < dh; ++j) out[j] += in[j];
    }
}

// Multi-head attention over a padded batch. key_mask has b x lkv entries;
// causal additionally hides keys after the query position.
template <typename T>
Tensor<T> attention_fwd(const AttentionWeights<T>& w, const Tensor<T>& xq, const Tensor<T>& xkv,
                        const std::vector<uint8_t>& key_mask, int64_t b, int64_t lq, int64_t lkv,
                        int heads, bool causal, AttnCache<T>& cache) {
    const int d = static_cast<int>(xq.cols);
    const int dh = d / heads;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
    const T neg_inf = -std::numeric_limits<T>::infinity();

    cache.xq = xq;
    cache.xkv = xkv;
    cache.q = linear_fwd(xq, w.wq, &w.bq);
    cache.k = linear_fwd(xkv, w.wk, &w.bk);
    cache.v = linear_fwd(xkv, w.wv, &w.bv);
    cache.ctx = Tensor<T>(b * lq, d);
    cache.probs.assign(static_cast<size_t>(b) * static_cast<size_t>(heads), Tensor<T>());

    Tensor<T> qh(lq, dh), kh(lkv, dh), vh(lkv, dh);
    for (int64_t ex = 0; ex < b; ++ex) {
        const uint8_t* kmask = key_mask.data() + ex * lkv;
        for (int h = 0; h < heads; ++h) {
            copy_head(cache.q, ex * lq, lq, h, dh, qh);
            copy_head(cache.k, ex * lkv, lkv, h, dh, kh);
            copy_head(cache.v, ex * lkv, lkv, h, dh, vh);

            Tensor<T> scores(lq, lkv);
            kern::gemm_nt(static_cast<int>(lq), dh, static_cast<int>(lkv), qh.data.data(),
                          kh.data.data(), scores.data.data(), false);
            for (int64_t i = 0; i < lq; ++i) {
                T* srow = scores.row(i);
                for (int64_t j = 0; j < lkv; ++j) {
                    if (!kmask[j] || (causal && j > i)) {
                        srow[j] = neg_inf;
                    } else {
                        srow[j] *= scale;
                    }
                }
            }
            kern::softmax_rows(scores.data.data(), static_cast<int>(lq), static_cast<int>(lkv));

            Tensor<T> ctx_h(lq, dh);
            kern::gemm_nn(static_cast<int>(lq), static_cast<int>(lkv), dh, scores.data.data(),
                          vh.data.data(), ctx_h.data.data(), false);
            for (int64_t i = 0; i < lq; ++i) {
                std::memcpy(cache.ctx.row(ex * lq + i) + static_cast<int64_t>(h) * dh,
                            ctx_h.row(i), sizeof(T) * static_cast<size_t>(dh));
            }
            cache.probs[static_cast<size_t>(ex) * heads + static_cast<size_t>(h)] =
                std::move(scores);
        }
    }
    return linear_fwd(cache.ctx, w.wo, &w.bo);
}

// dxq / dxkv accumulated; for self-attention pass the same tensor twice.
template <typename T>
void attention_bwd(const AttentionWeights<T>& w, const AttnCache<T>& cache, const Tensor<T>& dout,
                   int64_t b, int64_t lq, int64_t lkv, int heads, AttentionWeights<T>& dw,
                   Tensor<T>& dxq, Tensor<T>& dxkv) {
    const int d = static_cast<int>(cache.xq.cols);
    const int dh = d / heads;
    const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

    Tensor<T> dctx(b * lq, d);
    linear_bwd(cache.ctx, w.wo, dout, &dctx, dw.wo, &dw.bo);

    Tensor<T> dq(b * lq, d), dk(b * lkv, d), dv(b * lkv, d);
    Tensor<T> qh(lq, dh), kh(lkv, dh), vh(lkv, dh), dctx_h(lq, dh);
    for (int64_t ex = 0; ex < b; ++ex) {
        for (int h = 0; h < heads; ++h) {
            const Tensor<T>& probs =
                cache.probs[static_cast<size_t>(ex) * heads + static_cast<size_t>(h)];
            copy_head(cache.q, ex * lq, lq, h, dh, qh);
            copy_head(cache.k, ex * lkv, lkv, h, dh, kh);
            copy_head(cache.v, ex * lkv, lkv, h, dh, vh);
            copy_head(dctx, ex * lq, lq, h, dh, dctx_h);

            // dP = dCtx V^T ; dV = P^T dCtx
            Tensor<T> dp(lq, lkv);
            kern::gemm_nt(static_cast<int>(lq), dh, static_cast<int>(lkv), dctx_h.data.data(),
                          vh.data.data(), dp.data.data(), false);
            Tensor<T> dv_h(lkv, dh);
            kern::gemm_tn(static_cast<int>(lkv), static_cast<int>(lq), dh, probs.data.data(),
                          dctx_h.data.data(), dv_h.data.data(), false);

            // softmax backward: dS = P o (dP - rowsum(dP o P)); masked
            // entries carry P = 0 and vanish
            Tensor<T> ds(lq, lkv);
            for (int64_t i = 0; i < lq; ++i) {
                const T* prow = probs.row(i);
                const T* dprow = dp.row(i);
                T dot = T(0);
                for (int64_t j = 0; j < lkv; ++j) dot += prow[j] * dprow[j];
                T* dsrow = ds.row(i);
                for (int64_t j = 0; j < lkv; ++j) {
                    dsrow[j] = prow[j] * (dprow[j] - dot) * scale; // fold in score scaling
                }
            }

            Tensor<T> dq_h(lq, dh);
            kern::gemm_nn(static_cast<int>(lq), static_cast<int>(lkv), dh, ds.data.data(),
                          kh.data.data(), dq_h.data.data(), false);
            Tensor<T> dk_h(lkv, dh);
            kern::gemm_tn(static_cast<int>(lkv), static_cast<int>(lq), dh, ds.data.data(),
                          qh.data.data(), dk_h.data.data(), false);

            add_head_back(dq_h, ex * lq, lq, h, dh, dq);
            add_head_back(dk_h, ex * lkv, lkv, h, dh, dk);
            add_head_back(dv_h, ex * lkv, lkv, h, dh, dv);
        }
    }

    linear_bwd(cache.xq, w.wq, dq, &dxq, dw.wq, &dw.bq);
    linear_bwd(cache.xkv, w.wk, dk, &dxkv, dw.wk, &dw.bk);
    linear_bwd(cache.xkv, w.wv, dv, &dxkv, dw.wv, &dw.bv);
}

template <typename T>
struct FfnCache {
    Tensor<T> in, z1, h;
};

template <typename T>
Tensor<T> ffn_fwd(const FeedForwardWeights<T>& w, const Tensor<T>& x, FfnCache<T>& cache) {
    cache.in = x;
    cache.z1 = linear_fwd(x, w.w1, &w.b1);
    cache.h = Tensor<T>(cache.z1.rows, cache.z1.cols);
    kern::gelu_fwd(cache.z1.data.data(), cache.h.data.data(), cache.z1.size());
    return linear_fwd(cache.h, w.w2, &w.b2);
}

template <typename T>
void ffn_bwd(const FeedForwardWeights<T>& w, const FfnCache<T>& cache, const Tensor<T>& dout,
             FeedForwardWeights<T>& dw, Tensor<T>& dx) {
    Tensor<T> dh(cache.h.rows, cache.h.cols);
    linear_bwd(cache.h, w.w2, dout, &dh, dw.w2, &dw.b2);
    Tensor<T> dz1(cache.z1.rows, cache.z1.cols);
    kern::gelu_bwd(cache.z1.data.data(), dh.data.data(), dz1.data.data(), dz1.size());
    linear_bwd(cache.in, w.w1, dz1, &dx, dw.w1, &dw.b1);
}

template <typename T>
struct EncLayerCache {
    Tensor<T> in;
    AttnCache<T> attn;
    SublayerCache<T> sl_attn;
    FfnCache<T> ffn;
    SublayerCache<T> sl_ffn;
};

template <typename T>
struct DecLayerCache {
    Tensor<T> in;
    AttnCache<T> self_attn;
    SublayerCache<T> sl_self;
    AttnCache<T> cross;
    SublayerCache<T> sl_cross;
    FfnCache<T> ffn;
    SublayerCache<T> sl_ffn;
};

template <typename T>
struct ForwardCache {
    Mask<T> enc_emb_drop, dec_emb_drop;
    std::vector<EncLayerCache<T>> enc_layers;
    std::vector<DecLayerCache<T>> dec_layers;
    Tensor<T> enc_pre_final; // input to the extra encoder norm (when on)
    std::vector<T> enc_final_mean, enc_final_rstd;
    Tensor<T> dec_pre_final;
    std::vector<T> dec_final_mean, dec_final_rstd;
    Tensor<T> enc_out;
    Tensor<T> dec_out;
};

template <typename T>
Tensor<T> embed(const Parameters<T>& p, const std::vector<int>& ids, int64_t b, int64_t len) {
    const int64_t d = p.config.d_model;
    if (len > p.config.max_positions) {
        throw Error("sequence length " + std::to_string(len) + " exceeds max_positions " +
                    std::to_string(p.config.max_positions));
    }
    Tensor<T> x(b * len, d);
    for (int64_t i = 0; i < b; ++i) {
        for (int64_t t = 0; t < len; ++t) {
            const int id = ids[static_cast<size_t>(i * len + t)];
            if (id < 0 || id >= p.config.vocab_size) {
                throw Error("token id " + std::to_string(id) + " out of vocab range");
            }
            T* row = x.row(i * len + t);
            const T* e = p.tok_emb.row(id);
            const T* pe = p.pos_emb.row(t);
            for (int64_t j = 0; j < d; ++j) row[j] = e[j] + pe[j];
        }
    }
    return x;
}

template <typename T>
void embed_bwd(const Tensor<T>& dx, const std::vector<int>& ids, int64_t b, int64_t len,
               Parameters<T>& grads) {
    const int64_t d = grads.config.d_model;
    for (int64_t i = 0; i < b; ++i) {
        for (int64_t t = 0; t < len; ++t) {
            const int id = ids[static_cast<size_t>(i * len + t)];
            const T* row = dx.row(i * len + t);
            kern::add_inplace(grads.tok_emb.row(id), row, static_cast<size_t>(d));
            kern::add_inplace(grads.pos_emb.row(t), row, static_cast<size_t>(d));
        }
    }
}

template <typename T>
void final_norm_fwd(const LayerNormWeights<T>& ln, Tensor<T>&& x, Tensor<T>& pre,
                    std::vector<T>& mean, std::vector<T>& rstd, Tensor<T>& out) {
    pre = std::move(x);
    mean.resize(static_cast<size_t>(pre.rows));
    rstd.resize(static_cast<size_t>(pre.rows));
    out = Tensor<T>(pre.rows, pre.cols);
    kern::layernorm_fwd(pre.data.data(), ln.gain.data.data(), ln.bias.data.data(),
                        out.data.data(), mean.data(), rstd.data(), static_cast<int>(pre.rows),
                        static_cast<int>(pre.cols), static_cast<T>(1e-5));
}

// Runs the whole network up to the final decoder states (post extra norm).
template <typename T>
void forward_core(const Parameters<T>& p, const Batch& batch, double rate, Rng* rng,
                  ForwardCache<T>& fc) {
    const auto& cfg = p.config;
    const int64_t b = batch.b;
    const int64_t s = batch.src_len;
    const int64_t t = batch.tgt_len;

    // encoder
    Tensor<T> x = embed(p, batch.enc_ids, b, s);
    apply_dropout(x, rate, rng, fc.enc_emb_drop);
    fc.enc_layers.resize(p.enc.size());
    for (size_t l = 0; l < p.enc.size(); ++l) {
        auto& lc = fc.enc_layers[l];
        const auto& lw = p.enc[l];
        lc.in = std::move(x);
        Tensor<T> attn = attention_fwd(lw.self_attn, lc.in, lc.in, batch.enc_mask, b, s, s,
                                       cfg.heads, /*causal=*/false, lc.attn);
        Tensor<T> y1 = residual_norm_fwd(lc.in, std::move(attn), lw.ln_attn, rate, rng, lc.sl_attn);
        Tensor<T> f = ffn_fwd(lw.ffn, y1, lc.ffn);
        x = residual_norm_fwd(y1, std::move(f), lw.ln_ffn, rate, rng, lc.sl_ffn);
    }
    if (cfg.final_layer_norm) {
        final_norm_fwd(p.enc_final_ln, std::move(x), fc.enc_pre_final, fc.enc_final_mean,
                       fc.enc_final_rstd, fc.enc_out);
    } else {
        fc.enc_out = std::move(x);
    }

    // decoder
    Tensor<T> y = embed(p, batch.dec_ids, b, t);
    apply_dropout(y, rate, rng, fc.dec_emb_drop);
    fc.dec_layers.resize(p.dec.size());
    for (size_t l = 0; l < p.dec.size(); ++l) {
        auto& lc = fc.dec_layers[l];
        const auto& lw = p.dec[l];
        lc.in = std::move(y);
        Tensor<T> self = attention_fwd(lw.self_attn, lc.in, lc.in, batch.dec_mask, b, t, t,
                                       cfg.heads, /*causal=*/true, lc.self_attn);
        Tensor<T> y1 = residual_norm_fwd(lc.in, std::move(self), lw.ln_self, rate, rng, lc.sl_self);
        Tensor<T> cross = attention_fwd(lw.cross_attn, y1, fc.enc_out, batch.enc_mask, b, t, s,
                                        cfg.heads, /*causal=*/false, lc.cross);
        Tensor<T> y2 = residual_norm_fwd(y1, std::move(cross), lw.ln_cross, rate, rng, lc.sl_cross);
        Tensor<T> f = ffn_fwd(lw.ffn, y2, lc.ffn);
        y = residual_norm_fwd(y2, std::move(f), lw.ln_ffn, rate, rng, lc.sl_ffn);
    }
    if (cfg.final_layer_norm) {
        final_norm_fwd(p.dec_final_ln, std::move(y), fc.dec_pre_final, fc.dec_final_mean,
                       fc.dec_final_rstd, fc.dec_out);
    } else {
        fc.dec_out = std::move(y);
    }
}

// Backward from d(dec_out); fills every gradient tensor.
template <typename T>
void backward_core(const Parameters<T>& p, const Batch& batch, const ForwardCache<T>& fc,
                   Tensor<T>&& d_dec_out, Parameters<T>& grads) {
    const auto& cfg = p.config;
    const int64_t b = batch.b;
    const int64_t s = batch.src_len;
    const int64_t t = batch.tgt_len;

    Tensor<T> dy = std::move(d_dec_out);
    if (cfg.final_layer_norm) {
        Tensor<T> dpre(dy.rows, dy.cols);
        kern::layernorm_bwd(fc.dec_pre_final.data.data(), p.dec_final_ln.gain.data.data(),
                            dy.data.data(), fc.dec_final_mean.data(), fc.dec_final_rstd.data(),
                            dpre.data.data(), grads.dec_final_ln.gain.data.data(),
                            grads.dec_final_ln.bias.data.data(), static_cast<int>(dy.rows),
                            static_cast<int>(dy.cols));
        dy = std::move(dpre);
    }

    Tensor<T> d_enc_out(b * s, cfg.d_model); // accumulated across decoder layers

    for (size_t li = p.dec.size(); li-- > 0;) {
        const auto& lc = fc.dec_layers[li];
        const auto& lw = p.dec[li];
        auto& gw = grads.dec[li];

        // ffn sublayer
        Tensor<T> dr = residual_norm_bwd(dy, lw.ln_ffn, lc.sl_ffn, gw.ln_ffn);
        Tensor<T> dsub = dr;
        dropout_backward(dsub, lc.sl_ffn.drop);
        Tensor<T> dy2 = std::move(dr); // residual branch
        ffn_bwd(lw.ffn, lc.ffn, dsub, gw.ffn, dy2);

        // cross-attention sublayer
        dr = residual_norm_bwd(dy2, lw.ln_cross, lc.sl_cross, gw.ln_cross);
        dsub = dr;
        dropout_backward(dsub, lc.sl_cross.drop);
        Tensor<T> dy1 = std::move(dr);
        attention_bwd(lw.cross_attn, lc.cross, dsub, b, t, s, cfg.heads, gw.cross_attn, dy1,
                      d_enc_out);

        // self-attention sublayer
        dr = residual_norm_bwd(dy1, lw.ln_self, lc.sl_self, gw.ln_self);
        dsub = dr;
        dropout_backward(dsub, lc.sl_self.drop);
        Tensor<T> din = std::move(dr);
        attention_bwd(lw.self_attn, lc.self_attn, dsub, b, t, t, cfg.heads, gw.self_attn, din,
                      din);
        dy = std::move(din);
    }
    dropout_backward(dy, fc.dec_emb_drop);
    embed_bwd(dy, batch.dec_ids, b, t, grads);

    // encoder side
    Tensor<T> dx = std::move(d_enc_out);
    if (cfg.final_layer_norm) {
        Tensor<T> dpre(dx.rows, dx.cols);
        kern::layernorm_bwd(fc.enc_pre_final.data.data(), p.enc_final_ln.gain.data.data(),
                            dx.data.data(), fc.enc_final_mean.data(), fc.enc_final_rstd.data(),
                            dpre.data.data(), grads.enc_final_ln.gain.data.data(),
                            grads.enc_final_ln.bias.data.data(), static_cast<int>(dx.rows),
                            static_cast<int>(dx.cols));
        dx = std::move(dpre);
    }
    for (size_t li = p.enc.size(); li-- > 0;) {
        const auto& lc = fc.enc_layers[li];
        const auto& lw = p.enc[li];
        auto& gw = grads.enc[li];

        Tensor<T> dr = residual_norm_bwd(dx, lw.ln_ffn, lc.sl_ffn, gw.ln_ffn);
        Tensor<T> dsub = dr;
        dropout_backward(dsub, lc.sl_ffn.drop);
        Tensor<T> dy1 = std::move(dr);
        ffn_bwd(lw.ffn, lc.ffn, dsub, gw.ffn, dy1);

        dr = residual_norm_bwd(dy1, lw.ln_attn, lc.sl_attn, gw.ln_attn);
        dsub = dr;
        dropout_backward(dsub, lc.sl_attn.drop);
        Tensor<T> din = std::move(dr);
        attention_bwd(lw.self_attn, lc.attn, dsub, b, s, s, cfg.heads, gw.self_attn, din, din);
        dx = std::move(din);
    }
    dropout_backward(dx, fc.enc_emb_drop);
    embed_bwd(dx, batch.enc_ids, b, s, grads);
}

// logits = dec_out * tok_emb^T (tied output projection)
template <typename T>
Tensor<T> project_logits(const Parameters<T>& p, const Tensor<T>& dec_out) {
    Tensor<T> logits(dec_out.rows, p.config.vocab_size);
    kern::gemm_nt(static_cast<int>(dec_out.rows), static_cast<int>(dec_out.cols),
                  static_cast<int>(p.config.vocab_size), dec_out.data.data(),
                  p.tok_emb.data.data(), logits.data.data(), false);
    return logits;
}

// Mean NLL over non-pad targets. When dlogits is non-null it receives
// d(loss)/d(logits) with pad rows zeroed.
template <typename T>
T cross_entropy(const Tensor<T>& logits, const std::vector<int>& tgt_ids,
                const std::vector<uint8_t>& tgt_mask, Tensor<T>* dlogits) {
    const int64_t rows = logits.rows;
    const int64_t v = logits.cols;
    int64_t count = 0;
    for (int64_t i = 0; i < rows; ++i) count += tgt_mask[static_cast<size_t>(i)] ? 1 : 0;
    if (dlogits) dlogits->zero();
    if (count == 0) return T(0);

    double loss = 0.0;
    const T inv_count = static_cast<T>(1.0 / static_cast<double>(count));
    for (int64_t i = 0; i < rows; ++i) {
        if (!tgt_mask[static_cast<size_t>(i)]) continue;
        const T* row = logits.row(i);
        T mx = row[0];
        for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < v; ++j) sum += std::exp(static_cast<double>(row[j] - mx));
        const double lse = std::log(sum) + static_cast<double>(mx);
        const int tgt = tgt_ids[static_cast<size_t>(i)];
        loss += lse - static_cast<double>(row[tgt]);
        if (dlogits) {
            T* drow = dlogits->row(i);
            for (int64_t j = 0; j < v; ++j) {
                drow[j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - lse)) * inv_count;
            }
            drow[tgt] -= inv_count;
        }
    }
    return static_cast<T>(loss / static_cast<double>(count));
}

std::vector<uint8_t> target_mask(const Batch& batch) {
    std::vector<uint8_t> mask(batch.tgt_ids.size());
    for (size_t i = 0; i < mask.size(); ++i) {
        mask[i] = batch.dec_mask[i] && batch.tgt_ids[i] != batch.pad_id ? 1 : 0;
    }
    return mask;
}

} // namespace

template <typename T>
Tensor<T> forward(const Parameters<T>& params, const Batch& batch, double dropout_rate, Rng* rng) {
    ForwardCache<T> fc;
    forward_core(params, batch, dropout_rate, rng, fc);
    return project_logits(params, fc.dec_out);
}

template <typename T>
T loss_only(const Parameters<T>& params, const Batch& batch) {
    Tensor<T> logits = forward(params, batch);
    const auto mask = target_mask(batch);
    return cross_entropy(logits, batch.tgt_ids, mask, static_cast<Tensor<T>*>(nullptr));
}

template <typename T>
LossGrads<T> loss_and_grads(const Parameters<T>& params, const Batch& batch, double dropout_rate,
                            Rng* rng) {
    ForwardCache<T> fc;
    forward_core(params, batch, dropout_rate, rng, fc);
    Tensor<T> logits = project_logits(params, fc.dec_out);

    const auto mask = target_mask(batch);

    LossGrads<T> out{T(0), zeros_like<T>(params.config)};
    Tensor<T> dlogits(logits.rows, logits.cols);
    out.loss = cross_entropy(logits, batch.tgt_ids, mask, &dlogits);

    int64_t nonpad = 0;
    for (auto m : mask) nonpad += m;
    if (nonpad == 0) return out; // loss 0, zero gradients

    // through the tied projection: d(dec_out) = dlogits E ; dE += dlogits^T dec_out
    Tensor<T> d_dec_out(fc.dec_out.rows, fc.dec_out.cols);
    kern::gemm_nn(static_cast<int>(dlogits.rows), static_cast<int>(dlogits.cols),
                  static_cast<int>(params.config.d_model), dlogits.data.data(),
                  params.tok_emb.data.data(), d_dec_out.data.data(), false);
    kern::gemm_tn(static_cast<int>(params.config.vocab_size), static_cast<int>(dlogits.rows),
                  static_cast<int>(params.config.d_model), dlogits.data.data(),
                  fc.dec_out.data.data(), out.grads.tok_emb.data.data(), true);

    backward_core(params, batch, fc, std::move(d_dec_out), out.grads);
    return out;
}

// ---------------------------------------------------------------------------
// generation
// ---------------------------------------------------------------------------

namespace {

// Decoder-only re-run against fixed encoder states; returns logits of the
// final position. Correctness over speed: no KV cache.
template <typename T>
std::vector<double> next_token_logprobs(const Parameters<T>& p, const Tensor<T>& enc_out,
                                        const std::vector<uint8_t>& enc_mask, int64_t src_len,
                                        const std::vector<int>& dec_ids) {
    const auto& cfg = p.config;
    const int64_t t = static_cast<int64_t>(dec_ids.size());
    if (t > cfg.max_positions) {
        throw Error("decoder length " + std::to_string(t) + " exceeds max_positions " +
                    std::to_string(cfg.max_positions));
    }
    std::vector<uint8_t> dec_mask(static_cast<size_t>(t), 1);

    Tensor<T> y = embed(p, dec_ids, 1, t);
    for (size_t l = 0; l < p.dec.size(); ++l) {
        const auto& lw = p.dec[l];
        DecLayerCache<T> lc;
        lc.in = std::move(y);
        Tensor<T> self = attention_fwd(lw.self_attn, lc.in, lc.in, dec_mask, 1, t, t, cfg.heads,
                                       true, lc.self_attn);
        Tensor<T> y1 = residual_norm_fwd(lc.in, std::move(self), lw.ln_self, 0.0, nullptr,
                                         lc.sl_self);
        Tensor<T> cross = attention_fwd(lw.cross_attn, y1, enc_out, enc_mask, 1, t, src_len,
                                        cfg.heads, false, lc.cross);
        Tensor<T> y2 = residual_norm_fwd(y1, std::move(cross), lw.ln_cross, 0.0, nullptr,
                                         lc.sl_cross);
        Tensor<T> f = ffn_fwd(lw.ffn, y2, lc.ffn);
        y = residual_norm_fwd(y2, std::move(f), lw.ln_ffn, 0.0, nullptr, lc.sl_ffn);
    }
    if (cfg.final_layer_norm) {
        Tensor<T> pre;
        std::vector<T> mean, rstd;
        Tensor<T> out;
        final_norm_fwd(p.dec_final_ln, std::move(y), pre, mean, rstd, out);
        y = std::move(out);
    }

    // last position only
    Tensor<T> last(1, cfg.d_model);
    std::memcpy(last.row(0), y.row(t - 1), sizeof(T) * static_cast<size_t>(cfg.d_model));
    Tensor<T> logits = project_logits(p, last);

    std::vector<double> lp(static_cast<size_t>(cfg.vocab_size));
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < cfg.vocab_size; ++j) {
        mx = std::max(mx, static_cast<double>(logits(0, j)));
    }
    double sum = 0.0;
    for (int64_t j = 0; j < cfg.vocab_size; ++j) {
        sum += std::exp(static_cast<double>(logits(0, j)) - mx);
    }
    const double lse = std::log(sum) + mx;
    for (int64_t j = 0; j < cfg.vocab_size; ++j) {
        lp[static_cast<size_t>(j)] = static_cast<double>(logits(0, j)) - lse;
    }
    return lp;
}

template <typename T>
Tensor<T> encode_source(const Parameters<T>& p, const std::vector<int>& source_ids, int pad_id,
                        std::vector<uint8_t>& enc_mask, int64_t& src_len) {
    const auto& cfg = p.config;
    src_len = std::max<int64_t>(1, static_cast<int64_t>(source_ids.size()));
    std::vector<int> ids(static_cast<size_t>(src_len), pad_id);
    enc_mask.assign(static_cast<size_t>(src_len), 0);
    for (size_t i = 0; i < source_ids.size(); ++i) {
        ids[i] = source_ids[i];
        enc_mask[i] = 1;
    }
    Tensor<T> x = embed(p, ids, 1, src_len);
    ForwardCache<T> fc;
    fc.enc_layers.resize(p.enc.size());
    for (size_t l = 0; l < p.enc.size(); ++l) {
        auto& lc = fc.enc_layers[l];
        const auto& lw = p.enc[l];
        lc.in = std::move(x);
        Tensor<T> attn = attention_fwd(lw.self_attn, lc.in, lc.in, enc_mask, 1, src_len, src_len,
                                       cfg.heads, false, lc.attn);
        Tensor<T> y1 = residual_norm_fwd(lc.in, std::move(attn), lw.ln_attn, 0.0, nullptr,
                                         lc.sl_attn);
        Tensor<T> f = ffn_fwd(lw.ffn, y1, lc.ffn);
        x = residual_norm_fwd(y1, std::move(f), lw.ln_ffn, 0.0, nullptr, lc.sl_ffn);
    }
    if (cfg.final_layer_norm) {
        Tensor<T> pre;
        std::vector<T> mean, rstd;
        Tensor<T> out;
        final_norm_fwd(p.enc_final_ln, std::move(x), pre, mean, rstd, out);
        return out;
    }
    return x;
}

} // namespace

template <typename T>
GenerateResult generate(const Parameters<T>& params, const std::vector<int>& source_ids,
                        int target_lang_id, int beam_size, int64_t max_len, int pad_id,
                        int eos_id) {
    if (beam_size < 1) throw Error("beam_size must be >= 1");
    if (max_len < 1) throw Error("max_len must be >= 1");

    std::vector<uint8_t> enc_mask;
    int64_t src_len = 0;
    Tensor<T> enc_out = encode_source(params, source_ids, pad_id, enc_mask, src_len);

    struct Hyp {
        std::vector<int> ids; // starts with the language id
        double log_prob = 0.0;
        double normalized() const {
            const size_t n = ids.size() - 1; // generated tokens only
            return n == 0 ? log_prob : log_prob / static_cast<double>(n);
        }
    };

    std::vector<Hyp> live{Hyp{{target_lang_id}, 0.0}};
    std::vector<Hyp> finished;

    const int64_t step_cap = std::min<int64_t>(max_len, params.config.max_positions - 1);
    for (int64_t step = 0; step < step_cap && !live.empty(); ++step) {
        std::vector<Hyp> candidates;
        for (const auto& hyp : live) {
            const auto lp = next_token_logprobs(params, enc_out, enc_mask, src_len, hyp.ids);
            // top beam_size continuations of this hypothesis suffice
            std::vector<int> order(lp.size());
            for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
            const size_t keep = std::min<size_t>(static_cast<size_t>(beam_size), lp.size());
            std::partial_sort(order.begin(), order.begin() + static_cast<ptrdiff_t>(keep),
                              order.end(), [&](int a, int b) {
                                  if (lp[static_cast<size_t>(a)] != lp[static_cast<size_t>(b)]) {
                                      return lp[static_cast<size_t>(a)] > lp[static_cast<size_t>(b)];
                                  }
                                  return a < b; // deterministic tie order
                              });
            for (size_t r = 0; r < keep; ++r) {
                const int tok = order[r];
                if (tok == pad_id) continue; // never emit pad
                Hyp next = hyp;
                next.ids.push_back(tok);
                next.log_prob += lp[static_cast<size_t>(tok)];
                candidates.push_back(std::move(next));
            }
        }
        std::sort(candidates.begin(), candidates.end(), [](const Hyp& a, const Hyp& b) {
            if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
            return a.ids < b.ids;
        });
        live.clear();
        for (auto& c : candidates) {
            if (static_cast<int>(live.size()) >= beam_size) break;
            if (c.ids.back() == eos_id) {
                finished.push_back(std::move(c));
            } else {
                live.push_back(std::move(c));
            }
        }
        if (static_cast<int>(finished.size()) >= beam_size) break;
    }
    for (auto& h : live) finished.push_back(std::move(h));
    if (finished.empty()) return GenerateResult{{}, 0.0, 0.0};

    const Hyp* best = &finished.front();
    for (const auto& h : finished) {
        if (h.normalized() > best->normalized()) best = &h;
    }
    GenerateResult result;
    result.log_prob = best->log_prob;
    result.score = best->normalized();
    for (size_t i = 1; i < best->ids.size(); ++i) { // strip the language id
        if (best->ids[i] == eos_id) break;
        result.ids.push_back(best->ids[i]);
    }
    return result;
}

// ---------------------------------------------------------------------------
// classification
// ---------------------------------------------------------------------------

namespace {

Batch classification_batch(const std::vector<std::vector<int>>& rows, int pad_id) {
    for (const auto& r : rows) {
        if (r.empty()) throw Error("classification input must be non-empty");
    }
    return make_batch(rows, rows, rows, pad_id);
}

template <typename T>
Tensor<T> readout_states(const ForwardCache<T>& fc, const Batch& batch,
                         std::vector<int64_t>& readout_rows) {
    readout_rows.clear();
    Tensor<T> states(batch.b, fc.dec_out.cols);
    for (int64_t i = 0; i < batch.b; ++i) {
        int64_t last = 0;
        for (int64_t j = 0; j < batch.tgt_len; ++j) {
            if (batch.dec_mask[static_cast<size_t>(i * batch.tgt_len + j)]) last = j;
        }
        const int64_t row = i * batch.tgt_len + last;
        readout_rows.push_back(row);
        std::memcpy(states.row(i), fc.dec_out.row(row),
                    sizeof(T) * static_cast<size_t>(fc.dec_out.cols));
    }
    return states;
}

} // namespace

template <typename T>
Tensor<T> classify(const Parameters<T>& params, const std::vector<std::vector<int>>& rows,
                   int pad_id) {
    if (params.config.num_labels < 1) throw Error("model has no classification head");
    const Batch batch = classification_batch(rows, pad_id);
    ForwardCache<T> fc;
    forward_core(params, batch, 0.0, nullptr, fc);
    std::vector<int64_t> readout;
    Tensor<T> states = readout_states(fc, batch, readout);
    Tensor<T> logits = linear_fwd(states, params.cls_w, &params.cls_b);
    return logits;
}

template <typename T>
ClassifyLossGrads<T> classify_loss_and_grads(const Parameters<T>& params,
                                             const std::vector<std::vector<int>>& rows,
                                             const std::vector<int>& labels, int pad_id,
                                             double dropout_rate, Rng* rng) {
    if (params.config.num_labels < 1) throw Error("model has no classification head");
    if (rows.size() != labels.size()) throw Error("labels must align with inputs");
    const Batch batch = classification_batch(rows, pad_id);
    ForwardCache<T> fc;
    forward_core(params, batch, dropout_rate, rng, fc);
    std::vector<int64_t> readout;
    Tensor<T> states = readout_states(fc, batch, readout);
    Tensor<T> logits = linear_fwd(states, params.cls_w, &params.cls_b);

    ClassifyLossGrads<T> out{T(0), logits, zeros_like<T>(params.config)};
    std::vector<uint8_t> mask(static_cast<size_t>(batch.b), 1);
    std::vector<int> tgt(labels.begin(), labels.end());
    for (int lab : labels) {
        if (lab < 0 || lab >= params.config.num_labels) throw Error("label out of range");
    }
    Tensor<T> dlogits(logits.rows, logits.cols);
    out.loss = cross_entropy(logits, tgt, mask, &dlogits);

    Tensor<T> dstates(states.rows, states.cols);
    linear_bwd(states, params.cls_w, dlogits, &dstates, out.grads.cls_w, &out.grads.cls_b);

    Tensor<T> d_dec_out(fc.dec_out.rows, fc.dec_out.cols);
    for (int64_t i = 0; i < batch.b; ++i) {
        kern::add_inplace(d_dec_out.row(readout[static_cast<size_t>(i)]), dstates.row(i),
                          static_cast<size_t>(dstates.cols));
    }
    backward_core(params, batch, fc, std::move(d_dec_out), out.grads);
    return out;
}

template <typename T>
T classify_loss_only(const Parameters<T>& params, const std::vector<std::vector<int>>& rows,
                     const std::vector<int>& labels, int pad_id) {
    Tensor<T> logits = classify(params, rows, pad_id);
    std::vector<uint8_t> mask(rows.size(), 1);
    std::vector<int> tgt(labels.begin(), labels.end());
    return cross_entropy(logits, tgt, mask, static_cast<Tensor<T>*>(nullptr));
}

// ---------------------------------------------------------------------------
// checkpoint io
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'P', 'L', 'B', 'K'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(buf, 4);
}

void put_u64(std::ostream& out, uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(buf, 8);
}

uint32_t get_u32(std::istream& in) {
    unsigned char buf[4];
    in.read(reinterpret_cast<char*>(buf), 4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& in) {
    unsigned char buf[8];
    in.read(reinterpret_cast<char*>(buf), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
}

void put_f32_array(std::ostream& out, const float* data, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        uint32_t bits;
        std::memcpy(&bits, &data[i], 4);
        put_u32(out, bits);
    }
}

void get_f32_array(std::istream& in, float* data, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        const uint32_t bits = get_u32(in);
        std::memcpy(&data[i], &bits, 4);
    }
}

} // namespace

void save_checkpoint(const std::string& path, const ParametersF& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path);
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    const std::string cfg = params.config.to_json();
    put_u32(out, static_cast<uint32_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));

    std::map<std::string, const TensorF*> tensors; // sorted-name order
    params.visit([&](const std::string& name, const TensorF& t) { tensors[name] = &t; });
    put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u64(out, static_cast<uint64_t>(t->rows));
        put_u64(out, static_cast<uint64_t>(t->cols));
        put_f32_array(out, t->data.data(), t->size());
    }
    if (!out) throw Error("write failed: " + path);
}

ParametersF load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("checkpoint not found: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) throw Error("bad checkpoint magic in " + path);
    const uint32_t version = get_u32(in);
    if (version != kVersion) throw Error("unsupported checkpoint version " + std::to_string(version));
    const uint32_t cfg_len = get_u32(in);
    std::string cfg(cfg_len, '\0');
    in.read(cfg.data(), cfg_len);
    ParametersF params = zeros_like<float>(ModelConfig::from_json(cfg));

    std::map<std::string, TensorF*> tensors;
    params.visit([&](const std::string& name, TensorF& t) { tensors[name] = &t; });
    const uint32_t n_tensors = get_u32(in);
    if (n_tensors != tensors.size()) {
        throw Error("checkpoint tensor count mismatch in " + path);
    }
    for (uint32_t i = 0; i < n_tensors; ++i) {
        const uint32_t name_len = get_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const auto rows = static_cast<int64_t>(get_u64(in));
        const auto cols = static_cast<int64_t>(get_u64(in));
        auto it = tensors.find(name);
        if (it == tensors.end()) throw Error("unknown tensor '" + name + "' in " + path);
        if (it->second->rows != rows || it->second->cols != cols) {
            throw Error("shape mismatch for tensor '" + name + "' in " + path);
        }
        get_f32_array(in, it->second->data.data(), it->second->size());
        if (!in) throw Error("truncated checkpoint: " + path);
    }
    return params;
}

// ---------------------------------------------------------------------------
// explicit instantiations
// ---------------------------------------------------------------------------

template struct Parameters<float>;
template struct Parameters<double>;
template Parameters<float> zeros_like<float>(const ModelConfig&);
template Parameters<double> zeros_like<double>(const ModelConfig&);
template Parameters<float> init_parameters<float>(const ModelConfig&, uint64_t);
template Parameters<double> init_parameters<double>(const ModelConfig&, uint64_t);
template int64_t parameter_count<float>(const Parameters<float>&);
template int64_t parameter_count<double>(const Parameters<double>&);
template Tensor<float> forward<float>(const Parameters<float>&, const Batch&, double, Rng*);
template Tensor<double> forward<double>(const Parameters<double>&, const Batch&, double, Rng*);
template float loss_only<float>(const Parameters<float>&, const Batch&);
template double loss_only<double>(const Parameters<double>&, const Batch&);
template LossGrads<float> loss_and_grads<float>(const Parameters<float>&, const Batch&, double,
                                                Rng*);
template LossGrads<double> loss_and_grads<double>(const Parameters<double>&, const Batch&, double,
                                                  Rng*);
template GenerateResult generate<float>(const Parameters<float>&, const std::vector<int>&, int,
                                        int, int64_t, int, int);
template GenerateResult generate<double>(const Parameters<double>&, const std::vector<int>&, int,
                                         int, int64_t, int, int);
template Tensor<float> classify<float>(const Parameters<float>&,
                                       const std::vector<std::vector<int>>&, int);
template Tensor<double> classify<double>(const Parameters<double>&,
                                         const std::vector<std::vector<int>>&, int);
template ClassifyLossGrads<float> classify_loss_and_grads<float>(
    const Parameters<float>&, const std::vector<std::vector<int>>&, const std::vector<int>&, int,
    double, Rng*);
template ClassifyLossGrads<double> classify_loss_and_grads<double>(
    const Parameters<double>&, const std::vector<std::vector<int>>&, const std::vector<int>&, int,
    double, Rng*);
template float classify_loss_only<float>(const Parameters<float>&,
                                         const std::vector<std::vector<int>>&,
                                         const std::vector<int>&, int);
template double classify_loss_only<double>(const Parameters<double>&,
                                           const std::vector<std::vector<int>>&,
                                           const std::vector<int>&, int);

} // namespace plbk::model
