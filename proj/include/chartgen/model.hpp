#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chartgen/audio.hpp"
#include "chartgen/mat.hpp"
#include "chartgen/tokenizer.hpp"

namespace chartgen {

// ----------------------------- configuration -----------------------------

struct ModelConfig {
    int d_model = 64;
    int n_layers = 4;
    int n_heads = 4;
    int d_ff = 256;
    int vocab_size = vocab::kSize;
    int max_seq_len = 1504;
    double dropout_p = 0.2;
    bool conditioned = false;
    int adapter_kernel = 5;
    int adapter_stride = 2;
    int n_q = 4;
    int codebook_size = 1024;
    int max_cond_len = 1504;
    uint64_t seed = 0;

    void validate() const;
    std::vector<std::pair<std::string, std::string>> to_kv() const;
    static ModelConfig from_kv(const std::vector<std::pair<std::string, std::string>>& kv);
};

// ----------------------------- parameters -----------------------------

template <class S>
struct LayerParamsT {
    MatT<S> wq, wk, wv, wo;        // self-attention projections (D x D)
    MatT<S> cq, ck, cv, co;        // cross-attention projections (D x D)
    MatT<S> g1, g2, g3;            // RMS gains (1 x D); g2 unused when unconditioned
    MatT<S> w_gate, w_up, w_down;  // SwiGLU (D x F, D x F, F x D)
};

template <class S>
struct ParamSetT {
    bool conditioned = false;
    MatT<S> tok_emb;                 // V x D
    MatT<S> pos_emb;                 // max_seq x D
    std::vector<MatT<S>> code_emb;   // n_q tables, codebook x D
    MatT<S> adapter_w;               // (K*D) x D
    MatT<S> adapter_b;               // 1 x D
    MatT<S> cond_pos_emb;            // max_cond x D
    std::vector<LayerParamsT<S>> layers;
    MatT<S> g_final;                 // 1 x D
    MatT<S> out_proj;                // D x V
    MatT<S> out_bias;                // 1 x V

    // Visits every tensor in a fixed order; the order defines the checkpoint
    // layout and the optimizer state pairing.
    template <class F>
    void for_each(F&& f) {
        f("tok_emb", tok_emb);
        f("pos_emb", pos_emb);
        if (conditioned) {
            for (size_t q = 0; q < code_emb.size(); ++q) {
                f("code_emb.q" + std::to_string(q), code_emb[q]);
            }
            f("adapter_w", adapter_w);
            f("adapter_b", adapter_b);
            f("cond_pos_emb", cond_pos_emb);
        }
        for (size_t l = 0; l < layers.size(); ++l) {
            const std::string p = "layer" + std::to_string(l) + ".";
            auto& lp = layers[l];
            f(p + "wq", lp.wq);
            f(p + "wk", lp.wk);
            f(p + "wv", lp.wv);
            f(p + "wo", lp.wo);
            if (conditioned) {
                f(p + "cq", lp.cq);
                f(p + "ck", lp.ck);
                f(p + "cv", lp.cv);
                f(p + "co", lp.co);
                f(p + "g2", lp.g2);
            }
            f(p + "g1", lp.g1);
            f(p + "g3", lp.g3);
            f(p + "w_gate", lp.w_gate);
            f(p + "w_up", lp.w_up);
            f(p + "w_down", lp.w_down);
        }
        f("g_final", g_final);
        f("out_proj", out_proj);
        f("out_bias", out_bias);
    }

    template <class F>
    void for_each(F&& f) const {
        const_cast<ParamSetT<S>*>(this)->for_each(
            [&](const std::string& name, MatT<S>& m) { f(name, const_cast<const MatT<S>&>(m)); });
    }

    size_t n_params() const {
        size_t n = 0;
        for_each([&](const std::string&, const MatT<S>& m) { n += m.size(); });
        return n;
    }

    ParamSetT<S> zeros_like() const {
        ParamSetT<S> out = *this;
        out.for_each([](const std::string&, MatT<S>& m) { m.zero(); });
        return out;
    }

    template <class T>
    ParamSetT<T> cast() const {
        ParamSetT<T> out;
        out.conditioned = conditioned;
        out.tok_emb = tok_emb.template cast<T>();
        out.pos_emb = pos_emb.template cast<T>();
        for (const auto& ce : code_emb) out.code_emb.push_back(ce.template cast<T>());
        out.adapter_w = adapter_w.template cast<T>();
        out.adapter_b = adapter_b.template cast<T>();
        out.cond_pos_emb = cond_pos_emb.template cast<T>();
        for (const auto& lp : layers) {
            LayerParamsT<T> o;
            o.wq = lp.wq.template cast<T>();
            o.wk = lp.wk.template cast<T>();
            o.wv = lp.wv.template cast<T>();
            o.wo = lp.wo.template cast<T>();
            o.cq = lp.cq.template cast<T>();
            o.ck = lp.ck.template cast<T>();
            o.cv = lp.cv.template cast<T>();
            o.co = lp.co.template cast<T>();
            o.g1 = lp.g1.template cast<T>();
            o.g2 = lp.g2.template cast<T>();
            o.g3 = lp.g3.template cast<T>();
            o.w_gate = lp.w_gate.template cast<T>();
            o.w_up = lp.w_up.template cast<T>();
            o.w_down = lp.w_down.template cast<T>();
            out.layers.push_back(std::move(o));
        }
        out.g_final = g_final.template cast<T>();
        out.out_proj = out_proj.template cast<T>();
        out.out_bias = out_bias.template cast<T>();
        return out;
    }
};

struct InitOptions {
    // Zero the cross-attention output projections so a conditioned model
    // starts exactly equivalent to an unconditional one.
    bool zero_cross_out = true;
};

template <class S>
ParamSetT<S> init_params(const ModelConfig& cfg, const InitOptions& opts = {});

// ----------------------------- forward trace -----------------------------

template <class S>
struct LayerTraceT {
    MatT<S> x_in, n1;
    std::vector<S> inv1;
    MatT<S> q, k, v, attn_ctx;
    std::vector<uint8_t> drop1;
    MatT<S> x_mid, n2;
    std::vector<S> inv2;
    MatT<S> cq, ck, cv, cross_ctx;
    std::vector<uint8_t> drop2;
    MatT<S> x_mid2, n3;
    std::vector<S> inv3;
    MatT<S> ffn_u, ffn_v;
    std::vector<uint8_t> drop3;
};

template <class S>
struct ForwardTraceT {
    std::vector<TokenId> input;
    std::vector<uint8_t> drop_emb;
    // conditioning caches
    const AudioCodes* codes = nullptr;
    MatT<S> code_sum;     // T_e x D
    MatT<S> adapter_out;  // T_c x D
    MatT<S> cond;         // T_c x D, post positional and dropout
    std::vector<uint8_t> drop_cond;

    std::vector<LayerTraceT<S>> layers;
    MatT<S> x_final, nf;
    std::vector<S> invf;
    MatT<S> logits;  // T x V

    S dropout_p = S(0);  // the rate actually applied (0 in eval mode)
};

// ----------------------------- losses -----------------------------

struct SeqLoss {
    double weighted_sum = 0.0;        // sum of w_t * l_t
    double weight_sum = 0.0;          // sum of w_t
    std::vector<double> per_pos;      // l_t = -log p(target_t)
    double loss() const { return weight_sum > 0.0 ? weighted_sum / weight_sum : 0.0; }
};

// Categorical cross-entropy with PAD targets down-weighted by pad_weight.
template <class S>
SeqLoss token_loss(const MatT<S>& logits, const std::vector<TokenId>& targets, double pad_weight);

// dlogits = (w_t / weight_norm) * (softmax(logits_t) - onehot(target_t)).
// weight_norm is the total weight of the pooled loss (e.g. the batch).
template <class S>
void token_loss_grad(const MatT<S>& logits, const std::vector<TokenId>& targets, double pad_weight,
                     double weight_norm, MatT<S>& dlogits);

// L = token + sum_i lambda_i * aux_i
double combine_losses(double token_loss, const std::vector<std::pair<double, double>>& aux);

// ----------------------------- transformer -----------------------------

template <class S>
class TransformerT {
public:
    TransformerT() = default;
    TransformerT(ModelConfig cfg, ParamSetT<S> params)
        : cfg_(std::move(cfg)), params_(std::move(params)) {}

    static TransformerT make(const ModelConfig& cfg, const InitOptions& opts = {}) {
        return TransformerT(cfg, init_params<S>(cfg, opts));
    }

    const ModelConfig& config() const { return cfg_; }
    ParamSetT<S>& params() { return params_; }
    const ParamSetT<S>& params() const { return params_; }

    // Audio codes -> conditioning tensor: per-frame sum of the per-codebook
    // embeddings, a strided 1D convolution, then learned positions.
    // (Dropout is applied inside forward(), not here.)
    MatT<S> condition_audio(const AudioCodes& codes) const;

    // Full-sequence forward. `input` must carry its BOS prefix. dropout_seed
    // fixes the dropout masks; reuse a seed to replay identical masks.
    ForwardTraceT<S> forward(const std::vector<TokenId>& input, const AudioCodes* codes,
                             bool train_mode, uint64_t dropout_seed = 0) const;

    // Reverse-mode gradients of a scalar loss whose logit gradient is
    // dlogits. Accumulates into grads (zero it first for a fresh pass).
    void backward(const ForwardTraceT<S>& trace, const MatT<S>& dlogits, ParamSetT<S>& grads) const;

    // ---- incremental decoding (eval mode, no dropout) ----
    struct DecodeState {
        std::vector<MatT<S>> self_k, self_v;  // per layer, grown one row per step
        std::vector<MatT<S>> cross_k, cross_v;
        int t = 0;
    };
    DecodeState decode_start(const AudioCodes* codes) const;
    // Feeds one token, returns the logits row for the next prediction.
    std::vector<S> decode_step(DecodeState& state, TokenId token) const;

private:
    void check_tokens(const std::vector<TokenId>& input) const;

    ModelConfig cfg_;
    ParamSetT<S> params_;
};

using Transformer = TransformerT<float>;
using ParamSet = ParamSetT<float>;
using Gradients = ParamSet;

// ----------------------------- gradient utilities -----------------------------

template <class S>
double grad_global_norm(const ParamSetT<S>& grads);

template <class S>
void clip_gradients(ParamSetT<S>& grads, double max_norm);

template <class S>
void accumulate(ParamSetT<S>& into, const ParamSetT<S>& from);

// ----------------------------- AdamW -----------------------------

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

template <class S>
struct AdamStateT {
    ParamSetT<S> m, v;
    int64_t step = 0;

    static AdamStateT zeros_like(const ParamSetT<S>& params) {
        return AdamStateT{params.zeros_like(), params.zeros_like(), 0};
    }
};

// Decoupled weight decay step on bias-corrected moments.
template <class S>
void adamw_step(ParamSetT<S>& params, const ParamSetT<S>& grads, AdamStateT<S>& state, double lr,
                const AdamHyper& h = {});

using AdamState = AdamStateT<float>;

// ----------------------------- checkpoints -----------------------------
// Text header (config key/value block) followed by named raw f32 tensors;
// write -> read -> write is byte-identical.

void save_checkpoint(const ModelConfig& cfg, const ParamSetT<float>& params, const std::string& path);
std::pair<ModelConfig, ParamSetT<float>> load_checkpoint(const std::string& path);

}  // namespace chartgen

#include "chartgen/model_impl.hpp"
