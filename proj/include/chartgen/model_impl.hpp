#pragma once

// Template implementation for model.hpp. Everything here is included through
// model.hpp; do not include directly.

#include <algorithm>
#include <cstring>

namespace chartgen {

namespace detail {

inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace detail

// ----------------------------- init -----------------------------

template <class S>
ParamSetT<S> init_params(const ModelConfig& cfg, const InitOptions& opts) {
    cfg.validate();
    const int d = cfg.d_model, f = cfg.d_ff, v = cfg.vocab_size;

    ParamSetT<S> p;
    p.conditioned = cfg.conditioned;
    p.tok_emb = MatT<S>(v, d);
    p.pos_emb = MatT<S>(cfg.max_seq_len, d);
    if (cfg.conditioned) {
        for (int q = 0; q < cfg.n_q; ++q) p.code_emb.emplace_back(cfg.codebook_size, d);
        p.adapter_w = MatT<S>(cfg.adapter_kernel * d, d);
        p.adapter_b = MatT<S>(1, d);
        p.cond_pos_emb = MatT<S>(cfg.max_cond_len, d);
    }
    for (int l = 0; l < cfg.n_layers; ++l) {
        LayerParamsT<S> lp;
        lp.wq = MatT<S>(d, d);
        lp.wk = MatT<S>(d, d);
        lp.wv = MatT<S>(d, d);
        lp.wo = MatT<S>(d, d);
        if (cfg.conditioned) {
            lp.cq = MatT<S>(d, d);
            lp.ck = MatT<S>(d, d);
            lp.cv = MatT<S>(d, d);
            lp.co = MatT<S>(d, d);
            lp.g2 = MatT<S>(1, d);
        }
        lp.g1 = MatT<S>(1, d);
        lp.g3 = MatT<S>(1, d);
        lp.w_gate = MatT<S>(d, f);
        lp.w_up = MatT<S>(d, f);
        lp.w_down = MatT<S>(f, d);
        p.layers.push_back(std::move(lp));
    }
    p.g_final = MatT<S>(1, d);
    p.out_proj = MatT<S>(d, v);
    p.out_bias = MatT<S>(1, v);

    Rng rng(derive_seed(cfg.seed, 0x706172616d73ull));
    const double base_std = 0.02;
    const double out_std = base_std / std::sqrt(2.0 * cfg.n_layers);
    p.for_each([&](const std::string& name, MatT<S>& m) {
        const bool is_gain = name == "g_final" || detail::ends_with(name, ".g1") ||
                             detail::ends_with(name, ".g2") || detail::ends_with(name, ".g3");
        if (is_gain) {
            std::fill(m.data.begin(), m.data.end(), S(1));
        } else if (name == "adapter_b" || name == "out_bias") {
            m.zero();
        } else if (name == "out_proj") {
            for (auto& x : m.data) x = S(rng.normal() * out_std);
        } else if (detail::ends_with(name, ".co") && opts.zero_cross_out) {
            m.zero();
        } else {
            for (auto& x : m.data) x = S(rng.normal() * base_std);
        }
    });
    return p;
}

// ----------------------------- conditioning -----------------------------

template <class S>
MatT<S> TransformerT<S>::condition_audio(const AudioCodes& codes) const {
    if (!cfg_.conditioned) throw Error(Err::ShapeMismatch, "model is unconditional");
    if (codes.n_q != cfg_.n_q || codes.codebook_size != cfg_.codebook_size) {
        throw Error(Err::ShapeMismatch, "codes do not match model n_q/codebook_size");
    }
    const int64_t t_e = codes.n_frames();
    if (t_e <= 0) throw Error(Err::ShapeMismatch, "empty code matrix");
    const int d = cfg_.d_model;
    const int stride = cfg_.adapter_stride;
    const int kernel = cfg_.adapter_kernel;
    const int64_t t_c = (t_e + stride - 1) / stride;
    if (t_c > cfg_.max_cond_len) {
        throw Error(Err::SequenceTooLong,
                    "conditioning length " + std::to_string(t_c) + " > max_cond_len");
    }

    MatT<S> code_sum(int(t_e), d);
    for (int64_t t = 0; t < t_e; ++t) {
        S* row = code_sum.row(int(t));
        for (int q = 0; q < cfg_.n_q; ++q) {
            kern::axpy(row, params_.code_emb[size_t(q)].row(codes.at(t, q)), S(1), d);
        }
    }

    MatT<S> out(int(t_c), d);
    const int pad = (kernel - 1) / 2;
    for (int64_t u = 0; u < t_c; ++u) {
        S* orow = out.row(int(u));
        std::memcpy(orow, params_.adapter_b.row(0), sizeof(S) * size_t(d));
        for (int j = 0; j < kernel; ++j) {
            const int64_t r = u * stride + j - pad;
            if (r < 0 || r >= t_e) continue;
            const S* in = code_sum.row(int(r));
            for (int i = 0; i < d; ++i) {
                kern::axpy(orow, params_.adapter_w.row(j * d + i), in[i], d);
            }
        }
    }
    for (int64_t u = 0; u < t_c; ++u) {
        kern::axpy(out.row(int(u)), params_.cond_pos_emb.row(int(u)), S(1), d);
    }
    return out;
}

// ----------------------------- forward -----------------------------

template <class S>
void TransformerT<S>::check_tokens(const std::vector<TokenId>& input) const {
    if (input.empty()) throw Error(Err::SequenceTooLong, "empty input sequence");
    if (int(input.size()) > cfg_.max_seq_len) {
        throw Error(Err::SequenceTooLong,
                    "sequence length " + std::to_string(input.size()) + " > max_seq_len");
    }
    for (TokenId t : input) {
        if (t < 0 || t >= cfg_.vocab_size) {
            throw Error(Err::NotANoteToken, "input token " + std::to_string(t) + " out of vocabulary");
        }
    }
}

template <class S>
ForwardTraceT<S> TransformerT<S>::forward(const std::vector<TokenId>& input, const AudioCodes* codes,
                                          bool train_mode, uint64_t dropout_seed) const {
    check_tokens(input);
    if (cfg_.conditioned && codes == nullptr) {
        throw Error(Err::MissingCodes, "conditioned model requires audio codes");
    }

    const int t = int(input.size());
    const int d = cfg_.d_model;
    const S p_drop = train_mode ? S(cfg_.dropout_p) : S(0);
    Rng drop_rng(derive_seed(dropout_seed, 0x64726f70ull));

    ForwardTraceT<S> trace;
    trace.input = input;
    trace.dropout_p = p_drop;
    trace.layers.resize(size_t(cfg_.n_layers));

    // token + position embeddings
    MatT<S> x(t, d);
    for (int i = 0; i < t; ++i) {
        std::memcpy(x.row(i), params_.tok_emb.row(input[size_t(i)]), sizeof(S) * size_t(d));
        kern::axpy(x.row(i), params_.pos_emb.row(i), S(1), d);
    }
    kern::dropout_forward(x, p_drop, drop_rng, trace.drop_emb);

    // conditioning stream
    if (cfg_.conditioned) {
        trace.codes = codes;
        const int64_t t_e = codes->n_frames();
        trace.code_sum = MatT<S>(int(t_e), d);
        for (int64_t fr = 0; fr < t_e; ++fr) {
            S* row = trace.code_sum.row(int(fr));
            for (int q = 0; q < cfg_.n_q; ++q) {
                if (codes->at(fr, q) >= cfg_.codebook_size) {
                    throw Error(Err::ShapeMismatch, "code value out of range");
                }
                kern::axpy(row, params_.code_emb[size_t(q)].row(codes->at(fr, q)), S(1), d);
            }
        }
        if (codes->n_q != cfg_.n_q) throw Error(Err::ShapeMismatch, "codes n_q mismatch");
        if (t_e <= 0) throw Error(Err::ShapeMismatch, "empty code matrix");
        const int stride = cfg_.adapter_stride;
        const int kernel = cfg_.adapter_kernel;
        const int pad = (kernel - 1) / 2;
        const int64_t t_c = (t_e + stride - 1) / stride;
        if (t_c > cfg_.max_cond_len) {
            throw Error(Err::SequenceTooLong, "conditioning length > max_cond_len");
        }
        trace.adapter_out = MatT<S>(int(t_c), d);
        for (int64_t u = 0; u < t_c; ++u) {
            S* orow = trace.adapter_out.row(int(u));
            std::memcpy(orow, params_.adapter_b.row(0), sizeof(S) * size_t(d));
            for (int j = 0; j < kernel; ++j) {
                const int64_t r = u * stride + j - pad;
                if (r < 0 || r >= t_e) continue;
                const S* in = trace.code_sum.row(int(r));
                for (int i = 0; i < d; ++i) {
                    kern::axpy(orow, params_.adapter_w.row(j * d + i), in[i], d);
                }
            }
        }
        trace.cond = trace.adapter_out;
        for (int64_t u = 0; u < t_c; ++u) {
            kern::axpy(trace.cond.row(int(u)), params_.cond_pos_emb.row(int(u)), S(1), d);
        }
        kern::dropout_forward(trace.cond, p_drop, drop_rng, trace.drop_cond);
    }

    // decoder blocks
    for (int l = 0; l < cfg_.n_layers; ++l) {
        auto& lt = trace.layers[size_t(l)];
        const auto& lp = params_.layers[size_t(l)];
        lt.x_in = x;

        lt.n1 = MatT<S>(t, d);
        kern::rms_norm_forward(lt.x_in, lp.g1.row(0), S(1e-5), lt.n1, lt.inv1);
        lt.q = MatT<S>(t, d);
        lt.k = MatT<S>(t, d);
        lt.v = MatT<S>(t, d);
        kern::linear_forward(lt.n1, lp.wq, lt.q);
        kern::linear_forward(lt.n1, lp.wk, lt.k);
        kern::linear_forward(lt.n1, lp.wv, lt.v);
        lt.attn_ctx = MatT<S>(t, d);
        kern::attention_forward(lt.q, lt.k, lt.v, cfg_.n_heads, kern::AttnMask::Causal, lt.attn_ctx);
        MatT<S> self_out(t, d);
        kern::linear_forward(lt.attn_ctx, lp.wo, self_out);
        kern::dropout_forward(self_out, p_drop, drop_rng, lt.drop1);
        lt.x_mid = lt.x_in;
        for (size_t i = 0; i < lt.x_mid.data.size(); ++i) lt.x_mid.data[i] += self_out.data[i];

        if (cfg_.conditioned) {
            lt.n2 = MatT<S>(t, d);
            kern::rms_norm_forward(lt.x_mid, lp.g2.row(0), S(1e-5), lt.n2, lt.inv2);
            lt.cq = MatT<S>(t, d);
            kern::linear_forward(lt.n2, lp.cq, lt.cq);
            lt.ck = MatT<S>(trace.cond.rows, d);
            lt.cv = MatT<S>(trace.cond.rows, d);
            kern::linear_forward(trace.cond, lp.ck, lt.ck);
            kern::linear_forward(trace.cond, lp.cv, lt.cv);
            lt.cross_ctx = MatT<S>(t, d);
            kern::attention_forward(lt.cq, lt.ck, lt.cv, cfg_.n_heads, kern::AttnMask::None,
                                    lt.cross_ctx);
            MatT<S> cross_out(t, d);
            kern::linear_forward(lt.cross_ctx, lp.co, cross_out);
            kern::dropout_forward(cross_out, p_drop, drop_rng, lt.drop2);
            lt.x_mid2 = lt.x_mid;
            for (size_t i = 0; i < lt.x_mid2.data.size(); ++i) lt.x_mid2.data[i] += cross_out.data[i];
        } else {
            lt.x_mid2 = lt.x_mid;
        }

        lt.n3 = MatT<S>(t, d);
        kern::rms_norm_forward(lt.x_mid2, lp.g3.row(0), S(1e-5), lt.n3, lt.inv3);
        lt.ffn_u = MatT<S>(t, cfg_.d_ff);
        lt.ffn_v = MatT<S>(t, cfg_.d_ff);
        MatT<S> ffn_out(t, d);
        kern::swiglu_forward(lt.n3, lp.w_gate, lp.w_up, lp.w_down, lt.ffn_u, lt.ffn_v, ffn_out);
        kern::dropout_forward(ffn_out, p_drop, drop_rng, lt.drop3);
        x = lt.x_mid2;
        for (size_t i = 0; i < x.data.size(); ++i) x.data[i] += ffn_out.data[i];
    }

    trace.x_final = x;
    trace.nf = MatT<S>(t, d);
    kern::rms_norm_forward(trace.x_final, params_.g_final.row(0), S(1e-5), trace.nf, trace.invf);
    trace.logits = MatT<S>(t, cfg_.vocab_size);
    kern::linear_forward(trace.nf, params_.out_proj, trace.logits);
    for (int i = 0; i < t; ++i) {
        kern::axpy(trace.logits.row(i), params_.out_bias.row(0), S(1), cfg_.vocab_size);
    }
    return trace;
}

// ----------------------------- backward -----------------------------

template <class S>
void TransformerT<S>::backward(const ForwardTraceT<S>& trace, const MatT<S>& dlogits,
                               ParamSetT<S>& grads) const {
    const int t = int(trace.input.size());
    const int d = cfg_.d_model;
    const S p_drop = trace.dropout_p;

    // output head
    MatT<S> dnf(t, d);
    kern::linear_backward(trace.nf, params_.out_proj, dlogits, dnf, grads.out_proj);
    for (int i = 0; i < t; ++i) {
        kern::axpy(grads.out_bias.row(0), dlogits.row(i), S(1), cfg_.vocab_size);
    }
    MatT<S> dh(t, d);
    kern::rms_norm_backward(trace.x_final, params_.g_final.row(0), trace.invf, dnf, dh,
                            grads.g_final.row(0));

    MatT<S> dcond;
    if (cfg_.conditioned) {
        dcond = MatT<S>(trace.cond.rows, d);
    }

    for (int l = cfg_.n_layers - 1; l >= 0; --l) {
        const auto& lt = trace.layers[size_t(l)];
        const auto& lp = params_.layers[size_t(l)];
        auto& lg = grads.layers[size_t(l)];

        // ffn sublayer: x_out = x_mid2 + dropout(ffn(n3))
        MatT<S> dffn = dh;
        kern::dropout_backward(dffn, p_drop, lt.drop3);
        MatT<S> dn3(t, d);
        kern::swiglu_backward(lt.n3, lp.w_gate, lp.w_up, lp.w_down, lt.ffn_u, lt.ffn_v, dffn, dn3,
                              lg.w_gate, lg.w_up, lg.w_down);
        MatT<S> dx_mid2 = dh;  // residual path
        kern::rms_norm_backward(lt.x_mid2, lp.g3.row(0), lt.inv3, dn3, dx_mid2, lg.g3.row(0));

        // cross-attention sublayer
        MatT<S> dx_mid;
        if (cfg_.conditioned) {
            MatT<S> dcross = dx_mid2;
            kern::dropout_backward(dcross, p_drop, lt.drop2);
            MatT<S> dcross_ctx(t, d);
            kern::linear_backward(lt.cross_ctx, lp.co, dcross, dcross_ctx, lg.co);
            MatT<S> dcq(t, d), dck(lt.ck.rows, d), dcv(lt.cv.rows, d);
            kern::attention_backward(lt.cq, lt.ck, lt.cv, cfg_.n_heads, kern::AttnMask::None,
                                     dcross_ctx, dcq, dck, dcv);
            MatT<S> dn2(t, d);
            kern::linear_backward(lt.n2, lp.cq, dcq, dn2, lg.cq);
            kern::linear_backward(trace.cond, lp.ck, dck, dcond, lg.ck);
            kern::linear_backward(trace.cond, lp.cv, dcv, dcond, lg.cv);
            dx_mid = dx_mid2;
            kern::rms_norm_backward(lt.x_mid, lp.g2.row(0), lt.inv2, dn2, dx_mid, lg.g2.row(0));
        } else {
            dx_mid = dx_mid2;
        }

        // self-attention sublayer
        MatT<S> dself = dx_mid;
        kern::dropout_backward(dself, p_drop, lt.drop1);
        MatT<S> dattn_ctx(t, d);
        kern::linear_backward(lt.attn_ctx, lp.wo, dself, dattn_ctx, lg.wo);
        MatT<S> dq(t, d), dk(t, d), dv(t, d);
        kern::attention_backward(lt.q, lt.k, lt.v, cfg_.n_heads, kern::AttnMask::Causal, dattn_ctx,
                                 dq, dk, dv);
        MatT<S> dn1(t, d);
        kern::linear_backward(lt.n1, lp.wq, dq, dn1, lg.wq);
        kern::linear_backward(lt.n1, lp.wk, dk, dn1, lg.wk);
        kern::linear_backward(lt.n1, lp.wv, dv, dn1, lg.wv);
        MatT<S> dx_in = dx_mid;
        kern::rms_norm_backward(lt.x_in, lp.g1.row(0), lt.inv1, dn1, dx_in, lg.g1.row(0));

        dh = std::move(dx_in);
    }

    // embeddings
    kern::dropout_backward(dh, p_drop, trace.drop_emb);
    for (int i = 0; i < t; ++i) {
        kern::axpy(grads.tok_emb.row(trace.input[size_t(i)]), dh.row(i), S(1), d);
        kern::axpy(grads.pos_emb.row(i), dh.row(i), S(1), d);
    }

    // conditioning stream
    if (cfg_.conditioned) {
        kern::dropout_backward(dcond, p_drop, trace.drop_cond);
        const int64_t t_c = trace.cond.rows;
        const int64_t t_e = trace.code_sum.rows;
        for (int64_t u = 0; u < t_c; ++u) {
            kern::axpy(grads.cond_pos_emb.row(int(u)), dcond.row(int(u)), S(1), d);
            kern::axpy(grads.adapter_b.row(0), dcond.row(int(u)), S(1), d);
        }
        const int stride = cfg_.adapter_stride;
        const int kernel = cfg_.adapter_kernel;
        const int pad = (kernel - 1) / 2;
        MatT<S> dcode_sum(int(t_e), d);
        for (int64_t u = 0; u < t_c; ++u) {
            const S* dout = dcond.row(int(u));
            for (int j = 0; j < kernel; ++j) {
                const int64_t r = u * stride + j - pad;
                if (r < 0 || r >= t_e) continue;
                const S* in = trace.code_sum.row(int(r));
                S* din = dcode_sum.row(int(r));
                for (int i = 0; i < d; ++i) {
                    kern::axpy(grads.adapter_w.row(j * d + i), dout, in[i], d);
                    din[i] += kern::dot(dout, params_.adapter_w.row(j * d + i), d);
                }
            }
        }
        for (int64_t fr = 0; fr < t_e; ++fr) {
            for (int q = 0; q < cfg_.n_q; ++q) {
                kern::axpy(grads.code_emb[size_t(q)].row(trace.codes->at(fr, q)), dcode_sum.row(int(fr)),
                           S(1), d);
            }
        }
    }
}

// ----------------------------- losses -----------------------------

template <class S>
SeqLoss token_loss(const MatT<S>& logits, const std::vector<TokenId>& targets, double pad_weight) {
    SeqLoss out;
    out.per_pos.resize(targets.size());
    std::vector<double> probs(size_t(logits.cols));
    for (size_t i = 0; i < targets.size(); ++i) {
        kern::softmax_row(logits.row(int(i)), logits.cols, probs.data());
        const double p = std::max(probs[size_t(targets[i])], 1e-300);
        const double l = -std::log(p);
        const double w = (targets[i] == vocab::kPad) ? pad_weight : 1.0;
        out.per_pos[i] = l;
        out.weighted_sum += w * l;
        out.weight_sum += w;
    }
    return out;
}

template <class S>
void token_loss_grad(const MatT<S>& logits, const std::vector<TokenId>& targets, double pad_weight,
                     double weight_norm, MatT<S>& dlogits) {
    std::vector<double> probs(size_t(logits.cols));
    for (size_t i = 0; i < targets.size(); ++i) {
        kern::softmax_row(logits.row(int(i)), logits.cols, probs.data());
        const double w = ((targets[i] == vocab::kPad) ? pad_weight : 1.0) / weight_norm;
        S* drow = dlogits.row(int(i));
        for (int c = 0; c < logits.cols; ++c) drow[c] = S(w * probs[size_t(c)]);
        drow[targets[i]] -= S(w);
    }
}

inline double combine_losses(double token_loss_value,
                             const std::vector<std::pair<double, double>>& aux) {
    double total = token_loss_value;
    for (const auto& [lambda, value] : aux) total += lambda * value;
    return total;
}

// ----------------------------- gradient utilities -----------------------------

template <class S>
double grad_global_norm(const ParamSetT<S>& grads) {
    double sum = 0.0;
    grads.for_each([&](const std::string&, const MatT<S>& m) {
        for (S v : m.data) sum += double(v) * double(v);
    });
    return std::sqrt(sum);
}

template <class S>
void clip_gradients(ParamSetT<S>& grads, double max_norm) {
    const double norm = grad_global_norm(grads);
    if (norm <= max_norm || norm == 0.0) return;
    const S scale = S(max_norm / norm);
    grads.for_each([&](const std::string&, MatT<S>& m) {
        for (S& v : m.data) v *= scale;
    });
}

template <class S>
void accumulate(ParamSetT<S>& into, const ParamSetT<S>& from) {
    std::vector<MatT<S>*> dst;
    into.for_each([&](const std::string&, MatT<S>& m) { dst.push_back(&m); });
    size_t i = 0;
    from.for_each([&](const std::string&, const MatT<S>& m) {
        for (size_t k = 0; k < m.data.size(); ++k) dst[i]->data[k] += m.data[k];
        ++i;
    });
}

// ----------------------------- AdamW -----------------------------

template <class S>
void adamw_step(ParamSetT<S>& params, const ParamSetT<S>& grads, AdamStateT<S>& state, double lr,
                const AdamHyper& h) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(h.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(h.beta2, double(state.step));

    std::vector<const MatT<S>*> g_list;
    grads.for_each([&](const std::string&, const MatT<S>& m) { g_list.push_back(&m); });
    std::vector<MatT<S>*> m_list, v_list;
    state.m.for_each([&](const std::string&, MatT<S>& m) { m_list.push_back(&m); });
    state.v.for_each([&](const std::string&, MatT<S>& m) { v_list.push_back(&m); });

    size_t idx = 0;
    params.for_each([&](const std::string&, MatT<S>& p) {
        const MatT<S>& g = *g_list[idx];
        MatT<S>& m = *m_list[idx];
        MatT<S>& v = *v_list[idx];
        for (size_t i = 0; i < p.data.size(); ++i) {
            const double gi = double(g.data[i]);
            const double mi = h.beta1 * double(m.data[i]) + (1.0 - h.beta1) * gi;
            const double vi = h.beta2 * double(v.data[i]) + (1.0 - h.beta2) * gi * gi;
            m.data[i] = S(mi);
            v.data[i] = S(vi);
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            const double update = m_hat / (std::sqrt(v_hat) + h.eps) + h.weight_decay * double(p.data[i]);
            p.data[i] = S(double(p.data[i]) - lr * update);
        }
        ++idx;
    });
}

// ----------------------------- incremental decode -----------------------------

template <class S>
typename TransformerT<S>::DecodeState TransformerT<S>::decode_start(const AudioCodes* codes) const {
    DecodeState st;
    const int d = cfg_.d_model;
    st.self_k.assign(size_t(cfg_.n_layers), MatT<S>(cfg_.max_seq_len, d));
    st.self_v.assign(size_t(cfg_.n_layers), MatT<S>(cfg_.max_seq_len, d));
    if (cfg_.conditioned) {
        if (codes == nullptr) throw Error(Err::MissingCodes, "conditioned model requires audio codes");
        const MatT<S> cond = condition_audio(*codes);
        for (int l = 0; l < cfg_.n_layers; ++l) {
            MatT<S> ck(cond.rows, d), cv(cond.rows, d);
            kern::linear_forward(cond, params_.layers[size_t(l)].ck, ck);
            kern::linear_forward(cond, params_.layers[size_t(l)].cv, cv);
            st.cross_k.push_back(std::move(ck));
            st.cross_v.push_back(std::move(cv));
        }
    }
    return st;
}

template <class S>
std::vector<S> TransformerT<S>::decode_step(DecodeState& st, TokenId token) const {
    if (st.t >= cfg_.max_seq_len) throw Error(Err::SequenceTooLong, "decode past max_seq_len");
    if (token < 0 || token >= cfg_.vocab_size) {
        throw Error(Err::NotANoteToken, "decode token out of vocabulary");
    }
    const int d = cfg_.d_model;
    const int hd = d / cfg_.n_heads;
    const S inv_sqrt = S(1) / std::sqrt(S(hd));

    MatT<S> x(1, d);
    std::memcpy(x.row(0), params_.tok_emb.row(token), sizeof(S) * size_t(d));
    kern::axpy(x.row(0), params_.pos_emb.row(st.t), S(1), d);

    std::vector<S> inv_scratch;
    MatT<S> n(1, d), q(1, d), ctx(1, d), proj(1, d);
    std::vector<S> scores;

    for (int l = 0; l < cfg_.n_layers; ++l) {
        const auto& lp = params_.layers[size_t(l)];

        kern::rms_norm_forward(x, lp.g1.row(0), S(1e-5), n, inv_scratch);
        kern::linear_forward(n, lp.wq, q);
        MatT<S>& kc = st.self_k[size_t(l)];
        MatT<S>& vc = st.self_v[size_t(l)];
        {
            MatT<S> krow(1, d), vrow(1, d);
            kern::linear_forward(n, lp.wk, krow);
            kern::linear_forward(n, lp.wv, vrow);
            std::memcpy(kc.row(st.t), krow.row(0), sizeof(S) * size_t(d));
            std::memcpy(vc.row(st.t), vrow.row(0), sizeof(S) * size_t(d));
        }
        const int n_keys = st.t + 1;
        scores.resize(size_t(n_keys));
        ctx.zero();
        for (int h = 0; h < cfg_.n_heads; ++h) {
            const int off = h * hd;
            S max_s = -std::numeric_limits<S>::infinity();
            for (int j = 0; j < n_keys; ++j) {
                scores[size_t(j)] = kern::dot(q.row(0) + off, kc.row(j) + off, hd) * inv_sqrt;
                max_s = std::max(max_s, scores[size_t(j)]);
            }
            S sum = S(0);
            for (int j = 0; j < n_keys; ++j) {
                scores[size_t(j)] = std::exp(scores[size_t(j)] - max_s);
                sum += scores[size_t(j)];
            }
            const S inv_sum = S(1) / sum;
            for (int j = 0; j < n_keys; ++j) {
                kern::axpy(ctx.row(0) + off, vc.row(j) + off, scores[size_t(j)] * inv_sum, hd);
            }
        }
        kern::linear_forward(ctx, lp.wo, proj);
        for (int i = 0; i < d; ++i) x.data[size_t(i)] += proj.data[size_t(i)];

        if (cfg_.conditioned) {
            kern::rms_norm_forward(x, lp.g2.row(0), S(1e-5), n, inv_scratch);
            kern::linear_forward(n, lp.cq, q);
            const MatT<S>& ck = st.cross_k[size_t(l)];
            const MatT<S>& cv = st.cross_v[size_t(l)];
            scores.resize(size_t(ck.rows));
            ctx.zero();
            for (int h = 0; h < cfg_.n_heads; ++h) {
                const int off = h * hd;
                S max_s = -std::numeric_limits<S>::infinity();
                for (int j = 0; j < ck.rows; ++j) {
                    scores[size_t(j)] = kern::dot(q.row(0) + off, ck.row(j) + off, hd) * inv_sqrt;
                    max_s = std::max(max_s, scores[size_t(j)]);
                }
                S sum = S(0);
                for (int j = 0; j < ck.rows; ++j) {
                    scores[size_t(j)] = std::exp(scores[size_t(j)] - max_s);
                    sum += scores[size_t(j)];
                }
                const S inv_sum = S(1) / sum;
                for (int j = 0; j < ck.rows; ++j) {
                    kern::axpy(ctx.row(0) + off, cv.row(j) + off, scores[size_t(j)] * inv_sum, hd);
                }
            }
            kern::linear_forward(ctx, lp.co, proj);
            for (int i = 0; i < d; ++i) x.data[size_t(i)] += proj.data[size_t(i)];
        }

        kern::rms_norm_forward(x, lp.g3.row(0), S(1e-5), n, inv_scratch);
        MatT<S> u(1, cfg_.d_ff), v(1, cfg_.d_ff), f(1, d);
        kern::swiglu_forward(n, lp.w_gate, lp.w_up, lp.w_down, u, v, f);
        for (int i = 0; i < d; ++i) x.data[size_t(i)] += f.data[size_t(i)];
    }

    kern::rms_norm_forward(x, params_.g_final.row(0), S(1e-5), n, inv_scratch);
    MatT<S> logits(1, cfg_.vocab_size);
    kern::linear_forward(n, params_.out_proj, logits);
    kern::axpy(logits.row(0), params_.out_bias.row(0), S(1), cfg_.vocab_size);

    st.t += 1;
    return logits.data;
}

}  // namespace chartgen
