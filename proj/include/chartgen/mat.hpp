#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

#include "chartgen/common.hpp"

namespace chartgen {

// Dense row-major matrix. Templated on the scalar so the same kernels run in
// single precision for training and double precision for gradient checks.
template <class S>
struct MatT {
    int rows = 0;
    int cols = 0;
    std::vector<S> data;

    MatT() = default;
    MatT(int r, int c) : rows(r), cols(c), data(size_t(r) * size_t(c), S(0)) {}

    S* row(int r) { return data.data() + size_t(r) * size_t(cols); }
    const S* row(int r) const { return data.data() + size_t(r) * size_t(cols); }
    S& at(int r, int c) { return data[size_t(r) * size_t(cols) + size_t(c)]; }
    S at(int r, int c) const { return data[size_t(r) * size_t(cols) + size_t(c)]; }

    void zero() { std::fill(data.begin(), data.end(), S(0)); }
    size_t size() const { return data.size(); }

    template <class T>
    MatT<T> cast() const {
        MatT<T> out(rows, cols);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = T(data[i]);
        return out;
    }
};

using Mat = MatT<float>;

namespace kern {

template <class S>
S dot(const S* a, const S* b, int n) {
    S acc = S(0);
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

template <class S>
void axpy(S* y, const S* x, S a, int n) {
    for (int i = 0; i < n; ++i) y[i] += a * x[i];
}

// ----------------------------- linear -----------------------------
// y = x * w, with x: T x in, w: in x out, y: T x out

template <class S>
void linear_forward(const MatT<S>& x, const MatT<S>& w, MatT<S>& y) {
    assert(x.cols == w.rows && y.rows == x.rows && y.cols == w.cols);
    y.zero();
    for (int t = 0; t < x.rows; ++t) {
        const S* xr = x.row(t);
        S* yr = y.row(t);
        for (int i = 0; i < x.cols; ++i) {
            axpy(yr, w.row(i), xr[i], w.cols);
        }
    }
}

// dx += dy * w^T, dw += x^T * dy
template <class S>
void linear_backward(const MatT<S>& x, const MatT<S>& w, const MatT<S>& dy, MatT<S>& dx, MatT<S>& dw) {
    for (int t = 0; t < x.rows; ++t) {
        const S* dyr = dy.row(t);
        const S* xr = x.row(t);
        S* dxr = dx.row(t);
        for (int i = 0; i < x.cols; ++i) {
            dxr[i] += dot(dyr, w.row(i), w.cols);
            axpy(dw.row(i), dyr, xr[i], w.cols);
        }
    }
}

// ----------------------------- RMS norm -----------------------------
// y_i = gain_i * x_i / sqrt(mean(x^2) + eps), applied per row.
// inv_rms caches 1/sqrt(mean + eps) per row for the backward pass.

template <class S>
void rms_norm_forward(const MatT<S>& x, const S* gain, S eps, MatT<S>& y, std::vector<S>& inv_rms) {
    inv_rms.resize(size_t(x.rows));
    for (int t = 0; t < x.rows; ++t) {
        const S* xr = x.row(t);
        S mean_sq = dot(xr, xr, x.cols) / S(x.cols);
        const S inv = S(1) / std::sqrt(mean_sq + eps);
        inv_rms[size_t(t)] = inv;
        S* yr = y.row(t);
        for (int i = 0; i < x.cols; ++i) yr[i] = gain[i] * xr[i] * inv;
    }
}

template <class S>
void rms_norm_backward(const MatT<S>& x, const S* gain, const std::vector<S>& inv_rms,
                       const MatT<S>& dy, MatT<S>& dx, S* dgain) {
    const int n = x.cols;
    for (int t = 0; t < x.rows; ++t) {
        const S* xr = x.row(t);
        const S* dyr = dy.row(t);
        S* dxr = dx.row(t);
        const S inv = inv_rms[size_t(t)];
        S s = S(0);
        for (int i = 0; i < n; ++i) s += dyr[i] * gain[i] * xr[i];
        const S c = inv * inv * inv * s / S(n);
        for (int i = 0; i < n; ++i) {
            dxr[i] += inv * gain[i] * dyr[i] - c * xr[i];
            dgain[i] += dyr[i] * xr[i] * inv;
        }
    }
}

// ----------------------------- SwiGLU -----------------------------
// y = (silu(x Wg) ⊙ (x Wu)) Wd with Wg, Wu: D x F and Wd: F x D.
// u and v cache the two pre-products for the backward pass.

template <class S>
S silu(S z) {
    return z / (S(1) + std::exp(-z));
}

template <class S>
S silu_grad(S z) {
    const S sig = S(1) / (S(1) + std::exp(-z));
    return sig * (S(1) + z * (S(1) - sig));
}

template <class S>
void swiglu_forward(const MatT<S>& x, const MatT<S>& wg, const MatT<S>& wu, const MatT<S>& wd,
                    MatT<S>& u, MatT<S>& v, MatT<S>& y) {
    linear_forward(x, wg, u);
    linear_forward(x, wu, v);
    MatT<S> z(x.rows, wg.cols);
    for (size_t i = 0; i < z.data.size(); ++i) z.data[i] = silu(u.data[i]) * v.data[i];
    linear_forward(z, wd, y);
}

template <class S>
void swiglu_backward(const MatT<S>& x, const MatT<S>& wg, const MatT<S>& wu, const MatT<S>& wd,
                     const MatT<S>& u, const MatT<S>& v, const MatT<S>& dy, MatT<S>& dx,
                     MatT<S>& dwg, MatT<S>& dwu, MatT<S>& dwd) {
    const int f = wg.cols;
    MatT<S> z(x.rows, f), dz(x.rows, f);
    for (size_t i = 0; i < z.data.size(); ++i) z.data[i] = silu(u.data[i]) * v.data[i];
    linear_backward(z, wd, dy, dz, dwd);

    MatT<S> du(x.rows, f), dv(x.rows, f);
    for (size_t i = 0; i < z.data.size(); ++i) {
        du.data[i] = dz.data[i] * v.data[i] * silu_grad(u.data[i]);
        dv.data[i] = dz.data[i] * silu(u.data[i]);
    }
    linear_backward(x, wg, du, dx, dwg);
    linear_backward(x, wu, dv, dx, dwu);
}

// ----------------------------- attention -----------------------------
// Multi-head scaled dot-product attention over already-projected Q, K, V
// (T_q x D each, D = n_heads * head_dim). Causal masking assumes T_q == T_k.
// The output is the head-concatenated context; the caller applies the output
// projection. Softmax rows are recomputed in the backward pass instead of
// being cached, which keeps trace memory linear in sequence length.

enum class AttnMask { Causal, None };

template <class S>
void attention_forward(const MatT<S>& q, const MatT<S>& k, const MatT<S>& v, int n_heads,
                       AttnMask mask, MatT<S>& ctx) {
    const int hd = q.cols / n_heads;
    const S inv_sqrt = S(1) / std::sqrt(S(hd));
    std::vector<S> scores(size_t(k.rows));
    ctx.zero();
    for (int h = 0; h < n_heads; ++h) {
        const int off = h * hd;
        for (int t = 0; t < q.rows; ++t) {
            const int n_keys = (mask == AttnMask::Causal) ? t + 1 : k.rows;
            const S* qr = q.row(t) + off;
            S max_s = -std::numeric_limits<S>::infinity();
            for (int j = 0; j < n_keys; ++j) {
                const S s = dot(qr, k.row(j) + off, hd) * inv_sqrt;
                scores[size_t(j)] = s;
                max_s = std::max(max_s, s);
            }
            S sum = S(0);
            for (int j = 0; j < n_keys; ++j) {
                scores[size_t(j)] = std::exp(scores[size_t(j)] - max_s);
                sum += scores[size_t(j)];
            }
            const S inv_sum = S(1) / sum;
            S* out = ctx.row(t) + off;
            for (int j = 0; j < n_keys; ++j) {
                axpy(out, v.row(j) + off, scores[size_t(j)] * inv_sum, hd);
            }
        }
    }
}

template <class S>
void attention_backward(const MatT<S>& q, const MatT<S>& k, const MatT<S>& v, int n_heads,
                        AttnMask mask, const MatT<S>& dctx, MatT<S>& dq, MatT<S>& dk, MatT<S>& dv) {
    const int hd = q.cols / n_heads;
    const S inv_sqrt = S(1) / std::sqrt(S(hd));
    std::vector<S> probs(size_t(k.rows)), dprobs(size_t(k.rows));
    for (int h = 0; h < n_heads; ++h) {
        const int off = h * hd;
        for (int t = 0; t < q.rows; ++t) {
            const int n_keys = (mask == AttnMask::Causal) ? t + 1 : k.rows;
            const S* qr = q.row(t) + off;
            S max_s = -std::numeric_limits<S>::infinity();
            for (int j = 0; j < n_keys; ++j) {
                const S s = dot(qr, k.row(j) + off, hd) * inv_sqrt;
                probs[size_t(j)] = s;
                max_s = std::max(max_s, s);
            }
            S sum = S(0);
            for (int j = 0; j < n_keys; ++j) {
                probs[size_t(j)] = std::exp(probs[size_t(j)] - max_s);
                sum += probs[size_t(j)];
            }
            const S inv_sum = S(1) / sum;
            const S* dout = dctx.row(t) + off;
            S dot_pd = S(0);
            for (int j = 0; j < n_keys; ++j) {
                probs[size_t(j)] *= inv_sum;
                dprobs[size_t(j)] = dot(dout, v.row(j) + off, hd);
                axpy(dv.row(j) + off, dout, probs[size_t(j)], hd);
                dot_pd += probs[size_t(j)] * dprobs[size_t(j)];
            }
            S* dqr = dq.row(t) + off;
            for (int j = 0; j < n_keys; ++j) {
                const S ds = probs[size_t(j)] * (dprobs[size_t(j)] - dot_pd) * inv_sqrt;
                axpy(dqr, k.row(j) + off, ds, hd);
                axpy(dk.row(j) + off, qr, ds, hd);
            }
        }
    }
}

// ----------------------------- dropout -----------------------------
// Inverted dropout; the kept mask is recorded for the backward pass.

template <class S>
void dropout_forward(MatT<S>& x, S p, Rng& rng, std::vector<uint8_t>& mask) {
    mask.assign(x.data.size(), 1);
    if (p <= S(0)) return;
    const S scale = S(1) / (S(1) - p);
    for (size_t i = 0; i < x.data.size(); ++i) {
        if (rng.uniform01() < double(p)) {
            mask[i] = 0;
            x.data[i] = S(0);
        } else {
            x.data[i] *= scale;
        }
    }
}

template <class S>
void dropout_backward(MatT<S>& dx, S p, const std::vector<uint8_t>& mask) {
    if (p <= S(0)) return;
    const S scale = S(1) / (S(1) - p);
    for (size_t i = 0; i < dx.data.size(); ++i) {
        dx.data[i] = mask[i] ? dx.data[i] * scale : S(0);
    }
}

// ----------------------------- softmax helpers -----------------------------

// Stable softmax of one logit row into probs (double accumulation).
template <class S>
void softmax_row(const S* logits, int n, double* probs) {
    double max_l = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) max_l = std::max(max_l, double(logits[i]));
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        probs[i] = std::exp(double(logits[i]) - max_l);
        sum += probs[i];
    }
    for (int i = 0; i < n; ++i) probs[i] /= sum;
}

}  // namespace kern

}  // namespace chartgen
