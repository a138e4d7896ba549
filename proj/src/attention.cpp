#include "attention.hpp"

#include <cmath>
#include <stdexcept>

namespace ecnet {

namespace {

void copy_cols(Matrix& dst, std::size_t dst_c0, const Matrix& src) {
    for (std::size_t r = 0; r < src.rows(); ++r)
        for (std::size_t c = 0; c < src.cols(); ++c) dst(r, dst_c0 + c) = src(r, c);
}

void check_heads(std::size_t d_k, std::size_t heads) {
    if (d_k == 0) throw ShapeError("attention: d_k must be >= 1");
    if (heads == 0) throw ShapeError("attention: heads must be >= 1");
    if (d_k % heads != 0)
        throw ShapeError("attention: d_k " + std::to_string(d_k) +
                         " not divisible by heads " + std::to_string(heads));
}

// Per-row: da_j = s_j * (dw_j - sum_k dw_k * s_k)
Matrix softmax_rows_backward(const Matrix& softmax_out, const Matrix& d_out) {
    Matrix out(softmax_out.rows(), softmax_out.cols());
    for (std::size_t r = 0; r < softmax_out.rows(); ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < softmax_out.cols(); ++c)
            dot += d_out(r, c) * softmax_out(r, c);
        for (std::size_t c = 0; c < softmax_out.cols(); ++c)
            out(r, c) = softmax_out(r, c) * (d_out(r, c) - dot);
    }
    return out;
}

}  // namespace

AttentionParams make_attention(std::size_t h_in, std::size_t d_k, std::size_t heads,
                               Rng& rng) {
    check_heads(d_k, heads);
    AttentionParams p;
    p.w_q = xavier_init(h_in, d_k, rng);
    p.w_k = xavier_init(h_in, d_k, rng);
    p.w_v = xavier_init(h_in, d_k, rng);
    p.heads = heads;
    p.d_k = d_k;
    return p;
}

Qkv project_qkv(const Matrix& h_states, const AttentionParams& p) {
    if (h_states.cols() != p.w_q.rows())
        throw ShapeError("project_qkv: hidden states " + h_states.shape_str() +
                         " vs projection " + p.w_q.shape_str());
    return {matmul(h_states, p.w_q), matmul(h_states, p.w_k), matmul(h_states, p.w_v)};
}

AttentionOutput attention_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                                  std::size_t d_k, std::size_t heads) {
    check_heads(d_k, heads);
    if (!k.same_shape(v))
        throw ShapeError("attention_forward: K " + k.shape_str() + " and V " +
                         v.shape_str() + " must share shape");
    if (q.cols() != d_k || k.cols() != d_k)
        throw ShapeError("attention_forward: widths Q " + std::to_string(q.cols()) +
                         ", K " + std::to_string(k.cols()) + " != d_k " +
                         std::to_string(d_k));

    const std::size_t w = q.rows();
    const std::size_t n_kv = k.rows();
    const std::size_t head_dim = d_k / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    AttentionOutput out;
    out.context = Matrix(w, d_k);
    out.weights = Matrix(heads * w, n_kv);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t c0 = h * head_dim, c1 = c0 + head_dim;
        const Matrix qh = q.col_range(c0, c1);
        const Matrix kh = k.col_range(c0, c1);
        const Matrix vh = v.col_range(c0, c1);
        const Matrix scores = scale(matmul_nt(qh, kh), inv_scale);
        const Matrix a = softmax_rows(scores);
        copy_cols(out.context, c0, matmul(a, vh));
        for (std::size_t r = 0; r < w; ++r)
            for (std::size_t c = 0; c < n_kv; ++c) out.weights(h * w + r, c) = a(r, c);
    }
    return out;
}

QkvGrads attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                            const Matrix& weights, std::size_t heads,
                            const Matrix& d_context) {
    const std::size_t w = q.rows();
    const std::size_t n_kv = k.rows();
    const std::size_t d_k = q.cols();
    check_heads(d_k, heads);
    if (d_context.rows() != w || d_context.cols() != d_k)
        throw ShapeError("attention_backward: d_context " + d_context.shape_str() +
                         " vs context (" + std::to_string(w) + "x" + std::to_string(d_k) +
                         ")");
    const std::size_t head_dim = d_k / heads;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    QkvGrads grads{Matrix(w, d_k), Matrix(n_kv, d_k), Matrix(n_kv, d_k)};
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t c0 = h * head_dim, c1 = c0 + head_dim;
        const Matrix qh = q.col_range(c0, c1);
        const Matrix kh = k.col_range(c0, c1);
        const Matrix vh = v.col_range(c0, c1);
        Matrix a(w, n_kv);
        for (std::size_t r = 0; r < w; ++r)
            for (std::size_t c = 0; c < n_kv; ++c) a(r, c) = weights(h * w + r, c);
        const Matrix d_ch = d_context.col_range(c0, c1);

        const Matrix da = matmul_nt(d_ch, vh);          // W x n_kv
        const Matrix dvh = matmul_tn(a, d_ch);          // W x head_dim
        const Matrix ds = scale(softmax_rows_backward(a, da), inv_scale);
        const Matrix dqh = matmul(ds, kh);
        const Matrix dkh = matmul_tn(ds, qh);

        copy_cols(grads.dq, c0, dqh);
        copy_cols(grads.dk, c0, dkh);
        copy_cols(grads.dv, c0, dvh);
    }
    return grads;
}

AttentionOutput attend(const Matrix& h_states, const AttentionParams& p,
                       AttentionCache& cache) {
    Qkv qkv = project_qkv(h_states, p);
    AttentionOutput out = attention_forward(qkv.q, qkv.k, qkv.v, p.d_k, p.heads);
    cache.h_states = h_states;
    cache.q = std::move(qkv.q);
    cache.k = std::move(qkv.k);
    cache.v = std::move(qkv.v);
    cache.weights = out.weights;
    cache.heads = p.heads;
    return out;
}

Matrix attend_backward(const AttentionParams& p, const AttentionCache& cache,
                       const Matrix& d_context, AttentionParams& grads) {
    QkvGrads g = attention_backward(cache.q, cache.k, cache.v, cache.weights, cache.heads,
                                    d_context);
    add_in_place(grads.w_q, matmul_tn(cache.h_states, g.dq));
    add_in_place(grads.w_k, matmul_tn(cache.h_states, g.dk));
    add_in_place(grads.w_v, matmul_tn(cache.h_states, g.dv));

    Matrix dh = matmul_nt(g.dq, p.w_q);
    add_in_place(dh, matmul_nt(g.dk, p.w_k));
    add_in_place(dh, matmul_nt(g.dv, p.w_v));
    return dh;
}

const char* pooling_name(Pooling p) { return p == Pooling::final ? "final" : "mean"; }

Pooling pooling_from_string(const std::string& s) {
    if (s == "final") return Pooling::final;
    if (s == "mean") return Pooling::mean;
    throw std::invalid_argument("unknown pooling mode '" + s + "'");
}

Matrix pool_context(const Matrix& context, Pooling mode) {
    if (context.rows() < 1) throw ShapeError("pool_context: empty context");
    if (mode == Pooling::final) return context.row(context.rows() - 1);
    Matrix out = col_sums(context);
    return scale(out, 1.0 / static_cast<double>(context.rows()));
}

Matrix pool_context_backward(const Matrix& d_pooled, std::size_t window, Pooling mode) {
    Matrix out(window, d_pooled.cols());
    if (mode == Pooling::final) {
        out.set_row(window - 1, d_pooled);
    } else {
        const double inv = 1.0 / static_cast<double>(window);
        for (std::size_t t = 0; t < window; ++t)
            for (std::size_t c = 0; c < d_pooled.cols(); ++c)
                out(t, c) = d_pooled(0, c) * inv;
    }
    return out;
}

}  // namespace ecnet
