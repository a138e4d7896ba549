#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "matrix.hpp"

namespace ecnet {

/// Learned Q/K/V projections from the hidden-state width down to d_k.
/// With heads > 1 the d_k columns are split evenly per head, attended
/// independently, and concatenated (no output projection).
struct AttentionParams {
    Matrix w_q, w_k, w_v;  // H_in x d_k
    std::size_t heads = 1;
    std::size_t d_k = 0;
};

struct AttentionOutput {
    Matrix context;  // W x d_k
    Matrix weights;  // (heads*W) x W, row-stochastic per head block
};

struct AttentionCache {
    Matrix h_states;  // W x H_in
    Matrix q, k, v;   // W x d_k
    Matrix weights;   // (heads*W) x W
    std::size_t heads = 1;
};

AttentionParams make_attention(std::size_t h_in, std::size_t d_k, std::size_t heads,
                               Rng& rng);

struct Qkv {
    Matrix q, k, v;
};

/// Q = H * W_q (and K, V likewise).
Qkv project_qkv(const Matrix& h_states, const AttentionParams& p);

/// scores = Q K^T / sqrt(width per head); weights = row softmax;
/// context = weights * V.
AttentionOutput attention_forward(const Matrix& q, const Matrix& k, const Matrix& v,
                                  std::size_t d_k, std::size_t heads = 1);

struct QkvGrads {
    Matrix dq, dk, dv;
};

/// Reverse mode through softmax, scaling, and both products, given the
/// forward weights.
QkvGrads attention_backward(const Matrix& q, const Matrix& k, const Matrix& v,
                            const Matrix& weights, std::size_t heads,
                            const Matrix& d_context);

/// Full block over one sample's hidden sequence: project, attend.
AttentionOutput attend(const Matrix& h_states, const AttentionParams& p,
                       AttentionCache& cache);

/// Accumulates projection gradients into `grads` and returns d_h_states.
Matrix attend_backward(const AttentionParams& p, const AttentionCache& cache,
                       const Matrix& d_context, AttentionParams& grads);

enum class Pooling { final, mean };

const char* pooling_name(Pooling p);
Pooling pooling_from_string(const std::string& s);

/// Collapse a W x d context to a single 1 x d row: last row (final) or the
/// row mean.
Matrix pool_context(const Matrix& context, Pooling mode);
Matrix pool_context_backward(const Matrix& d_pooled, std::size_t window, Pooling mode);

}  // namespace ecnet
