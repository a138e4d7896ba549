#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "matrix.hpp"

namespace ecnet {

enum class CellType { lstm, rnn, gru };

const char* cell_type_name(CellType t);
CellType cell_type_from_string(const std::string& s);

/// Gate weights act on the concatenation [h_prev, x]: each W_* is
/// H x (H + D), each bias 1 x H.
struct LstmParams {
    Matrix w_f, w_i, w_c, w_o;
    Matrix b_f, b_i, b_c, b_o;
};

struct RnnParams {
    Matrix w;
    Matrix b;
};

/// Update/reset/candidate gates; the candidate acts on [r (*) h_prev, x].
struct GruParams {
    Matrix w_u, w_r, w_n;
    Matrix b_u, b_r, b_n;
};

/// h (and c for LSTM) carried between steps; rows are batch entries.
struct CellState {
    Matrix h;
    Matrix c;
};

struct LstmCache {
    Matrix z, f, i, g, o, c_prev, c, tc;
};
struct RnnCache {
    Matrix z, h;
};
struct GruCache {
    Matrix z, zn, u, r, n, h_prev;
};
using StepCache = std::variant<LstmCache, RnnCache, GruCache>;

struct StepResult {
    CellState state;
    StepCache cache;
};

/// Gradients flowing out of one backward step.
struct StepBackward {
    Matrix dh_prev;
    Matrix dc_prev;  // empty for rnn/gru
    Matrix dx;
};

struct ParamRef {
    std::string name;
    Matrix* value;
};

class RecurrentCell {
public:
    RecurrentCell() = default;
    static RecurrentCell create(CellType type, std::size_t input_size,
                                std::size_t hidden_size, Rng& rng);
    /// Same shapes as create, all parameters zero (also the gradient holder).
    static RecurrentCell zeros_like(const RecurrentCell& other);

    CellType type() const { return type_; }
    std::size_t input_size() const { return input_size_; }
    std::size_t hidden_size() const { return hidden_size_; }

    CellState initial_state(std::size_t batch) const;

    StepResult step(const CellState& state, const Matrix& x) const;
    /// Accumulates parameter gradients into `grads` (shape-congruent cell).
    StepBackward step_backward(const StepCache& cache, const Matrix& dh, const Matrix& dc,
                               RecurrentCell& grads) const;

    std::vector<ParamRef> parameters();
    std::vector<ParamRef> parameters() const;

    LstmParams& lstm() { return std::get<LstmParams>(params_); }
    const LstmParams& lstm() const { return std::get<LstmParams>(params_); }
    RnnParams& rnn() { return std::get<RnnParams>(params_); }
    GruParams& gru() { return std::get<GruParams>(params_); }

private:
    CellType type_ = CellType::lstm;
    std::size_t input_size_ = 0;
    std::size_t hidden_size_ = 0;
    std::variant<LstmParams, RnnParams, GruParams> params_;
};

// Spec-level single-cell entry points (batch rows allowed in state/x).
StepResult lstm_step(const LstmParams& p, const CellState& s, const Matrix& x);
StepBackward lstm_step_backward(const LstmParams& p, const LstmCache& cache, const Matrix& dh,
                                const Matrix& dc, LstmParams& grads);
StepResult rnn_step(const RnnParams& p, const CellState& s, const Matrix& x);
StepBackward rnn_step_backward(const RnnParams& p, const RnnCache& cache, const Matrix& dh,
                               RnnParams& grads);
StepResult gru_step(const GruParams& p, const CellState& s, const Matrix& x);
StepBackward gru_step_backward(const GruParams& p, const GruCache& cache, const Matrix& dh,
                               GruParams& grads);

struct SequenceForward {
    Matrix h_all;  // (B*W) x H, sample-major like the input
    std::vector<StepCache> caches;  // one per timestep
    std::size_t batch = 0;
    std::size_t window = 0;
};

/// Runs the cell over a sample-major batched sequence ((B*W) x D) from a
/// zero initial state; row b*W + t of h_all is h_t for sample b.
SequenceForward run_sequence(const RecurrentCell& cell, const Matrix& seq_batch,
                             std::size_t batch, std::size_t window);

/// Reverse-mode through run_sequence. d_h_all is (B*W) x H; returns dX and
/// accumulates parameter gradients.
Matrix run_sequence_backward(const RecurrentCell& cell, const SequenceForward& fwd,
                             const Matrix& d_h_all, RecurrentCell& grads);

}  // namespace ecnet
