#include "recurrent.hpp"

#include <stdexcept>

namespace ecnet {

namespace {

Matrix ones_minus_sq(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double v = m.data()[i];
        out.data()[i] = 1.0 - v * v;
    }
    return out;
}

// d_sigma = s * (1 - s) applied to upstream
Matrix sigmoid_backward(const Matrix& upstream, const Matrix& s) {
    Matrix out(s.rows(), s.cols());
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double v = s.data()[i];
        out.data()[i] = upstream.data()[i] * v * (1.0 - v);
    }
    return out;
}

Matrix tanh_backward(const Matrix& upstream, const Matrix& t) {
    Matrix out(t.rows(), t.cols());
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double v = t.data()[i];
        out.data()[i] = upstream.data()[i] * (1.0 - v * v);
    }
    return out;
}

Matrix gate(const Matrix& z, const Matrix& w, const Matrix& b) {
    return add_bias_rows(matmul_nt(z, w), b);
}

void check_dims(std::size_t hidden, std::size_t input, const CellState& s, const Matrix& x,
                const char* who) {
    if (x.cols() != input)
        throw ShapeError(std::string(who) + ": input width " + x.shape_str() +
                         " != cell input size " + std::to_string(input));
    if (s.h.cols() != hidden || s.h.rows() != x.rows())
        throw ShapeError(std::string(who) + ": state " + s.h.shape_str() +
                         " does not match input " + x.shape_str() + " with hidden size " +
                         std::to_string(hidden));
}

}  // namespace

const char* cell_type_name(CellType t) {
    switch (t) {
        case CellType::lstm: return "lstm";
        case CellType::rnn: return "rnn";
        default: return "gru";
    }
}

CellType cell_type_from_string(const std::string& s) {
    if (s == "lstm") return CellType::lstm;
    if (s == "rnn") return CellType::rnn;
    if (s == "gru") return CellType::gru;
    throw std::invalid_argument("unknown cell type '" + s + "'");
}

StepResult lstm_step(const LstmParams& p, const CellState& s, const Matrix& x) {
    LstmCache cache;
    cache.z = hconcat(s.h, x);
    cache.f = sigmoid(gate(cache.z, p.w_f, p.b_f));
    cache.i = sigmoid(gate(cache.z, p.w_i, p.b_i));
    cache.g = tanh_m(gate(cache.z, p.w_c, p.b_c));
    cache.o = sigmoid(gate(cache.z, p.w_o, p.b_o));
    cache.c_prev = s.c;
    cache.c = add(hadamard(cache.f, s.c), hadamard(cache.i, cache.g));
    cache.tc = tanh_m(cache.c);

    StepResult out;
    out.state.h = hadamard(cache.o, cache.tc);
    out.state.c = cache.c;
    out.cache = std::move(cache);
    return out;
}

StepBackward lstm_step_backward(const LstmParams& p, const LstmCache& cache, const Matrix& dh,
                                const Matrix& dc_in, LstmParams& grads) {
    if (!dh.same_shape(cache.f))
        throw ShapeError("lstm_step_backward: dh " + dh.shape_str() + " vs gates " +
                         cache.f.shape_str());

    const Matrix d_o = hadamard(dh, cache.tc);
    Matrix dc = hadamard(hadamard(dh, cache.o), ones_minus_sq(cache.tc));
    if (!dc_in.empty()) add_in_place(dc, dc_in);

    const Matrix d_f = hadamard(dc, cache.c_prev);
    const Matrix d_i = hadamard(dc, cache.g);
    const Matrix d_g = hadamard(dc, cache.i);
    Matrix dc_prev = hadamard(dc, cache.f);

    const Matrix da_f = sigmoid_backward(d_f, cache.f);
    const Matrix da_i = sigmoid_backward(d_i, cache.i);
    const Matrix da_g = tanh_backward(d_g, cache.g);
    const Matrix da_o = sigmoid_backward(d_o, cache.o);

    add_in_place(grads.w_f, matmul_tn(da_f, cache.z));
    add_in_place(grads.w_i, matmul_tn(da_i, cache.z));
    add_in_place(grads.w_c, matmul_tn(da_g, cache.z));
    add_in_place(grads.w_o, matmul_tn(da_o, cache.z));
    add_in_place(grads.b_f, col_sums(da_f));
    add_in_place(grads.b_i, col_sums(da_i));
    add_in_place(grads.b_c, col_sums(da_g));
    add_in_place(grads.b_o, col_sums(da_o));

    Matrix dz = matmul(da_f, p.w_f);
    add_in_place(dz, matmul(da_i, p.w_i));
    add_in_place(dz, matmul(da_g, p.w_c));
    add_in_place(dz, matmul(da_o, p.w_o));

    const std::size_t hidden = cache.f.cols();
    StepBackward back;
    back.dh_prev = dz.col_range(0, hidden);
    back.dc_prev = std::move(dc_prev);
    back.dx = dz.col_range(hidden, dz.cols());
    return back;
}

StepResult rnn_step(const RnnParams& p, const CellState& s, const Matrix& x) {
    RnnCache cache;
    cache.z = hconcat(s.h, x);
    cache.h = tanh_m(gate(cache.z, p.w, p.b));

    StepResult out;
    out.state.h = cache.h;
    out.cache = std::move(cache);
    return out;
}

StepBackward rnn_step_backward(const RnnParams& p, const RnnCache& cache, const Matrix& dh,
                               RnnParams& grads) {
    const Matrix da = tanh_backward(dh, cache.h);
    add_in_place(grads.w, matmul_tn(da, cache.z));
    add_in_place(grads.b, col_sums(da));
    Matrix dz = matmul(da, p.w);

    const std::size_t hidden = cache.h.cols();
    StepBackward back;
    back.dh_prev = dz.col_range(0, hidden);
    back.dx = dz.col_range(hidden, dz.cols());
    return back;
}

StepResult gru_step(const GruParams& p, const CellState& s, const Matrix& x) {
    GruCache cache;
    cache.h_prev = s.h;
    cache.z = hconcat(s.h, x);
    cache.u = sigmoid(gate(cache.z, p.w_u, p.b_u));
    cache.r = sigmoid(gate(cache.z, p.w_r, p.b_r));
    cache.zn = hconcat(hadamard(cache.r, s.h), x);
    cache.n = tanh_m(gate(cache.zn, p.w_n, p.b_n));

    StepResult out;
    // h = u (*) h_prev + (1 - u) (*) n
    out.state.h = Matrix(s.h.rows(), s.h.cols());
    for (std::size_t idx = 0; idx < out.state.h.size(); ++idx) {
        const double u = cache.u.data()[idx];
        out.state.h.data()[idx] =
            u * s.h.data()[idx] + (1.0 - u) * cache.n.data()[idx];
    }
    out.cache = std::move(cache);
    return out;
}

StepBackward gru_step_backward(const GruParams& p, const GruCache& cache, const Matrix& dh,
                               GruParams& grads) {
    const std::size_t hidden = cache.u.cols();

    Matrix dn(dh.rows(), dh.cols());
    Matrix du(dh.rows(), dh.cols());
    Matrix dh_prev(dh.rows(), dh.cols());
    for (std::size_t idx = 0; idx < dh.size(); ++idx) {
        const double g = dh.data()[idx];
        const double u = cache.u.data()[idx];
        dn.data()[idx] = g * (1.0 - u);
        du.data()[idx] = g * (cache.h_prev.data()[idx] - cache.n.data()[idx]);
        dh_prev.data()[idx] = g * u;
    }

    const Matrix da_n = tanh_backward(dn, cache.n);
    add_in_place(grads.w_n, matmul_tn(da_n, cache.zn));
    add_in_place(grads.b_n, col_sums(da_n));
    Matrix dzn = matmul(da_n, p.w_n);

    const Matrix d_rh = dzn.col_range(0, hidden);
    Matrix dx = dzn.col_range(hidden, dzn.cols());
    const Matrix dr = hadamard(d_rh, cache.h_prev);
    add_in_place(dh_prev, hadamard(d_rh, cache.r));

    const Matrix da_u = sigmoid_backward(du, cache.u);
    const Matrix da_r = sigmoid_backward(dr, cache.r);
    add_in_place(grads.w_u, matmul_tn(da_u, cache.z));
    add_in_place(grads.w_r, matmul_tn(da_r, cache.z));
    add_in_place(grads.b_u, col_sums(da_u));
    add_in_place(grads.b_r, col_sums(da_r));

    Matrix dz = matmul(da_u, p.w_u);
    add_in_place(dz, matmul(da_r, p.w_r));
    add_in_place(dh_prev, dz.col_range(0, hidden));
    add_in_place(dx, dz.col_range(hidden, dz.cols()));

    StepBackward back;
    back.dh_prev = std::move(dh_prev);
    back.dx = std::move(dx);
    return back;
}

RecurrentCell RecurrentCell::create(CellType type, std::size_t input_size,
                                    std::size_t hidden_size, Rng& rng) {
    if (input_size < 1 || hidden_size < 1)
        throw std::invalid_argument("RecurrentCell: sizes must be >= 1");
    RecurrentCell cell;
    cell.type_ = type;
    cell.input_size_ = input_size;
    cell.hidden_size_ = hidden_size;
    const std::size_t zw = hidden_size + input_size;
    auto w = [&] { return xavier_init(hidden_size, zw, rng); };
    auto b = [&] { return Matrix(1, hidden_size); };
    switch (type) {
        case CellType::lstm:
            cell.params_ = LstmParams{w(), w(), w(), w(), b(), b(), b(), b()};
            break;
        case CellType::rnn:
            cell.params_ = RnnParams{w(), b()};
            break;
        case CellType::gru:
            cell.params_ = GruParams{w(), w(), w(), b(), b(), b()};
            break;
    }
    return cell;
}

RecurrentCell RecurrentCell::zeros_like(const RecurrentCell& other) {
    RecurrentCell cell;
    cell.type_ = other.type_;
    cell.input_size_ = other.input_size_;
    cell.hidden_size_ = other.hidden_size_;
    const std::size_t zw = cell.hidden_size_ + cell.input_size_;
    Matrix w(cell.hidden_size_, zw);
    Matrix b(1, cell.hidden_size_);
    switch (cell.type_) {
        case CellType::lstm: cell.params_ = LstmParams{w, w, w, w, b, b, b, b}; break;
        case CellType::rnn: cell.params_ = RnnParams{w, b}; break;
        case CellType::gru: cell.params_ = GruParams{w, w, w, b, b, b}; break;
    }
    return cell;
}

CellState RecurrentCell::initial_state(std::size_t batch) const {
    CellState s;
    s.h = Matrix(batch, hidden_size_);
    if (type_ == CellType::lstm) s.c = Matrix(batch, hidden_size_);
    return s;
}

StepResult RecurrentCell::step(const CellState& state, const Matrix& x) const {
    check_dims(hidden_size_, input_size_, state, x, "step");
    switch (type_) {
        case CellType::lstm: return lstm_step(std::get<LstmParams>(params_), state, x);
        case CellType::rnn: return rnn_step(std::get<RnnParams>(params_), state, x);
        default: return gru_step(std::get<GruParams>(params_), state, x);
    }
}

StepBackward RecurrentCell::step_backward(const StepCache& cache, const Matrix& dh,
                                          const Matrix& dc, RecurrentCell& grads) const {
    switch (type_) {
        case CellType::lstm:
            return lstm_step_backward(std::get<LstmParams>(params_),
                                      std::get<LstmCache>(cache), dh, dc,
                                      std::get<LstmParams>(grads.params_));
        case CellType::rnn:
            return rnn_step_backward(std::get<RnnParams>(params_), std::get<RnnCache>(cache),
                                     dh, std::get<RnnParams>(grads.params_));
        default:
            return gru_step_backward(std::get<GruParams>(params_), std::get<GruCache>(cache),
                                     dh, std::get<GruParams>(grads.params_));
    }
}

std::vector<ParamRef> RecurrentCell::parameters() {
    std::vector<ParamRef> out;
    switch (type_) {
        case CellType::lstm: {
            auto& p = std::get<LstmParams>(params_);
            out = {{"w_f", &p.w_f}, {"w_i", &p.w_i}, {"w_c", &p.w_c}, {"w_o", &p.w_o},
                   {"b_f", &p.b_f}, {"b_i", &p.b_i}, {"b_c", &p.b_c}, {"b_o", &p.b_o}};
            break;
        }
        case CellType::rnn: {
            auto& p = std::get<RnnParams>(params_);
            out = {{"w", &p.w}, {"b", &p.b}};
            break;
        }
        case CellType::gru: {
            auto& p = std::get<GruParams>(params_);
            out = {{"w_u", &p.w_u}, {"w_r", &p.w_r}, {"w_n", &p.w_n},
                   {"b_u", &p.b_u}, {"b_r", &p.b_r}, {"b_n", &p.b_n}};
            break;
        }
    }
    return out;
}

std::vector<ParamRef> RecurrentCell::parameters() const {
    return const_cast<RecurrentCell*>(this)->parameters();
}

SequenceForward run_sequence(const RecurrentCell& cell, const Matrix& seq_batch,
                             std::size_t batch, std::size_t window) {
    if (window < 1) throw ShapeError("run_sequence: window must be >= 1");
    if (seq_batch.rows() != batch * window)
        throw ShapeError("run_sequence: " + seq_batch.shape_str() + " rows != batch " +
                         std::to_string(batch) + " * window " + std::to_string(window));

    SequenceForward fwd;
    fwd.batch = batch;
    fwd.window = window;
    fwd.h_all = Matrix(batch * window, cell.hidden_size());
    fwd.caches.reserve(window);

    CellState state = cell.initial_state(batch);
    Matrix x_t(batch, seq_batch.cols());
    for (std::size_t t = 0; t < window; ++t) {
        for (std::size_t b = 0; b < batch; ++b)
            std::copy_n(seq_batch.row_ptr(b * window + t), seq_batch.cols(), x_t.row_ptr(b));
        StepResult step = cell.step(state, x_t);
        for (std::size_t b = 0; b < batch; ++b)
            std::copy_n(step.state.h.row_ptr(b), cell.hidden_size(),
                        fwd.h_all.row_ptr(b * window + t));
        fwd.caches.push_back(std::move(step.cache));
        state = std::move(step.state);
    }
    return fwd;
}

Matrix run_sequence_backward(const RecurrentCell& cell, const SequenceForward& fwd,
                             const Matrix& d_h_all, RecurrentCell& grads) {
    const std::size_t batch = fwd.batch, window = fwd.window;
    if (d_h_all.rows() != batch * window || d_h_all.cols() != cell.hidden_size())
        throw ShapeError("run_sequence_backward: gradient " + d_h_all.shape_str() +
                         " does not match hidden states");

    Matrix dx_all(batch * window, cell.input_size());
    Matrix dh_carry(batch, cell.hidden_size());
    Matrix dc_carry;
    if (cell.type() == CellType::lstm) dc_carry = Matrix(batch, cell.hidden_size());

    Matrix dh_t(batch, cell.hidden_size());
    for (std::size_t t = window; t-- > 0;) {
        for (std::size_t b = 0; b < batch; ++b)
            std::copy_n(d_h_all.row_ptr(b * window + t), cell.hidden_size(), dh_t.row_ptr(b));
        add_in_place(dh_t, dh_carry);
        StepBackward back = cell.step_backward(fwd.caches[t], dh_t, dc_carry, grads);
        dh_carry = std::move(back.dh_prev);
        if (cell.type() == CellType::lstm) dc_carry = std::move(back.dc_prev);
        for (std::size_t b = 0; b < batch; ++b)
            std::copy_n(back.dx.row_ptr(b), cell.input_size(), dx_all.row_ptr(b * window + t));
    }
    return dx_all;
}

}  // namespace ecnet
