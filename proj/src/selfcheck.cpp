#include "selfcheck.hpp"

#include <stdexcept>

#include "gradcheck.hpp"
#include "json.hpp"
#include "train.hpp"

namespace ecnet {

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
    return m;
}

double weighted_sum(const Matrix& m, const Matrix& weights) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) s += m.data()[i] * weights.data()[i];
    return s;
}

// collects the extra non-parameter leaves (inputs, states) checked alongside
struct Leaves {
    std::vector<ParamRef> refs;
    void add(const std::string& name, Matrix* m) { refs.push_back({name, m}); }
};

double check_cell_step(CellType type, std::uint64_t seed, double eps) {
    const std::size_t hidden = 3, input = 2, batch = 2;
    Rng rng(seed);
    RecurrentCell cell = RecurrentCell::create(type, input, hidden, rng);
    Matrix x = random_matrix(batch, input, rng);
    CellState state = cell.initial_state(batch);
    state.h = random_matrix(batch, hidden, rng);
    if (type == CellType::lstm) state.c = random_matrix(batch, hidden, rng);
    const Matrix r_h = random_matrix(batch, hidden, rng);
    const Matrix r_c = random_matrix(batch, hidden, rng);

    Leaves leaves;
    for (auto& p : cell.parameters()) leaves.add(p.name, p.value);
    leaves.add("x", &x);
    leaves.add("h_prev", &state.h);
    if (type == CellType::lstm) leaves.add("c_prev", &state.c);

    auto loss_of = [&](const std::vector<double>& theta) {
        unflatten_params(theta, leaves.refs);
        StepResult step = cell.step(state, x);
        double loss = weighted_sum(step.state.h, r_h);
        if (type == CellType::lstm) loss += weighted_sum(step.state.c, r_c);
        return loss;
    };

    const std::vector<double> theta = flatten_params(leaves.refs);
    StepResult step = cell.step(state, x);
    RecurrentCell grads = RecurrentCell::zeros_like(cell);
    StepBackward back = cell.step_backward(step.cache, r_h, r_c, grads);

    std::vector<ParamRef> grad_refs;
    for (auto& p : grads.parameters()) grad_refs.push_back(p);
    grad_refs.push_back({"x", &back.dx});
    grad_refs.push_back({"h_prev", &back.dh_prev});
    Matrix dc_prev = back.dc_prev;
    if (type == CellType::lstm) grad_refs.push_back({"c_prev", &dc_prev});
    const std::vector<double> analytic = flatten_params(grad_refs);

    return grad_check(loss_of, theta, analytic, eps).max_rel_error;
}

double check_attention(std::size_t heads, std::uint64_t seed, double eps) {
    const std::size_t window = 4, h_in = 5, d_k = 4;
    Rng rng(seed);
    AttentionParams params = make_attention(h_in, d_k, heads, rng);
    Matrix h_states = random_matrix(window, h_in, rng);
    const Matrix r = random_matrix(window, d_k, rng);

    Leaves leaves;
    leaves.add("w_q", &params.w_q);
    leaves.add("w_k", &params.w_k);
    leaves.add("w_v", &params.w_v);
    leaves.add("h_states", &h_states);

    auto loss_of = [&](const std::vector<double>& theta) {
        unflatten_params(theta, leaves.refs);
        AttentionCache cache;
        AttentionOutput out = attend(h_states, params, cache);
        return weighted_sum(out.context, r);
    };

    const std::vector<double> theta = flatten_params(leaves.refs);
    AttentionCache cache;
    attend(h_states, params, cache);
    AttentionParams grads = params;
    grads.w_q = Matrix(h_in, d_k);
    grads.w_k = Matrix(h_in, d_k);
    grads.w_v = Matrix(h_in, d_k);
    Matrix dh = attend_backward(params, cache, r, grads);

    std::vector<ParamRef> grad_refs = {{"w_q", &grads.w_q},
                                       {"w_k", &grads.w_k},
                                       {"w_v", &grads.w_v},
                                       {"h_states", &dh}};
    const std::vector<double> analytic = flatten_params(grad_refs);
    return grad_check(loss_of, theta, analytic, eps).max_rel_error;
}

double check_fc_softmax_ce(std::uint64_t seed, double eps) {
    const std::size_t batch = 3, in = 5, hidden = 4, classes = 3;
    Rng rng(seed);
    Matrix w1 = xavier_init(hidden, in, rng);
    Matrix b1 = random_matrix(1, hidden, rng);
    Matrix w2 = xavier_init(classes, hidden, rng);
    Matrix b2 = random_matrix(1, classes, rng);
    Matrix x = random_matrix(batch, in, rng);
    const std::vector<int> targets = {0, 2, 1};

    Leaves leaves;
    leaves.add("w1", &w1);
    leaves.add("b1", &b1);
    leaves.add("w2", &w2);
    leaves.add("b2", &b2);
    leaves.add("x", &x);

    auto forward_probs = [&]() {
        const Matrix a = tanh_m(add_bias_rows(matmul_nt(x, w1), b1));
        const Matrix logits = add_bias_rows(matmul_nt(a, w2), b2);
        return std::pair<Matrix, Matrix>(a, softmax_rows(logits));
    };
    auto loss_of = [&](const std::vector<double>& theta) {
        unflatten_params(theta, leaves.refs);
        return cross_entropy(forward_probs().second, targets).loss;
    };

    const std::vector<double> theta = flatten_params(leaves.refs);
    auto [a, probs] = forward_probs();
    CrossEntropy ce = cross_entropy(probs, targets);
    // by hand: d_logits -> layer 2 -> tanh -> layer 1
    Matrix dw2 = matmul_tn(ce.d_logits, a);
    Matrix db2 = col_sums(ce.d_logits);
    Matrix da = matmul(ce.d_logits, w2);
    Matrix dz(da.rows(), da.cols());
    for (std::size_t i = 0; i < da.size(); ++i) {
        const double v = a.data()[i];
        dz.data()[i] = da.data()[i] * (1.0 - v * v);
    }
    Matrix dw1 = matmul_tn(dz, x);
    Matrix db1 = col_sums(dz);
    Matrix dx = matmul(dz, w1);

    std::vector<ParamRef> grad_refs = {
        {"w1", &dw1}, {"b1", &db1}, {"w2", &dw2}, {"b2", &db2}, {"x", &dx}};
    const std::vector<double> analytic = flatten_params(grad_refs);
    return grad_check(loss_of, theta, analytic, eps).max_rel_error;
}

double check_full_model(std::uint64_t seed, double eps, bool inject_sign_error) {
    const std::size_t window = 3, batch = 2, d_num = 3, d_cat = 4;
    Rng rng(seed);

    FeatureSchema schema;
    schema.window = window;
    schema.stride = 1;
    for (std::size_t i = 0; i < d_num; ++i)
        schema.numeric.push_back({"n" + std::to_string(i), 0.0, 1.0});
    CategoricalColumn cc;
    cc.name = "c0";
    cc.values = {"a", "b", "c"};  // width 4 with OOV
    schema.categorical.push_back(cc);

    LabelVocab vocab;
    vocab.names = {"x", "y", "z"};
    for (int i = 0; i < 3; ++i) vocab.index[vocab.names[i]] = i;

    ModelConfig config;
    config.cell_type = CellType::lstm;
    config.use_attention = true;
    config.feature_mode = FeatureMode::separate;
    config.hidden_numeric = 4;
    config.hidden_categorical = 3;
    config.d_k = 4;
    config.heads = 1;
    config.fc_sizes = {5};
    config.n_classes = 3;
    config.seed = seed;
    EcNetModel model = build_model(config, schema, vocab, rng);

    SequenceBatch sb;
    sb.window = window;
    sb.numeric = random_matrix(batch * window, d_num, rng);
    sb.categorical = random_matrix(batch * window, d_cat, rng);
    sb.targets = {2, 0};

    auto params = model.parameters();
    auto loss_of = [&](const std::vector<double>& theta) {
        unflatten_params(theta, params);
        ForwardResult fwd = forward(model, sb);
        return cross_entropy(fwd.probabilities, sb.targets).loss;
    };

    const std::vector<double> theta = flatten_params(params);
    ForwardResult fwd = forward(model, sb);
    CrossEntropy ce = cross_entropy(fwd.probabilities, sb.targets);
    GradientBundle grads = backward(model, fwd.cache, ce.d_logits);
    auto grad_refs = grads.parameters();
    std::vector<double> analytic = flatten_params(grad_refs);
    if (inject_sign_error && !analytic.empty()) analytic[0] = -analytic[0] - 1.0;

    return grad_check(loss_of, theta, analytic, eps).max_rel_error;
}

}  // namespace

std::vector<double> flatten_params(const std::vector<ParamRef>& refs) {
    std::vector<double> out;
    for (const auto& r : refs)
        out.insert(out.end(), r.value->data(), r.value->data() + r.value->size());
    return out;
}

void unflatten_params(const std::vector<double>& theta, std::vector<ParamRef>& refs) {
    std::size_t off = 0;
    for (auto& r : refs) {
        if (off + r.value->size() > theta.size())
            throw std::invalid_argument("unflatten_params: vector too short");
        std::copy_n(theta.begin() + static_cast<std::ptrdiff_t>(off), r.value->size(),
                    r.value->data());
        off += r.value->size();
    }
    if (off != theta.size())
        throw std::invalid_argument("unflatten_params: vector length mismatch");
}

bool SelfCheckReport::pass() const {
    for (const auto& e : entries)
        if (!(e.max_rel_error < threshold)) return false;
    return true;
}

SelfCheckReport run_selfcheck(double eps, std::uint64_t seed, bool inject_sign_error) {
    if (eps <= 0.0) throw std::invalid_argument("selfcheck: eps must be > 0");
    SelfCheckReport report;
    report.eps = eps;
    report.seed = seed;

    report.entries.push_back({"lstm_step", check_cell_step(CellType::lstm, seed, eps)});
    report.entries.push_back({"rnn_step", check_cell_step(CellType::rnn, seed + 1, eps)});
    report.entries.push_back({"gru_step", check_cell_step(CellType::gru, seed + 2, eps)});
    report.entries.push_back({"attention", check_attention(1, seed + 3, eps)});
    report.entries.push_back({"attention_2head", check_attention(2, seed + 4, eps)});
    report.entries.push_back({"fc_softmax_ce", check_fc_softmax_ce(seed + 5, eps)});
    report.entries.push_back(
        {"ecnet_full", check_full_model(seed + 6, eps, inject_sign_error)});
    return report;
}

std::string selfcheck_report_to_json(const SelfCheckReport& report) {
    nlohmann::json j;
    j["version"] = 1;
    j["eps"] = report.eps;
    j["seed"] = report.seed;
    j["threshold"] = report.threshold;
    auto entries = nlohmann::json::array();
    for (const auto& e : report.entries)
        entries.push_back({{"component", e.component},
                           {"max_rel_error", e.max_rel_error},
                           {"pass", e.max_rel_error < report.threshold}});
    j["components"] = std::move(entries);
    j["pass"] = report.pass();
    return j.dump(2) + "\n";
}

}  // namespace ecnet
