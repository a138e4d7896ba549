#include "train.hpp"

#include <cmath>
#include <sstream>

#include "zeek.hpp"  // format_double

namespace ecnet {

const char* optimizer_name(OptimizerKind k) {
    return k == OptimizerKind::sgd ? "sgd" : "adam";
}

OptimizerKind optimizer_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::sgd;
    if (s == "adam") return OptimizerKind::adam;
    throw std::invalid_argument("unknown optimizer '" + s + "'");
}

void validate(const TrainConfig& config) {
    if (config.epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
    if (config.batch_size < 1)
        throw std::invalid_argument("train config: batch_size must be >= 1");
    if (!(config.learning_rate > 0.0))
        throw std::invalid_argument("train config: learning_rate must be > 0");
    if (config.grad_clip && !(*config.grad_clip > 0.0))
        throw std::invalid_argument("train config: grad_clip must be > 0");
}

CrossEntropy cross_entropy(const Matrix& probabilities, const std::vector<int>& targets) {
    const std::size_t b = probabilities.rows();
    const std::size_t c = probabilities.cols();
    if (targets.size() != b)
        throw ShapeError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(b) + " rows");

    CrossEntropy out;
    out.d_logits = probabilities;
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(b);
    for (std::size_t r = 0; r < b; ++r) {
        const int t = targets[r];
        if (t < 0 || static_cast<std::size_t>(t) >= c)
            throw std::invalid_argument("cross_entropy: target id " + std::to_string(t) +
                                        " out of range for " + std::to_string(c) +
                                        " classes");
        loss -= std::log(std::max(probabilities(r, static_cast<std::size_t>(t)), 1e-12));
        out.d_logits(r, static_cast<std::size_t>(t)) -= 1.0;
    }
    for (std::size_t i = 0; i < out.d_logits.size(); ++i) out.d_logits.data()[i] *= inv_b;
    out.loss = loss * inv_b;
    return out;
}

OptimizerState make_optimizer_state(const std::vector<ParamRef>& params) {
    OptimizerState state;
    for (const auto& p : params) {
        state.m.emplace_back(p.value->rows(), p.value->cols());
        state.v.emplace_back(p.value->rows(), p.value->cols());
    }
    return state;
}

void optimizer_step(std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
                    OptimizerState& state, const TrainConfig& config) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("optimizer_step: parameter/gradient/state count mismatch");

    double sq_norm = 0.0;
    for (std::size_t i = 0; i < grads.size(); ++i) {
        const Matrix& g = *grads[i].value;
        if (!g.same_shape(*params[i].value))
            throw ShapeError("optimizer_step: gradient shape mismatch at '" +
                             params[i].name + "'");
        if (!g.all_finite())
            throw NumericError("optimizer_step: non-finite gradient in '" + params[i].name +
                               "'");
        for (std::size_t k = 0; k < g.size(); ++k) sq_norm += g.data()[k] * g.data()[k];
    }
    double clip_scale = 1.0;
    if (config.grad_clip) {
        const double norm = std::sqrt(sq_norm);
        if (norm > *config.grad_clip) clip_scale = *config.grad_clip / norm;
    }

    ++state.step;
    if (config.optimizer == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            Matrix& p = *params[i].value;
            const Matrix& g = *grads[i].value;
            for (std::size_t k = 0; k < p.size(); ++k)
                p.data()[k] -= config.learning_rate * clip_scale * g.data()[k];
        }
        return;
    }

    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Matrix& p = *params[i].value;
        const Matrix& g = *grads[i].value;
        Matrix& m = state.m[i];
        Matrix& v = state.v[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double gk = g.data()[k] * clip_scale;
            m.data()[k] = config.beta1 * m.data()[k] + (1.0 - config.beta1) * gk;
            v.data()[k] = config.beta2 * v.data()[k] + (1.0 - config.beta2) * gk * gk;
            const double m_hat = m.data()[k] / bc1;
            const double v_hat = v.data()[k] / bc2;
            p.data()[k] -=
                config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
        }
    }
}

double accuracy_on(const EcNetModel& model, const std::vector<SequenceSample>& samples) {
    if (samples.empty()) return 0.0;
    const Prediction pred = predict(model, samples);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (pred.class_ids[i] == samples[i].target) ++hits;
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

namespace {

std::vector<Matrix> snapshot(const std::vector<ParamRef>& params) {
    std::vector<Matrix> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(*p.value);
    return out;
}

void restore(std::vector<ParamRef>& params, const std::vector<Matrix>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = snap[i];
}

}  // namespace

TrainResult train(EcNetModel& model, const std::vector<SequenceSample>& train_samples,
                  const std::vector<SequenceSample>& val_samples,
                  const TrainConfig& config) {
    validate(config);
    if (train_samples.empty()) throw DataError("train: empty training set");

    auto params = model.parameters();
    OptimizerState state = make_optimizer_state(params);

    TrainResult result;
    std::vector<Matrix> best_params;
    std::size_t epochs_since_best = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        const auto batches =
            batch(train_samples, config.batch_size, config.seed + epoch, true);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            const SequenceBatch& sb = batches[bi];
            ForwardResult fwd = forward(model, sb);
            CrossEntropy ce = cross_entropy(fwd.probabilities, sb.targets);
            if (!std::isfinite(ce.loss))
                throw NumericError("train: non-finite loss " + std::to_string(ce.loss) +
                                   " at epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(bi + 1));
            GradientBundle grads = backward(model, fwd.cache, ce.d_logits);
            auto grad_refs = grads.parameters();
            optimizer_step(params, grad_refs, state, config);
            loss_sum += ce.loss * static_cast<double>(sb.batch_size());
            seen += sb.batch_size();
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(seen);
        stats.val_accuracy = accuracy_on(model, val_samples);
        result.history.push_back(stats);

        if (result.history.size() == 1 || stats.val_accuracy > result.best_val_accuracy) {
            result.best_val_accuracy = stats.val_accuracy;
            result.best_epoch = epoch;
            epochs_since_best = 0;
            if (config.early_stop_patience) best_params = snapshot(params);
        } else {
            ++epochs_since_best;
        }
        if (config.early_stop_patience && epochs_since_best >= *config.early_stop_patience)
            break;
    }

    if (config.early_stop_patience && !best_params.empty()) restore(params, best_params);
    return result;
}

std::string history_to_csv(const std::vector<EpochStats>& history) {
    std::ostringstream out;
    out << "epoch,train_loss,val_accuracy\n";
    for (const auto& e : history)
        out << e.epoch << ',' << format_double(e.train_loss) << ','
            << format_double(e.val_accuracy) << '\n';
    return out.str();
}

}  // namespace ecnet
