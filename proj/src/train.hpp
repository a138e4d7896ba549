#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "features.hpp"
#include "matrix.hpp"
#include "model.hpp"

namespace ecnet {

/// Non-finite loss or gradient encountered while training.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class OptimizerKind { sgd, adam };

const char* optimizer_name(OptimizerKind k);
OptimizerKind optimizer_from_string(const std::string& s);

struct TrainConfig {
    std::size_t epochs = 30;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::optional<double> grad_clip;          // max global L2 norm
    std::optional<std::size_t> early_stop_patience;
    std::uint64_t seed = 1;
};

/// Throws on violated invariants (epochs >= 1, learning_rate > 0, ...).
void validate(const TrainConfig& config);

struct CrossEntropy {
    double loss = 0.0;
    Matrix d_logits;  // (p - onehot) / B, the fused softmax+CE gradient
};

/// Mean negative log-probability of the target class, probabilities clamped
/// at 1e-12 inside the log.
CrossEntropy cross_entropy(const Matrix& probabilities, const std::vector<int>& targets);

/// Per-parameter first and second moments plus the shared step counter.
struct OptimizerState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::uint64_t step = 0;
};

OptimizerState make_optimizer_state(const std::vector<ParamRef>& params);

/// In-place update; applies global-norm clipping first when configured.
/// Throws NumericError naming the parameter block on non-finite gradients.
void optimizer_step(std::vector<ParamRef>& params, const std::vector<ParamRef>& grads,
                    OptimizerState& state, const TrainConfig& config);

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    std::size_t best_epoch = 0;
    double best_val_accuracy = 0.0;
};

/// Deterministic for fixed seeds. With early stopping configured, the best
/// validation parameters are restored into the model.
TrainResult train(EcNetModel& model, const std::vector<SequenceSample>& train_samples,
                  const std::vector<SequenceSample>& val_samples, const TrainConfig& config);

std::string history_to_csv(const std::vector<EpochStats>& history);

double accuracy_on(const EcNetModel& model, const std::vector<SequenceSample>& samples);

}  // namespace ecnet
