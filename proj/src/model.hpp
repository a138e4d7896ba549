#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "attention.hpp"
#include "features.hpp"
#include "flow.hpp"
#include "matrix.hpp"
#include "recurrent.hpp"

namespace ecnet {

enum class FeatureMode { separate, merged };

const char* feature_mode_name(FeatureMode m);
FeatureMode feature_mode_from_string(const std::string& s);

struct ModelConfig {
    CellType cell_type = CellType::lstm;
    bool use_attention = true;
    FeatureMode feature_mode = FeatureMode::separate;
    std::size_t hidden_numeric = 64;
    std::size_t hidden_categorical = 32;
    std::size_t d_k = 32;
    std::size_t heads = 1;
    std::vector<std::size_t> fc_sizes = {64};
    std::size_t n_classes = 0;
    Pooling pooling = Pooling::final;
    std::uint64_t seed = 1;
};

/// Violation list; empty when the config is usable.
std::vector<std::string> config_violations(const ModelConfig& config);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& json_text);

struct FcLayer {
    Matrix w;  // out x in, applied as x * w^T + b
    Matrix b;  // 1 x out
};

/// Two recurrent branches (or one, merged), optional attention over the
/// concatenated hidden sequences, fully connected head, softmax output.
struct EcNetModel {
    ModelConfig config;
    std::vector<RecurrentCell> branches;  // separate: [numeric, categorical]
    std::optional<AttentionParams> attention;
    std::vector<FcLayer> fc;
    LabelVocab vocab;
    FeatureSchema schema;

    std::size_t hidden_total() const;
    /// Width of the pooled feature entering the FC stack.
    std::size_t pooled_width() const;
    std::vector<ParamRef> parameters();
    std::size_t parameter_count() const;
};

EcNetModel build_model(const ModelConfig& config, const FeatureSchema& schema,
                       const LabelVocab& vocab, Rng& rng);

/// Gradient holder shape-congruent to a model's parameters.
struct GradientBundle {
    std::vector<RecurrentCell> branches;
    std::optional<AttentionParams> attention;
    std::vector<FcLayer> fc;

    std::vector<ParamRef> parameters();
};

GradientBundle zero_gradients(const EcNetModel& model);

struct ForwardCache {
    bool consumed = false;
    std::size_t batch = 0;
    std::size_t window = 0;
    std::vector<SequenceForward> branch_fwd;
    Matrix h_concat;                  // (B*W) x H_total
    std::vector<AttentionCache> att;  // per sample when attention is on
    Matrix pooled;                    // B x pooled_width
    std::vector<Matrix> fc_inputs;    // input to each FC layer
    std::vector<Matrix> fc_taps;      // tanh outputs of hidden FC layers
};

struct ForwardResult {
    Matrix probabilities;  // B x n_classes, rows sum to 1
    ForwardCache cache;
};

ForwardResult forward(const EcNetModel& model, const SequenceBatch& batch);

/// Exact gradients of the composite; d_logits is the gradient at the
/// pre-softmax logits (the fused softmax+cross-entropy form). A cache can
/// back only one call.
GradientBundle backward(const EcNetModel& model, ForwardCache& cache,
                        const Matrix& d_logits);

struct Prediction {
    std::vector<int> class_ids;
    Matrix probabilities;
};

/// Argmax per row, ties toward the lower class id.
Prediction predict(const EcNetModel& model, const std::vector<SequenceSample>& samples);

int argmax_row(const Matrix& m, std::size_t row);

/// Binary checkpoint: magic, format version, JSON header (config, schema,
/// vocab, parameter shapes), little-endian f64 payload, CRC-32 of the
/// payload. Loading verifies all of it and refuses newer versions.
void save_checkpoint(const EcNetModel& model, const std::string& path);
EcNetModel load_checkpoint(const std::string& path);

}  // namespace ecnet
