#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "features.hpp"
#include "flow.hpp"
#include "metrics.hpp"
#include "model.hpp"
#include "train.hpp"

namespace ecnet {

/// Everything one training run needs: feature options, split fraction, the
/// three seeds (sample/split, init, training order), model and optimizer
/// settings.
struct PipelineOptions {
    FeatureConfig features;
    double train_ratio = 0.8;
    std::uint64_t seed_sample = 1;
    ModelConfig model;   // model.seed is the init seed
    TrainConfig train;   // train.seed orders the batches
};

PipelineOptions pipeline_options_from_json(const std::string& json_text);
std::string pipeline_options_to_json(const PipelineOptions& opts);

/// FNV-1a over the ordered uid/ts pairs of both partitions; lets runs with
/// shared seeds prove they saw identical splits.
std::string split_hash(const DatasetSplit& split);

struct TrainOutcome {
    EcNetModel model;
    TrainResult result;
    std::string split_hash;
    std::size_t train_sequences = 0;
    std::size_t val_sequences = 0;
    EvalReport val_report;
    std::vector<std::string> warnings;
};

/// Split, fit schema on the train partition, window both partitions, build
/// and train the model, evaluate on the held-out partition.
TrainOutcome run_training(const std::vector<FlowRecord>& records, const LabelVocab& vocab,
                          const PipelineOptions& opts);

struct EvalOutcome {
    EvalReport report;
    std::size_t sequences = 0;
};

/// Encode with the checkpoint's schema/vocab; labels unknown to the model's
/// vocabulary are an incompatibility error. With `binary`, truth and
/// predictions are both collapsed to benign/malicious first.
EvalOutcome evaluate_model(const EcNetModel& model, const std::vector<FlowRecord>& records,
                           bool binary);

/// Sort ascending by ts, stable on ties.
std::vector<FlowRecord> sorted_by_time(std::vector<FlowRecord> records);

/// Ingest summary JSON: per-class counts (descending), totals, issues.
std::string ingest_summary_json(const std::vector<FlowRecord>& records,
                                std::size_t parse_issues);

}  // namespace ecnet
