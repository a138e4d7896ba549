#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "flow.hpp"
#include "matrix.hpp"

namespace ecnet {

struct NumericColumn {
    std::string name;
    double mean = 0.0;
    double sd = 1.0;  // zero-variance columns store 1
};

struct CategoricalColumn {
    std::string name;
    std::vector<std::string> values;  // one-hot indices 1..values.size(); 0 = OOV
    std::size_t width() const { return values.size() + 1; }
};

struct FeatureConfig {
    std::vector<std::string> numeric_cols = {"duration",  "orig_bytes", "resp_bytes",
                                             "orig_pkts", "resp_pkts",  "orig_port",
                                             "resp_port"};
    std::vector<std::string> categorical_cols = {"proto", "service", "conn_state"};
    std::size_t window = 10;
    std::size_t stride = 1;
};

struct FeatureSchema {
    std::vector<NumericColumn> numeric;
    std::vector<CategoricalColumn> categorical;
    std::size_t window = 10;
    std::size_t stride = 1;

    std::size_t numeric_width() const { return numeric.size(); }
    std::size_t categorical_width() const;
};

struct SequenceSample {
    Matrix numeric;      // W x D_num, z-scored
    Matrix categorical;  // W x D_cat, concatenated one-hots
    int target = 0;
};

struct SequenceBatch {
    Matrix numeric;      // (B*W) x D_num, sample-major rows
    Matrix categorical;  // (B*W) x D_cat
    std::vector<int> targets;
    std::size_t window = 0;

    std::size_t batch_size() const { return targets.size(); }
};

/// Normalization statistics and categorical vocabularies computed from the
/// training records only. Zero-variance columns get sd 1; categorical values
/// are ordered by descending frequency then name, with index 0 reserved for
/// out-of-vocabulary.
FeatureSchema fit_schema(const std::vector<FlowRecord>& train, const FeatureConfig& config);

/// Numeric entries are (x - mean) / sd with absent optionals imputed to the
/// mean (encoded 0); categorical entries are concatenated one-hot rows.
void encode_record(const FlowRecord& r, const FeatureSchema& schema, double* numeric_out,
                   double* categorical_out);
std::pair<Matrix, Matrix> encode_record(const FlowRecord& r, const FeatureSchema& schema);

/// Sliding windows of length schema.window at schema.stride over records
/// already sorted ascending by ts; window target = label of its last record.
std::vector<SequenceSample> make_sequences(const std::vector<FlowRecord>& records,
                                           const FeatureSchema& schema,
                                           const LabelVocab& vocab);

std::vector<SequenceBatch> batch(const std::vector<SequenceSample>& samples,
                                 std::size_t batch_size, std::uint64_t seed, bool shuffle);

std::string schema_to_json(const FeatureSchema& schema);
FeatureSchema schema_from_json(const std::string& json_text);

}  // namespace ecnet
