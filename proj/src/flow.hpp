#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecnet {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Proto { tcp, udp, icmp, other };

const char* proto_name(Proto p);
Proto proto_from_string(const std::string& s);

/// One parsed connection entry from a labeled Zeek log.
struct FlowRecord {
    double ts = 0.0;
    std::string uid;
    std::string orig_host;
    std::optional<int> orig_port;
    std::string resp_host;
    std::optional<int> resp_port;
    Proto proto = Proto::other;
    std::optional<std::string> service;
    std::optional<double> duration;
    std::optional<std::uint64_t> orig_bytes;
    std::optional<std::uint64_t> resp_bytes;
    std::string conn_state;
    std::optional<std::uint64_t> orig_pkts;
    std::optional<std::uint64_t> resp_pkts;
    std::string label_raw;
    std::string label;

    bool operator==(const FlowRecord&) const = default;
};

/// Canonical class name for a raw label: drops the benign/malicious flag
/// token when a detailed label follows it, folds separator runs
/// (space/underscore/hyphen) to single hyphens, and unifies the benign
/// spelling to "Benign".
std::string canonical_label(const std::string& raw);

/// Ordered class-name table. Id 0 is the most frequent class.
struct LabelVocab {
    std::vector<std::string> names;
    std::map<std::string, int> index;
    std::optional<int> benign_id;

    int size() const { return static_cast<int>(names.size()); }
    int id_of(const std::string& name) const;
    bool contains(const std::string& name) const { return index.count(name) > 0; }
    /// Benign class id, or throws when no benign-named class exists.
    int require_benign() const;
};

/// Vocabulary over the distinct canonical labels, ordered by descending
/// frequency then lexicographically.
LabelVocab build_label_vocab(const std::vector<FlowRecord>& records);

std::string vocab_to_json(const LabelVocab& vocab);
LabelVocab vocab_from_json(const std::string& json_text);

/// Class-preserving reduction to at most `budget` records: every class keeps
/// at least min(count, budget/|classes|) records, small classes are kept in
/// full, and leftover budget goes to the remaining classes in proportion to
/// their original frequency. Selection within a class is seeded uniform
/// sampling without replacement; input order is preserved in the output.
std::vector<FlowRecord> stratified_sample(const std::vector<FlowRecord>& records,
                                          std::size_t budget, std::uint64_t seed);

struct DatasetSplit {
    std::vector<FlowRecord> train;
    std::vector<FlowRecord> test;
    std::uint64_t seed = 0;
    double ratio = 0.0;
    /// Classes that had a single record and were forced into train.
    std::vector<std::string> singleton_classes;
};

/// Stratified split; each class contributes clamp(floor(count*ratio), 1,
/// count-1) records to train so both partitions see every class that has at
/// least two records. Partition order follows the input order.
DatasetSplit split_train_test(const std::vector<FlowRecord>& records, double ratio,
                              std::uint64_t seed);

std::map<std::string, std::size_t> class_counts(const std::vector<FlowRecord>& records);

}  // namespace ecnet
