#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flow.hpp"

namespace ecnet {

/// Rows are true classes, columns predicted.
struct ConfusionMatrix {
    std::size_t n_classes = 0;
    std::vector<std::uint64_t> counts;  // n * n, row-major

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(std::size_t n) : n_classes(n), counts(n * n, 0) {}

    std::uint64_t& at(std::size_t truth, std::size_t pred) {
        return counts[truth * n_classes + pred];
    }
    std::uint64_t at(std::size_t truth, std::size_t pred) const {
        return counts[truth * n_classes + pred];
    }
    std::uint64_t total() const;
    std::uint64_t row_sum(std::size_t r) const;
    std::uint64_t col_sum(std::size_t c) const;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truth,
                          std::size_t n_classes);

struct ClassMetrics {
    std::string name;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
    /// Set when a zero denominator forced the 0 convention.
    bool flagged = false;
};

struct EvalReport {
    ConfusionMatrix confusion;
    std::vector<ClassMetrics> per_class;
    double accuracy = 0.0;  // trace / total
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double weighted_precision = 0.0, weighted_recall = 0.0, weighted_f1 = 0.0;
    std::vector<std::string> class_names;
};

/// One-vs-rest precision/recall/F1 per class with the 0-and-flag convention
/// on zero denominators; macro values are unweighted class means and the
/// support-weighted means are reported alongside.
EvalReport metrics_from_confusion(const ConfusionMatrix& cm,
                                  const std::vector<std::string>& class_names = {});

/// Benign class to 0, everything else to 1.
std::vector<int> binary_collapse(const LabelVocab& vocab, const std::vector<int>& ids);

/// Report JSON; `echo` (optional, object) is embedded under "config".
std::string eval_report_to_json(const EvalReport& report, const std::string& echo_json = "");

}  // namespace ecnet
