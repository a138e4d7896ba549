#include "metrics.hpp"

#include "json.hpp"

namespace ecnet {

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t r) const {
    std::uint64_t t = 0;
    for (std::size_t c = 0; c < n_classes; ++c) t += at(r, c);
    return t;
}

std::uint64_t ConfusionMatrix::col_sum(std::size_t c) const {
    std::uint64_t t = 0;
    for (std::size_t r = 0; r < n_classes; ++r) t += at(r, c);
    return t;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& truth,
                          std::size_t n_classes) {
    if (preds.size() != truth.size())
        throw DataError("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(truth.size()) + " truths");
    ConfusionMatrix cm(n_classes);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const int t = truth[i], p = preds[i];
        if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= n_classes ||
            static_cast<std::size_t>(p) >= n_classes)
            throw DataError("confusion: class id out of range at index " +
                            std::to_string(i));
        ++cm.at(static_cast<std::size_t>(t), static_cast<std::size_t>(p));
    }
    return cm;
}

EvalReport metrics_from_confusion(const ConfusionMatrix& cm,
                                  const std::vector<std::string>& class_names) {
    const std::uint64_t total = cm.total();
    if (total == 0) throw DataError("metrics_from_confusion: empty confusion matrix");
    if (!class_names.empty() && class_names.size() != cm.n_classes)
        throw DataError("metrics_from_confusion: " + std::to_string(class_names.size()) +
                        " names for " + std::to_string(cm.n_classes) + " classes");

    EvalReport report;
    report.confusion = cm;
    for (std::size_t c = 0; c < cm.n_classes; ++c)
        report.class_names.push_back(class_names.empty() ? "class_" + std::to_string(c)
                                                         : class_names[c]);

    std::uint64_t trace = 0;
    for (std::size_t c = 0; c < cm.n_classes; ++c) trace += cm.at(c, c);
    report.accuracy = static_cast<double>(trace) / static_cast<double>(total);

    double macro_p = 0.0, macro_r = 0.0, macro_f1 = 0.0;
    double wsum_p = 0.0, wsum_r = 0.0, wsum_f1 = 0.0;
    std::uint64_t support_total = 0;
    for (std::size_t c = 0; c < cm.n_classes; ++c) {
        const std::uint64_t tp = cm.at(c, c);
        const std::uint64_t fp = cm.col_sum(c) - tp;
        const std::uint64_t fn = cm.row_sum(c) - tp;

        ClassMetrics m;
        m.name = report.class_names[c];
        m.support = tp + fn;
        if (tp + fp == 0) {
            m.precision = 0.0;
            m.flagged = true;
        } else {
            m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        }
        if (tp + fn == 0) {
            m.recall = 0.0;
            m.flagged = true;
        } else {
            m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
        }
        if (m.precision + m.recall > 0.0)
            m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);

        macro_p += m.precision;
        macro_r += m.recall;
        macro_f1 += m.f1;
        wsum_p += m.precision * static_cast<double>(m.support);
        wsum_r += m.recall * static_cast<double>(m.support);
        wsum_f1 += m.f1 * static_cast<double>(m.support);
        support_total += m.support;
        report.per_class.push_back(std::move(m));
    }
    const double n = static_cast<double>(cm.n_classes);
    report.macro_precision = macro_p / n;
    report.macro_recall = macro_r / n;
    report.macro_f1 = macro_f1 / n;
    if (support_total > 0) {
        const double s = static_cast<double>(support_total);
        report.weighted_precision = wsum_p / s;
        report.weighted_recall = wsum_r / s;
        report.weighted_f1 = wsum_f1 / s;
    }
    return report;
}

std::vector<int> binary_collapse(const LabelVocab& vocab, const std::vector<int>& ids) {
    const int benign = vocab.require_benign();
    std::vector<int> out;
    out.reserve(ids.size());
    for (int id : ids) out.push_back(id == benign ? 0 : 1);
    return out;
}

std::string eval_report_to_json(const EvalReport& report, const std::string& echo_json) {
    nlohmann::json j;
    j["version"] = 1;
    j["n_classes"] = report.confusion.n_classes;
    j["classes"] = report.class_names;
    j["samples"] = report.confusion.total();

    auto grid = nlohmann::json::array();
    for (std::size_t r = 0; r < report.confusion.n_classes; ++r) {
        auto row = nlohmann::json::array();
        for (std::size_t c = 0; c < report.confusion.n_classes; ++c)
            row.push_back(report.confusion.at(r, c));
        grid.push_back(std::move(row));
    }
    j["confusion"] = std::move(grid);

    j["accuracy"] = report.accuracy;
    auto per_class = nlohmann::json::array();
    for (const auto& m : report.per_class)
        per_class.push_back({{"name", m.name},
                             {"precision", m.precision},
                             {"recall", m.recall},
                             {"f1", m.f1},
                             {"support", m.support},
                             {"flagged", m.flagged}});
    j["per_class"] = std::move(per_class);
    j["macro"] = {{"precision", report.macro_precision},
                  {"recall", report.macro_recall},
                  {"f1", report.macro_f1}};
    j["weighted"] = {{"precision", report.weighted_precision},
                     {"recall", report.weighted_recall},
                     {"f1", report.weighted_f1}};
    if (!echo_json.empty()) j["config"] = nlohmann::json::parse(echo_json);
    return j.dump(2) + "\n";
}

}  // namespace ecnet
