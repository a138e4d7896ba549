#include "pipeline.hpp"

#include <algorithm>

#include "json.hpp"
#include "zeek.hpp"

namespace ecnet {

namespace {

nlohmann::json train_config_json(const TrainConfig& c) {
    nlohmann::json j;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["learning_rate"] = c.learning_rate;
    j["optimizer"] = optimizer_name(c.optimizer);
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["adam_epsilon"] = c.adam_epsilon;
    if (c.grad_clip)
        j["grad_clip"] = *c.grad_clip;
    else
        j["grad_clip"] = nullptr;
    if (c.early_stop_patience)
        j["early_stop_patience"] = *c.early_stop_patience;
    else
        j["early_stop_patience"] = nullptr;
    j["seed"] = c.seed;
    return j;
}

TrainConfig train_config_from(const nlohmann::json& j) {
    TrainConfig c;
    if (j.contains("epochs")) c.epochs = j["epochs"].get<std::size_t>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("optimizer")) c.optimizer = optimizer_from_string(j["optimizer"]);
    if (j.contains("beta1")) c.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) c.beta2 = j["beta2"].get<double>();
    if (j.contains("adam_epsilon")) c.adam_epsilon = j["adam_epsilon"].get<double>();
    if (j.contains("grad_clip") && !j["grad_clip"].is_null())
        c.grad_clip = j["grad_clip"].get<double>();
    if (j.contains("early_stop_patience") && !j["early_stop_patience"].is_null())
        c.early_stop_patience = j["early_stop_patience"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    return c;
}

}  // namespace

PipelineOptions pipeline_options_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("pipeline options: invalid JSON: ") +
                                    e.what());
    }
    PipelineOptions opts;
    if (j.contains("window")) opts.features.window = j["window"].get<std::size_t>();
    if (j.contains("stride")) opts.features.stride = j["stride"].get<std::size_t>();
    if (j.contains("numeric_cols"))
        opts.features.numeric_cols = j["numeric_cols"].get<std::vector<std::string>>();
    if (j.contains("categorical_cols"))
        opts.features.categorical_cols =
            j["categorical_cols"].get<std::vector<std::string>>();
    if (j.contains("train_ratio")) opts.train_ratio = j["train_ratio"].get<double>();
    if (j.contains("seed_sample")) opts.seed_sample = j["seed_sample"].get<std::uint64_t>();
    if (j.contains("model")) opts.model = model_config_from_json(j["model"].dump());
    if (j.contains("train")) opts.train = train_config_from(j["train"]);
    return opts;
}

std::string pipeline_options_to_json(const PipelineOptions& opts) {
    nlohmann::json j;
    j["window"] = opts.features.window;
    j["stride"] = opts.features.stride;
    j["numeric_cols"] = opts.features.numeric_cols;
    j["categorical_cols"] = opts.features.categorical_cols;
    j["train_ratio"] = opts.train_ratio;
    j["seed_sample"] = opts.seed_sample;
    j["model"] = nlohmann::json::parse(model_config_to_json(opts.model));
    j["train"] = train_config_json(opts.train);
    return j.dump();
}

std::string split_hash(const DatasetSplit& split) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const std::string& s) {
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& r : split.train) {
        mix(r.uid);
        mix("\x1f");
        mix(format_double(r.ts));
        mix("\x1e");
    }
    mix("\x1d");
    for (const auto& r : split.test) {
        mix(r.uid);
        mix("\x1f");
        mix(format_double(r.ts));
        mix("\x1e");
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<FlowRecord> sorted_by_time(std::vector<FlowRecord> records) {
    std::stable_sort(records.begin(), records.end(),
                     [](const FlowRecord& a, const FlowRecord& b) { return a.ts < b.ts; });
    return records;
}

TrainOutcome run_training(const std::vector<FlowRecord>& records, const LabelVocab& vocab,
                          const PipelineOptions& opts) {
    validate(opts.train);
    if (records.empty()) throw DataError("run_training: no records");

    DatasetSplit split = split_train_test(records, opts.train_ratio, opts.seed_sample);

    TrainOutcome out;
    out.split_hash = split_hash(split);
    for (const auto& name : split.singleton_classes)
        out.warnings.push_back("class '" + name + "' has a single record; kept in train");

    const auto train_records = sorted_by_time(std::move(split.train));
    const auto test_records = sorted_by_time(std::move(split.test));

    const FeatureSchema schema = fit_schema(train_records, opts.features);
    const auto train_seq = make_sequences(train_records, schema, vocab);
    const auto val_seq = make_sequences(test_records, schema, vocab);
    if (train_seq.empty())
        throw DataError("run_training: train partition shorter than one window (" +
                        std::to_string(train_records.size()) + " records, window " +
                        std::to_string(schema.window) + ")");
    if (val_seq.empty())
        throw DataError("run_training: test partition shorter than one window (" +
                        std::to_string(test_records.size()) + " records, window " +
                        std::to_string(schema.window) + ")");
    out.train_sequences = train_seq.size();
    out.val_sequences = val_seq.size();

    ModelConfig mc = opts.model;
    mc.n_classes = static_cast<std::size_t>(vocab.size());
    Rng init_rng(mc.seed);
    out.model = build_model(mc, schema, vocab, init_rng);
    out.result = train(out.model, train_seq, val_seq, opts.train);

    const Prediction pred = predict(out.model, val_seq);
    std::vector<int> truth;
    truth.reserve(val_seq.size());
    for (const auto& s : val_seq) truth.push_back(s.target);
    out.val_report = metrics_from_confusion(
        confusion(pred.class_ids, truth, mc.n_classes), vocab.names);
    return out;
}

EvalOutcome evaluate_model(const EcNetModel& model, const std::vector<FlowRecord>& records,
                           bool binary) {
    if (records.empty()) throw DataError("evaluate: no records");
    for (const auto& r : records)
        if (!model.vocab.contains(r.label))
            throw DataError("evaluate: label '" + r.label +
                            "' is not in the checkpoint vocabulary (schema/vocab "
                            "incompatibility)");

    const auto ordered = sorted_by_time(records);
    const auto samples = make_sequences(ordered, model.schema, model.vocab);
    if (samples.empty())
        throw DataError("evaluate: input shorter than one window (" +
                        std::to_string(ordered.size()) + " records, window " +
                        std::to_string(model.schema.window) + ")");

    const Prediction pred = predict(model, samples);
    std::vector<int> truth;
    truth.reserve(samples.size());
    for (const auto& s : samples) truth.push_back(s.target);

    EvalOutcome out;
    out.sequences = samples.size();
    if (binary) {
        const auto truth_b = binary_collapse(model.vocab, truth);
        const auto pred_b = binary_collapse(model.vocab, pred.class_ids);
        out.report = metrics_from_confusion(confusion(pred_b, truth_b, 2),
                                            {"Benign", "Malicious"});
    } else {
        out.report = metrics_from_confusion(
            confusion(pred.class_ids, truth, static_cast<std::size_t>(model.vocab.size())),
            model.vocab.names);
    }
    return out;
}

std::string ingest_summary_json(const std::vector<FlowRecord>& records,
                                std::size_t parse_issues) {
    const auto counts = class_counts(records);
    std::vector<std::pair<std::string, std::size_t>> order(counts.begin(), counts.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    nlohmann::json j;
    j["version"] = 1;
    j["records"] = records.size();
    j["classes"] = counts.size();
    j["skipped_lines"] = parse_issues;
    auto table = nlohmann::json::array();
    for (const auto& [name, count] : order)
        table.push_back({{"label", name}, {"count", count}});
    j["label_counts"] = std::move(table);
    return j.dump(2) + "\n";
}

}  // namespace ecnet
