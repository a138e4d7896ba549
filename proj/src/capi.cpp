#include "ecnet.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "pipeline.hpp"
#include "selfcheck.hpp"
#include "zeek.hpp"

using namespace ecnet;

struct ecnet_dataset {
    std::vector<FlowRecord> records;
    LabelVocab vocab;
    std::size_t parse_issues = 0;
};

struct ecnet_model {
    EcNetModel model;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

template <typename Fn>
ecnet_status guarded(Fn&& fn) {
    try {
        g_last_error.clear();
        return fn();
    } catch (const NumericError& e) {
        g_last_error = e.what();
        return ECNET_ERR_NUMERIC;
    } catch (const DataError& e) {
        g_last_error = e.what();
        return ECNET_ERR_DATA;
    } catch (const std::invalid_argument& e) {
        g_last_error = e.what();
        return ECNET_ERR_USAGE;
    } catch (const std::logic_error& e) {
        g_last_error = e.what();
        return ECNET_ERR_USAGE;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return ECNET_ERR_DATA;
    }
}

std::string slurp(const char* path, const char* what) {
    std::ifstream in(path);
    if (!in) throw DataError(std::string(what) + ": cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void spill(const char* path, const std::string& text, const char* what) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError(std::string(what) + ": cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw DataError(std::string(what) + ": write failed for '" + path + "'");
}

}  // namespace

extern "C" {

uint32_t ecnet_abi_version(void) { return 1; }

const char* ecnet_last_error(void) { return g_last_error.c_str(); }

void ecnet_string_free(char* s) { std::free(s); }

ecnet_status ecnet_dataset_open_zeek(const char* const* paths, size_t count,
                                     ecnet_dataset** out) {
    return guarded([&]() -> ecnet_status {
        if (!paths || count == 0 || !out)
            throw std::invalid_argument("ecnet_dataset_open_zeek: null arguments");
        auto ds = std::make_unique<ecnet_dataset>();
        for (size_t i = 0; i < count; ++i) {
            std::ifstream in(paths[i]);
            if (!in) throw DataError(std::string("cannot open '") + paths[i] + "'");
            ParseResult parsed = parse_zeek_log(in);
            ds->parse_issues += parsed.issues.size();
            ds->records.insert(ds->records.end(),
                               std::make_move_iterator(parsed.records.begin()),
                               std::make_move_iterator(parsed.records.end()));
        }
        if (ds->records.empty())
            throw DataError("ecnet_dataset_open_zeek: no records parsed");
        ds->vocab = build_label_vocab(ds->records);
        *out = ds.release();
        return ECNET_OK;
    });
}

ecnet_status ecnet_dataset_open_csv(const char* csv_path, const char* vocab_path,
                                    ecnet_dataset** out) {
    return guarded([&]() -> ecnet_status {
        if (!csv_path || !out)
            throw std::invalid_argument("ecnet_dataset_open_csv: null arguments");
        std::ifstream in(csv_path);
        if (!in) throw DataError(std::string("cannot open '") + csv_path + "'");
        auto ds = std::make_unique<ecnet_dataset>();
        ds->records = read_canonical_csv(in);
        if (ds->records.empty()) throw DataError("csv: no records");
        if (vocab_path)
            ds->vocab = vocab_from_json(slurp(vocab_path, "vocab"));
        else
            ds->vocab = build_label_vocab(ds->records);
        for (const auto& r : ds->records)
            if (!ds->vocab.contains(r.label))
                throw DataError("csv: label '" + r.label + "' missing from vocabulary");
        *out = ds.release();
        return ECNET_OK;
    });
}

ecnet_status ecnet_dataset_write_csv(const ecnet_dataset* ds, const char* path) {
    return guarded([&]() -> ecnet_status {
        if (!ds || !path)
            throw std::invalid_argument("ecnet_dataset_write_csv: null arguments");
        std::ostringstream buf;
        write_canonical_csv(ds->records, buf);
        spill(path, buf.str(), "csv");
        return ECNET_OK;
    });
}

ecnet_status ecnet_dataset_write_vocab(const ecnet_dataset* ds, const char* path) {
    return guarded([&]() -> ecnet_status {
        if (!ds || !path)
            throw std::invalid_argument("ecnet_dataset_write_vocab: null arguments");
        spill(path, vocab_to_json(ds->vocab), "vocab");
        return ECNET_OK;
    });
}

ecnet_status ecnet_dataset_sample(const ecnet_dataset* ds, uint64_t budget, uint64_t seed,
                                  ecnet_dataset** out) {
    return guarded([&]() -> ecnet_status {
        if (!ds || !out) throw std::invalid_argument("ecnet_dataset_sample: null arguments");
        auto sampled = std::make_unique<ecnet_dataset>();
        sampled->records = stratified_sample(ds->records, budget, seed);
        sampled->vocab = build_label_vocab(sampled->records);
        sampled->parse_issues = ds->parse_issues;
        *out = sampled.release();
        return ECNET_OK;
    });
}

ecnet_status ecnet_dataset_summary_json(const ecnet_dataset* ds, char** json_out) {
    return guarded([&]() -> ecnet_status {
        if (!ds || !json_out)
            throw std::invalid_argument("ecnet_dataset_summary_json: null arguments");
        *json_out = dup_string(ingest_summary_json(ds->records, ds->parse_issues));
        return ECNET_OK;
    });
}

size_t ecnet_dataset_size(const ecnet_dataset* ds) { return ds ? ds->records.size() : 0; }

void ecnet_dataset_free(ecnet_dataset* ds) { delete ds; }

ecnet_status ecnet_train(const ecnet_dataset* ds, const char* options_json,
                         ecnet_model** model_out, char** history_csv_out,
                         char** summary_json_out) {
    return guarded([&]() -> ecnet_status {
        if (!ds) throw std::invalid_argument("ecnet_train: null dataset");
        PipelineOptions opts =
            options_json ? pipeline_options_from_json(options_json) : PipelineOptions{};
        TrainOutcome outcome = run_training(ds->records, ds->vocab, opts);

        if (summary_json_out) {
            nlohmann::json j;
            j["version"] = 1;
            j["split_hash"] = outcome.split_hash;
            j["train_sequences"] = outcome.train_sequences;
            j["val_sequences"] = outcome.val_sequences;
            j["best_epoch"] = outcome.result.best_epoch;
            j["best_val_accuracy"] = outcome.result.best_val_accuracy;
            j["report"] = nlohmann::json::parse(eval_report_to_json(outcome.val_report));
            j["options"] = nlohmann::json::parse(pipeline_options_to_json(opts));
            j["warnings"] = outcome.warnings;
            *summary_json_out = dup_string(j.dump(2) + "\n");
        }
        if (history_csv_out)
            *history_csv_out = dup_string(history_to_csv(outcome.result.history));
        if (model_out) {
            auto holder = std::make_unique<ecnet_model>();
            holder->model = std::move(outcome.model);
            *model_out = holder.release();
        }
        return ECNET_OK;
    });
}

ecnet_status ecnet_model_save(const ecnet_model* m, const char* path) {
    return guarded([&]() -> ecnet_status {
        if (!m || !path) throw std::invalid_argument("ecnet_model_save: null arguments");
        save_checkpoint(m->model, path);
        return ECNET_OK;
    });
}

ecnet_status ecnet_model_load(const char* path, ecnet_model** out) {
    return guarded([&]() -> ecnet_status {
        if (!path || !out) throw std::invalid_argument("ecnet_model_load: null arguments");
        auto holder = std::make_unique<ecnet_model>();
        holder->model = load_checkpoint(path);
        *out = holder.release();
        return ECNET_OK;
    });
}

ecnet_status ecnet_model_info_json(const ecnet_model* m, char** json_out) {
    return guarded([&]() -> ecnet_status {
        if (!m || !json_out)
            throw std::invalid_argument("ecnet_model_info_json: null arguments");
        nlohmann::json j;
        j["config"] = nlohmann::json::parse(model_config_to_json(m->model.config));
        j["vocab"] = nlohmann::json::parse(vocab_to_json(m->model.vocab));
        j["schema"] = nlohmann::json::parse(schema_to_json(m->model.schema));
        j["parameters"] = m->model.parameter_count();
        *json_out = dup_string(j.dump(2) + "\n");
        return ECNET_OK;
    });
}

ecnet_status ecnet_evaluate(const ecnet_model* m, const ecnet_dataset* ds, int binary,
                            char** report_json_out) {
    return guarded([&]() -> ecnet_status {
        if (!m || !ds) throw std::invalid_argument("ecnet_evaluate: null arguments");
        EvalOutcome outcome = evaluate_model(m->model, ds->records, binary != 0);
        if (report_json_out) {
            double first_ts = 0.0, last_ts = 0.0;
            if (!ds->records.empty()) {
                first_ts = ds->records.front().ts;
                last_ts = ds->records.front().ts;
                for (const auto& r : ds->records) {
                    first_ts = std::min(first_ts, r.ts);
                    last_ts = std::max(last_ts, r.ts);
                }
            }
            nlohmann::json echo;
            echo["binary"] = binary != 0;
            echo["sequences"] = outcome.sequences;
            echo["checkpoint"] = nlohmann::json::parse(model_config_to_json(m->model.config));
            echo["data_time_range"] = {{"first_ts", first_ts}, {"last_ts", last_ts}};
            *report_json_out =
                dup_string(eval_report_to_json(outcome.report, echo.dump()));
        }
        return ECNET_OK;
    });
}

void ecnet_model_free(ecnet_model* m) { delete m; }

ecnet_status ecnet_gradcheck(double eps, uint64_t seed, int inject_sign_error,
                             char** report_json_out) {
    return guarded([&]() -> ecnet_status {
        SelfCheckReport report = run_selfcheck(eps, seed, inject_sign_error != 0);
        if (report_json_out) *report_json_out = dup_string(selfcheck_report_to_json(report));
        if (!report.pass()) {
            g_last_error = "gradient self-check failed";
            return ECNET_ERR_NUMERIC;
        }
        return ECNET_OK;
    });
}

}  // extern "C"
