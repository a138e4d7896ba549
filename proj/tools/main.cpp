// ecnet command line: ingest/train/eval/ablate/gradcheck over the C API.

#include <cstdio>
#include <fstream>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ecnet.h"
#include "json.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

int fail(ecnet_status status) {
    std::fprintf(stderr, "error: %s\n", ecnet_last_error());
    return static_cast<int>(status);
}

std::string take_string(char* s) {
    std::string out = s ? s : "";
    ecnet_string_free(s);
    return out;
}

bool write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    out << text;
    return static_cast<bool>(out);
}

struct DatasetGuard {
    ecnet_dataset* ds = nullptr;
    ~DatasetGuard() { ecnet_dataset_free(ds); }
};

struct ModelGuard {
    ecnet_model* m = nullptr;
    ~ModelGuard() { ecnet_model_free(m); }
};

// All pipeline knobs in one place; assembled into the options JSON the C API
// takes, with config-file values underneath and explicit flags on top.
struct TrainFlags {
    std::string config_path;
    std::size_t window = 10, stride = 1;
    double train_ratio = 0.8;
    std::uint64_t seed_sample = 1, seed_init = 1, seed_train = 1;
    std::string cell = "lstm";
    bool attention = true, no_attention = false;
    std::string feature_mode = "separate";
    std::size_t heads = 1, d_k = 32;
    std::size_t hidden_numeric = 64, hidden_categorical = 32;
    std::vector<std::size_t> fc_sizes = {64};
    std::string pooling = "final";
    std::size_t epochs = 30, batch_size = 64;
    double lr = 1e-3;
    std::string optimizer = "adam";
    double grad_clip = 0.0;  // 0 = off
    std::size_t patience = 0;  // 0 = off
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file; flags override its values");
    cmd->add_option("--window", f.window, "sequence window length");
    cmd->add_option("--stride", f.stride, "window stride");
    cmd->add_option("--train-ratio", f.train_ratio, "train fraction of the split");
    cmd->add_option("--seed-sample", f.seed_sample, "split/sampling seed");
    cmd->add_option("--seed-init", f.seed_init, "parameter init seed");
    cmd->add_option("--seed-train", f.seed_train, "batch order seed");
    cmd->add_option("--cell", f.cell, "recurrent cell")
        ->check(CLI::IsMember({"lstm", "rnn", "gru"}));
    cmd->add_flag("--attention,!--no-attention", f.attention, "attention block on/off");
    cmd->add_option("--feature-mode", f.feature_mode, "branch layout")
        ->check(CLI::IsMember({"separate", "merged"}));
    cmd->add_option("--heads", f.heads, "attention heads");
    cmd->add_option("--d-k", f.d_k, "attention projection width");
    cmd->add_option("--hidden-numeric", f.hidden_numeric, "numeric branch hidden size");
    cmd->add_option("--hidden-categorical", f.hidden_categorical,
                    "categorical branch hidden size");
    cmd->add_option("--fc", f.fc_sizes, "FC hidden layer widths");
    cmd->add_option("--pooling", f.pooling, "context pooling")
        ->check(CLI::IsMember({"final", "mean"}));
    cmd->add_option("--epochs", f.epochs, "training epochs");
    cmd->add_option("--batch-size", f.batch_size, "batch size");
    cmd->add_option("--lr", f.lr, "learning rate");
    cmd->add_option("--optimizer", f.optimizer, "optimizer")
        ->check(CLI::IsMember({"adam", "sgd"}));
    cmd->add_option("--grad-clip", f.grad_clip, "max gradient L2 norm (0 = off)");
    cmd->add_option("--patience", f.patience, "early stop patience in epochs (0 = off)");
}

void set_path(json& j, const std::string& dotted, const json& value) {
    json* node = &j;
    std::size_t start = 0;
    while (true) {
        std::size_t dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot - start);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

// Build the effective options JSON: config file first, then every flag the
// user actually passed, then flag defaults for anything still unset.
std::optional<json> build_options(const CLI::App* cmd, const TrainFlags& f) {
    json opts = json::object();
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        if (!in) {
            std::fprintf(stderr, "error: cannot open config '%s'\n", f.config_path.c_str());
            return std::nullopt;
        }
        try {
            in >> opts;
        } catch (const json::exception& e) {
            std::fprintf(stderr, "error: config '%s': %s\n", f.config_path.c_str(), e.what());
            return std::nullopt;
        }
        if (!opts.is_object()) {
            std::fprintf(stderr, "error: config '%s' must hold a JSON object\n",
                         f.config_path.c_str());
            return std::nullopt;
        }
    }

    auto passed = [&](const std::string& flag) { return cmd->count(flag) > 0; };
    auto has_path = [&](const std::string& dotted) {
        const json* cursor = &opts;
        std::size_t s = 0;
        while (true) {
            std::size_t dot = dotted.find('.', s);
            const std::string key = dotted.substr(s, dot - s);
            if (!cursor->is_object() || !cursor->contains(key)) return false;
            if (dot == std::string::npos) return true;
            cursor = &(*cursor)[key];
            s = dot + 1;
        }
    };
    auto overlay = [&](const std::string& flag, const std::string& dotted, const json& v) {
        if (passed(flag) || !has_path(dotted)) set_path(opts, dotted, v);
    };

    overlay("--window", "window", f.window);
    overlay("--stride", "stride", f.stride);
    overlay("--train-ratio", "train_ratio", f.train_ratio);
    overlay("--seed-sample", "seed_sample", f.seed_sample);
    overlay("--cell", "model.cell_type", f.cell);
    if (cmd->count("--attention") > 0 || cmd->count("--no-attention") > 0)
        set_path(opts, "model.use_attention", f.attention);
    else if (!(opts.contains("model") && opts["model"].contains("use_attention")))
        set_path(opts, "model.use_attention", f.attention);
    overlay("--feature-mode", "model.feature_mode", f.feature_mode);
    overlay("--heads", "model.heads", f.heads);
    overlay("--d-k", "model.d_k", f.d_k);
    overlay("--hidden-numeric", "model.hidden_numeric", f.hidden_numeric);
    overlay("--hidden-categorical", "model.hidden_categorical", f.hidden_categorical);
    overlay("--fc", "model.fc_sizes", f.fc_sizes);
    overlay("--pooling", "model.pooling", f.pooling);
    overlay("--seed-init", "model.seed", f.seed_init);
    overlay("--epochs", "train.epochs", f.epochs);
    overlay("--batch-size", "train.batch_size", f.batch_size);
    overlay("--lr", "train.learning_rate", f.lr);
    overlay("--optimizer", "train.optimizer", f.optimizer);
    overlay("--seed-train", "train.seed", f.seed_train);
    if (cmd->count("--grad-clip") > 0)
        set_path(opts, "train.grad_clip", f.grad_clip > 0.0 ? json(f.grad_clip) : json());
    if (cmd->count("--patience") > 0)
        set_path(opts, "train.early_stop_patience",
                 f.patience > 0 ? json(f.patience) : json());
    return opts;
}

int run_ingest(const std::vector<std::string>& inputs, std::uint64_t budget,
               std::uint64_t seed, const std::string& out_dir) {
    std::vector<const char*> paths;
    for (const auto& p : inputs) paths.push_back(p.c_str());

    DatasetGuard raw;
    if (auto st = ecnet_dataset_open_zeek(paths.data(), paths.size(), &raw.ds))
        return fail(st);

    DatasetGuard sampled;
    const ecnet_dataset* final_ds = raw.ds;
    if (budget > 0) {
        if (auto st = ecnet_dataset_sample(raw.ds, budget, seed, &sampled.ds))
            return fail(st);
        final_ds = sampled.ds;
    }

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    const fs::path dir(out_dir);
    if (auto st = ecnet_dataset_write_csv(final_ds, (dir / "flows.csv").string().c_str()))
        return fail(st);
    if (auto st = ecnet_dataset_write_vocab(final_ds, (dir / "vocab.json").string().c_str()))
        return fail(st);

    char* summary = nullptr;
    if (auto st = ecnet_dataset_summary_json(final_ds, &summary)) return fail(st);
    json j = json::parse(take_string(summary));
    j["config"] = {{"inputs", inputs}, {"budget", budget}, {"seed_sample", seed}};
    const std::string summary_text = j.dump(2) + "\n";
    if (!write_file(dir / "ingest_summary.json", summary_text)) {
        std::fprintf(stderr, "error: cannot write %s\n",
                     (dir / "ingest_summary.json").string().c_str());
        return kExitData;
    }
    std::fputs(summary_text.c_str(), stdout);
    return 0;
}

int run_train(const std::string& csv, const std::string& vocab, const CLI::App* cmd,
              const TrainFlags& flags, const std::string& out_dir) {
    auto opts = build_options(cmd, flags);
    if (!opts) return kExitUsage;

    DatasetGuard data;
    if (auto st = ecnet_dataset_open_csv(csv.c_str(),
                                         vocab.empty() ? nullptr : vocab.c_str(), &data.ds))
        return fail(st);

    ModelGuard model;
    char* history = nullptr;
    char* summary = nullptr;
    if (auto st =
            ecnet_train(data.ds, opts->dump().c_str(), &model.m, &history, &summary))
        return fail(st);
    const std::string history_text = take_string(history);
    const std::string summary_text = take_string(summary);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    const fs::path dir(out_dir);
    if (auto st = ecnet_model_save(model.m, (dir / "model.ckpt").string().c_str()))
        return fail(st);
    if (!write_file(dir / "history.csv", history_text) ||
        !write_file(dir / "val_report.json", summary_text)) {
        std::fprintf(stderr, "error: cannot write outputs under %s\n", out_dir.c_str());
        return kExitData;
    }

    const json j = json::parse(summary_text);
    std::printf("trained: best epoch %llu, val accuracy %.4f, split %s\n",
                static_cast<unsigned long long>(j["best_epoch"].get<std::uint64_t>()),
                j["best_val_accuracy"].get<double>(),
                j["split_hash"].get<std::string>().c_str());
    return 0;
}

int run_eval(const std::string& model_path, const std::string& csv, const std::string& vocab,
             bool binary, const std::string& out_path) {
    ModelGuard model;
    if (auto st = ecnet_model_load(model_path.c_str(), &model.m)) return fail(st);

    DatasetGuard data;
    if (auto st = ecnet_dataset_open_csv(csv.c_str(),
                                         vocab.empty() ? nullptr : vocab.c_str(), &data.ds))
        return fail(st);

    char* report = nullptr;
    if (auto st = ecnet_evaluate(model.m, data.ds, binary ? 1 : 0, &report))
        return fail(st);
    const std::string report_text = take_string(report);

    if (!out_path.empty()) {
        if (!write_file(out_path, report_text)) {
            std::fprintf(stderr, "error: cannot write %s\n", out_path.c_str());
            return kExitData;
        }
    }
    const json j = json::parse(report_text);
    std::printf("accuracy %.4f  macro_f1 %.4f  weighted_f1 %.4f  (%llu windows)\n",
                j["accuracy"].get<double>(), j["macro"]["f1"].get<double>(),
                j["weighted"]["f1"].get<double>(),
                static_cast<unsigned long long>(j["samples"].get<std::uint64_t>()));
    return 0;
}

int run_ablate(const std::string& csv, const std::string& vocab, const CLI::App* cmd,
               const TrainFlags& flags, const std::vector<std::string>& cells,
               const std::vector<std::string>& attention_modes,
               const std::vector<std::string>& feature_modes,
               const std::vector<std::uint64_t>& seeds, const std::string& out_dir) {
    auto base = build_options(cmd, flags);
    if (!base) return kExitUsage;

    DatasetGuard data;
    if (auto st = ecnet_dataset_open_csv(csv.c_str(),
                                         vocab.empty() ? nullptr : vocab.c_str(), &data.ds))
        return fail(st);

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    std::ostringstream table;
    table << "cell,attention,feature_mode,seed,split_hash,status,accuracy,precision,"
             "recall,f1,weighted_precision,weighted_recall,weighted_f1\n";

    int first_failure = 0;
    for (const auto& cell : cells) {
        for (const auto& att : attention_modes) {
            for (const auto& mode : feature_modes) {
                for (std::uint64_t seed : seeds) {
                    json opts = *base;
                    set_path(opts, "model.cell_type", cell);
                    set_path(opts, "model.use_attention", att == "on");
                    set_path(opts, "model.feature_mode", mode);
                    set_path(opts, "model.seed", seed);
                    set_path(opts, "train.seed", seed);

                    char* summary = nullptr;
                    const ecnet_status st = ecnet_train(data.ds, opts.dump().c_str(),
                                                        nullptr, nullptr, &summary);
                    const std::string row_key = cell + "," + att + "," + mode + "," +
                                                std::to_string(seed);
                    if (st != ECNET_OK) {
                        std::fprintf(stderr, "variant %s failed: %s\n", row_key.c_str(),
                                     ecnet_last_error());
                        table << row_key << ",,failed,,,,,,,\n";
                        if (first_failure == 0) first_failure = static_cast<int>(st);
                        continue;
                    }
                    const json j = json::parse(take_string(summary));
                    const json& rep = j["report"];
                    table << row_key << ',' << j["split_hash"].get<std::string>()
                          << ",ok," << rep["accuracy"].get<double>() << ','
                          << rep["macro"]["precision"].get<double>() << ','
                          << rep["macro"]["recall"].get<double>() << ','
                          << rep["macro"]["f1"].get<double>() << ','
                          << rep["weighted"]["precision"].get<double>() << ','
                          << rep["weighted"]["recall"].get<double>() << ','
                          << rep["weighted"]["f1"].get<double>() << '\n';
                    std::printf("%-28s acc %.4f f1 %.4f\n", row_key.c_str(),
                                rep["accuracy"].get<double>(),
                                rep["macro"]["f1"].get<double>());
                }
            }
        }
    }

    const fs::path out_file = fs::path(out_dir) / "ablation.csv";
    if (!write_file(out_file, table.str())) {
        std::fprintf(stderr, "error: cannot write %s\n", out_file.string().c_str());
        return kExitData;
    }
    json echo = *base;
    echo["cells"] = cells;
    echo["attention_modes"] = attention_modes;
    echo["feature_modes"] = feature_modes;
    echo["seeds"] = seeds;
    write_file(fs::path(out_dir) / "ablation_options.json", echo.dump(2) + "\n");
    return first_failure;
}

int run_gradcheck(double eps, std::uint64_t seed, bool inject) {
    char* report = nullptr;
    const ecnet_status st = ecnet_gradcheck(eps, seed, inject ? 1 : 0, &report);
    const std::string text = take_string(report);
    if (text.empty()) return fail(st);

    const json j = json::parse(text);
    for (const auto& c : j["components"])
        std::printf("%-18s max_rel_error %.3e  %s\n",
                    c["component"].get<std::string>().c_str(),
                    c["max_rel_error"].get<double>(),
                    c["pass"].get<bool>() ? "pass" : "FAIL");
    std::printf("gradcheck: %s\n", j["pass"].get<bool>() ? "pass" : "FAIL");
    return static_cast<int>(st);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"IoT flow anomaly detector: ingest, train, evaluate, ablate"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "parse Zeek logs into canonical CSV + vocab");
    std::vector<std::string> ingest_inputs;
    std::uint64_t ingest_budget = 0, ingest_seed = 1;
    std::string ingest_out = ".";
    ingest->add_option("--input", ingest_inputs, "labeled Zeek conn log(s)")
        ->required()
        ->expected(-1);
    ingest->add_option("--budget", ingest_budget,
                       "stratified sampling budget (0 = keep everything)");
    ingest->add_option("--seed-sample", ingest_seed, "sampling seed");
    ingest->add_option("--out", ingest_out, "output directory");

    // train
    auto* train = app.add_subcommand("train", "fit features and train a model");
    std::string train_csv, train_vocab, train_out = ".";
    TrainFlags train_flags;
    train->add_option("--csv", train_csv, "canonical CSV from ingest")->required();
    train->add_option("--vocab", train_vocab, "vocab JSON from ingest");
    train->add_option("--out", train_out, "output directory");
    add_train_flags(train, train_flags);

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a CSV");
    std::string eval_model, eval_csv, eval_vocab, eval_out;
    bool eval_binary = false;
    eval->add_option("--model", eval_model, "checkpoint path")->required();
    eval->add_option("--csv", eval_csv, "canonical CSV")->required();
    eval->add_option("--vocab", eval_vocab, "vocab JSON (defaults to data-derived)");
    eval->add_flag("--binary", eval_binary, "collapse to benign/malicious");
    eval->add_option("--out", eval_out, "report JSON path");

    // ablate
    auto* ablate = app.add_subcommand(
        "ablate", "run the cell x attention x feature-mode matrix on shared splits");
    std::string ab_csv, ab_vocab, ab_out = ".";
    std::vector<std::string> ab_cells = {"lstm", "rnn", "gru"};
    std::vector<std::string> ab_attention = {"on", "off"};
    std::vector<std::string> ab_modes = {"separate", "merged"};
    std::vector<std::uint64_t> ab_seeds = {1};
    TrainFlags ab_flags;
    ablate->add_option("--csv", ab_csv, "canonical CSV from ingest")->required();
    ablate->add_option("--vocab", ab_vocab, "vocab JSON from ingest");
    ablate->add_option("--out", ab_out, "output directory");
    ablate->add_option("--cells", ab_cells, "cell subset")->delimiter(',');
    ablate->add_option("--attention-modes", ab_attention, "attention subset (on/off)")
        ->delimiter(',');
    ablate->add_option("--feature-modes", ab_modes, "feature-mode subset")->delimiter(',');
    ablate->add_option("--seeds", ab_seeds, "init/train seeds, one run each")
        ->delimiter(',');
    add_train_flags(ablate, ab_flags);

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    double gc_eps = 1e-5;
    std::uint64_t gc_seed = 7;
    bool gc_inject = false;
    gradcheck->add_option("--eps", gc_eps, "finite-difference step");
    gradcheck->add_option("--seed", gc_seed, "instance seed");
    gradcheck->add_flag("--inject-sign-error", gc_inject)->group("");  // test hook

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    if (ingest->parsed())
        return run_ingest(ingest_inputs, ingest_budget, ingest_seed, ingest_out);
    if (train->parsed())
        return run_train(train_csv, train_vocab, train, train_flags, train_out);
    if (eval->parsed())
        return run_eval(eval_model, eval_csv, eval_vocab, eval_binary, eval_out);
    if (ablate->parsed())
        return run_ablate(ab_csv, ab_vocab, ablate, ab_flags, ab_cells, ab_attention,
                          ab_modes, ab_seeds, ab_out);
    if (gradcheck->parsed()) return run_gradcheck(gc_eps, gc_seed, gc_inject);
    return kExitUsage;
}
