/*
 * ecnet: C API for the IoT flow anomaly detector.
 *
 * A dual-branch recurrent sequence classifier with scaled dot-product
 * attention over labeled Zeek connection logs. All state lives behind
 * opaque handles; every call reports an ecnet_status, and the message for
 * the most recent failure on the calling thread is available from
 * ecnet_last_error(). Strings returned through char** out-parameters are
 * owned by the caller and released with ecnet_string_free().
 */
#ifndef ECNET_H
#define ECNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ECNET_API __declspec(dllexport)
#else
#define ECNET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Mirrors the CLI exit-code contract. */
typedef enum ecnet_status {
    ECNET_OK = 0,
    ECNET_ERR_USAGE = 1,   /* bad arguments or configuration */
    ECNET_ERR_DATA = 2,    /* unreadable/invalid data or files */
    ECNET_ERR_NUMERIC = 3  /* non-finite loss/gradients, failed self-check */
} ecnet_status;

typedef struct ecnet_dataset ecnet_dataset;
typedef struct ecnet_model ecnet_model;

ECNET_API uint32_t ecnet_abi_version(void);

/* Message for the most recent failure on this thread; empty string if none. */
ECNET_API const char* ecnet_last_error(void);

ECNET_API void ecnet_string_free(char* s);

/* ---- datasets ---------------------------------------------------------- */

/* Parse one or more labeled Zeek conn logs; records are concatenated in the
 * given file order and the label vocabulary is built from the result. */
ECNET_API ecnet_status ecnet_dataset_open_zeek(const char* const* paths, size_t count,
                                               ecnet_dataset** out);

/* Load a canonical CSV. vocab_path may be NULL, in which case the
 * vocabulary is rebuilt from the records (class ids may differ from the
 * ingest-time file, so pass the vocab written next to the CSV when ids
 * matter). */
ECNET_API ecnet_status ecnet_dataset_open_csv(const char* csv_path, const char* vocab_path,
                                              ecnet_dataset** out);

ECNET_API ecnet_status ecnet_dataset_write_csv(const ecnet_dataset* ds, const char* path);
ECNET_API ecnet_status ecnet_dataset_write_vocab(const ecnet_dataset* ds, const char* path);

/* Class-preserving reduction to at most `budget` records (seeded,
 * deterministic); the vocabulary is rebuilt from the sampled records. */
ECNET_API ecnet_status ecnet_dataset_sample(const ecnet_dataset* ds, uint64_t budget,
                                            uint64_t seed, ecnet_dataset** out);

/* Per-class counts and parse diagnostics as JSON. */
ECNET_API ecnet_status ecnet_dataset_summary_json(const ecnet_dataset* ds, char** json_out);

ECNET_API size_t ecnet_dataset_size(const ecnet_dataset* ds);
ECNET_API void ecnet_dataset_free(ecnet_dataset* ds);

/* ---- training ---------------------------------------------------------- */

/* options_json (all fields optional):
 * {
 *   "window": 10, "stride": 1, "train_ratio": 0.8, "seed_sample": 1,
 *   "model": {"cell_type": "lstm|rnn|gru", "use_attention": true,
 *             "feature_mode": "separate|merged", "hidden_numeric": 64,
 *             "hidden_categorical": 32, "d_k": 32, "heads": 1,
 *             "fc_sizes": [64], "pooling": "final|mean", "seed": 1},
 *   "train": {"epochs": 30, "batch_size": 64, "learning_rate": 1e-3,
 *             "optimizer": "adam|sgd", "grad_clip": null,
 *             "early_stop_patience": null, "seed": 1}
 * }
 * On success *model_out holds the trained model, *history_csv_out the
 * per-epoch loss/accuracy CSV, and *summary_json_out the validation report
 * plus split hash and the echoed effective options. Any output pointer may
 * be NULL when not wanted. */
ECNET_API ecnet_status ecnet_train(const ecnet_dataset* ds, const char* options_json,
                                   ecnet_model** model_out, char** history_csv_out,
                                   char** summary_json_out);

/* ---- models ------------------------------------------------------------ */

ECNET_API ecnet_status ecnet_model_save(const ecnet_model* m, const char* path);
ECNET_API ecnet_status ecnet_model_load(const char* path, ecnet_model** out);

/* Configuration, vocabulary, schema, and parameter count as JSON. */
ECNET_API ecnet_status ecnet_model_info_json(const ecnet_model* m, char** json_out);

/* Evaluate the model on a dataset; with binary != 0 truth and predictions
 * are collapsed to benign/malicious first. Labels absent from the model's
 * vocabulary are an incompatibility error. */
ECNET_API ecnet_status ecnet_evaluate(const ecnet_model* m, const ecnet_dataset* ds,
                                      int binary, char** report_json_out);

ECNET_API void ecnet_model_free(ecnet_model* m);

/* ---- verification ------------------------------------------------------ */

/* Finite-difference check of every backward pass on seeded tiny instances.
 * Returns ECNET_OK when every component's max relative error is below 1e-4,
 * ECNET_ERR_NUMERIC otherwise; the per-component report is in
 * *report_json_out. inject_sign_error != 0 deliberately corrupts one
 * gradient to exercise the harness. */
ECNET_API ecnet_status ecnet_gradcheck(double eps, uint64_t seed, int inject_sign_error,
                                       char** report_json_out);

#ifdef __cplusplus
}
#endif

#endif /* ECNET_H */
