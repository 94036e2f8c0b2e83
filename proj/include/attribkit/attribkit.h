/* attribkit C API.
 *
 * Every function returns an ak_status. On failure the context keeps a
 * message retrievable with ak_last_error until the next call on it.
 * Strings returned through char** are owned by the caller and released with
 * ak_string_free. A context must not be used from two threads at once.
 */
#ifndef ATTRIBKIT_H
#define ATTRIBKIT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define AK_API __declspec(dllexport)
#else
#define AK_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ak_status {
  AK_OK = 0,
  AK_E_INVALID_ARGUMENT = 1,
  AK_E_IO = 2,
  AK_E_PARSE = 3,
  AK_E_VALIDATION = 4,
  AK_E_TRANSPORT = 5,
  AK_E_REMOTE = 6,
  AK_E_INTERNAL = 7
} ak_status;

typedef struct ak_context ak_context;
typedef struct ak_corpus ak_corpus;
typedef struct ak_ngram ak_ngram;
typedef struct ak_model ak_model;

AK_API const char* ak_version(void);
AK_API const char* ak_status_name(ak_status s);

AK_API ak_status ak_context_new(ak_context** out);
AK_API void ak_context_free(ak_context* ctx);
AK_API const char* ak_last_error(const ak_context* ctx);
AK_API ak_status ak_context_set_seed(ak_context* ctx, uint64_t seed);
AK_API ak_status ak_context_set_jobs(ak_context* ctx, int jobs);
AK_API ak_status ak_context_set_allow_unregistered(ak_context* ctx, int allow);
/* Appends languages from a JSON array of {code, family, script}. */
AK_API ak_status ak_context_load_registry(ak_context* ctx, const char* path);
AK_API void ak_string_free(char* s);

/* Synthetic corpus. spec_path may be NULL for the built-in three-language
 * spec (identical != 0 makes every generator equal to the human source).
 * registry_out, when non-NULL, receives the language extension file. */
AK_API ak_status ak_synth(ak_context* ctx, const char* spec_path, int identical, const char* corpus_out,
                          const char* registry_out);

AK_API ak_status ak_corpus_load(ak_context* ctx, const char* path, ak_corpus** out);
AK_API void ak_corpus_free(ak_corpus* corpus);
AK_API size_t ak_corpus_size(const ak_corpus* corpus);
/* New corpus holding the documents of one split ("train" or "test"). */
AK_API ak_status ak_corpus_filter_split(ak_context* ctx, const ak_corpus* corpus, const char* split, ak_corpus** out);
/* Balance check; *pass is 1 or 0 and *report_json describes failing cells. */
AK_API ak_status ak_corpus_validate(ak_context* ctx, const ak_corpus* corpus, size_t train_target, size_t test_target,
                                    const char* min_fraction, int* pass, char** report_json);

/* split: "train", "test" or NULL (all); label: a class name or NULL (all).
 * tokenizer: "char" or "word". */
AK_API ak_status ak_ngram_train(ak_context* ctx, const ak_corpus* corpus, const char* split, const char* label,
                                int order, double k, const char* tokenizer, ak_ngram** out);
AK_API ak_status ak_ngram_load(ak_context* ctx, const char* path, ak_ngram** out);
AK_API ak_status ak_ngram_save(ak_context* ctx, const ak_ngram* model, const char* path);
AK_API void ak_ngram_free(ak_ngram* model);

/* Writes a score file. partner may be NULL (no cross summaries). */
AK_API ak_status ak_score_local(ak_context* ctx, const ak_corpus* corpus, const ak_ngram* model,
                                const ak_ngram* partner, const char* model_id, const char* out_path);
AK_API ak_status ak_score_remote(ak_context* ctx, const ak_corpus* corpus, const char* endpoint, const char* model_id,
                                 int want_cross, int max_attempts, const char* out_path);

/* Feature matrix from score files; fastdetect and binoculars may be NULL. */
AK_API ak_status ak_featurize_files(ak_context* ctx, const ak_corpus* corpus, const char* base_scores,
                                    const char* fastdetect_scores, const char* binoculars_scores,
                                    const char* deviation, const char* out_csv);
/* Feature matrix from n-gram models; partner may be NULL (7 features).
 * Fast-DetectGPT uses (model, partner), Binoculars (partner, model). */
AK_API ak_status ak_featurize_ngram(ak_context* ctx, const ak_corpus* corpus, const ak_ngram* model,
                                    const ak_ngram* partner, const char* deviation, const char* out_csv);

/* grid_json: {"classifier", "features", "grid": {...}} (all optional). */
AK_API ak_status ak_train(ak_context* ctx, const char* features_csv, const char* grid_json, ak_model** out,
                          char** summary_json);
AK_API ak_status ak_model_load(ak_context* ctx, const char* path, ak_model** out);
AK_API ak_status ak_model_save(ak_context* ctx, const ak_model* model, const char* path);
AK_API void ak_model_free(ak_model* model);
AK_API ak_status ak_predict(ak_context* ctx, const ak_model* model, const char* features_csv, const char* out_path);

/* Predictions -> results CSV. train_langs: comma-separated codes (may be
 * empty). *macro receives the pooled macro F1. */
AK_API ak_status ak_evaluate(ak_context* ctx, const char* predictions, const char* method, const char* train_langs,
                             const char* out_csv, double* macro);

/* Runs an experiment spec. out_dir overrides the spec's output when
 * non-NULL. *summary_json lists records and report paths. */
AK_API ak_status ak_run(ak_context* ctx, const char* spec_path, const char* out_dir, char** summary_json);

/* layout: table2 | table3 | table4 take a results CSV; confusion |
 * generators take a predictions file plus train_langs. Writes <stem>.md and
 * <stem>.csv (confusion writes <stem>_internal and <stem>_external). */
AK_API ak_status ak_report(ak_context* ctx, const char* layout, const char* input, const char* method,
                           const char* train_langs, const char* out_stem, char** warnings_json);

#ifdef __cplusplus
}
#endif

#endif
