#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <unistd.h>

#include "attribkit/attribkit.h"

static int failures = 0;

#define EXPECT(cond)                                                     \
  do {                                                                   \
    if (!(cond)) {                                                       \
      fprintf(stderr, "%s:%d: expectation failed: %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                        \
    }                                                                    \
  } while (0)

#define OK(ctx, call)                                                                      \
  do {                                                                                     \
    ak_status st_ = (call);                                                                \
    if (st_ != AK_OK) {                                                                    \
      fprintf(stderr, "%s:%d: %s -> %s: %s\n", __FILE__, __LINE__, #call, ak_status_name(st_), \
              ak_last_error(ctx));                                                         \
      ++failures;                                                                          \
    }                                                                                      \
  } while (0)

static char dir[256];

static const char* at(const char* name) {
  static char buf[8][512];
  static int slot = 0;
  char* p = buf[slot++ % 8];
  snprintf(p, 512, "%s/%s", dir, name);
  return p;
}

static int write_text(const char* path, const char* text) {
  FILE* f = fopen(path, "w");
  if (!f) return 0;
  fputs(text, f);
  fclose(f);
  return 1;
}

int main(void) {
  snprintf(dir, sizeof dir, "/tmp/attribkit-capi-%d", (int)getpid());
  char cmd[300];
  snprintf(cmd, sizeof cmd, "mkdir -p %s", dir);
  if (system(cmd) != 0) return 1;

  EXPECT(strlen(ak_version()) > 0);
  EXPECT(strcmp(ak_status_name(AK_E_PARSE), "parse error") == 0);

  ak_context* ctx = NULL;
  EXPECT(ak_context_new(&ctx) == AK_OK && ctx);
  OK(ctx, ak_context_set_seed(ctx, 11));
  EXPECT(ak_context_set_jobs(ctx, 0) == AK_E_INVALID_ARGUMENT);
  EXPECT(strlen(ak_last_error(ctx)) > 0);
  EXPECT(ak_context_new(NULL) == AK_E_INVALID_ARGUMENT);

  /* synthetic corpus and its registry extension */
  OK(ctx, ak_synth(ctx, NULL, 0, at("corpus.jsonl"), at("registry.json")));
  ak_corpus* corpus = NULL;
  {
    /* a fresh context only knows the synthetic languages after loading the extension */
    ak_context* other = NULL;
    OK(other, ak_context_new(&other));
    EXPECT(ak_corpus_load(other, at("corpus.jsonl"), &corpus) == AK_E_VALIDATION);
    EXPECT(strstr(ak_last_error(other), "xa") != NULL);
    OK(other, ak_context_load_registry(other, at("registry.json")));
    OK(other, ak_corpus_load(other, at("corpus.jsonl"), &corpus));
    ak_corpus_free(corpus);
    corpus = NULL;
    ak_context_free(other);
  }
  OK(ctx, ak_corpus_load(ctx, at("corpus.jsonl"), &corpus));
  EXPECT(ak_corpus_size(corpus) == 3120);

  ak_corpus* test_part = NULL;
  OK(ctx, ak_corpus_filter_split(ctx, corpus, "test", &test_part));
  EXPECT(ak_corpus_size(test_part) == 3 * 8 * 30);
  ak_corpus_free(test_part);
  EXPECT(ak_corpus_filter_split(ctx, corpus, "dev", &test_part) != AK_OK);

  int pass = -1;
  char* report = NULL;
  OK(ctx, ak_corpus_validate(ctx, corpus, 100, 30, "1", &pass, &report));
  EXPECT(pass == 1);
  EXPECT(report && strstr(report, "\"pass\""));
  ak_string_free(report);
  report = NULL;
  OK(ctx, ak_corpus_validate(ctx, corpus, 200, 30, "1", &pass, &report));
  EXPECT(pass == 0);
  ak_string_free(report);
  EXPECT(ak_corpus_validate(ctx, corpus, 100, 30, "x/y", &pass, NULL) != AK_OK);

  /* scorers */
  ak_ngram *primary = NULL, *partner = NULL, *loaded = NULL;
  OK(ctx, ak_ngram_train(ctx, corpus, "train", NULL, 2, 0.5, "char", &primary));
  OK(ctx, ak_ngram_train(ctx, corpus, "train", NULL, 1, 0.5, "char", &partner));
  EXPECT(ak_ngram_train(ctx, corpus, "train", NULL, 0, 0.5, "char", &loaded) == AK_E_INVALID_ARGUMENT);
  EXPECT(ak_ngram_train(ctx, corpus, "train", NULL, 2, 0.5, "bytes", &loaded) != AK_OK);
  OK(ctx, ak_ngram_save(ctx, primary, at("primary.json")));
  OK(ctx, ak_ngram_load(ctx, at("primary.json"), &loaded));
  EXPECT(ak_ngram_load(ctx, at("missing.json"), &loaded) == AK_E_IO);

  OK(ctx, ak_score_local(ctx, corpus, primary, partner, "primary", at("scores.jsonl")));

  /* features, training, prediction */
  OK(ctx, ak_featurize_ngram(ctx, corpus, loaded, partner, NULL, at("features.csv")));
  OK(ctx, ak_featurize_files(ctx, corpus, at("scores.jsonl"), NULL, NULL, "logprob_std", at("features7.csv")));
  EXPECT(ak_featurize_ngram(ctx, corpus, loaded, partner, "median", at("bad.csv")) != AK_OK);

  ak_model* model = NULL;
  char* summary = NULL;
  OK(ctx, ak_train(ctx, at("features.csv"), "{\"classifier\":\"softmax\",\"grid\":{\"folds\":2}}", &model, &summary));
  EXPECT(summary && strstr(summary, "best_candidate"));
  ak_string_free(summary);
  EXPECT(ak_train(ctx, at("features.csv"), "{oops", &model, NULL) == AK_E_PARSE);
  OK(ctx, ak_model_save(ctx, model, at("model.json")));
  ak_model* model2 = NULL;
  OK(ctx, ak_model_load(ctx, at("model.json"), &model2));
  OK(ctx, ak_predict(ctx, model2, at("features.csv"), at("preds.jsonl")));

  double macro = -1;
  OK(ctx, ak_evaluate(ctx, at("preds.jsonl"), "StatEnsemble", "xa,xb,xc", at("results.csv"), &macro));
  EXPECT(macro > 0.5 && macro <= 1.0);

  char* warnings = NULL;
  OK(ctx, ak_report(ctx, "table2", at("results.csv"), NULL, NULL, at("table2"), &warnings));
  EXPECT(warnings != NULL);
  ak_string_free(warnings);
  OK(ctx, ak_report(ctx, "generators", at("preds.jsonl"), "StatEnsemble", "xa", at("gen"), NULL));
  OK(ctx, ak_report(ctx, "confusion", at("preds.jsonl"), "StatEnsemble", "xa", at("conf"), NULL));
  EXPECT(access(at("conf_internal.md"), F_OK) == 0);
  EXPECT(access(at("conf_external.md"), F_OK) == 0);
  EXPECT(ak_report(ctx, "table9", at("results.csv"), NULL, NULL, at("x"), NULL) == AK_E_INVALID_ARGUMENT);

  /* evaluate on a hand-made file: [[1,1],[0,2]] */
  write_text(at("small.jsonl"),
             "{\"doc_id\":\"1\",\"lang\":\"en\",\"true\":\"human\",\"pred\":\"human\"}\n"
             "{\"doc_id\":\"2\",\"lang\":\"en\",\"true\":\"human\",\"pred\":\"mistral\"}\n"
             "{\"doc_id\":\"3\",\"lang\":\"en\",\"true\":\"mistral\",\"pred\":\"mistral\"}\n"
             "{\"doc_id\":\"4\",\"lang\":\"en\",\"true\":\"mistral\",\"pred\":\"mistral\"}\n");
  OK(ctx, ak_evaluate(ctx, at("small.jsonl"), "m", "", at("small.csv"), &macro));
  EXPECT(fabs(macro - 11.0 / 15.0) < 1e-12);

  /* error codes */
  write_text(at("broken.jsonl"), "{\"id\":\"a\",\"text\":\"x\"}\n");
  ak_corpus* broken = NULL;
  EXPECT(ak_corpus_load(ctx, at("broken.jsonl"), &broken) == AK_E_PARSE);
  EXPECT(strstr(ak_last_error(ctx), "broken.jsonl:1") != NULL);
  EXPECT(broken == NULL);
  EXPECT(ak_corpus_load(ctx, NULL, &broken) == AK_E_INVALID_ARGUMENT);
  EXPECT(ak_run(ctx, at("nope.json"), NULL, NULL) == AK_E_IO);

  ak_model_free(model2);
  ak_model_free(model);
  ak_ngram_free(loaded);
  ak_ngram_free(partner);
  ak_ngram_free(primary);
  ak_corpus_free(corpus);
  ak_context_free(ctx);

  snprintf(cmd, sizeof cmd, "rm -rf %s", dir);
  if (system(cmd) != 0) ++failures;
  if (failures) {
    fprintf(stderr, "%d failure(s)\n", failures);
    return 1;
  }
  printf("capi: all checks passed\n");
  return 0;
}
