#include "attribkit/attribkit.h"

#include <cstring>
#include <memory>
#include <string>

#include <json.hpp>

#include "attribkit/classify.hpp"
#include "attribkit/corpus.hpp"
#include "attribkit/error.hpp"
#include "attribkit/evalx.hpp"
#include "attribkit/experiments.hpp"
#include "attribkit/features.hpp"
#include "attribkit/ngram.hpp"
#include "attribkit/report.hpp"
#include "attribkit/scores.hpp"
#include "attribkit/synth.hpp"
#include "attribkit/util.hpp"

using namespace attribkit;
using nlohmann::json;

struct ak_context {
  LanguageRegistry langs = LanguageRegistry::builtin();
  ClassRegistry classes = ClassRegistry::builtin();
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  bool allow_unregistered = false;
  std::string error;
};

struct ak_corpus {
  Corpus corpus;
};

struct ak_ngram {
  std::shared_ptr<const NgramModel> model;
};

struct ak_model {
  AttributionModel model;
};

namespace {

ak_status status_of(ErrorKind k) {
  switch (k) {
    case ErrorKind::InvalidArgument: return AK_E_INVALID_ARGUMENT;
    case ErrorKind::Io: return AK_E_IO;
    case ErrorKind::Parse: return AK_E_PARSE;
    case ErrorKind::Validation: return AK_E_VALIDATION;
    case ErrorKind::Transport: return AK_E_TRANSPORT;
    case ErrorKind::Remote: return AK_E_REMOTE;
    case ErrorKind::Internal: return AK_E_INTERNAL;
  }
  return AK_E_INTERNAL;
}

template <class F>
ak_status guarded(ak_context* ctx, F&& body) {
  if (!ctx) return AK_E_INVALID_ARGUMENT;
  ctx->error.clear();
  try {
    body();
    return AK_OK;
  } catch (const Error& e) {
    ctx->error = e.what();
    return status_of(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    ctx->error = e.what();
    return AK_E_IO;
  } catch (const std::bad_alloc&) {
    ctx->error = "out of memory";
    return AK_E_INTERNAL;
  } catch (const std::exception& e) {
    ctx->error = e.what();
    return AK_E_INTERNAL;
  }
}

void require(const void* p, const char* name) {
  if (!p) fail(ErrorKind::InvalidArgument, std::string(name) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::set<std::string> parse_langs(const char* text) {
  std::set<std::string> out;
  if (!text) return out;
  for (auto& part : split(text, ','))
    if (!part.empty()) out.insert(part);
  return out;
}

std::vector<std::string> class_order(const ak_context* ctx, const std::vector<Prediction>& preds) {
  return class_order_for(preds, ctx->classes);
}

}  // namespace

extern "C" {

const char* ak_version(void) { return "1.0.0"; }

const char* ak_status_name(ak_status s) {
  switch (s) {
    case AK_OK: return "ok";
    case AK_E_INVALID_ARGUMENT: return "invalid argument";
    case AK_E_IO: return "i/o error";
    case AK_E_PARSE: return "parse error";
    case AK_E_VALIDATION: return "validation error";
    case AK_E_TRANSPORT: return "transport error";
    case AK_E_REMOTE: return "remote error";
    case AK_E_INTERNAL: return "internal error";
  }
  return "unknown";
}

ak_status ak_context_new(ak_context** out) {
  if (!out) return AK_E_INVALID_ARGUMENT;
  try {
    *out = new ak_context();
    return AK_OK;
  } catch (...) {
    *out = nullptr;
    return AK_E_INTERNAL;
  }
}

void ak_context_free(ak_context* ctx) { delete ctx; }

const char* ak_last_error(const ak_context* ctx) { return ctx ? ctx->error.c_str() : "null context"; }

ak_status ak_context_set_seed(ak_context* ctx, uint64_t seed) {
  return guarded(ctx, [&] {
    ctx->seed = seed;
    ctx->seed_set = true;
  });
}

ak_status ak_context_set_jobs(ak_context* ctx, int jobs) {
  return guarded(ctx, [&] {
    if (jobs < 1) fail(ErrorKind::InvalidArgument, "jobs must be >= 1");
    ctx->jobs = jobs;
  });
}

ak_status ak_context_set_allow_unregistered(ak_context* ctx, int allow) {
  return guarded(ctx, [&] { ctx->allow_unregistered = allow != 0; });
}

ak_status ak_context_load_registry(ak_context* ctx, const char* path) {
  return guarded(ctx, [&] {
    require(path, "path");
    ctx->langs.extend_from_file(path);
  });
}

void ak_string_free(char* s) { std::free(s); }

ak_status ak_synth(ak_context* ctx, const char* spec_path, int identical, const char* corpus_out,
                   const char* registry_out) {
  return guarded(ctx, [&] {
    require(corpus_out, "corpus_out");
    const auto spec = spec_path ? SynthSpec::from_json(read_file(spec_path)) : default_synth_spec(ctx->seed, identical != 0);
    const auto corpus = generate_dataset(spec);
    save_corpus(corpus, corpus_out);
    const auto ext = spec.registry_extension(LanguageRegistry::builtin());
    json arr = json::array();
    for (const auto& l : ext.languages()) arr.push_back({{"code", l.code}, {"family", l.family}, {"script", l.script}});
    if (registry_out) write_file_atomic(registry_out, arr.dump(2) + "\n");
    for (const auto& l : ext.languages())
      if (!ctx->langs.contains(l.code)) ctx->langs.add(l);
  });
}

ak_status ak_corpus_load(ak_context* ctx, const char* path, ak_corpus** out) {
  return guarded(ctx, [&] {
    require(path, "path");
    require(out, "out");
    auto c = std::make_unique<ak_corpus>();
    c->corpus = load_corpus(path, ctx->langs, ctx->classes, LoadOptions{ctx->allow_unregistered});
    *out = c.release();
  });
}

void ak_corpus_free(ak_corpus* corpus) { delete corpus; }

ak_status ak_corpus_filter_split(ak_context* ctx, const ak_corpus* corpus, const char* split, ak_corpus** out) {
  return guarded(ctx, [&] {
    require(corpus, "corpus");
    require(split, "split");
    require(out, "out");
    auto c = std::make_unique<ak_corpus>();
    c->corpus = corpus->corpus.filter_split(parse_split(split));
    *out = c.release();
  });
}

size_t ak_corpus_size(const ak_corpus* corpus) { return corpus ? corpus->corpus.size() : 0; }

ak_status ak_corpus_validate(ak_context* ctx, const ak_corpus* corpus, size_t train_target, size_t test_target,
                             const char* min_fraction, int* pass, char** report_json) {
  return guarded(ctx, [&] {
    require(corpus, "corpus");
    require(pass, "pass");
    const auto frac = Rational::parse(min_fraction ? min_fraction : "0.95");
    const auto rep = validate_balance(corpus->corpus, ctx->classes, {train_target, test_target}, frac);
    *pass = rep.pass ? 1 : 0;
    if (report_json) *report_json = dup_string(rep.to_json());
  });
}

ak_status ak_ngram_train(ak_context* ctx, const ak_corpus* corpus, const char* split_name, const char* label, int order,
                         double k, const char* tokenizer, ak_ngram** out) {
  return guarded(ctx, [&] {
    require(corpus, "corpus");
    require(out, "out");
    std::optional<Split> split;
    if (split_name) split = parse_split(split_name);
    std::vector<std::string> texts;
    for (const auto& s : corpus->corpus.samples())
      if ((!split || s.split == *split) && (!label || s.label == label)) texts.push_back(s.text);
    auto m = std::make_unique<ak_ngram>();
    m->model = std::make_shared<NgramModel>(
        NgramModel::train(texts, order, k, parse_tokenizer_mode(tokenizer ? tokenizer : "char")));
    *out = m.release();
  });
}

ak_status ak_ngram_load(ak_context* ctx, const char* path, ak_ngram** out) {
  return guarded(ctx, [&] {
    require(path, "path");
    require(out, "out");
    auto m = std::make_unique<ak_ngram>();
    m->model = std::make_shared<NgramModel>(NgramModel::load(path));
    *out = m.release();
  });
}

ak_status ak_ngram_save(ak_context* ctx, const ak_ngram* model, const char* path) {
  return guarded(ctx, [&] {
    require(model, "model");
    require(path, "path");
    model->model->save(path);
  });
}

void ak_ngram_free(ak_ngram* model) { delete model; }

ak_status ak_score_local(ak_context* ctx, const ak_corpus* corpus, const ak_ngram* model, const ak_ngram* partner,
                         const char* model_id, const char* out_path) {
  return guarded(ctx, [&] {
    require(corpus, "corpus");
    require(model, "model");
    require(out_path, "out_path");
    NgramProvider provider(model->model, partner ? partner->model : nullptr, model_id ? model_id : "ngram");
    const auto& docs = corpus->corpus.samples();
    std::vector<TokenScoreSeq> seqs(docs.size());
    parallel_for(docs.size(), ctx->jobs, [&](std::size_t i) { seqs[i] = provider.score(docs[i]); });
    save_scores(seqs, out_path);
  });
}

ak_status ak_score_remote(ak_context* ctx, const ak_corpus* corpus, const char* endpoint, const char* model_id,
                          int want_cross, int max_attempts, const char* out_path) {
  return guarded(ctx, [&] {
    require(corpus, "corpus");
    require(endpoint, "endpoint");
    require(model_id, "model_id");
    require(out_path, "out_path");
    RetryPolicy policy;
    if (max_attempts > 0) policy.max_attempts = max_attempts;
    RemoteProvider provider(endpoint, model_id, want_cross != 0, policy);
    const auto& docs = corpus->corpus.samples();
    std::vector<TokenScoreSeq> seqs(docs.size());
    parallel_for(docs.size(), ctx->jobs, [&](std::size_t i) { seqs[i] = provider.score(docs[i]); });
    save_scores(seqs, out_path);
  });
}

ak_status ak_featurize_files(ak_context* ctx, const ak_corpus* corpus, const char* base_scores,
                             const char* fastdetect_scores, const char* binoculars_scores, const char* deviation,
                             const char* out_csv) {
  return guarded(ctx, [&] {
    require(corpus, "corpus");
    require(base_scores, "base_scores");
    require(out_csv, "out_csv");
    auto provider = [](const char* path) -> std::shared_ptr<const ScoreProvider> {
      auto seqs = load_scores(path);
      if (seqs.empty()) fail(ErrorKind::Validation, std::string(path) + ": score file is empty");
      return std::make_shared<FileProvider>(seqs, seqs.front().model_id);
    };
    ScorerSet set;
    set.base = provider(base_scores);
    if (fastdetect_scores) set.fastdetect = provider(fastdetect_scores);
    if (binoculars_scores) set.binoculars = provider(binoculars_scores);
    if (deviation) set.deviation = parse_deviation_strategy(deviation);
    save_feature_matrix(featurize(corpus->corpus, set, ctx->jobs), out_csv);
  });
}

ak_status ak_featurize_ngram(ak_context* ctx, const ak_corpus* corpus, const ak_ngram* model, const ak_ngram* partner,
                             const char* deviation, const char* out_csv) {
  return guarded(ctx, [&] {
    require(corpus, "corpus");
    require(model, "model");
    require(out_csv, "out_csv");
    ScorerSet set;
    set.base = std::make_shared<NgramProvider>(model->model, nullptr, "model");
    if (partner) {
      set.fastdetect = std::make_shared<NgramProvider>(model->model, partner->model, "model|partner");
      set.binoculars = std::make_shared<NgramProvider>(partner->model, model->model, "partner|model");
    }
    if (deviation) set.deviation = parse_deviation_strategy(deviation);
    save_feature_matrix(featurize(corpus->corpus, set, ctx->jobs), out_csv);
  });
}

ak_status ak_train(ak_context* ctx, const char* features_csv, const char* grid_json, ak_model** out,
                   char** summary_json) {
  return guarded(ctx, [&] {
    require(features_csv, "features_csv");
    require(out, "out");
    const auto method = method_config_from_json(grid_json && *grid_json ? grid_json : "{}");
    const auto fm = load_feature_matrix(features_csv);
    std::vector<Feature> features;
    for (auto f : method.features)
      if (std::find(fm.columns.begin(), fm.columns.end(), f) != fm.columns.end()) features.push_back(f);
    if (features.empty()) fail(ErrorKind::Validation, std::string(features_csv) + ": none of the requested features present");
    auto fit = fit_attribution_model(fm, features, method.grid, ctx->classes.names(), derive_seed(ctx->seed, "train"),
                                     ctx->jobs);
    auto m = std::make_unique<ak_model>();
    m->model = std::move(fit.model);
    if (summary_json) *summary_json = dup_string(m->model.provenance);
    *out = m.release();
  });
}

ak_status ak_model_load(ak_context* ctx, const char* path, ak_model** out) {
  return guarded(ctx, [&] {
    require(path, "path");
    require(out, "out");
    auto m = std::make_unique<ak_model>();
    m->model = AttributionModel::load(path);
    *out = m.release();
  });
}

ak_status ak_model_save(ak_context* ctx, const ak_model* model, const char* path) {
  return guarded(ctx, [&] {
    require(model, "model");
    require(path, "path");
    model->model.save(path);
  });
}

void ak_model_free(ak_model* model) { delete model; }

ak_status ak_predict(ak_context* ctx, const ak_model* model, const char* features_csv, const char* out_path) {
  return guarded(ctx, [&] {
    require(model, "model");
    require(features_csv, "features_csv");
    require(out_path, "out_path");
    const auto fm = load_feature_matrix(features_csv);
    const auto proba = model->model.predict_proba(fm);
    const auto idx = argmax_rows(proba);
    std::vector<Prediction> preds;
    for (std::size_t i = 0; i < fm.size(); ++i) {
      Prediction p{fm.doc_ids[i], fm.langs[i], fm.labels[i], model->model.labels[static_cast<std::size_t>(idx[i])],
                   std::map<std::string, double>{}};
      for (std::size_t c = 0; c < model->model.labels.size(); ++c)
        (*p.proba)[model->model.labels[c]] = proba(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
      preds.push_back(std::move(p));
    }
    save_predictions(preds, out_path);
  });
}

ak_status ak_evaluate(ak_context* ctx, const char* predictions, const char* method, const char* train_langs,
                      const char* out_csv, double* macro) {
  return guarded(ctx, [&] {
    require(predictions, "predictions");
    const auto preds = load_predictions(predictions);
    if (preds.empty()) fail(ErrorKind::Validation, std::string(predictions) + ": no predictions");
    const auto recs = evaluate_predictions(preds, method ? method : "method", train_tag(parse_langs(train_langs)),
                                           class_order(ctx, preds), ctx->langs);
    if (out_csv) save_results(recs, out_csv);
    if (macro)
      for (const auto& r : recs)
        if (r.test_lang == kPooled) *macro = r.macro;
  });
}

ak_status ak_run(ak_context* ctx, const char* spec_path, const char* out_dir, char** summary_json) {
  return guarded(ctx, [&] {
    require(spec_path, "spec_path");
    auto spec = ExperimentSpec::load(spec_path);
    if (out_dir) spec.output = out_dir;
    if (ctx->seed_set) spec.seed = ctx->seed;
    const auto outcome = run_experiment(spec, ctx->jobs);
    if (!summary_json) return;
    json doc;
    doc["output"] = spec.output.string();
    doc["manifest"] = outcome.manifest.string();
    doc["reports"] = outcome.reports;
    doc["warnings"] = outcome.warnings;
    doc["records"] = json::array();
    for (const auto& r : outcome.records)
      doc["records"].push_back({{"method", r.method}, {"train_langs", r.train_langs}, {"test_lang", r.test_lang},
                                {"macro", r.macro}, {"weighted", r.weighted}});
    *summary_json = dup_string(doc.dump(2));
  });
}

ak_status ak_report(ak_context* ctx, const char* layout, const char* input, const char* method,
                    const char* train_langs, const char* out_stem, char** warnings_json) {
  return guarded(ctx, [&] {
    require(layout, "layout");
    require(input, "input");
    require(out_stem, "out_stem");
    const auto l = parse_layout(layout);
    std::vector<std::string> warnings;
    auto emit = [&](const Report& r, const std::string& stem) {
      write_report(r, stem);
      warnings.insert(warnings.end(), r.warnings.begin(), r.warnings.end());
    };
    if (l == Layout::Table2 || l == Layout::Table3 || l == Layout::Table4) {
      const auto recs = load_results(input);
      emit(l == Layout::Table2 ? render_table2(recs, ctx->langs)
                               : l == Layout::Table3 ? render_table3(recs, ctx->langs) : render_table4(recs, ctx->langs),
           out_stem);
    } else {
      const auto preds = load_predictions(input);
      const auto ga = run_generator_analysis(preds, method ? method : "method", parse_langs(train_langs), ctx->classes,
                                             ctx->langs);
      if (l == Layout::Generators) {
        emit(render_generators(ga.table, ctx->classes), out_stem);
      } else {
        const std::string stem(out_stem);
        emit(render_confusion(ga.confusion.internal, ctx->classes, "Internal confusion"), stem + "_internal");
        emit(render_confusion(ga.confusion.external, ctx->classes, "External confusion"), stem + "_external");
      }
    }
    if (warnings_json) *warnings_json = dup_string(json(warnings).dump());
  });
}

}  // extern "C"
