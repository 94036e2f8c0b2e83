#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

#include <CLI11.hpp>

#include "attribkit/attribkit.h"

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  int jobs = 1;
  std::string out;
  std::string registry;
  bool allow_unregistered = false;
  bool verbose = false;
};

struct CliError {
  int code;
};

// Exit codes: 0 ok, 1 failure or failed validation, 2 usage error.
int exit_code(ak_status s) { return s == AK_E_INVALID_ARGUMENT ? 2 : 1; }

class Session {
 public:
  explicit Session(const Globals& g) : g_(g) {
    if (ak_context_new(&ctx_) != AK_OK) throw CliError{1};
    check(ak_context_set_jobs(ctx_, g.jobs), "--jobs");
    if (g.seed_set) check(ak_context_set_seed(ctx_, g.seed), "--seed");
    check(ak_context_set_allow_unregistered(ctx_, g.allow_unregistered ? 1 : 0), "--allow-unregistered");
    if (!g.registry.empty()) check(ak_context_load_registry(ctx_, g.registry.c_str()), g.registry);
  }
  ~Session() {
    if (corpus_) ak_corpus_free(corpus_);
    ak_context_free(ctx_);
  }
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  ak_context* ctx() { return ctx_; }

  void check(ak_status s, const std::string& what) {
    if (s == AK_OK) return;
    std::fprintf(stderr, "error: %s: %s (%s)\n", what.c_str(), ak_last_error(ctx_), ak_status_name(s));
    throw CliError{exit_code(s)};
  }

  const ak_corpus* corpus(const std::string& path) {
    check(ak_corpus_load(ctx_, path.c_str(), &corpus_), path);
    if (g_.verbose) std::fprintf(stderr, "loaded %zu documents from %s\n", ak_corpus_size(corpus_), path.c_str());
    return corpus_;
  }

  // Replaces the loaded corpus with a derived one.
  const ak_corpus* adopt(ak_corpus* c) {
    if (corpus_) ak_corpus_free(corpus_);
    corpus_ = c;
    return corpus_;
  }

  std::string out_path(const std::string& name) const {
    const fs::path dir = g_.out.empty() ? fs::path(".") : fs::path(g_.out);
    fs::create_directories(dir);
    return (dir / name).string();
  }

  void print_and_free(char* s) {
    if (!s) return;
    std::printf("%s\n", s);
    ak_string_free(s);
  }

 private:
  const Globals& g_;
  ak_context* ctx_ = nullptr;
  ak_corpus* corpus_ = nullptr;
};

void require_seed(const Globals& g, const char* cmd) {
  if (!g.seed_set) {
    std::fprintf(stderr, "error: %s requires --seed\n", cmd);
    throw CliError{2};
  }
}

const char* opt(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attribkit: multilingual machine-generated text attribution"};
  app.require_subcommand(1);
  Globals g;
  if (const char* env = std::getenv("ATTRIBKIT_OUT")) g.out = env;

  auto add_globals = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& v) { g.seed = v, g.seed_set = true; }, "Seed for every randomized step");
    sub->add_option("--jobs", g.jobs, "Concurrency cap")->check(CLI::PositiveNumber);
    sub->add_option("--out", g.out, "Output directory (default: $ATTRIBKIT_OUT, else .)");
    sub->add_option("--registry", g.registry, "Language registry extension (JSON array of {code, family, script})");
    sub->add_flag("--allow-unregistered", g.allow_unregistered, "Admit languages and classes missing from the registries");
    sub->add_flag("-v,--verbose", g.verbose, "Progress on stderr");
  };

  // synth
  std::string synth_spec, corpus_name = "corpus.jsonl";
  bool identical = false;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus and its registry extension");
  synth->add_option("--spec", synth_spec, "Synth spec JSON (default: built-in three-language spec)");
  synth->add_flag("--identical", identical, "Make every generator identical to the human source");
  synth->add_option("--name", corpus_name, "Corpus file name inside --out");

  // validate
  std::string corpus_path, min_fraction = "0.95";
  std::size_t train_target = 1000, test_target = 300;
  auto* validate = app.add_subcommand("validate", "Check per-language class balance");
  validate->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  validate->add_option("--train-target", train_target, "Per-class train target");
  validate->add_option("--test-target", test_target, "Per-class test target");
  validate->add_option("--min-fraction", min_fraction, "Required fraction of the target (e.g. 0.95 or 1/3)");

  // train-scorer
  int order = 2;
  double k = 0.5;
  std::string tokenizer = "char", split = "train", label, name;
  auto* train_scorer = app.add_subcommand("train-scorer", "Train an add-k n-gram scorer");
  train_scorer->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  train_scorer->add_option("--order", order, "n-gram order")->check(CLI::PositiveNumber);
  train_scorer->add_option("--k", k, "Additive smoothing constant");
  train_scorer->add_option("--tokenizer", tokenizer, "char or word")->check(CLI::IsMember({"char", "word"}));
  train_scorer->add_option("--split", split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));
  train_scorer->add_option("--label", label, "Only texts of this class");
  train_scorer->add_option("--name", name, "Model file name inside --out")->default_str("scorer.json");

  // score
  std::string model_path, partner_path, endpoint, model_id;
  bool want_cross = false;
  int max_attempts = 5;
  auto* score = app.add_subcommand("score", "Score documents with a local n-gram model or a remote service");
  score->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  score->add_option("--model", model_path, "Local n-gram model");
  score->add_option("--partner", partner_path, "Partner n-gram model for cross summaries");
  score->add_option("--endpoint", endpoint, "Remote scoring service base URL");
  score->add_option("--model-id", model_id, "Model id recorded in (or requested from) the scorer");
  score->add_flag("--cross", want_cross, "Request cross summaries from the remote service");
  score->add_option("--max-attempts", max_attempts, "Remote retry budget")->check(CLI::PositiveNumber);
  score->add_option("--name", name, "Score file name inside --out")->default_str("scores.jsonl");

  // featurize
  std::string scores, fdg_scores, bino_scores, deviation, feat_split = "all";
  auto* featurize = app.add_subcommand("featurize", "Compute the statistical feature matrix");
  featurize->add_option("--corpus", corpus_path, "Corpus JSONL")->required();
  featurize->add_option("--scores", scores, "Base score file");
  featurize->add_option("--fastdetect-scores", fdg_scores, "Score file with (scoring, sampling) cross summaries");
  featurize->add_option("--binoculars-scores", bino_scores, "Score file with (observer, performer) cross summaries");
  featurize->add_option("--model", model_path, "Local n-gram model (instead of score files)");
  featurize->add_option("--partner", partner_path, "Partner n-gram model enabling the two cross features");
  featurize->add_option("--deviation", deviation, "logprob_std or logprob_mad");
  featurize->add_option("--split", feat_split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));
  featurize->add_option("--name", name, "Feature file name inside --out")->default_str("features.csv");

  // train
  std::string features_path, spec_path;
  auto* train = app.add_subcommand("train", "Grid-search and fit an attribution model");
  train->add_option("--features", features_path, "Feature matrix CSV")->required();
  train->add_option("--spec", spec_path, "Method config JSON {classifier, features, grid}");
  train->add_option("--name", name, "Model file name inside --out")->default_str("model.json");

  // predict
  auto* predict = app.add_subcommand("predict", "Predict classes for a feature matrix");
  predict->add_option("--model", model_path, "Attribution model JSON")->required();
  predict->add_option("--features", features_path, "Feature matrix CSV")->required();
  predict->add_option("--name", name, "Predictions file name inside --out")->default_str("predictions.jsonl");

  // evaluate
  std::string pred_path, method = "method", train_langs;
  auto* evaluate = app.add_subcommand("evaluate", "Score a predictions file");
  evaluate->add_option("--pred", pred_path, "Predictions JSONL")->required();
  evaluate->add_option("--method", method, "Method name recorded in the results");
  evaluate->add_option("--train-langs", train_langs, "Comma-separated training languages");
  evaluate->add_option("--name", name, "Results file name inside --out")->default_str("results.csv");

  // run
  auto* run = app.add_subcommand("run", "Run a full experiment spec");
  run->add_option("--spec", spec_path, "Experiment spec JSON")->required();

  // report
  std::string layout, results_path;
  auto* report = app.add_subcommand("report", "Render table2/table3/table4/confusion/generators layouts");
  report->add_option("--layout", layout, "Layout")
      ->required()
      ->check(CLI::IsMember({"table2", "table3", "table4", "confusion", "generators"}));
  report->add_option("--results", results_path, "Results CSV (table layouts)");
  report->add_option("--pred", pred_path, "Predictions JSONL (confusion, generators)");
  report->add_option("--method", method, "Method name");
  report->add_option("--train-langs", train_langs, "Comma-separated training languages");
  report->add_option("--name", name, "Report file stem inside --out");

  for (auto* sub : app.get_subcommands([](CLI::App*) { return true; })) add_globals(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  const auto parsed = app.get_subcommands();
  const bool out_from_flag = std::any_of(parsed.begin(), parsed.end(), [](CLI::App* s) { return s->count("--out") > 0; });
  const bool out_from_env = std::getenv("ATTRIBKIT_OUT") != nullptr;

  try {
    Session s(g);
    auto* ctx = s.ctx();
    const auto named = [&](const char* dflt) { return s.out_path(name.empty() ? dflt : name); };

    if (*synth) {
      if (synth_spec.empty()) require_seed(g, "synth");
      const auto corpus_out = s.out_path(corpus_name);
      const auto registry_out = s.out_path("registry.json");
      s.check(ak_synth(ctx, opt(synth_spec), identical ? 1 : 0, corpus_out.c_str(), registry_out.c_str()),
              synth_spec.empty() ? "synth" : synth_spec);
      std::printf("%s\n%s\n", corpus_out.c_str(), registry_out.c_str());
    } else if (*validate) {
      const auto* c = s.corpus(corpus_path);
      int pass = 0;
      char* rep = nullptr;
      s.check(ak_corpus_validate(ctx, c, train_target, test_target, min_fraction.c_str(), &pass, &rep), corpus_path);
      s.print_and_free(rep);
      return pass ? 0 : 1;
    } else if (*train_scorer) {
      const auto* c = s.corpus(corpus_path);
      ak_ngram* m = nullptr;
      s.check(ak_ngram_train(ctx, c, split == "all" ? nullptr : split.c_str(), opt(label), order, k, tokenizer.c_str(), &m),
              corpus_path);
      const auto path = named("scorer.json");
      const auto st = ak_ngram_save(ctx, m, path.c_str());
      ak_ngram_free(m);
      s.check(st, path);
      std::printf("%s\n", path.c_str());
    } else if (*score) {
      const auto* c = s.corpus(corpus_path);
      const auto path = named("scores.jsonl");
      if (!endpoint.empty()) {
        if (model_id.empty()) {
          std::fprintf(stderr, "error: remote scoring requires --model-id\n");
          return 2;
        }
        s.check(ak_score_remote(ctx, c, endpoint.c_str(), model_id.c_str(), want_cross ? 1 : 0, max_attempts, path.c_str()),
                endpoint);
      } else {
        if (model_path.empty()) {
          std::fprintf(stderr, "error: score requires --model or --endpoint\n%s", score->help().c_str());
          return 2;
        }
        ak_ngram *m = nullptr, *p = nullptr;
        s.check(ak_ngram_load(ctx, model_path.c_str(), &m), model_path);
        if (!partner_path.empty() && ak_ngram_load(ctx, partner_path.c_str(), &p) != AK_OK) {
          ak_ngram_free(m);
          s.check(AK_E_IO, partner_path);
        }
        const auto st = ak_score_local(ctx, c, m, p, opt(model_id.empty() ? fs::path(model_path).stem().string() : model_id),
                                       path.c_str());
        ak_ngram_free(m);
        ak_ngram_free(p);
        s.check(st, model_path);
      }
      std::printf("%s\n", path.c_str());
    } else if (*featurize) {
      const auto* c = s.corpus(corpus_path);
      ak_corpus* part = nullptr;
      if (feat_split != "all") {
        s.check(ak_corpus_filter_split(ctx, c, feat_split.c_str(), &part), corpus_path);
        c = s.adopt(part);
      }
      const auto path = named("features.csv");
      if (!scores.empty()) {
        s.check(ak_featurize_files(ctx, c, scores.c_str(), opt(fdg_scores), opt(bino_scores), opt(deviation), path.c_str()),
                scores);
      } else if (!model_path.empty()) {
        ak_ngram *m = nullptr, *p = nullptr;
        s.check(ak_ngram_load(ctx, model_path.c_str(), &m), model_path);
        if (!partner_path.empty() && ak_ngram_load(ctx, partner_path.c_str(), &p) != AK_OK) {
          ak_ngram_free(m);
          s.check(AK_E_IO, partner_path);
        }
        const auto st = ak_featurize_ngram(ctx, c, m, p, opt(deviation), path.c_str());
        ak_ngram_free(m);
        ak_ngram_free(p);
        s.check(st, model_path);
      } else {
        std::fprintf(stderr, "error: featurize requires --scores or --model\n%s", featurize->help().c_str());
        return 2;
      }
      std::printf("%s\n", path.c_str());
    } else if (*train) {
      require_seed(g, "train");
      std::string grid = "{}";
      if (!spec_path.empty()) {
        std::ifstream in(spec_path);
        if (!in) {
          std::fprintf(stderr, "error: %s: cannot open\n", spec_path.c_str());
          return 1;
        }
        grid.assign(std::istreambuf_iterator<char>(in), {});
      }
      ak_model* m = nullptr;
      char* summary = nullptr;
      s.check(ak_train(ctx, features_path.c_str(), grid.c_str(), &m, &summary), features_path);
      const auto path = named("model.json");
      const auto st = ak_model_save(ctx, m, path.c_str());
      ak_model_free(m);
      if (g.verbose) s.print_and_free(summary);
      else ak_string_free(summary);
      s.check(st, path);
      std::printf("%s\n", path.c_str());
    } else if (*predict) {
      ak_model* m = nullptr;
      s.check(ak_model_load(ctx, model_path.c_str(), &m), model_path);
      const auto path = named("predictions.jsonl");
      const auto st = ak_predict(ctx, m, features_path.c_str(), path.c_str());
      ak_model_free(m);
      s.check(st, features_path);
      std::printf("%s\n", path.c_str());
    } else if (*evaluate) {
      const auto path = named("results.csv");
      double macro = 0.0;
      s.check(ak_evaluate(ctx, pred_path.c_str(), method.c_str(), train_langs.c_str(), path.c_str(), &macro), pred_path);
      std::printf("macro_f1 %.4f\n%s\n", macro, path.c_str());
    } else if (*run) {
      char* summary = nullptr;
      const bool override_out = out_from_flag || out_from_env;
      s.check(ak_run(ctx, spec_path.c_str(), override_out ? g.out.c_str() : nullptr, &summary), spec_path);
      s.print_and_free(summary);
    } else if (*report) {
      const bool table = layout.rfind("table", 0) == 0;
      const auto& input = table ? results_path : pred_path;
      if (input.empty()) {
        std::fprintf(stderr, "error: layout %s requires %s\n", layout.c_str(), table ? "--results" : "--pred");
        return 2;
      }
      const auto stem = named(layout.c_str());
      char* warnings = nullptr;
      s.check(ak_report(ctx, layout.c_str(), input.c_str(), method.c_str(), train_langs.c_str(), stem.c_str(), &warnings),
              input);
      if (g.verbose) s.print_and_free(warnings);
      else ak_string_free(warnings);
      std::printf("%s\n", stem.c_str());
    }
  } catch (const CliError& e) {
    return e.code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
