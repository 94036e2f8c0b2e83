#include "attribkit/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <map>
#include <memory>

#include <json.hpp>

#include "attribkit/error.hpp"
#include "attribkit/util.hpp"

namespace attribkit {

using nlohmann::json;
namespace fs = std::filesystem;

const char* to_string(Task t) { return t == Task::MlMgt ? "ml-mgt" : "cl-mgt"; }

Task parse_task(const std::string& s) {
  if (s == "ml-mgt") return Task::MlMgt;
  if (s == "cl-mgt") return Task::ClMgt;
  fail(ErrorKind::InvalidArgument, "unknown task '" + s + "' (expected ml-mgt or cl-mgt)");
}

namespace {

json grid_to_json(const HyperGrid& g) {
  return {{"classifier", to_string(g.family)}, {"hidden", g.hidden},         {"learning_rates", g.learning_rates},
          {"l2", g.l2},                        {"folds", g.folds},           {"max_steps", g.max_steps},
          {"momentum", g.momentum},            {"batch_size", g.batch_size}, {"activation", to_string(g.activation)}};
}

HyperGrid grid_from_json(const json& j, ClassifierFamily family) {
  HyperGrid g;
  g.family = family;
  if (family == ClassifierFamily::Softmax) {
    g.hidden = {{}};
    g.learning_rates = {kSoftmaxStableLearningRate};
    g.momentum = 0.0;
  }
  g.hidden = j.value("hidden", g.hidden);
  g.learning_rates = j.value("learning_rates", g.learning_rates);
  g.l2 = j.value("l2", g.l2);
  g.folds = j.value("folds", g.folds);
  g.max_steps = j.value("max_steps", g.max_steps);
  g.momentum = j.value("momentum", g.momentum);
  g.batch_size = j.value("batch_size", g.batch_size);
  if (j.contains("activation")) g.activation = parse_activation(j["activation"].get<std::string>());
  if (g.folds < 2) fail(ErrorKind::InvalidArgument, "grid.folds must be >= 2");
  if (g.learning_rates.empty() || g.l2.empty() || g.hidden.empty())
    fail(ErrorKind::InvalidArgument, "grid lists must be non-empty");
  return g;
}

MethodConfig method_from_json(const json& j) {
  MethodConfig m;
  m.name = j.at("name").get<std::string>();
  if (m.name.empty()) fail(ErrorKind::InvalidArgument, "method name must be non-empty");
  if (j.contains("predictions")) {
    m.predictions = j["predictions"].get<std::string>();
    return m;
  }
  if (j.contains("features") && j["features"].is_array()) {
    m.features.clear();
    for (const auto& f : j["features"]) m.features.push_back(parse_feature(f.get<std::string>()));
  }
  const auto family = parse_family(j.value("classifier", std::string("feedforward")));
  m.grid = grid_from_json(j.value("grid", json::object()), family);
  return m;
}

json method_to_json(const MethodConfig& m) {
  json j = {{"name", m.name}};
  if (m.predictions) {
    j["predictions"] = *m.predictions;
    return j;
  }
  json feats = json::array();
  for (auto f : m.features) feats.push_back(feature_name(f));
  j["features"] = feats;
  j["classifier"] = to_string(m.grid.family);
  j["grid"] = grid_to_json(m.grid);
  return j;
}

json role_to_json(const std::optional<std::pair<std::string, std::string>>& r, const std::string& kind) {
  if (!r) return nullptr;
  if (kind == "ngram") return json::array({r->first, r->second});
  return r->first;
}

std::optional<std::pair<std::string, std::string>> role_from_json(const json& j, const std::string& key,
                                                                   const std::string& kind,
                                                                   std::optional<std::pair<std::string, std::string>> dflt) {
  if (!j.contains(key)) return kind == "ngram" ? dflt : std::nullopt;
  const auto& v = j[key];
  if (v.is_null()) return std::nullopt;
  if (v.is_array()) {
    if (v.size() != 2) fail(ErrorKind::InvalidArgument, "scorer." + key + " must name two models");
    return std::make_pair(v[0].get<std::string>(), v[1].get<std::string>());
  }
  if (kind == "ngram") fail(ErrorKind::InvalidArgument, "scorer." + key + " must be a pair of model names");
  return std::make_pair(v.get<std::string>(), std::string());
}

json scorer_to_json(const ScorerConfig& s) {
  json j = {{"kind", s.kind}, {"base", s.base}, {"deviation", to_string(s.deviation)}};
  j["fastdetect"] = role_to_json(s.fastdetect, s.kind);
  j["binoculars"] = role_to_json(s.binoculars, s.kind);
  if (s.kind == "ngram") {
    json models = json::array();
    for (const auto& m : s.models)
      models.push_back({{"name", m.name}, {"order", m.order}, {"k", m.k}, {"tokenizer", to_string(m.mode)}});
    j["models"] = models;
    j["train_on"] = s.train_on;
  }
  if (s.kind == "remote") {
    j["endpoint"] = s.endpoint;
    j["max_attempts"] = s.max_attempts;
  }
  return j;
}

ScorerConfig scorer_from_json(const json& j, const fs::path& base_dir) {
  ScorerConfig s;
  s.kind = j.value("kind", s.kind);
  if (s.kind != "ngram" && s.kind != "files" && s.kind != "remote")
    fail(ErrorKind::InvalidArgument, "scorer.kind must be ngram, files or remote");
  if (j.contains("models")) {
    s.models.clear();
    for (const auto& m : j["models"]) {
      NgramSpec n;
      n.name = m.at("name").get<std::string>();
      n.order = m.value("order", n.order);
      n.k = m.value("k", n.k);
      if (m.contains("tokenizer")) n.mode = parse_tokenizer_mode(m["tokenizer"].get<std::string>());
      s.models.push_back(n);
    }
  }
  s.base = j.value("base", s.kind == "ngram" ? s.base : std::string());
  if (s.base.empty()) fail(ErrorKind::InvalidArgument, "scorer.base is required");
  s.fastdetect = role_from_json(j, "fastdetect", s.kind, s.fastdetect);
  s.binoculars = role_from_json(j, "binoculars", s.kind, s.binoculars);
  s.train_on = j.value("train_on", s.train_on);
  if (s.train_on != "train" && s.train_on != "human")
    fail(ErrorKind::InvalidArgument, "scorer.train_on must be 'train' or 'human'");
  s.endpoint = j.value("endpoint", s.endpoint);
  s.max_attempts = j.value("max_attempts", s.max_attempts);
  if (j.contains("deviation")) s.deviation = parse_deviation_strategy(j["deviation"].get<std::string>());
  if (s.kind == "files") {
    auto resolve = [&](std::string& p) {
      if (!p.empty() && fs::path(p).is_relative()) p = (base_dir / p).string();
    };
    resolve(s.base);
    if (s.fastdetect) resolve(s.fastdetect->first);
    if (s.binoculars) resolve(s.binoculars->first);
  }
  if (s.kind == "remote" && s.endpoint.empty()) fail(ErrorKind::InvalidArgument, "scorer.endpoint is required for remote scoring");
  if (s.kind == "ngram") {
    auto known = [&](const std::string& name) {
      if (std::none_of(s.models.begin(), s.models.end(), [&](const auto& m) { return m.name == name; }))
        fail(ErrorKind::InvalidArgument, "scorer role refers to unknown model '" + name + "'");
    };
    known(s.base);
    for (const auto* r : {&s.fastdetect, &s.binoculars})
      if (*r) {
        known((*r)->first);
        known((*r)->second);
      }
  }
  return s;
}

std::set<std::string> lang_set(const json& j, const std::string& where) {
  if (!j.is_array()) fail(ErrorKind::InvalidArgument, where + " must be an array of language codes");
  std::set<std::string> out;
  for (const auto& v : j) out.insert(v.get<std::string>());
  return out;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_relative() ? base / path : path;
}

}  // namespace

MethodConfig method_config_from_json(const std::string& text) {
  try {
    auto j = json::parse(text);
    if (!j.is_object()) fail(ErrorKind::Parse, "method config must be a JSON object");
    if (!j.contains("name")) j["name"] = "StatEnsemble";
    return method_from_json(j);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed method config: ") + e.what());
  }
}

ExperimentSpec ExperimentSpec::from_json(const std::string& text, const fs::path& base_dir) {
  ExperimentSpec s;
  try {
    const auto doc = json::parse(text);
    s.name = doc.at("name").get<std::string>();
    if (!doc.contains("seed")) fail(ErrorKind::InvalidArgument, "experiment spec: 'seed' is required");
    s.seed = doc["seed"].get<std::uint64_t>();
    s.task = parse_task(doc.value("task", std::string("ml-mgt")));
    if (doc.contains("synth")) {
      const auto& sj = doc["synth"];
      if (sj.value("default", false)) {
        s.synth = default_synth_spec(sj.value("seed", s.seed), sj.value("identical", false));
        if (sj.contains("counts")) {
          s.synth->train_per_cell = sj["counts"].value("train", s.synth->train_per_cell);
          s.synth->test_per_cell = sj["counts"].value("test", s.synth->test_per_cell);
        }
        s.synth->doc_length = sj.value("doc_length", s.synth->doc_length);
      } else {
        s.synth = SynthSpec::from_json(sj.dump());
      }
    } else {
      s.corpus = resolve(base_dir, doc.at("corpus").get<std::string>());
    }
    if (doc.contains("registry") && !doc["registry"].is_null())
      s.registry = resolve(base_dir, doc["registry"].get<std::string>());
    s.allow_unregistered = doc.value("allow_unregistered", false);
    if (doc.contains("method")) s.methods.push_back(method_from_json(doc["method"]));
    if (doc.contains("methods"))
      for (const auto& m : doc["methods"]) s.methods.push_back(method_from_json(m));
    if (s.methods.empty()) fail(ErrorKind::InvalidArgument, "experiment spec: at least one method is required");
    for (auto& m : s.methods)
      if (m.predictions) m.predictions = resolve(base_dir, *m.predictions).string();
    s.scorer = scorer_from_json(doc.value("scorer", json::object()), base_dir);
    const auto& lj = doc.at("languages");
    s.languages.train = lang_set(lj.at("train"), "languages.train");
    s.languages.test = lj.contains("test") ? lang_set(lj["test"], "languages.test") : s.languages.train;
    if (doc.contains("train_configs"))
      for (const auto& c : doc["train_configs"]) s.train_configs.push_back(lang_set(c, "train_configs"));
    if (doc.contains("selection")) {
      const auto& sel = doc["selection"];
      if (sel.contains("per_class_cap") && !sel["per_class_cap"].is_null())
        s.selection.per_class_cap = sel["per_class_cap"].get<std::size_t>();
      if (sel.contains("fraction") && !sel["fraction"].is_null())
        s.selection.fraction = Rational::parse(sel["fraction"].is_string() ? sel["fraction"].get<std::string>()
                                                                           : sel["fraction"].dump());
      s.selection.equalize_union = sel.value("equalize_union", true);
    }
    s.output = resolve(base_dir, doc.value("output", "runs/" + s.name));
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed experiment spec: ") + e.what());
  }
  return s;
}

ExperimentSpec ExperimentSpec::load(const fs::path& path) {
  try {
    return from_json(read_file(path), path.parent_path().empty() ? fs::path(".") : path.parent_path());
  } catch (const Error& e) {
    fail(e.kind(), path.string() + ": " + e.what());
  }
}

std::string ExperimentSpec::to_json() const {
  json doc;
  doc["name"] = name;
  doc["task"] = to_string(task);
  doc["seed"] = seed;
  if (synth)
    doc["synth"] = json::parse(synth->to_json());
  else
    doc["corpus"] = corpus.string();
  doc["registry"] = registry ? json(registry->string()) : json(nullptr);
  doc["allow_unregistered"] = allow_unregistered;
  doc["methods"] = json::array();
  for (const auto& m : methods) doc["methods"].push_back(method_to_json(m));
  doc["scorer"] = scorer_to_json(scorer);
  doc["languages"] = {{"train", languages.train}, {"test", languages.test}};
  doc["train_configs"] = json::array();
  for (const auto& c : train_configs) doc["train_configs"].push_back(c);
  json sel = json::object();
  sel["per_class_cap"] = selection.per_class_cap ? json(*selection.per_class_cap) : json(nullptr);
  sel["fraction"] = selection.fraction ? json(std::to_string(selection.fraction->num) + "/" +
                                              std::to_string(selection.fraction->den))
                                       : json(nullptr);
  sel["equalize_union"] = selection.equalize_union;
  doc["selection"] = sel;
  doc["output"] = output.string();
  return doc.dump(2);
}

LanguageRegistry spec_language_registry(const ExperimentSpec& spec) {
  auto reg = LanguageRegistry::builtin();
  if (spec.registry) reg.extend_from_file(*spec.registry);
  if (spec.synth) {
    const auto ext = spec.synth->registry_extension(reg);
    for (const auto& l : ext.languages()) reg.add(l);
  }
  return reg;
}

GeneratorAnalysis run_generator_analysis(const std::vector<Prediction>& preds, const std::string& method,
                                         const std::set<std::string>& train_langs, const ClassRegistry& classes,
                                         const LanguageRegistry& langs) {
  std::vector<std::string> order = classes.names();
  for (const auto& c : class_order_for(preds, classes))
    if (std::find(order.begin(), order.end(), c) == order.end()) order.push_back(c);

  GeneratorAnalysis out;
  auto& t = out.table;
  t.method = method;
  t.train_langs = train_tag(train_langs);
  t.classes = order;
  std::set<std::string> present;
  for (const auto& p : preds) present.insert(p.lang);
  for (const auto& code : langs.display_order())
    if (present.erase(code)) t.langs.push_back(code);
  t.langs.insert(t.langs.end(), present.begin(), present.end());
  t.langs.push_back(kPooled);

  t.f1.assign(order.size(), std::vector<double>(t.langs.size(), 0.0));
  t.support.assign(order.size(), std::vector<std::int64_t>(t.langs.size(), 0));
  for (std::size_t l = 0; l < t.langs.size(); ++l) {
    ConfusionMatrix m(order);
    for (const auto& p : preds)
      if (t.langs[l] == kPooled || p.lang == t.langs[l]) m.add(m.index_of(p.truth), m.index_of(p.pred));
    const auto f = f1_scores(m);
    for (std::size_t c = 0; c < order.size(); ++c) {
      t.f1[c][l] = f.f1[c];
      t.support[c][l] = f.support[c];
    }
    t.macro.push_back(f.macro);
  }
  out.confusion = internal_external(preds, train_langs, order);
  return out;
}

namespace {

using Clock = std::chrono::steady_clock;

std::string hash_of(const std::string& s) { return hex64(fnv1a(s)); }

std::string file_tag(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  return out;
}

struct Context {
  const ExperimentSpec& spec;
  int jobs;
  fs::path out;
  LanguageRegistry langs;
  ClassRegistry classes;
  Corpus corpus;
  std::string corpus_hash;
  ExperimentOutcome outcome;

  std::string rel(const fs::path& p) const { return fs::relative(p, out).generic_string(); }
};

template <class F>
auto timed_stage(Context& ctx, const std::string& stage, const std::string& key, F&& body) {
  const auto t0 = Clock::now();
  StageRecord rec;
  rec.stage = stage;
  rec.key = key;
  auto result = body(rec);
  rec.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  ctx.outcome.stages.push_back(std::move(rec));
  return result;
}

void load_corpus_for(Context& ctx) {
  const auto& spec = ctx.spec;
  if (spec.synth) {
    const auto path = ctx.out / "corpus.jsonl";
    timed_stage(ctx, "synth", hash_of(spec.synth->to_json()), [&](StageRecord& rec) {
      ctx.corpus = generate_dataset(*spec.synth);
      save_corpus(ctx.corpus, path);
      rec.artifacts.push_back(ctx.rel(path));
      return 0;
    });
  } else {
    ctx.corpus = load_corpus(spec.corpus, ctx.langs, ctx.classes, LoadOptions{spec.allow_unregistered});
  }
  ctx.corpus_hash = hash_of(corpus_to_jsonl(ctx.corpus));
}

Corpus select_train(Context& ctx, const std::set<std::string>& train) {
  const auto& sel = ctx.spec.selection;
  const auto seed = derive_seed(ctx.spec.seed, "select/train/" + train_tag(train));
  if (ctx.spec.task == Task::ClMgt && train.size() > 1 && sel.equalize_union)
    return select_equalized_union(ctx.corpus, train, seed);
  SelectionSpec s{train, train, sel.per_class_cap, sel.fraction};
  return select(ctx.corpus, ctx.classes, s, seed).filter_split(Split::Train);
}

Corpus select_test(Context& ctx, const std::set<std::string>& test) {
  SelectionSpec s{test, test, ctx.spec.selection.per_class_cap, std::nullopt};
  return select(ctx.corpus, ctx.classes, s, derive_seed(ctx.spec.seed, "select/test")).filter_split(Split::Test);
}

struct ScorerBundle {
  std::string key;
  ScorerSet set;
};

ScorerBundle build_scorers(Context& ctx, const Corpus& train, const std::string& tag) {
  const auto& cfg = ctx.spec.scorer;
  const std::string key = hash_of(scorer_to_json(cfg).dump() + "|" + hash_of(corpus_to_jsonl(train)));
  ScorerBundle b{key, {}};
  b.set.deviation = cfg.deviation;

  if (cfg.kind == "files") {
    auto provider = [](const std::string& path) -> std::shared_ptr<const ScoreProvider> {
      auto seqs = load_scores(path);
      if (seqs.empty()) fail(ErrorKind::Validation, path + ": score file is empty");
      return std::make_shared<FileProvider>(seqs, seqs.front().model_id);
    };
    b.set.base = provider(cfg.base);
    if (cfg.fastdetect) b.set.fastdetect = provider(cfg.fastdetect->first);
    if (cfg.binoculars) b.set.binoculars = provider(cfg.binoculars->first);
    return b;
  }
  if (cfg.kind == "remote") {
    RetryPolicy policy;
    policy.max_attempts = cfg.max_attempts;
    b.set.base = std::make_shared<RemoteProvider>(cfg.endpoint, cfg.base, false, policy);
    if (cfg.fastdetect) b.set.fastdetect = std::make_shared<RemoteProvider>(cfg.endpoint, cfg.fastdetect->first, true, policy);
    if (cfg.binoculars) b.set.binoculars = std::make_shared<RemoteProvider>(cfg.endpoint, cfg.binoculars->first, true, policy);
    return b;
  }

  const auto dir = ctx.out / "cache" / ("scorer-" + key);
  std::map<std::string, std::shared_ptr<const NgramModel>> models;
  timed_stage(ctx, "scorer/" + tag, key, [&](StageRecord& rec) {
    std::vector<std::string> texts;
    const auto human = ctx.classes.human().name;
    for (const auto& s : train.samples())
      if (cfg.train_on == "train" || s.label == human) texts.push_back(s.text);
    bool cached = true;
    for (const auto& m : cfg.models) cached = cached && fs::exists(dir / (m.name + ".json"));
    for (const auto& m : cfg.models) {
      const auto path = dir / (m.name + ".json");
      if (cached) {
        models[m.name] = std::make_shared<NgramModel>(NgramModel::load(path));
      } else {
        if (texts.empty()) fail(ErrorKind::Validation, "no texts to train scorer '" + m.name + "' for " + tag);
        auto model = NgramModel::train(texts, m.order, m.k, m.mode);
        model.save(path);
        models[m.name] = std::make_shared<NgramModel>(std::move(model));
      }
      rec.artifacts.push_back(ctx.rel(path));
    }
    rec.cached = cached;
    return 0;
  });
  b.set.base = std::make_shared<NgramProvider>(models.at(cfg.base), nullptr, cfg.base);
  if (cfg.fastdetect)
    b.set.fastdetect = std::make_shared<NgramProvider>(models.at(cfg.fastdetect->first), models.at(cfg.fastdetect->second),
                                                       cfg.fastdetect->first + "|" + cfg.fastdetect->second);
  if (cfg.binoculars)
    b.set.binoculars = std::make_shared<NgramProvider>(models.at(cfg.binoculars->first), models.at(cfg.binoculars->second),
                                                       cfg.binoculars->first + "|" + cfg.binoculars->second);
  return b;
}

std::pair<FeatureMatrix, FeatureMatrix> build_features(Context& ctx, const ScorerBundle& scorers, const Corpus& train,
                                                        const Corpus& test, const std::string& tag) {
  const std::string key = hash_of(scorers.key + "|" + ctx.corpus_hash + "|" + hash_of(corpus_to_jsonl(test)) + "|" +
                                  to_string(ctx.spec.scorer.deviation));
  const auto dir = ctx.out / "cache" / ("features-" + key);
  return timed_stage(ctx, "features/" + tag, key, [&](StageRecord& rec) {
    const auto ptrain = dir / "train.csv", ptest = dir / "test.csv";
    std::pair<FeatureMatrix, FeatureMatrix> fm;
    if (ctx.spec.scorer.kind == "ngram" && fs::exists(ptrain) && fs::exists(ptest)) {
      fm = {load_feature_matrix(ptrain), load_feature_matrix(ptest)};
      rec.cached = true;
    } else {
      fm = {featurize(train, scorers.set, ctx.jobs), featurize(test, scorers.set, ctx.jobs)};
      save_feature_matrix(fm.first, ptrain);
      save_feature_matrix(fm.second, ptest);
    }
    rec.artifacts = {ctx.rel(ptrain), ctx.rel(ptest)};
    return fm;
  });
}

AttributionModel fit_or_load(Context& ctx, const MethodConfig& m, const FeatureMatrix& train, const std::string& feat_key,
                             const std::string& tag) {
  const auto seed = derive_seed(ctx.spec.seed, "fit/" + m.name + "/" + tag);
  const std::string key = hash_of(feat_key + "|" + method_to_json(m).dump() + "|" + std::to_string(seed));
  const auto path = ctx.out / "cache" / ("model-" + key) / "model.json";
  return timed_stage(ctx, "model/" + m.name + "/" + tag, key, [&](StageRecord& rec) {
    AttributionModel model;
    if (fs::exists(path)) {
      model = AttributionModel::load(path);
      rec.cached = true;
    } else {
      auto fit = fit_attribution_model(train, m.features, m.grid, ctx.classes.names(), seed, ctx.jobs);
      model = std::move(fit.model);
      model.save(path);
    }
    rec.artifacts.push_back(ctx.rel(path));
    return model;
  });
}

std::vector<Prediction> predict_rows(const AttributionModel& model, const FeatureMatrix& test) {
  const auto proba = model.predict_proba(test);
  const auto idx = argmax_rows(proba);
  std::vector<Prediction> out;
  out.reserve(test.size());
  for (std::size_t i = 0; i < test.size(); ++i) {
    Prediction p{test.doc_ids[i], test.langs[i], test.labels[i], model.labels[static_cast<std::size_t>(idx[i])], std::map<std::string, double>{}};
    for (std::size_t c = 0; c < model.labels.size(); ++c)
      (*p.proba)[model.labels[c]] = proba(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<Prediction> external_predictions(const MethodConfig& m, const std::string& tag, const Corpus& test) {
  std::string path = *m.predictions;
  if (auto pos = path.find("{train}"); pos != std::string::npos) path.replace(pos, 7, tag);
  auto preds = load_predictions(path);
  std::map<std::string, const TextSample*> docs;
  for (const auto& s : test.samples()) docs[s.id] = &s;
  std::vector<Prediction> kept;
  for (auto& p : preds) {
    auto it = docs.find(p.doc_id);
    if (it == docs.end()) continue;
    if (it->second->label != p.truth || it->second->lang != p.lang)
      fail(ErrorKind::Validation, path + ": document '" + p.doc_id + "' disagrees with the corpus on language or label");
    kept.push_back(std::move(p));
  }
  if (kept.size() != test.size())
    fail(ErrorKind::Validation, path + ": covers " + std::to_string(kept.size()) + " of " + std::to_string(test.size()) +
                                    " test documents");
  return kept;
}

void write_manifest(const Context& ctx, const std::string& status, const std::string& error) {
  json doc;
  doc["format_version"] = 1;
  doc["name"] = ctx.spec.name;
  doc["status"] = status;
  if (!error.empty()) doc["error"] = error;
  doc["spec"] = json::parse(ctx.spec.to_json());
  doc["grid_search"] = "per training configuration";
  doc["configs"] = json::array();
  for (const auto& c : ctx.outcome.configs)
    doc["configs"].push_back({{"train_langs", c.train_tag},
                              {"kind", to_string(c.kind)},
                              {"train_size", c.train_size},
                              {"test_size", c.test_size}});
  doc["stages"] = json::array();
  for (const auto& s : ctx.outcome.stages)
    doc["stages"].push_back({{"stage", s.stage},
                             {"key", s.key},
                             {"artifacts", s.artifacts},
                             {"seconds", s.seconds},
                             {"cached", s.cached}});
  doc["reports"] = ctx.outcome.reports;
  doc["warnings"] = ctx.outcome.warnings;
  write_file_atomic(ctx.out / "manifest.json", doc.dump(2) + "\n");
}

void emit_report(Context& ctx, const Report& r, const std::string& stem) {
  write_report(r, ctx.out / "reports" / stem);
  ctx.outcome.reports.push_back("reports/" + stem);
  for (const auto& w : r.warnings) ctx.outcome.warnings.push_back(stem + ": " + w);
}

void run_configs(Context& ctx, const std::vector<std::set<std::string>>& configs, const std::set<std::string>& test_langs) {
  const auto test = select_test(ctx, test_langs);
  for (const auto& train_langs : configs) {
    const auto tag = train_tag(train_langs);
    ConfigRun run;
    run.train_tag = tag;
    run.kind = check_cl({train_langs, test_langs}, ctx.langs);
    const auto train = select_train(ctx, train_langs);
    run.train_size = train.size();
    run.test_size = test.size();
    ctx.outcome.configs.push_back(run);

    const bool needs_features =
        std::any_of(ctx.spec.methods.begin(), ctx.spec.methods.end(), [](const auto& m) { return !m.predictions; });
    std::pair<FeatureMatrix, FeatureMatrix> fm;
    std::string feat_key;
    if (needs_features) {
      auto scorers = build_scorers(ctx, train, tag);
      fm = build_features(ctx, scorers, train, test, tag);
      feat_key = ctx.outcome.stages.back().key;
    }

    for (const auto& m : ctx.spec.methods) {
      std::vector<Prediction> preds;
      if (m.predictions) {
        preds = external_predictions(m, tag, test);
      } else {
        const auto model = fit_or_load(ctx, m, fm.first, feat_key, tag);
        preds = predict_rows(model, fm.second);
      }
      if (preds.size() != test.size())
        fail(ErrorKind::Internal, "evaluated " + std::to_string(preds.size()) + " of " + std::to_string(test.size()) +
                                      " test documents");
      const auto stem = file_tag(m.name) + "__" + file_tag(tag);
      const auto ppath = ctx.out / "predictions" / (stem + ".jsonl");
      save_predictions(preds, ppath);

      const auto order = class_order_for(preds, ctx.classes);
      auto recs = evaluate_predictions(preds, m.name, tag, order, ctx.langs);
      ctx.outcome.records.insert(ctx.outcome.records.end(), recs.begin(), recs.end());

      const auto ga = run_generator_analysis(preds, m.name, train_langs, ctx.classes, ctx.langs);
      emit_report(ctx, render_generators(ga.table, ctx.classes), "generators__" + stem);
      emit_report(ctx, render_confusion(ga.confusion.internal, ctx.classes,
                                        "Internal confusion: " + m.name + " (train " + tag + ")"),
                  "confusion_internal__" + stem);
      if (ga.confusion.external.total() > 0)
        emit_report(ctx, render_confusion(ga.confusion.external, ctx.classes,
                                          "External confusion: " + m.name + " (train " + tag + ")"),
                    "confusion_external__" + stem);
    }
  }
  save_results(ctx.outcome.records, ctx.out / "results.csv");
}

template <class Body>
ExperimentOutcome guarded_run(const ExperimentSpec& spec, int jobs, Body&& body) {
  if (jobs < 1) fail(ErrorKind::InvalidArgument, "jobs must be >= 1");
  Context ctx{spec, jobs, spec.output, spec_language_registry(spec), ClassRegistry::builtin(), {}, {}, {}};
  fs::create_directories(ctx.out);
  try {
    load_corpus_for(ctx);
    body(ctx);
  } catch (const std::exception& e) {
    write_manifest(ctx, "failed", e.what());
    throw;
  }
  write_manifest(ctx, "ok", "");
  ctx.outcome.manifest = ctx.out / "manifest.json";
  return std::move(ctx.outcome);
}

}  // namespace

ExperimentOutcome run_ml_mgt(const ExperimentSpec& spec, int jobs) {
  if (spec.languages.train != spec.languages.test)
    fail(ErrorKind::InvalidArgument, "ml-mgt requires identical training and test languages");
  return guarded_run(spec, jobs, [&](Context& ctx) {
    if (check_cl(spec.languages, ctx.langs) != RunKind::Multilingual)
      fail(ErrorKind::Internal, "ml-mgt languages did not classify as multilingual");
    run_configs(ctx, {spec.languages.train}, spec.languages.test);
    emit_report(ctx, render_table2(ctx.outcome.records, ctx.langs), "table2");
  });
}

ExperimentOutcome run_cl_mgt(const ExperimentSpec& spec, int jobs) {
  return guarded_run(spec, jobs, [&](Context& ctx) {
    auto configs = spec.train_configs;
    if (configs.empty()) {
      for (const auto& l : spec.languages.train) configs.push_back({l});
      if (spec.languages.train.size() > 1) configs.push_back(spec.languages.train);
    }
    for (const auto& c : configs) check_cl({c, spec.languages.test}, ctx.langs);
    run_configs(ctx, configs, spec.languages.test);
    emit_report(ctx, render_table3(ctx.outcome.records, ctx.langs), "table3");
    emit_report(ctx, render_table4(ctx.outcome.records, ctx.langs), "table4");
  });
}

ExperimentOutcome run_experiment(const ExperimentSpec& spec, int jobs) {
  return spec.task == Task::MlMgt ? run_ml_mgt(spec, jobs) : run_cl_mgt(spec, jobs);
}

}  // namespace attribkit
