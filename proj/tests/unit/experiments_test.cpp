#include "doctest.h"

#include <cmath>
#include <json.hpp>

#include "../common/fixtures.hpp"
#include "attribkit/error.hpp"
#include "attribkit/experiments.hpp"
#include "attribkit/util.hpp"

using namespace attribkit;
using nlohmann::json;

namespace {

SynthSpec small_synth(std::uint64_t seed, std::size_t train = 24, std::size_t test = 8) {
  auto s = default_synth_spec(seed);
  s.train_per_cell = train;
  s.test_per_cell = test;
  s.doc_length = 200;
  return s;
}

json softmax_method(const std::string& name = "StatEnsemble") {
  return {{"name", name}, {"classifier", "softmax"}, {"grid", {{"folds", 2}, {"max_steps", 300}}}};
}

ExperimentSpec make_spec(json doc, const SynthSpec& synth, const std::filesystem::path& out) {
  doc["synth"] = json::parse(synth.to_json());
  doc["output"] = out.string();
  return ExperimentSpec::from_json(doc.dump());
}

double record_macro(const std::vector<ScoreRecord>& recs, const std::string& train, const std::string& test) {
  for (const auto& r : recs)
    if (r.train_langs == train && r.test_lang == test) return r.macro;
  FAIL("no record for " << train << " / " << test);
  return 0;
}

std::map<std::string, std::string> tree(const std::filesystem::path& root, const std::string& sub) {
  std::map<std::string, std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root / sub))
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), root).string()] = read_file(e.path());
  return out;
}

}  // namespace

TEST_CASE("experiment spec parsing") {
  const std::string base =
      R"({"name":"ml","task":"ml-mgt","seed":7,"synth":{"default":true,"counts":{"train":10,"test":5}},)"
      R"("languages":{"train":["xa","xb","xc"]},)"
      R"("method":{"name":"StatEnsemble","classifier":"feedforward","grid":{"hidden":[[100]],"learning_rates":[0.001,0.01]}},)"
      R"("output":"out/ml"})";
  const auto s = ExperimentSpec::from_json(base, "/tmp/base");
  CHECK(s.name == "ml");
  CHECK(s.task == Task::MlMgt);
  CHECK(s.seed == 7);
  REQUIRE(s.synth);
  CHECK(s.synth->train_per_cell == 10);
  CHECK(s.synth->test_per_cell == 5);
  CHECK(s.languages.test == s.languages.train);
  REQUIRE(s.methods.size() == 1);
  CHECK(s.methods[0].grid.hidden == std::vector<std::vector<int>>{{100}});
  CHECK(s.methods[0].grid.learning_rates.size() == 2);
  CHECK(s.methods[0].features.size() == kAllFeatures.size());
  CHECK(s.output == std::filesystem::path("/tmp/base/out/ml"));

  SUBCASE("round trip") {
    const auto back = ExperimentSpec::from_json(s.to_json());
    CHECK(back.to_json() == s.to_json());
  }

  SUBCASE("seed is mandatory") {
    auto j = json::parse(base);
    j.erase("seed");
    CHECK_THROWS_WITH_AS(ExperimentSpec::from_json(j.dump()), doctest::Contains("seed"), Error);
  }

  SUBCASE("rejections") {
    auto j = json::parse(base);
    j["task"] = "xx";
    CHECK_THROWS_AS(ExperimentSpec::from_json(j.dump()), Error);
    j = json::parse(base);
    j.erase("method");
    CHECK_THROWS_AS(ExperimentSpec::from_json(j.dump()), Error);
    j = json::parse(base);
    j["scorer"] = {{"base", "nope"}};
    CHECK_THROWS_WITH_AS(ExperimentSpec::from_json(j.dump()), doctest::Contains("unknown model"), Error);
    j = json::parse(base);
    j["method"]["grid"]["folds"] = 1;
    CHECK_THROWS_AS(ExperimentSpec::from_json(j.dump()), Error);
    CHECK_THROWS_AS(ExperimentSpec::from_json("{not json"), Error);
  }

  SUBCASE("method configs") {
    const auto m = method_config_from_json(R"({"classifier":"softmax","features":["perplexity","lrr"]})");
    CHECK(m.name == "StatEnsemble");
    CHECK(m.grid.family == ClassifierFamily::Softmax);
    CHECK(m.features == std::vector<Feature>{Feature::Perplexity, Feature::Lrr});
    const auto ext = method_config_from_json(R"({"name":"mdok","predictions":"p/{train}.jsonl"})");
    CHECK(ext.predictions == std::string("p/{train}.jsonl"));
  }
}

TEST_CASE("multilingual run") {
  fixtures::TempDir dir("ml");
  const json doc = {{"name", "ml"}, {"task", "ml-mgt"}, {"seed", 3},
                    {"languages", {{"train", {"xa", "xb", "xc"}}}}, {"method", softmax_method()}};
  const auto spec = make_spec(doc, small_synth(3), dir / "a");
  const auto out = run_experiment(spec);

  CHECK(out.configs.size() == 1);
  CHECK(out.configs[0].kind == RunKind::Multilingual);
  CHECK(out.configs[0].train_size == 3 * 8 * 24);
  CHECK(out.configs[0].test_size == 3 * 8 * 8);
  for (const auto& t : {"xa", "xb", "xc", "all", "all_mean"}) CHECK(record_macro(out.records, "xa-xb-xc", t) > 0.5);

  const auto manifest = json::parse(read_file(out.manifest));
  CHECK(manifest["status"] == "ok");
  CHECK(manifest["configs"].size() == 1);
  for (const auto& s : manifest["stages"])
    for (const auto& a : s["artifacts"]) CHECK(std::filesystem::exists(dir / "a" / a.get<std::string>()));
  CHECK(std::filesystem::exists(dir / "a" / "reports" / "table2.md"));
  CHECK(std::filesystem::exists(dir / "a" / "results.csv"));

  SUBCASE("predictions cover the test set once") {
    const auto preds = load_predictions(dir / "a" / "predictions" / "StatEnsemble__xa-xb-xc.jsonl");
    std::set<std::string> ids;
    for (const auto& p : preds) ids.insert(p.doc_id);
    CHECK(ids.size() == preds.size());
    CHECK(preds.size() == out.configs[0].test_size);
  }

  SUBCASE("rerun is byte-identical and cache-backed") {
    const auto again = run_experiment(make_spec(doc, small_synth(3), dir / "b"));
    for (const auto& sub : {"predictions", "reports"}) CHECK(tree(dir / "a", sub) == tree(dir / "b", sub));
    CHECK(read_file(dir / "a" / "results.csv") == read_file(dir / "b" / "results.csv"));

    const auto warm = run_experiment(spec);
    bool any_cached = false;
    for (const auto& s : warm.stages) any_cached = any_cached || s.cached;
    CHECK(any_cached);
    CHECK(read_file(dir / "a" / "results.csv") == results_to_csv(warm.records));
  }

  SUBCASE("train and test languages must agree") {
    auto bad = spec;
    bad.languages.test = {"xa"};
    CHECK_THROWS_AS(run_ml_mgt(bad), Error);
  }
}

TEST_CASE("cross-lingual run") {
  fixtures::TempDir dir("cl");
  const json doc = {{"name", "cl"},
                    {"task", "cl-mgt"},
                    {"seed", 5},
                    {"languages", {{"train", {"xa", "xb"}}, {"test", {"xa", "xb", "xc"}}}},
                    {"method", softmax_method()}};
  const auto out = run_experiment(make_spec(doc, small_synth(5), dir / "run"));

  REQUIRE(out.configs.size() == 3);
  const std::size_t single = out.configs[0].train_size;
  CHECK(out.configs[1].train_size == single);
  CHECK(std::llabs(static_cast<long long>(out.configs[2].train_size) - static_cast<long long>(single)) <= 3);
  for (const auto& c : out.configs) CHECK(c.kind == RunKind::CrossLingual);
  CHECK(std::filesystem::exists(dir / "run" / "reports" / "table3.md"));
  CHECK(std::filesystem::exists(dir / "run" / "reports" / "table4.md"));
  CHECK(std::filesystem::exists(dir / "run" / "reports" / "confusion_external__StatEnsemble__xa.md"));

  SUBCASE("internal and external confusion partition the counts") {
    const auto classes = ClassRegistry::builtin();
    const auto preds = load_predictions(dir / "run" / "predictions" / "StatEnsemble__xa.jsonl");
    const auto order = classes.names();
    const auto ie = internal_external(preds, {"xa"}, order);
    auto total = ie.internal;
    total += ie.external;
    std::vector<std::string> truth, pred;
    for (const auto& p : preds) {
      truth.push_back(p.truth);
      pred.push_back(p.pred);
    }
    CHECK(total == confusion(truth, pred, order));
  }
}

TEST_CASE("cl run without unseen languages has no external matrix") {
  fixtures::TempDir dir("cl-same");
  const json doc = {{"name", "cl"},
                    {"task", "cl-mgt"},
                    {"seed", 5},
                    {"languages", {{"train", {"xa"}}, {"test", {"xa", "xb"}}}},
                    {"train_configs", json::array({json::array({"xa", "xb"})})},
                    {"method", softmax_method()}};
  const auto out = run_experiment(make_spec(doc, small_synth(5, 12, 4), dir / "run"));
  for (const auto& r : out.reports) CHECK(r.find("confusion_external") == std::string::npos);
}

TEST_CASE("external predictions") {
  fixtures::TempDir dir("ext");
  const auto synth = small_synth(9, 4, 4);
  const auto corpus = generate_dataset(synth);
  std::vector<Prediction> preds;
  for (const auto& s : corpus.samples())
    if (s.split == Split::Test) preds.push_back({s.id, s.lang, s.label, s.label, {}});
  save_predictions(preds, dir / "p" / "mdok__xa-xb-xc.jsonl");

  json doc = {{"name", "ext"},
              {"task", "ml-mgt"},
              {"seed", 1},
              {"languages", {{"train", {"xa", "xb", "xc"}}}},
              {"method", {{"name", "mdok"}, {"predictions", (dir / "p" / "mdok__{train}.jsonl").string()}}}};
  const auto out = run_experiment(make_spec(doc, synth, dir / "run"));
  CHECK(record_macro(out.records, "xa-xb-xc", "all") == 1.0);
  CHECK_FALSE(std::filesystem::exists(dir / "run" / "cache"));
  for (const auto& s : out.stages) CHECK(s.stage == "synth");

  SUBCASE("incomplete coverage fails and records the failure") {
    preds.pop_back();
    save_predictions(preds, dir / "p" / "mdok__xa-xb-xc.jsonl");
    CHECK_THROWS_WITH_AS(run_experiment(make_spec(doc, synth, dir / "bad")), doctest::Contains("test documents"), Error);
    CHECK(json::parse(read_file(dir / "bad" / "manifest.json"))["status"] == "failed");
  }
}

TEST_CASE("identity chain sits at chance") {
  // a unit-temperature generator samples from the human distribution itself
  SynthSpec s;
  s.seed = 4;
  s.train_per_cell = 200;
  s.test_per_cell = 200;
  s.doc_length = 200;
  SyntheticLanguageSpec lang;
  lang.code = "xa";
  lang.alphabet = tokenize("abcdefghijklmnopqrst", TokenizerMode::Character);
  lang.seed = 31;
  s.languages = {lang};
  s.generators = {{"mistral", 1.0, std::nullopt, {}, 0.0, 0}};

  fixtures::TempDir dir("id");
  const json doc = {{"name", "id"}, {"task", "ml-mgt"}, {"seed", 2},
                    {"languages", {{"train", {"xa"}}}}, {"method", softmax_method()}};
  const auto out = run_experiment(make_spec(doc, s, dir / "run"));
  double f1 = 0;
  for (const auto& r : out.records)
    if (r.test_lang == "xa") {
      REQUIRE(r.classes.size() >= 2);
      for (std::size_t c = 0; c < r.classes.size(); ++c)
        if (r.classes[c] == "mistral") f1 = r.f1[c];
    }
  CHECK(f1 >= 0.35);
  CHECK(f1 <= 0.65);
}

TEST_CASE("attribution improves as the generator moves away from human") {
  const std::vector<double> temps = {1.0, 1.6, 2.4};
  std::vector<double> mean_f1;
  for (double tau : temps) {
    double sum = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      SynthSpec s;
      s.seed = seed;
      s.train_per_cell = 40;
      s.test_per_cell = 40;
      s.doc_length = 150;
      SyntheticLanguageSpec lang;
      lang.code = "xa";
      lang.alphabet = tokenize("abcdefghijklmnopqrst", TokenizerMode::Character);
      lang.seed = seed * 13;
      s.languages = {lang};
      s.generators = {{"mistral", tau, std::nullopt, {}, 0.0, 0}};

      fixtures::TempDir dir("mono");
      const json doc = {{"name", "m"}, {"task", "ml-mgt"}, {"seed", seed},
                        {"languages", {{"train", {"xa"}}}}, {"method", softmax_method()}};
      const auto out = run_experiment(make_spec(doc, s, dir / "run"));
      for (const auto& r : out.records)
        if (r.test_lang == "xa")
          for (std::size_t c = 0; c < r.classes.size(); ++c)
            if (r.classes[c] == "mistral") sum += r.f1[c];
    }
    mean_f1.push_back(sum / 5.0);
  }
  // least-squares slope of mean F1 against temperature
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < temps.size(); ++i) {
    mx += temps[i] / 3.0;
    my += mean_f1[i] / 3.0;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < temps.size(); ++i) {
    sxy += (temps[i] - mx) * (mean_f1[i] - my);
    sxx += (temps[i] - mx) * (temps[i] - mx);
  }
  CHECK(sxy / sxx > 0);
  CHECK(mean_f1.back() > mean_f1.front());
}

TEST_CASE("shipped configs parse") {
  const std::filesystem::path dir = std::filesystem::path(ATTRIBKIT_SOURCE_DIR) / "configs";
  for (const auto* name : {"ml_synth.json", "cl_synth.json", "ml_multitude.json"}) {
    INFO(name);
    const auto spec = ExperimentSpec::load(dir / name);
    CHECK_FALSE(spec.methods.empty());
    CHECK(spec.output.is_absolute());
  }
  const auto m = method_config_from_json(read_file(dir / "grid_feedforward.json"));
  CHECK(m.features.size() == kAllFeatures.size());
  CHECK(m.grid.learning_rates.size() == 2);
}
