#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "attribkit/classify.hpp"
#include "attribkit/corpus.hpp"
#include "attribkit/evalx.hpp"
#include "attribkit/features.hpp"
#include "attribkit/ngram.hpp"
#include "attribkit/report.hpp"
#include "attribkit/scores.hpp"
#include "attribkit/synth.hpp"

namespace attribkit {

struct NgramSpec {
  std::string name;
  int order = 2;
  double k = 0.5;
  TokenizerMode mode = TokenizerMode::Character;
};

// Which model backs which feature group. Roles name entries of `models`
// (n-gram), score files (files) or remote model ids (remote).
struct ScorerConfig {
  std::string kind = "ngram";  // ngram | files | remote
  std::vector<NgramSpec> models = {{"primary", 2, 0.5, TokenizerMode::Character},
                                   {"partner", 1, 0.5, TokenizerMode::Character}};
  std::string base = "primary";
  // (scoring, sampling)
  std::optional<std::pair<std::string, std::string>> fastdetect = std::make_pair("primary", "partner");
  // (observer, performer)
  std::optional<std::pair<std::string, std::string>> binoculars = std::make_pair("partner", "primary");
  std::string train_on = "train";  // "train": all training texts; "human": human training texts only
  std::string endpoint;            // remote
  int max_attempts = 5;            // remote
  DeviationStrategy deviation = DeviationStrategy::LogprobStd;
};

struct MethodConfig {
  std::string name;
  std::vector<Feature> features{kAllFeatures.begin(), kAllFeatures.end()};
  HyperGrid grid;
  // External method: path to a predictions file. "{train}" is replaced by the
  // training-language tag.
  std::optional<std::string> predictions;
};

struct SelectionConfig {
  std::optional<std::size_t> per_class_cap;
  std::optional<Rational> fraction;
  bool equalize_union = true;  // multi-language CL training sets keep a single language's size
};

// {"name", "features", "classifier", "grid"} or {"name", "predictions"}.
MethodConfig method_config_from_json(const std::string& text);

enum class Task { MlMgt, ClMgt };
const char* to_string(Task t);
Task parse_task(const std::string& s);

struct ExperimentSpec {
  std::string name;
  Task task = Task::MlMgt;
  std::filesystem::path corpus;          // corpus file; or
  std::optional<SynthSpec> synth;        // generated on the fly
  std::optional<std::filesystem::path> registry;
  bool allow_unregistered = false;
  std::vector<MethodConfig> methods;
  ScorerConfig scorer;
  ExperimentLanguages languages;
  std::vector<std::set<std::string>> train_configs;  // cl-mgt; default: each train language + their union
  SelectionConfig selection;
  std::uint64_t seed = 0;
  std::filesystem::path output;

  // Relative paths resolve against base_dir. "seed" is mandatory.
  static ExperimentSpec from_json(const std::string& text, const std::filesystem::path& base_dir = ".");
  static ExperimentSpec load(const std::filesystem::path& path);
  std::string to_json() const;
};

struct StageRecord {
  std::string stage;
  std::string key;
  std::vector<std::string> artifacts;  // relative to the output directory
  double seconds = 0.0;
  bool cached = false;
};

struct ConfigRun {
  std::string train_tag;
  RunKind kind = RunKind::Multilingual;
  std::size_t train_size = 0;
  std::size_t test_size = 0;
};

struct ExperimentOutcome {
  std::vector<ScoreRecord> records;
  std::vector<ConfigRun> configs;
  std::vector<StageRecord> stages;
  std::vector<std::string> reports;   // report stems, relative to the output directory
  std::vector<std::string> warnings;
  std::filesystem::path manifest;
};

// Dispatches on spec.task. Writes predictions/, results.csv, reports/,
// cache/ and manifest.json under spec.output. On failure the manifest is
// written with status "failed" and the error is rethrown.
ExperimentOutcome run_experiment(const ExperimentSpec& spec, int jobs = 1);
ExperimentOutcome run_ml_mgt(const ExperimentSpec& spec, int jobs = 1);
ExperimentOutcome run_cl_mgt(const ExperimentSpec& spec, int jobs = 1);

struct GeneratorAnalysis {
  GeneratorTable table;
  InternalExternal confusion;
};

GeneratorAnalysis run_generator_analysis(const std::vector<Prediction>& preds, const std::string& method,
                                         const std::set<std::string>& train_langs, const ClassRegistry& classes,
                                         const LanguageRegistry& langs);

// Registries used by a spec: built-ins, the optional extension file and any
// synthetic languages.
LanguageRegistry spec_language_registry(const ExperimentSpec& spec);

}  // namespace attribkit
