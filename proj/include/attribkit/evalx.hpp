#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attribkit/corpus.hpp"

namespace attribkit {

// Rows = true class, columns = predicted class.
struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::int64_t>> counts;

  explicit ConfusionMatrix(std::vector<std::string> class_order = {});

  std::size_t index_of(const std::string& label) const;
  std::int64_t total() const;
  std::int64_t support(std::size_t i) const;
  void add(std::size_t truth, std::size_t pred, std::int64_t n = 1) { counts[truth][pred] += n; }
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const std::string> truth, std::span<const std::string> pred,
                          const std::vector<std::string>& class_order);
ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred,
                          const std::vector<std::string>& class_order);

struct RowPercent {
  std::vector<std::vector<double>> percent;
  std::vector<bool> zero_support;  // rows emitted as all zeros
};

RowPercent row_percent(const ConfusionMatrix& m);

struct F1Scores {
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<std::int64_t> support;
  double macro = 0.0;     // unweighted mean over all classes
  double weighted = 0.0;  // support-weighted mean over supported classes
};

// 0/0 conventions: precision or recall with a zero denominator is 0, and F1
// with P + R = 0 is 0.
F1Scores f1_scores(const ConfusionMatrix& m);

struct FamilyMean {
  std::string family;
  double mean = 0.0;
  std::size_t n = 0;
};

// Unweighted mean of per-language values within each family, in registry
// display order; families with no listed language are skipped.
std::vector<FamilyMean> aggregate_by_family(const std::map<std::string, double>& per_language,
                                            const LanguageRegistry& registry);

struct Prediction {
  std::string doc_id;
  std::string lang;
  std::string truth;
  std::string pred;
  std::optional<std::map<std::string, double>> proba;
};

std::string predictions_to_jsonl(const std::vector<Prediction>& preds);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);
void save_predictions(const std::vector<Prediction>& preds, const std::filesystem::path& path);

// Labels appearing in truth or pred, ordered by the class registry and then
// alphabetically for unregistered labels.
std::vector<std::string> class_order_for(const std::vector<Prediction>& preds, const ClassRegistry& classes);

struct InternalExternal {
  ConfusionMatrix internal;
  ConfusionMatrix external;
};

InternalExternal internal_external(const std::vector<Prediction>& preds, const std::set<std::string>& train_langs,
                                   const std::vector<std::string>& class_order);

// One evaluated cell: a method trained on `train_langs`, tested on `test_lang`.
// test_lang "all" = pooled over every test language; "all_mean" = unweighted
// mean of per-language macro F1 (only `macro` is meaningful there).
struct ScoreRecord {
  std::string method;
  std::string train_langs;
  std::string test_lang;
  std::vector<std::string> classes;
  std::vector<double> f1;
  std::vector<std::int64_t> support;
  double macro = 0.0;
  double weighted = 0.0;
};

inline constexpr const char* kPooled = "all";
inline constexpr const char* kLanguageMean = "all_mean";

std::string train_tag(const std::set<std::string>& langs);

std::vector<ScoreRecord> evaluate_predictions(const std::vector<Prediction>& preds, const std::string& method,
                                              const std::string& train_langs,
                                              const std::vector<std::string>& class_order,
                                              const LanguageRegistry& registry);

std::string results_to_csv(const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> results_from_csv(const std::string& text, const std::string& where = "<memory>");
void save_results(const std::vector<ScoreRecord>& records, const std::filesystem::path& path);
std::vector<ScoreRecord> load_results(const std::filesystem::path& path);

}  // namespace attribkit
