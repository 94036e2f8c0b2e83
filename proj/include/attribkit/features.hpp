#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "attribkit/corpus.hpp"
#include "attribkit/scores.hpp"

namespace attribkit {

inline constexpr double kEpsDenominator = 1e-10;
inline constexpr double kEpsVariance = 1e-12;

enum class Feature {
  LogLik,
  Perplexity,
  RankMean,
  LogRankMean,
  EntropyMean,
  Lrr,
  LlmDeviation,
  FastDetectGpt,
  Binoculars,
};

inline constexpr std::size_t kNumFeatures = 9;
inline constexpr std::array<Feature, kNumFeatures> kAllFeatures = {
    Feature::LogLik,      Feature::Perplexity,   Feature::RankMean,      Feature::LogRankMean, Feature::EntropyMean,
    Feature::Lrr,         Feature::LlmDeviation, Feature::FastDetectGpt, Feature::Binoculars};

const char* feature_name(Feature f);
Feature parse_feature(const std::string& name);

// How llm_deviation summarizes per-token log-likelihoods.
enum class DeviationStrategy {
  LogprobStd,  // population standard deviation (default)
  LogprobMad,  // mean absolute deviation from the mean
};
DeviationStrategy parse_deviation_strategy(const std::string& s);
const char* to_string(DeviationStrategy s);

struct FeatureVector {
  std::string doc_id;
  double loglik = 0.0;
  double perplexity = 1.0;
  double rank_mean = 1.0;
  double logrank_mean = 0.0;
  double entropy_mean = 0.0;
  double lrr = 0.0;
  double llm_deviation = 0.0;
  double fastdetectgpt = 0.0;
  double binoculars = 1.0;

  double get(Feature f) const;
  void set(Feature f, double v);
};

// Fills the seven single-model fields.
FeatureVector single_model_features(const TokenScoreSeq& seq,
                                    DeviationStrategy deviation = DeviationStrategy::LogprobStd);

// Sequence scored by the scoring model with cross summaries from the sampling model.
double fast_detect_gpt(const TokenScoreSeq& seq);

// Sequence scored by the observer with cross summaries from the performer.
double binoculars(const TokenScoreSeq& seq);

struct ScorerSet {
  std::shared_ptr<const ScoreProvider> base;        // seven single-model features
  std::shared_ptr<const ScoreProvider> fastdetect;  // optional (scoring, sampling) pair
  std::shared_ptr<const ScoreProvider> binoculars;  // optional (observer, performer) pair
  DeviationStrategy deviation = DeviationStrategy::LogprobStd;
};

struct FeatureMatrix {
  std::vector<std::string> doc_ids;
  std::vector<std::string> langs;
  std::vector<std::string> labels;
  std::vector<Feature> columns;
  std::vector<Feature> omitted;
  std::vector<std::vector<double>> rows;

  std::size_t size() const { return rows.size(); }
  FeatureMatrix subset(const std::vector<std::size_t>& idx) const;
  FeatureMatrix select_columns(const std::vector<Feature>& wanted) const;
  std::vector<std::string> column_names() const;
};

// Row order follows corpus order; any scoring failure aborts naming the doc.
FeatureMatrix featurize(const Corpus& corpus, const ScorerSet& scorers, int jobs = 1);

std::string feature_matrix_to_csv(const FeatureMatrix& m);
FeatureMatrix feature_matrix_from_csv(const std::string& text, const std::string& where = "<memory>");
void save_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix load_feature_matrix(const std::filesystem::path& path);

}  // namespace attribkit
