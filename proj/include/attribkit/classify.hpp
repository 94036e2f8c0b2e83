#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "attribkit/features.hpp"

namespace attribkit {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

Matrix to_matrix(const std::vector<std::vector<double>>& rows);

// Per-column z-scoring fit on training rows only. Columns whose population
// standard deviation is below kMinScale map to 0.
class Standardizer {
 public:
  static constexpr double kMinScale = 1e-12;

  static Standardizer fit(const Matrix& X);
  Matrix transform(const Matrix& X) const;

  const Vector& mean() const { return mean_; }
  const Vector& scale() const { return scale_; }
  Standardizer(Vector mean, Vector scale) : mean_(std::move(mean)), scale_(std::move(scale)) {}
  Standardizer() = default;

 private:
  Vector mean_;
  Vector scale_;
};

enum class Activation { Relu, Tanh };
const char* to_string(Activation a);
Activation parse_activation(const std::string& s);

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out
};

// Softmax classifier over a stack of dense layers. With no hidden layers it
// is multinomial logistic regression.
class Network {
 public:
  Network() = default;
  Network(std::vector<int> sizes, Activation act);

  static Network glorot(std::vector<int> sizes, Activation act, std::uint64_t seed);

  const std::vector<int>& sizes() const { return sizes_; }
  int input_size() const { return sizes_.front(); }
  int num_classes() const { return sizes_.back(); }
  Activation activation() const { return act_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> params);

  Matrix predict_proba(const Matrix& X) const;

  // Mean cross-entropy + (l2 / 2) * sum of squared weights (biases excluded).
  // When grad is non-null it receives the gradient with the same shapes.
  double loss(const Matrix& X, std::span<const int> y, double l2, Network* grad = nullptr) const;

 private:
  std::vector<int> sizes_;
  Activation act_ = Activation::Relu;
  std::vector<DenseLayer> layers_;
};

// Largest learning rate for which full-batch softmax training on
// standardized features (up to 19 columns) is guaranteed non-increasing.
inline constexpr double kSoftmaxStableLearningRate = 0.1;

struct TrainConfig {
  std::vector<int> hidden = {100};
  double learning_rate = 1e-3;
  double l2 = 1e-4;
  int max_steps = 1000;
  double momentum = 0.9;
  int batch_size = 200;
  Activation activation = Activation::Relu;
  // Early stop once the epoch loss fails to improve by tol for this many epochs (0 disables).
  double tol = 1e-4;
  int n_iter_no_change = 10;
};

struct TrainResult {
  Network net;
  std::vector<double> loss_trace;  // [0] = initial loss
};

// Full-batch gradient descent on L2-regularized cross-entropy, zero init.
TrainResult train_softmax(const Matrix& X, std::span<const int> y, int num_classes, double l2, double learning_rate,
                          int steps, std::uint64_t seed, double momentum = 0.0);

// Mini-batch gradient descent with seeded shuffling and Glorot init.
TrainResult train_feedforward(const Matrix& X, std::span<const int> y, int num_classes, const TrainConfig& cfg,
                              std::uint64_t seed);

enum class ClassifierFamily { Softmax, FeedForward };
const char* to_string(ClassifierFamily f);
ClassifierFamily parse_family(const std::string& s);

struct HyperGrid {
  ClassifierFamily family = ClassifierFamily::FeedForward;
  std::vector<std::vector<int>> hidden = {{100}};
  std::vector<double> learning_rates = {1e-3};
  std::vector<double> l2 = {1e-4};
  int folds = 5;
  int max_steps = 1000;
  double momentum = 0.9;
  int batch_size = 200;
  Activation activation = Activation::Relu;

  std::vector<TrainConfig> candidates() const;  // hidden-major, then lr, then l2
};

struct CandidateScore {
  TrainConfig config;
  std::vector<double> fold_macro_f1;
  double mean_macro_f1 = 0.0;
};

struct GridResult {
  std::size_t best = 0;
  std::vector<CandidateScore> table;
};

// Stratified assignment: every class appears in every fold with count
// within 1 of class_count / folds.
std::vector<int> stratified_folds(std::span<const int> y, int num_classes, int folds, std::uint64_t seed);

// Fits a standardizer per training fold; ties resolve to the first candidate.
GridResult grid_search_cv(const Matrix& X, std::span<const int> y, int num_classes, const HyperGrid& grid,
                          std::uint64_t seed, int jobs = 1);

TrainResult train_family(ClassifierFamily family, const Matrix& Xs, std::span<const int> y, int num_classes,
                         const TrainConfig& cfg, std::uint64_t seed);

// Label = argmax of the probability row, ties to the lowest index.
std::vector<int> argmax_rows(const Matrix& proba);

// Standardizer + classifier + label order + provenance.
struct AttributionModel {
  static constexpr int kFormatVersion = 1;

  ClassifierFamily family = ClassifierFamily::FeedForward;
  std::vector<Feature> features;
  std::vector<std::string> labels;
  Standardizer standardizer;
  Network net;
  TrainConfig config;
  std::uint64_t seed = 0;
  std::string provenance;  // JSON text (grid table, training langs...)

  Matrix predict_proba(const FeatureMatrix& fm) const;
  std::vector<std::string> predict(const FeatureMatrix& fm) const;

  std::string to_json() const;
  static AttributionModel from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static AttributionModel load(const std::filesystem::path& path);
};

struct FitOutcome {
  AttributionModel model;
  GridResult grid;
  std::vector<double> loss_trace;
};

// Grid search on the training matrix, then refit on all rows with the best
// candidate. Label order follows `label_order`, restricted to labels present.
FitOutcome fit_attribution_model(const FeatureMatrix& train, const std::vector<Feature>& features,
                                 const HyperGrid& grid, const std::vector<std::string>& label_order,
                                 std::uint64_t seed, int jobs = 1);

}  // namespace attribkit
