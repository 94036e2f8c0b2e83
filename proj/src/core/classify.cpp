#include "attribkit/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <json.hpp>

#include "attribkit/error.hpp"
#include "attribkit/evalx.hpp"
#include "attribkit/util.hpp"

namespace attribkit {

using nlohmann::json;

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = rows.empty() ? Eigen::Index{0} : static_cast<Eigen::Index>(rows.front().size());
  Matrix X(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(r.size()) != d)
      fail(ErrorKind::InvalidArgument, "ragged feature rows at row " + std::to_string(i));
    for (Eigen::Index j = 0; j < d; ++j) {
      const double v = r[static_cast<std::size_t>(j)];
      if (!std::isfinite(v)) fail(ErrorKind::Validation, "non-finite feature value at row " + std::to_string(i));
      X(i, j) = v;
    }
  }
  return X;
}

Standardizer Standardizer::fit(const Matrix& X) {
  if (X.rows() == 0) fail(ErrorKind::InvalidArgument, "cannot fit a standardizer on zero rows");
  Vector mean = X.colwise().mean().transpose();
  Vector scale(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    scale(j) = std::sqrt((X.col(j).array() - mean(j)).square().mean());
  return {std::move(mean), std::move(scale)};
}

Matrix Standardizer::transform(const Matrix& X) const {
  if (X.cols() != mean_.size())
    fail(ErrorKind::InvalidArgument, "standardizer expects " + std::to_string(mean_.size()) + " columns, got " +
                                         std::to_string(X.cols()));
  Matrix out(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (scale_(j) < kMinScale)
      out.col(j).setZero();
    else
      out.col(j) = (X.col(j).array() - mean_(j)) / scale_(j);
  }
  return out;
}

const char* to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  fail(ErrorKind::InvalidArgument, "unknown activation '" + s + "'");
}

Network::Network(std::vector<int> sizes, Activation act) : sizes_(std::move(sizes)), act_(act) {
  if (sizes_.size() < 2) fail(ErrorKind::InvalidArgument, "network needs at least input and output sizes");
  for (int s : sizes_)
    if (s < 1) fail(ErrorKind::InvalidArgument, "layer sizes must be >= 1");
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l)
    layers_.push_back({Matrix::Zero(sizes_[l + 1], sizes_[l]), Vector::Zero(sizes_[l + 1])});
}

Network Network::glorot(std::vector<int> sizes, Activation act, std::uint64_t seed) {
  Network net(std::move(sizes), act);
  std::mt19937_64 rng(seed);
  for (auto& layer : net.layers_) {
    const double bound = std::sqrt(6.0 / static_cast<double>(layer.weights.rows() + layer.weights.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) layer.weights.data()[i] = dist(rng);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = dist(rng);
  }
  return net;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

std::vector<double> Network::parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : layers_) {
    out.insert(out.end(), l.weights.data(), l.weights.data() + l.weights.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
  return out;
}

void Network::set_parameters(std::span<const double> params) {
  if (params.size() != parameter_count()) fail(ErrorKind::InvalidArgument, "parameter vector has wrong length");
  std::size_t k = 0;
  for (auto& l : layers_) {
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(k), l.weights.size(), l.weights.data());
    k += static_cast<std::size_t>(l.weights.size());
    std::copy_n(params.begin() + static_cast<std::ptrdiff_t>(k), l.bias.size(), l.bias.data());
    k += static_cast<std::size_t>(l.bias.size());
  }
}

namespace {

void activate(Matrix& Z, Activation act) {
  if (act == Activation::Relu)
    Z = Z.cwiseMax(0.0);
  else
    Z = Z.array().tanh().matrix();
}

// Row-wise log-softmax.
Matrix log_softmax(const Matrix& Z) {
  Matrix out(Z.rows(), Z.cols());
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const double m = Z.row(i).maxCoeff();
    const double lse = m + std::log((Z.row(i).array() - m).exp().sum());
    out.row(i) = Z.row(i).array() - lse;
  }
  return out;
}

}  // namespace

Matrix Network::predict_proba(const Matrix& X) const {
  if (X.cols() != input_size())
    fail(ErrorKind::InvalidArgument, "model expects " + std::to_string(input_size()) + " features, got " +
                                         std::to_string(X.cols()));
  Matrix A = X;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix Z = (A * layers_[l].weights.transpose()).rowwise() + layers_[l].bias.transpose();
    if (l + 1 < layers_.size()) activate(Z, act_);
    A = std::move(Z);
  }
  return log_softmax(A).array().exp().matrix();
}

double Network::loss(const Matrix& X, std::span<const int> y, double l2, Network* grad) const {
  const auto n = X.rows();
  if (static_cast<std::size_t>(n) != y.size()) fail(ErrorKind::InvalidArgument, "X and y row counts differ");
  if (X.cols() != input_size()) fail(ErrorKind::InvalidArgument, "feature dimension mismatch");
  const std::size_t L = layers_.size();
  std::vector<Matrix> acts;  // acts[l] = input to layer l
  acts.reserve(L + 1);
  acts.push_back(X);
  for (std::size_t l = 0; l < L; ++l) {
    Matrix Z = (acts.back() * layers_[l].weights.transpose()).rowwise() + layers_[l].bias.transpose();
    if (l + 1 < L) activate(Z, act_);
    acts.push_back(std::move(Z));
  }
  const Matrix logp = log_softmax(acts.back());
  double ce = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) ce -= logp(i, y[static_cast<std::size_t>(i)]);
  ce /= static_cast<double>(n);
  double reg = 0.0;
  for (const auto& layer : layers_) reg += layer.weights.squaredNorm();
  const double total = ce + 0.5 * l2 * reg;
  if (!grad) return total;

  if (grad->sizes_ != sizes_) *grad = Network(sizes_, act_);
  Matrix delta = logp.array().exp().matrix();
  for (Eigen::Index i = 0; i < n; ++i) delta(i, y[static_cast<std::size_t>(i)]) -= 1.0;
  delta /= static_cast<double>(n);
  for (std::size_t l = L; l-- > 0;) {
    auto& g = grad->layers_[l];
    g.weights = delta.transpose() * acts[l] + l2 * layers_[l].weights;
    g.bias = delta.colwise().sum().transpose();
    if (l == 0) break;
    Matrix back = delta * layers_[l].weights;
    const Matrix& a = acts[l];  // post-activation output of layer l-1
    if (act_ == Activation::Relu)
      delta = (a.array() > 0.0).select(back, 0.0);
    else
      delta = back.array() * (1.0 - a.array().square());
  }
  return total;
}

namespace {

void momentum_step(Network& net, Network& velocity, const Network& grad, double lr, double momentum) {
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    auto& v = velocity.layers()[l];
    const auto& g = grad.layers()[l];
    v.weights = momentum * v.weights - lr * g.weights;
    v.bias = momentum * v.bias - lr * g.bias;
    net.layers()[l].weights += v.weights;
    net.layers()[l].bias += v.bias;
  }
}

void check_training_data(const Matrix& X, std::span<const int> y, int num_classes) {
  if (X.rows() == 0) fail(ErrorKind::InvalidArgument, "empty training data");
  if (static_cast<std::size_t>(X.rows()) != y.size()) fail(ErrorKind::InvalidArgument, "X and y row counts differ");
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    if (!X.row(i).allFinite()) fail(ErrorKind::Validation, "non-finite feature in row " + std::to_string(i));
  std::vector<bool> seen(static_cast<std::size_t>(num_classes), false);
  for (int label : y) {
    if (label < 0 || label >= num_classes) fail(ErrorKind::InvalidArgument, "label index out of range");
    seen[static_cast<std::size_t>(label)] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2)
    fail(ErrorKind::Validation, "training data must contain at least two distinct classes");
}

}  // namespace

TrainResult train_softmax(const Matrix& X, std::span<const int> y, int num_classes, double l2, double learning_rate,
                          int steps, std::uint64_t /*seed*/, double momentum) {
  check_training_data(X, y, num_classes);
  TrainResult out;
  out.net = Network({static_cast<int>(X.cols()), num_classes}, Activation::Relu);
  Network velocity({static_cast<int>(X.cols()), num_classes}, Activation::Relu);
  Network grad;
  for (int step = 0; step < steps; ++step) {
    out.loss_trace.push_back(out.net.loss(X, y, l2, &grad));
    momentum_step(out.net, velocity, grad, learning_rate, momentum);
  }
  out.loss_trace.push_back(out.net.loss(X, y, l2));
  return out;
}

TrainResult train_feedforward(const Matrix& X, std::span<const int> y, int num_classes, const TrainConfig& cfg,
                              std::uint64_t seed) {
  check_training_data(X, y, num_classes);
  std::vector<int> sizes = {static_cast<int>(X.cols())};
  for (int h : cfg.hidden) {
    if (h < 1) fail(ErrorKind::InvalidArgument, "hidden layer sizes must be >= 1");
    sizes.push_back(h);
  }
  sizes.push_back(num_classes);

  TrainResult out;
  out.net = Network::glorot(sizes, cfg.activation, derive_seed(seed, "init"));
  Network velocity(sizes, cfg.activation);
  Network grad;
  const auto n = static_cast<std::size_t>(X.rows());
  const std::size_t batch = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, cfg.batch_size)), 1, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(seed, "shuffle"));

  out.loss_trace.push_back(out.net.loss(X, y, cfg.l2));
  double best = out.loss_trace.back();
  int stale = 0;
  Matrix Xb;
  std::vector<int> yb;
  for (int epoch = 0; epoch < cfg.max_steps; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t bs = std::min(batch, n - start);
      Xb.resize(static_cast<Eigen::Index>(bs), X.cols());
      yb.resize(bs);
      for (std::size_t j = 0; j < bs; ++j) {
        Xb.row(static_cast<Eigen::Index>(j)) = X.row(static_cast<Eigen::Index>(order[start + j]));
        yb[j] = y[order[start + j]];
      }
      epoch_loss += out.net.loss(Xb, yb, cfg.l2, &grad) * static_cast<double>(bs);
      momentum_step(out.net, velocity, grad, cfg.learning_rate, cfg.momentum);
    }
    epoch_loss /= static_cast<double>(n);
    out.loss_trace.push_back(epoch_loss);
    if (cfg.n_iter_no_change > 0) {
      stale = epoch_loss > best - cfg.tol ? stale + 1 : 0;
      best = std::min(best, epoch_loss);
      if (stale >= cfg.n_iter_no_change) break;
    }
  }
  return out;
}

const char* to_string(ClassifierFamily f) { return f == ClassifierFamily::Softmax ? "softmax" : "feedforward"; }

ClassifierFamily parse_family(const std::string& s) {
  if (s == "softmax" || s == "logistic") return ClassifierFamily::Softmax;
  if (s == "feedforward" || s == "mlp") return ClassifierFamily::FeedForward;
  fail(ErrorKind::InvalidArgument, "unknown classifier family '" + s + "'");
}

std::vector<TrainConfig> HyperGrid::candidates() const {
  std::vector<TrainConfig> out;
  const std::vector<std::vector<int>> hs =
      family == ClassifierFamily::Softmax ? std::vector<std::vector<int>>{{}} : hidden;
  for (const auto& h : hs)
    for (double lr : learning_rates)
      for (double reg : l2) {
        TrainConfig c;
        c.hidden = h;
        c.learning_rate = lr;
        c.l2 = reg;
        c.max_steps = max_steps;
        c.momentum = momentum;
        c.batch_size = batch_size;
        c.activation = activation;
        out.push_back(c);
      }
  return out;
}

std::vector<int> stratified_folds(std::span<const int> y, int num_classes, int folds, std::uint64_t seed) {
  if (folds < 2) fail(ErrorKind::InvalidArgument, "cross-validation needs at least 2 folds");
  std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < y.size(); ++i) members[static_cast<std::size_t>(y[i])].push_back(i);
  std::vector<int> fold(y.size(), -1);
  std::size_t offset = 0;
  for (int c = 0; c < num_classes; ++c) {
    auto& idx = members[static_cast<std::size_t>(c)];
    if (idx.empty()) continue;
    if (idx.size() < static_cast<std::size_t>(folds))
      fail(ErrorKind::Validation, "class " + std::to_string(c) + " has " + std::to_string(idx.size()) +
                                      " samples, fewer than " + std::to_string(folds) + " folds; use fewer folds");
    std::mt19937_64 rng(derive_seed(seed, "folds", static_cast<std::uint64_t>(c)));
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t j = 0; j < idx.size(); ++j)
      fold[idx[j]] = static_cast<int>((offset + j) % static_cast<std::size_t>(folds));
    offset += idx.size();
  }
  return fold;
}

TrainResult train_family(ClassifierFamily family, const Matrix& Xs, std::span<const int> y, int num_classes,
                         const TrainConfig& cfg, std::uint64_t seed) {
  if (family == ClassifierFamily::Softmax)
    return train_softmax(Xs, y, num_classes, cfg.l2, cfg.learning_rate, cfg.max_steps, seed, cfg.momentum);
  return train_feedforward(Xs, y, num_classes, cfg, seed);
}

std::vector<int> argmax_rows(const Matrix& proba) {
  std::vector<int> out(static_cast<std::size_t>(proba.rows()));
  for (Eigen::Index i = 0; i < proba.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < proba.cols(); ++j)
      if (proba(i, j) > proba(i, best)) best = j;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

namespace {

Matrix take_rows(const Matrix& X, const std::vector<std::size_t>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), X.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

}  // namespace

GridResult grid_search_cv(const Matrix& X, std::span<const int> y, int num_classes, const HyperGrid& grid,
                          std::uint64_t seed, int jobs) {
  if (static_cast<std::size_t>(X.rows()) < static_cast<std::size_t>(grid.folds))
    fail(ErrorKind::Validation, "fewer rows than folds");
  const auto folds = stratified_folds(y, num_classes, grid.folds, seed);
  const auto candidates = grid.candidates();
  if (candidates.empty()) fail(ErrorKind::InvalidArgument, "hyperparameter grid is empty");

  std::vector<std::string> class_names;
  for (int c = 0; c < num_classes; ++c) class_names.push_back(std::to_string(c));

  const std::size_t F = static_cast<std::size_t>(grid.folds);
  std::vector<double> scores(candidates.size() * F, 0.0);
  parallel_for(scores.size(), jobs, [&](std::size_t task) {
    const std::size_t c = task / F;
    const int f = static_cast<int>(task % F);
    std::vector<std::size_t> tr, va;
    for (std::size_t i = 0; i < folds.size(); ++i) (folds[i] == f ? va : tr).push_back(i);
    const Matrix Xtr = take_rows(X, tr);
    const auto sc = Standardizer::fit(Xtr);
    std::vector<int> ytr, yva;
    for (auto i : tr) ytr.push_back(y[i]);
    for (auto i : va) yva.push_back(y[i]);
    const auto res = train_family(grid.family, sc.transform(Xtr), ytr, num_classes, candidates[c],
                                  derive_seed(seed, "cv", static_cast<std::uint64_t>(f)));
    const auto pred = argmax_rows(res.net.predict_proba(sc.transform(take_rows(X, va))));
    scores[task] = f1_scores(confusion(std::span<const int>(yva), std::span<const int>(pred), class_names)).macro;
  });

  GridResult out;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    CandidateScore cs;
    cs.config = candidates[c];
    cs.fold_macro_f1.assign(scores.begin() + static_cast<std::ptrdiff_t>(c * F),
                            scores.begin() + static_cast<std::ptrdiff_t>((c + 1) * F));
    cs.mean_macro_f1 = std::accumulate(cs.fold_macro_f1.begin(), cs.fold_macro_f1.end(), 0.0) / static_cast<double>(F);
    if (!out.table.empty() && cs.mean_macro_f1 > out.table[out.best].mean_macro_f1) out.best = c;
    out.table.push_back(std::move(cs));
  }
  return out;
}

Matrix AttributionModel::predict_proba(const FeatureMatrix& fm) const {
  const auto cols = fm.select_columns(features);
  return net.predict_proba(standardizer.transform(to_matrix(cols.rows)));
}

std::vector<std::string> AttributionModel::predict(const FeatureMatrix& fm) const {
  std::vector<std::string> out;
  for (int i : argmax_rows(predict_proba(fm))) out.push_back(labels[static_cast<std::size_t>(i)]);
  return out;
}

namespace {

json config_to_json(const TrainConfig& c) {
  return {{"hidden", c.hidden},     {"learning_rate", c.learning_rate}, {"l2", c.l2},
          {"max_steps", c.max_steps}, {"momentum", c.momentum},        {"batch_size", c.batch_size},
          {"activation", to_string(c.activation)}, {"tol", c.tol},      {"n_iter_no_change", c.n_iter_no_change}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig c;
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.l2 = j.at("l2").get<double>();
  c.max_steps = j.at("max_steps").get<int>();
  c.momentum = j.at("momentum").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.tol = j.value("tol", c.tol);
  c.n_iter_no_change = j.value("n_iter_no_change", c.n_iter_no_change);
  return c;
}

}  // namespace

std::string AttributionModel::to_json() const {
  json doc;
  doc["format_version"] = kFormatVersion;
  doc["family"] = to_string(family);
  std::vector<std::string> fnames;
  for (auto f : features) fnames.emplace_back(feature_name(f));
  doc["features"] = fnames;
  doc["labels"] = labels;
  doc["standardizer"] = {{"mean", std::vector<double>(standardizer.mean().data(), standardizer.mean().data() + standardizer.mean().size())},
                         {"scale", std::vector<double>(standardizer.scale().data(), standardizer.scale().data() + standardizer.scale().size())}};
  json layers = json::array();
  for (const auto& l : net.layers())
    layers.push_back({{"rows", l.weights.rows()},
                      {"cols", l.weights.cols()},
                      {"weights", std::vector<double>(l.weights.data(), l.weights.data() + l.weights.size())},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  doc["network"] = {{"sizes", net.sizes()}, {"activation", to_string(net.activation())}, {"layers", layers}};
  doc["config"] = config_to_json(config);
  doc["seed"] = seed;
  doc["provenance"] = provenance.empty() ? json::object() : json::parse(provenance);
  return doc.dump(1);
}

AttributionModel AttributionModel::from_json(const std::string& text) {
  AttributionModel m;
  try {
    const auto doc = json::parse(text);
    const int version = doc.at("format_version").get<int>();
    if (version != kFormatVersion)
      fail(ErrorKind::Parse, "unsupported model format_version " + std::to_string(version));
    m.family = parse_family(doc.at("family").get<std::string>());
    for (const auto& f : doc.at("features")) m.features.push_back(parse_feature(f.get<std::string>()));
    m.labels = doc.at("labels").get<std::vector<std::string>>();
    auto mean = doc.at("standardizer").at("mean").get<std::vector<double>>();
    auto scale = doc.at("standardizer").at("scale").get<std::vector<double>>();
    m.standardizer = Standardizer(Eigen::Map<Vector>(mean.data(), static_cast<Eigen::Index>(mean.size())),
                                  Eigen::Map<Vector>(scale.data(), static_cast<Eigen::Index>(scale.size())));
    const auto& nj = doc.at("network");
    m.net = Network(nj.at("sizes").get<std::vector<int>>(), parse_activation(nj.at("activation").get<std::string>()));
    const auto& lj = nj.at("layers");
    if (lj.size() != m.net.layers().size()) fail(ErrorKind::Parse, "model layer count does not match sizes");
    for (std::size_t l = 0; l < lj.size(); ++l) {
      auto& layer = m.net.layers()[l];
      auto w = lj[l].at("weights").get<std::vector<double>>();
      auto b = lj[l].at("bias").get<std::vector<double>>();
      if (w.size() != static_cast<std::size_t>(layer.weights.size()) || b.size() != static_cast<std::size_t>(layer.bias.size()))
        fail(ErrorKind::Parse, "model layer " + std::to_string(l) + " has wrong shape");
      std::copy(w.begin(), w.end(), layer.weights.data());
      std::copy(b.begin(), b.end(), layer.bias.data());
    }
    m.config = config_from_json(doc.at("config"));
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.provenance = doc.at("provenance").dump();
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed model file: ") + e.what());
  }
  if (static_cast<std::size_t>(m.net.num_classes()) != m.labels.size() ||
      static_cast<std::size_t>(m.net.input_size()) != m.features.size())
    fail(ErrorKind::Parse, "model shape does not match its label/feature lists");
  return m;
}

void AttributionModel::save(const std::filesystem::path& path) const { write_file_atomic(path, to_json()); }

AttributionModel AttributionModel::load(const std::filesystem::path& path) { return from_json(read_file(path)); }

FitOutcome fit_attribution_model(const FeatureMatrix& train, const std::vector<Feature>& features,
                                 const HyperGrid& grid, const std::vector<std::string>& label_order,
                                 std::uint64_t seed, int jobs) {
  const auto cols = train.select_columns(features);
  std::set<std::string> present(cols.labels.begin(), cols.labels.end());
  std::vector<std::string> labels;
  for (const auto& l : label_order)
    if (present.erase(l)) labels.push_back(l);
  labels.insert(labels.end(), present.begin(), present.end());
  if (labels.size() < 2) fail(ErrorKind::Validation, "training data must contain at least two distinct classes");

  std::vector<int> y;
  for (const auto& l : cols.labels)
    y.push_back(static_cast<int>(std::find(labels.begin(), labels.end(), l) - labels.begin()));
  Matrix X;
  try {
    X = to_matrix(cols.rows);
  } catch (const Error& e) {
    fail(e.kind(), std::string(e.what()));
  }
  const int k = static_cast<int>(labels.size());

  FitOutcome out;
  out.grid = grid_search_cv(X, y, k, grid, derive_seed(seed, "grid"), jobs);
  const auto& best = out.grid.table[out.grid.best].config;

  auto& m = out.model;
  m.family = grid.family;
  m.features = features;
  m.labels = labels;
  m.standardizer = Standardizer::fit(X);
  m.config = best;
  m.seed = seed;
  auto res = train_family(grid.family, m.standardizer.transform(X), y, k, best, derive_seed(seed, "final"));
  m.net = std::move(res.net);
  out.loss_trace = std::move(res.loss_trace);

  json prov;
  prov["train_rows"] = X.rows();
  prov["best_candidate"] = out.grid.best;
  json table = json::array();
  for (const auto& c : out.grid.table)
    table.push_back({{"config", config_to_json(c.config)}, {"fold_macro_f1", c.fold_macro_f1}, {"mean_macro_f1", c.mean_macro_f1}});
  prov["grid"] = std::move(table);
  prov["final_loss"] = out.loss_trace.empty() ? 0.0 : out.loss_trace.back();
  m.provenance = prov.dump();
  return out;
}

}  // namespace attribkit
