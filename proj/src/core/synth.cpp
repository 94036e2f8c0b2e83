#include "attribkit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include <json.hpp>

#include "attribkit/error.hpp"
#include "attribkit/ngram.hpp"
#include "attribkit/util.hpp"

namespace attribkit {

using nlohmann::json;

MarkovSource::MarkovSource(std::vector<std::string> alphabet, int order) : alphabet_(std::move(alphabet)), order_(order) {
  if (alphabet_.empty()) fail(ErrorKind::InvalidArgument, "synthetic language alphabet must be non-empty");
  if (order_ < 1) fail(ErrorKind::InvalidArgument, "synthetic language order must be >= 1");
  std::size_t contexts = 1;
  for (int i = 0; i < order_ - 1; ++i) contexts *= alphabet_.size() + 1;
  table_.assign(contexts, std::vector<double>(alphabet_.size(), 1.0 / static_cast<double>(alphabet_.size())));
}

MarkovSource MarkovSource::random(std::vector<std::string> alphabet, int order, double concentration,
                                  std::uint64_t seed) {
  if (!(concentration > 0)) fail(ErrorKind::InvalidArgument, "concentration must be > 0");
  MarkovSource src(std::move(alphabet), order);
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(concentration, 1.0);
  for (auto& row : src.table_) {
    double sum = 0.0;
    for (auto& p : row) {
      p = std::max(gamma(rng), 1e-300);
      sum += p;
    }
    for (auto& p : row) p /= sum;
  }
  return src;
}

MarkovSource MarkovSource::interpolate(const MarkovSource& a, const MarkovSource& b, double delta) {
  if (a.alphabet_ != b.alphabet_ || a.order_ != b.order_)
    fail(ErrorKind::InvalidArgument, "interpolated sources must share alphabet and order");
  if (delta < 0.0 || delta > 1.0) fail(ErrorKind::InvalidArgument, "divergence must lie in [0, 1]");
  MarkovSource out = a;
  if (delta == 0.0) return out;
  for (std::size_t c = 0; c < out.table_.size(); ++c)
    for (std::size_t v = 0; v < out.table_[c].size(); ++v)
      out.table_[c][v] = (1.0 - delta) * a.table_[c][v] + delta * b.table_[c][v];
  return out;
}

std::size_t MarkovSource::context_index(std::span<const int> context) const {
  std::size_t idx = 0;
  for (int id : context) idx = idx * (alphabet_.size() + 1) + static_cast<std::size_t>(id);
  return idx;
}

std::vector<int> MarkovSource::sample_ids(std::size_t length, std::uint64_t seed) const {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int begin = static_cast<int>(alphabet_.size());
  std::vector<int> ctx(static_cast<std::size_t>(order_ - 1), begin);
  std::vector<int> out;
  out.reserve(length);
  for (std::size_t i = 0; i < length; ++i) {
    const auto& p = next(ctx);
    double u = unit(rng), acc = 0.0;
    int pick = static_cast<int>(p.size()) - 1;
    for (std::size_t v = 0; v < p.size(); ++v) {
      acc += p[v];
      if (u < acc) {
        pick = static_cast<int>(v);
        break;
      }
    }
    out.push_back(pick);
    if (!ctx.empty()) {
      std::rotate(ctx.begin(), ctx.begin() + 1, ctx.end());
      ctx.back() = pick;
    }
  }
  return out;
}

std::string MarkovSource::sample(std::size_t length, std::uint64_t seed) const {
  std::string out;
  for (int id : sample_ids(length, seed)) out += alphabet_[static_cast<std::size_t>(id)];
  return out;
}

MarkovSource build_language(const SyntheticLanguageSpec& spec, const MarkovSource* parent) {
  if (spec.alphabet.empty()) fail(ErrorKind::InvalidArgument, "language '" + spec.code + "': empty alphabet");
  auto own = MarkovSource::random(spec.alphabet, spec.order, spec.concentration, derive_seed(spec.seed, "lang/" + spec.code));
  if (!parent) return own;
  return MarkovSource::interpolate(*parent, own, spec.divergence);
}

namespace {

// Averages rows over the oldest (from.order - to_order) context positions.
MarkovSource reduce_order(const MarkovSource& from, int to_order) {
  MarkovSource out(from.alphabet(), to_order);
  const std::size_t base = from.alphabet().size() + 1;
  const int dropped = from.order() - to_order;
  std::size_t block = 1;
  for (int i = 0; i < dropped; ++i) block *= base;
  for (std::size_t c = 0; c < out.num_contexts(); ++c) {
    auto& row = out.row(c);
    std::fill(row.begin(), row.end(), 0.0);
    for (std::size_t prefix = 0; prefix < block; ++prefix) {
      const auto& src = from.row(prefix * out.num_contexts() + c);
      for (std::size_t v = 0; v < row.size(); ++v) row[v] += src[v];
    }
    for (auto& p : row) p /= static_cast<double>(block);
  }
  return out;
}

}  // namespace

DocumentSampler spawn_generator(const MarkovSource& language, const SyntheticGeneratorSpec& spec) {
  if (!(spec.temperature > 0)) fail(ErrorKind::InvalidArgument, "generator '" + spec.name + "': temperature must be > 0");
  const std::size_t A = language.alphabet().size();
  std::vector<double> bias = spec.bias;
  if (bias.empty()) {
    bias.assign(A, 0.0);
    if (spec.bias_scale > 0) {
      std::mt19937_64 rng(derive_seed(spec.seed, "bias/" + spec.name));
      std::normal_distribution<double> normal(0.0, spec.bias_scale);
      for (auto& b : bias) b = normal(rng);
    }
  }
  if (bias.size() != A)
    fail(ErrorKind::InvalidArgument, "generator '" + spec.name + "': bias length must equal alphabet size");

  DocumentSampler out{spec.name, language};
  if (spec.order && *spec.order < language.order()) {
    if (*spec.order < 1) fail(ErrorKind::InvalidArgument, "generator '" + spec.name + "': order must be >= 1");
    out.source = reduce_order(language, *spec.order);
  }
  const bool identity = spec.temperature == 1.0 && std::all_of(bias.begin(), bias.end(), [](double b) { return b == 0.0; });
  if (identity) return out;
  for (std::size_t c = 0; c < out.source.num_contexts(); ++c) {
    auto& row = out.source.row(c);
    std::vector<double> logits(A);
    double mx = -INFINITY;
    for (std::size_t v = 0; v < A; ++v) {
      logits[v] = std::log(std::max(row[v], 1e-300)) / spec.temperature + bias[v];
      mx = std::max(mx, logits[v]);
    }
    double sum = 0.0;
    for (std::size_t v = 0; v < A; ++v) sum += (row[v] = std::exp(logits[v] - mx));
    for (auto& p : row) p /= sum;
  }
  return out;
}

double total_variation(std::span<const double> p, std::span<const double> q) {
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
  return 0.5 * d;
}

namespace {

std::vector<std::string> alphabet_from_json(const json& j) {
  if (j.is_string()) return tokenize(j.get<std::string>(), TokenizerMode::Character);
  return j.get<std::vector<std::string>>();
}

}  // namespace

SynthSpec SynthSpec::from_json(const std::string& text) {
  SynthSpec s;
  try {
    const auto doc = json::parse(text);
    s.seed = doc.value("seed", std::uint64_t{0});
    s.human_label = doc.value("human_label", s.human_label);
    if (doc.contains("counts")) {
      s.train_per_cell = doc["counts"].value("train", s.train_per_cell);
      s.test_per_cell = doc["counts"].value("test", s.test_per_cell);
    }
    s.doc_length = doc.value("doc_length", s.doc_length);
    for (const auto& lj : doc.at("languages")) {
      SyntheticLanguageSpec l;
      l.code = lj.at("code").get<std::string>();
      l.family = lj.value("family", l.family);
      l.script = lj.value("script", l.script);
      l.alphabet = alphabet_from_json(lj.at("alphabet"));
      l.order = lj.value("order", l.order);
      l.concentration = lj.value("concentration", l.concentration);
      if (lj.contains("parent") && !lj["parent"].is_null()) l.parent = lj["parent"].get<std::string>();
      l.divergence = lj.value("divergence", l.divergence);
      l.seed = lj.value("seed", std::uint64_t{0});
      s.languages.push_back(std::move(l));
    }
    for (const auto& gj : doc.at("generators")) {
      SyntheticGeneratorSpec g;
      g.name = gj.at("name").get<std::string>();
      g.temperature = gj.value("temperature", 1.0);
      if (gj.contains("order") && !gj["order"].is_null()) g.order = gj["order"].get<int>();
      if (gj.contains("bias")) g.bias = gj["bias"].get<std::vector<double>>();
      g.bias_scale = gj.value("bias_scale", 0.0);
      g.seed = gj.value("seed", std::uint64_t{0});
      s.generators.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed synth spec: ") + e.what());
  }
  if (s.train_per_cell == 0 || s.test_per_cell == 0) fail(ErrorKind::InvalidArgument, "per-cell counts must be > 0");
  return s;
}

std::string SynthSpec::to_json() const {
  json doc;
  doc["seed"] = seed;
  doc["human_label"] = human_label;
  doc["counts"] = {{"train", train_per_cell}, {"test", test_per_cell}};
  doc["doc_length"] = doc_length;
  doc["languages"] = json::array();
  for (const auto& l : languages) {
    json lj = {{"code", l.code},   {"family", l.family},           {"script", l.script},
               {"alphabet", l.alphabet}, {"order", l.order}, {"concentration", l.concentration},
               {"divergence", l.divergence}, {"seed", l.seed}};
    lj["parent"] = l.parent ? json(*l.parent) : json(nullptr);
    doc["languages"].push_back(lj);
  }
  doc["generators"] = json::array();
  for (const auto& g : generators) {
    json gj = {{"name", g.name}, {"temperature", g.temperature}, {"bias", g.bias}, {"bias_scale", g.bias_scale},
               {"seed", g.seed}};
    gj["order"] = g.order ? json(*g.order) : json(nullptr);
    doc["generators"].push_back(gj);
  }
  return doc.dump(2);
}

LanguageRegistry SynthSpec::registry_extension(const LanguageRegistry& base) const {
  auto ext = LanguageRegistry::empty();
  for (const auto& l : languages)
    if (!base.contains(l.code) && !ext.contains(l.code)) ext.add({l.code, l.family, l.script});
  return ext;
}

SynthSpec default_synth_spec(std::uint64_t seed, bool identical_generators) {
  SynthSpec s;
  s.seed = seed;
  const auto alphabet = tokenize("abcdefghijklmnopqrst", TokenizerMode::Character);
  s.languages.push_back({"xa", "Synthetic-A", "Latin", alphabet, 2, 0.5, std::nullopt, 0.0, derive_seed(seed, "xa")});
  s.languages.push_back({"xb", "Synthetic-A", "Latin", alphabet, 2, 0.5, std::string("xa"), 0.2, derive_seed(seed, "xb")});
  s.languages.push_back({"xc", "Synthetic-C", "Latin", alphabet, 2, 0.5, std::nullopt, 0.0, derive_seed(seed, "xc")});
  struct G {
    const char* name;
    double tau;
    std::optional<int> order;
    double bias_scale;
  };
  const std::vector<G> gens = {{"mistral", 0.4, std::nullopt, 0.0}, {"opt", 0.65, std::nullopt, 0.0},
                               {"eagle", 1.6, std::nullopt, 0.0},   {"vicuna", 1.0, std::nullopt, 2.5},
                               {"llama2", 1.0, 1, 0.0},             {"aya", 1.3, 1, 1.0},
                               {"gpt-3.5", 0.65, std::nullopt, 2.0}};
  for (std::size_t i = 0; i < gens.size(); ++i) {
    SyntheticGeneratorSpec g;
    g.name = gens[i].name;
    g.seed = derive_seed(seed, "gen", i);
    if (!identical_generators) {
      g.temperature = gens[i].tau;
      g.order = gens[i].order;
      g.bias_scale = gens[i].bias_scale;
    }
    s.generators.push_back(std::move(g));
  }
  return s;
}

Corpus generate_dataset(const SynthSpec& spec) {
  std::map<std::string, MarkovSource> sources;
  std::vector<TextSample> docs;
  for (const auto& g : spec.generators)
    if (g.name == spec.human_label)
      fail(ErrorKind::InvalidArgument, "generator name '" + g.name + "' collides with the human label");

  for (const auto& lang : spec.languages) {
    if (sources.count(lang.code)) fail(ErrorKind::InvalidArgument, "duplicate synthetic language '" + lang.code + "'");
    const MarkovSource* parent = nullptr;
    if (lang.parent) {
      auto it = sources.find(*lang.parent);
      if (it == sources.end())
        fail(ErrorKind::InvalidArgument, "language '" + lang.code + "': parent '" + *lang.parent + "' must be listed first");
      parent = &it->second;
    }
    const auto& source = sources.emplace(lang.code, build_language(lang, parent)).first->second;

    std::vector<DocumentSampler> samplers;
    for (const auto& g : spec.generators) samplers.push_back(spawn_generator(source, g));
    samplers.push_back({spec.human_label, source});

    for (Split split : {Split::Train, Split::Test}) {
      const std::size_t n = split == Split::Train ? spec.train_per_cell : spec.test_per_cell;
      for (const auto& sampler : samplers) {
        const std::string cell = lang.code + "/" + sampler.label + "/" + to_string(split);
        for (std::size_t i = 0; i < n; ++i) {
          char idx[24];
          std::snprintf(idx, sizeof idx, "%04zu", i);
          TextSample s;
          s.id = lang.code + "-" + sampler.label + "-" + to_string(split) + "-" + idx;
          s.text = sampler.sample(spec.doc_length, derive_seed(spec.seed, "doc/" + cell, i));
          s.lang = lang.code;
          s.label = sampler.label;
          s.split = split;
          docs.push_back(std::move(s));
        }
      }
    }
  }
  return Corpus(std::move(docs));
}

}  // namespace attribkit
