#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attribkit/corpus.hpp"

namespace attribkit {

struct SyntheticLanguageSpec {
  std::string code;
  std::string family = "Synthetic";
  std::string script = "Latin";
  std::vector<std::string> alphabet;
  int order = 2;                 // a token depends on the previous order-1 tokens
  double concentration = 0.5;    // Dirichlet concentration of each transition row
  std::optional<std::string> parent;
  double divergence = 0.0;       // 0 = parent's table, 1 = independent table
  std::uint64_t seed = 0;
};

struct SyntheticGeneratorSpec {
  std::string name;
  double temperature = 1.0;
  std::optional<int> order;   // lower order = marginalize the oldest context tokens
  std::vector<double> bias;   // per alphabet token; empty = zero
  double bias_scale = 0.0;    // when bias is empty: N(0, scale) draws from seed
  std::uint64_t seed = 0;
};

// Markov source over an alphabet. Context positions use index alphabet.size()
// as the begin marker.
class MarkovSource {
 public:
  MarkovSource() = default;
  MarkovSource(std::vector<std::string> alphabet, int order);

  static MarkovSource random(std::vector<std::string> alphabet, int order, double concentration,
                             std::uint64_t seed);
  // (1 - delta) * a + delta * b, row by row.
  static MarkovSource interpolate(const MarkovSource& a, const MarkovSource& b, double delta);

  const std::vector<std::string>& alphabet() const { return alphabet_; }
  int order() const { return order_; }
  std::size_t num_contexts() const { return table_.size(); }
  std::size_t context_index(std::span<const int> context) const;
  const std::vector<double>& row(std::size_t context) const { return table_[context]; }
  std::vector<double>& row(std::size_t context) { return table_[context]; }
  const std::vector<double>& next(std::span<const int> context) const { return table_[context_index(context)]; }

  std::vector<int> sample_ids(std::size_t length, std::uint64_t seed) const;
  std::string sample(std::size_t length, std::uint64_t seed) const;

 private:
  std::vector<std::string> alphabet_;
  int order_ = 1;
  std::vector<std::vector<double>> table_;
};

struct DocumentSampler {
  std::string label;
  MarkovSource source;

  std::string sample(std::size_t length, std::uint64_t seed) const { return source.sample(length, seed); }
};

MarkovSource build_language(const SyntheticLanguageSpec& spec, const MarkovSource* parent = nullptr);
DocumentSampler spawn_generator(const MarkovSource& language, const SyntheticGeneratorSpec& spec);

// Total-variation distance between two rows.
double total_variation(std::span<const double> p, std::span<const double> q);

struct SynthSpec {
  std::vector<SyntheticLanguageSpec> languages;
  std::vector<SyntheticGeneratorSpec> generators;  // machine classes; human is implicit
  std::string human_label = "human";
  std::size_t train_per_cell = 100;
  std::size_t test_per_cell = 30;
  std::size_t doc_length = 400;
  std::uint64_t seed = 0;

  static SynthSpec from_json(const std::string& text);
  std::string to_json() const;
  LanguageRegistry registry_extension(const LanguageRegistry& base) const;
};

// Three languages (xa, xb derived from xa at divergence 0.2, xc independent)
// and seven separated generators named after the built-in classes.
SynthSpec default_synth_spec(std::uint64_t seed, bool identical_generators = false);

Corpus generate_dataset(const SynthSpec& spec);

}  // namespace attribkit
