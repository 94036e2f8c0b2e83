#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "attribkit/corpus.hpp"
#include "attribkit/scores.hpp"

namespace fixtures {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("attribkit-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct LanguageSize {
  const char* code;
  std::size_t train;
  std::size_t test;
};

inline const std::vector<LanguageSize>& language_sizes() {
  static const std::vector<LanguageSize> rows = {
      {"nl", 7958, 2386}, {"en", 7954, 2384}, {"de", 7951, 2388}, {"el", 7944, 2384}, {"ar", 7975, 2392},
      {"zh", 7926, 2383}, {"bg", 7954, 2386}, {"uk", 7939, 2385}, {"ru", 7945, 2382}, {"hr", 7951, 2384},
      {"cs", 7962, 2389}, {"pl", 7946, 2383}, {"sk", 7946, 2385}, {"sl", 7947, 2386}, {"pt", 7956, 2388},
      {"ro", 7949, 2386}, {"es", 7947, 2387}, {"hu", 7964, 2385}};
  return rows;
}

// Corpus with the per-language counts of the study corpus; every language
// total is spread over the 8 classes as evenly as possible. Texts are short
// placeholders.
inline attribkit::Corpus sized_corpus() {
  const auto classes = attribkit::ClassRegistry::builtin().names();
  std::vector<attribkit::TextSample> samples;
  samples.reserve(190000);
  for (const auto& row : language_sizes()) {
    for (auto split : {attribkit::Split::Train, attribkit::Split::Test}) {
      const std::size_t total = split == attribkit::Split::Train ? row.train : row.test;
      for (std::size_t c = 0; c < classes.size(); ++c) {
        const std::size_t n = total / classes.size() + (c < total % classes.size() ? 1 : 0);
        for (std::size_t i = 0; i < n; ++i) {
          attribkit::TextSample s;
          s.id = std::string(row.code) + "/" + classes[c] + "/" + attribkit::to_string(split) + "/" + std::to_string(i);
          s.text = "x";
          s.lang = row.code;
          s.label = classes[c];
          s.split = split;
          samples.push_back(std::move(s));
        }
      }
    }
  }
  return attribkit::Corpus(std::move(samples));
}

// Random but internally consistent score sequence.
inline attribkit::TokenScoreSeq random_seq(std::mt19937_64& rng, std::size_t length, bool with_cross) {
  std::uniform_real_distribution<double> lp(-9.0, 0.0);
  std::uniform_int_distribution<std::int64_t> rank(1, 500);
  std::uniform_real_distribution<double> ent(0.0, 6.0);
  std::uniform_real_distribution<double> var(0.0, 4.0);
  attribkit::TokenScoreSeq s;
  s.doc_id = "doc";
  s.model_id = "m";
  for (std::size_t i = 0; i < length; ++i) s.tokens.push_back({lp(rng), rank(rng), ent(rng)});
  if (with_cross) {
    s.cross.emplace();
    for (std::size_t i = 0; i < length; ++i) {
      const double mu = lp(rng);
      s.cross->push_back({mu, var(rng), ent(rng)});
    }
  }
  return s;
}

}  // namespace fixtures
