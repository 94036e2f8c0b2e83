#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace attribkit {

enum class TokenizerMode { Character, UnicodeWord };

const char* to_string(TokenizerMode m);
TokenizerMode parse_tokenizer_mode(const std::string& s);

// Character mode yields one token per UTF-8 code point; word mode yields
// maximal runs of non-whitespace code points.
std::vector<std::string> tokenize(std::string_view text, TokenizerMode mode);

// Lower bound applied inside every logarithm.
inline constexpr double kProbFloor = 1e-12;

// Add-k smoothed n-gram model:
//   p(v | c) = (count(c, v) + k) / (count(c) + k V)
// Vocabulary = observed tokens in first-appearance order followed by the
// reserved unknown token. Documents are padded with order-1 begin markers,
// which are never predicted.
class NgramModel {
 public:
  using TokenId = std::int32_t;
  static constexpr TokenId kBegin = -1;
  static constexpr const char* kUnknown = "<unk>";

  NgramModel() = default;

  static NgramModel train(std::span<const std::string> texts, int order, double smoothing_k, TokenizerMode mode);

  int order() const { return order_; }
  double smoothing() const { return k_; }
  TokenizerMode tokenizer() const { return mode_; }
  std::size_t vocab_size() const { return vocab_.size(); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  TokenId unknown_id() const { return static_cast<TokenId>(vocab_.size() - 1); }

  TokenId id_of(const std::string& token) const;
  std::vector<TokenId> encode(std::string_view text) const;

  // Context = the last order-1 ids (kBegin for padding), oldest first.
  std::vector<double> distribution(std::span<const TokenId> context) const;
  void distribution(std::span<const TokenId> context, std::vector<double>& out) const;
  double probability(std::span<const TokenId> context, TokenId next) const;

  // Structural equality of vocabulary and tokenizer (required to pair models).
  bool compatible_with(const NgramModel& other) const;

  std::string to_json() const;
  static NgramModel from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static NgramModel load(const std::filesystem::path& path);

  std::string fingerprint() const;

 private:
  struct ContextCounts {
    std::uint64_t total = 0;
    std::unordered_map<TokenId, std::uint64_t> next;
  };
  static std::string context_key(std::span<const TokenId> context);

  int order_ = 1;
  double k_ = 0.5;
  TokenizerMode mode_ = TokenizerMode::Character;
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, TokenId> index_;
  std::unordered_map<std::string, ContextCounts> counts_;
};

}  // namespace attribkit
