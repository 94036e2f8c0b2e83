#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "attribkit/corpus.hpp"
#include "attribkit/ngram.hpp"

namespace attribkit {

struct TokenScore {
  double logprob = 0.0;  // ln p(observed), floored
  std::int64_t rank = 1;  // 1-based
  double entropy = 0.0;   // nats

  bool operator==(const TokenScore&) const = default;
};

// Per-position summaries of a partner distribution q against the primary
// model's log-probabilities ln p:
//   mu = sum_v q(v) ln p(v),  var = sum_v q(v) (ln p(v) - mu)^2,
//   xent = -sum_v q(v) ln p(v).
struct CrossScore {
  double sample_mu = 0.0;
  double sample_var = 0.0;
  double xent = 0.0;

  bool operator==(const CrossScore&) const = default;
};

struct TokenScoreSeq {
  std::string doc_id;
  std::string model_id;
  std::vector<TokenScore> tokens;
  std::optional<std::vector<CrossScore>> cross;

  bool operator==(const TokenScoreSeq&) const = default;
};

// Throws Validation (naming doc_id) when invariants fail.
void validate_scores(const TokenScoreSeq& seq);

// `partner` supplies q for the cross summaries; it must share the primary
// model's vocabulary and tokenizer.
TokenScoreSeq score_text(const NgramModel& model, std::string_view text, const NgramModel* partner = nullptr,
                         const std::string& doc_id = "", const std::string& model_id = "");

std::string scores_to_json_line(const TokenScoreSeq& seq);
TokenScoreSeq scores_from_json(const std::string& line, const std::string& where = "<memory>");
std::vector<TokenScoreSeq> load_scores(const std::filesystem::path& path);
void save_scores(const std::vector<TokenScoreSeq>& seqs, const std::filesystem::path& path);

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds initial_backoff{50};
  double backoff_multiplier = 2.0;
  std::chrono::seconds timeout{30};
};

struct RemoteResult {
  TokenScoreSeq seq;
  int attempts = 0;
};

// POST {endpoint}/v1/score with {"model_id", "text", "want_cross"}.
// Transport failures and 503 are retried with exponential backoff; 400 and
// invalid responses fail immediately.
RemoteResult remote_score(const std::string& endpoint, const std::string& model_id, const std::string& text,
                          bool want_cross, const RetryPolicy& policy = {}, const std::string& doc_id = "");

class ScoreProvider {
 public:
  virtual ~ScoreProvider() = default;
  virtual std::string model_id() const = 0;
  virtual bool provides_cross() const = 0;
  // Must be safe to call concurrently.
  virtual TokenScoreSeq score(const TextSample& doc) const = 0;
};

class NgramProvider final : public ScoreProvider {
 public:
  NgramProvider(std::shared_ptr<const NgramModel> primary, std::shared_ptr<const NgramModel> partner,
                std::string model_id);
  std::string model_id() const override { return id_; }
  bool provides_cross() const override { return partner_ != nullptr; }
  TokenScoreSeq score(const TextSample& doc) const override;

 private:
  std::shared_ptr<const NgramModel> primary_;
  std::shared_ptr<const NgramModel> partner_;
  std::string id_;
};

// Serves precomputed sequences keyed by (doc_id, model_id).
class FileProvider final : public ScoreProvider {
 public:
  FileProvider(const std::vector<TokenScoreSeq>& seqs, std::string model_id);
  std::string model_id() const override { return id_; }
  bool provides_cross() const override { return has_cross_; }
  TokenScoreSeq score(const TextSample& doc) const override;

 private:
  std::map<std::string, TokenScoreSeq> by_doc_;
  std::string id_;
  bool has_cross_ = false;
};

class RemoteProvider final : public ScoreProvider {
 public:
  RemoteProvider(std::string endpoint, std::string model_id, bool want_cross, RetryPolicy policy = {});
  std::string model_id() const override { return id_; }
  bool provides_cross() const override { return want_cross_; }
  TokenScoreSeq score(const TextSample& doc) const override;

 private:
  std::string endpoint_;
  std::string id_;
  bool want_cross_;
  RetryPolicy policy_;
};

}  // namespace attribkit
