#include "attribkit/scores.hpp"

#include <cmath>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "attribkit/error.hpp"
#include "attribkit/util.hpp"

namespace attribkit {

using nlohmann::json;

void validate_scores(const TokenScoreSeq& seq) {
  const std::string who = "document '" + seq.doc_id + "'";
  if (seq.tokens.empty()) fail(ErrorKind::Validation, who + ": empty token score sequence");
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    const auto& t = seq.tokens[i];
    const std::string at = who + " token " + std::to_string(i);
    if (!std::isfinite(t.logprob) || t.logprob > 1e-9) fail(ErrorKind::Validation, at + ": logprob must be finite and <= 0");
    if (t.rank < 1) fail(ErrorKind::Validation, at + ": rank must be >= 1");
    if (!std::isfinite(t.entropy) || t.entropy < -1e-9) fail(ErrorKind::Validation, at + ": entropy must be >= 0");
  }
  if (seq.cross) {
    if (seq.cross->size() != seq.tokens.size())
      fail(ErrorKind::Validation, who + ": cross length " + std::to_string(seq.cross->size()) +
                                      " does not match token length " + std::to_string(seq.tokens.size()));
    for (std::size_t i = 0; i < seq.cross->size(); ++i) {
      const auto& c = (*seq.cross)[i];
      const std::string at = who + " cross " + std::to_string(i);
      if (!std::isfinite(c.sample_mu)) fail(ErrorKind::Validation, at + ": mu must be finite");
      if (!std::isfinite(c.sample_var) || c.sample_var < -1e-12) fail(ErrorKind::Validation, at + ": var must be >= 0");
      if (!std::isfinite(c.xent) || c.xent < -1e-12) fail(ErrorKind::Validation, at + ": xent must be >= 0");
    }
  }
}

TokenScoreSeq score_text(const NgramModel& model, std::string_view text, const NgramModel* partner,
                         const std::string& doc_id, const std::string& model_id) {
  if (partner && !model.compatible_with(*partner))
    fail(ErrorKind::InvalidArgument, "cross scoring requires models with identical vocabulary and tokenizer");
  const auto ids = model.encode(text);
  if (ids.empty()) fail(ErrorKind::InvalidArgument, "document '" + doc_id + "' tokenizes to zero tokens");

  TokenScoreSeq seq;
  seq.doc_id = doc_id;
  seq.model_id = model_id;
  seq.tokens.reserve(ids.size());
  if (partner) seq.cross.emplace().reserve(ids.size());

  const std::size_t V = model.vocab_size();
  const auto ctx_len = static_cast<std::size_t>(model.order() - 1);
  const auto pctx_len = partner ? static_cast<std::size_t>(partner->order() - 1) : 0;
  // Shared history padded with enough begin markers for either model.
  const std::size_t pad = std::max(ctx_len, pctx_len);
  std::vector<NgramModel::TokenId> history(pad, NgramModel::kBegin);
  history.insert(history.end(), ids.begin(), ids.end());

  std::vector<double> p, q, logp(V);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::size_t pos = pad + i;
    const auto x = static_cast<std::size_t>(ids[i]);
    model.distribution(std::span(history).subspan(pos - ctx_len, ctx_len), p);

    TokenScore ts;
    double entropy = 0.0;
    std::int64_t above = 0;
    for (std::size_t v = 0; v < V; ++v) {
      logp[v] = std::log(std::max(p[v], kProbFloor));
      entropy -= p[v] * logp[v];
      if (p[v] > p[x] || (p[v] == p[x] && v < x)) ++above;
    }
    ts.logprob = logp[x];
    ts.rank = above + 1;
    ts.entropy = std::max(entropy, 0.0);
    seq.tokens.push_back(ts);

    if (partner) {
      partner->distribution(std::span(history).subspan(pos - pctx_len, pctx_len), q);
      CrossScore cs;
      double mu = 0.0;
      for (std::size_t v = 0; v < V; ++v) mu += q[v] * logp[v];
      double var = 0.0;
      for (std::size_t v = 0; v < V; ++v) var += q[v] * (logp[v] - mu) * (logp[v] - mu);
      cs.sample_mu = mu;
      cs.sample_var = var;
      cs.xent = std::max(-mu, 0.0);
      seq.cross->push_back(cs);
    }
  }
  return seq;
}

std::string scores_to_json_line(const TokenScoreSeq& seq) {
  json doc;
  doc["doc_id"] = seq.doc_id;
  doc["model_id"] = seq.model_id;
  json toks = json::array();
  for (const auto& t : seq.tokens) toks.push_back({{"lp", t.logprob}, {"rank", t.rank}, {"ent", t.entropy}});
  doc["tokens"] = std::move(toks);
  if (seq.cross) {
    json cross = json::array();
    for (const auto& c : *seq.cross) cross.push_back({{"mu", c.sample_mu}, {"var", c.sample_var}, {"xent", c.xent}});
    doc["cross"] = std::move(cross);
  }
  return doc.dump();
}

TokenScoreSeq scores_from_json(const std::string& line, const std::string& where) {
  json doc;
  try {
    doc = json::parse(line);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, where + ": malformed score record: " + e.what());
  }
  TokenScoreSeq seq;
  if (!doc.is_object() || !doc.contains("doc_id") || !doc["doc_id"].is_string())
    fail(ErrorKind::Parse, where + ": missing string field 'doc_id'");
  seq.doc_id = doc["doc_id"].get<std::string>();
  const std::string who = where + ": document '" + seq.doc_id + "'";
  if (!doc.contains("model_id") || !doc["model_id"].is_string())
    fail(ErrorKind::Parse, who + ": missing string field 'model_id'");
  seq.model_id = doc["model_id"].get<std::string>();
  if (!doc.contains("tokens") || !doc["tokens"].is_array()) fail(ErrorKind::Parse, who + ": missing array 'tokens'");

  auto number = [&](const json& obj, const char* key, std::size_t i, const char* arr) {
    if (!obj.is_object() || !obj.contains(key) || !obj[key].is_number())
      fail(ErrorKind::Parse, who + ": " + arr + "[" + std::to_string(i) + "] missing numeric field '" + key + "'");
    return obj[key];
  };
  const auto& toks = doc["tokens"];
  for (std::size_t i = 0; i < toks.size(); ++i) {
    TokenScore t;
    t.logprob = number(toks[i], "lp", i, "tokens").get<double>();
    const auto& r = number(toks[i], "rank", i, "tokens");
    if (!r.is_number_integer()) fail(ErrorKind::Parse, who + ": tokens[" + std::to_string(i) + "] rank must be an integer");
    t.rank = r.get<std::int64_t>();
    t.entropy = number(toks[i], "ent", i, "tokens").get<double>();
    seq.tokens.push_back(t);
  }
  if (doc.contains("cross") && !doc["cross"].is_null()) {
    if (!doc["cross"].is_array()) fail(ErrorKind::Parse, who + ": 'cross' must be an array");
    const auto& cross = doc["cross"];
    if (cross.size() != toks.size())
      fail(ErrorKind::Validation, who + ": length mismatch between tokens (" + std::to_string(toks.size()) +
                                      ") and cross (" + std::to_string(cross.size()) + ")");
    auto& out = seq.cross.emplace();
    for (std::size_t i = 0; i < cross.size(); ++i) {
      CrossScore c;
      c.sample_mu = number(cross[i], "mu", i, "cross").get<double>();
      c.sample_var = number(cross[i], "var", i, "cross").get<double>();
      c.xent = number(cross[i], "xent", i, "cross").get<double>();
      out.push_back(c);
    }
  }
  return seq;
}

std::vector<TokenScoreSeq> load_scores(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::Io, "score file not found: " + path.string());
  std::vector<TokenScoreSeq> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(scores_from_json(lines[i], path.string() + ":" + std::to_string(i + 1)));
  }
  return out;
}

void save_scores(const std::vector<TokenScoreSeq>& seqs, const std::filesystem::path& path) {
  std::string out;
  for (const auto& s : seqs) {
    out += scores_to_json_line(s);
    out += '\n';
  }
  write_file_atomic(path, out);
}

namespace {

struct HostPort {
  std::string scheme_host_port;
  std::string base_path;
};

HostPort split_endpoint(const std::string& endpoint) {
  auto scheme = endpoint.find("://");
  auto path_start = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (path_start == std::string::npos) return {endpoint, ""};
  std::string base = endpoint.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();
  return {endpoint.substr(0, path_start), base};
}

}  // namespace

RemoteResult remote_score(const std::string& endpoint, const std::string& model_id, const std::string& text,
                          bool want_cross, const RetryPolicy& policy, const std::string& doc_id) {
  const auto [host, base] = split_endpoint(endpoint);
  httplib::Client client(host);
  client.set_connection_timeout(policy.timeout);
  client.set_read_timeout(policy.timeout);
  const std::string body = json{{"model_id", model_id}, {"text", text}, {"want_cross", want_cross}}.dump();

  RemoteResult result;
  auto backoff = policy.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= std::max(1, policy.max_attempts); ++attempt) {
    result.attempts = attempt;
    auto res = client.Post(base + "/v1/score", body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status == 503 || res->status == 429) {
      last_error = "server overloaded (HTTP " + std::to_string(res->status) + ")";
    } else if (res->status != 200) {
      fail(ErrorKind::Remote, endpoint + ": HTTP " + std::to_string(res->status) + " for document '" + doc_id +
                                  "': " + res->body);
    } else {
      try {
        auto seq = scores_from_json(res->body, endpoint);
        if (!doc_id.empty()) seq.doc_id = doc_id;
        if (seq.model_id.empty()) seq.model_id = model_id;
        validate_scores(seq);
        if (want_cross && !seq.cross)
          fail(ErrorKind::Validation, "document '" + seq.doc_id + "': cross summaries requested but absent");
        result.seq = std::move(seq);
        return result;
      } catch (const Error& e) {
        fail(ErrorKind::Remote, endpoint + ": invalid response: " + e.what());
      }
    }
    if (attempt < policy.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff = std::chrono::milliseconds(static_cast<long long>(backoff.count() * policy.backoff_multiplier));
    }
  }
  fail(ErrorKind::Transport, endpoint + ": giving up on document '" + doc_id + "' after " +
                                 std::to_string(result.attempts) + " attempts: " + last_error);
}

NgramProvider::NgramProvider(std::shared_ptr<const NgramModel> primary, std::shared_ptr<const NgramModel> partner,
                             std::string model_id)
    : primary_(std::move(primary)), partner_(std::move(partner)), id_(std::move(model_id)) {
  if (!primary_) fail(ErrorKind::InvalidArgument, "n-gram provider requires a model");
  if (partner_ && !primary_->compatible_with(*partner_))
    fail(ErrorKind::InvalidArgument, "scorer pair '" + id_ + "' does not share a vocabulary and tokenizer");
}

TokenScoreSeq NgramProvider::score(const TextSample& doc) const {
  return score_text(*primary_, doc.text, partner_.get(), doc.id, id_);
}

FileProvider::FileProvider(const std::vector<TokenScoreSeq>& seqs, std::string model_id) : id_(std::move(model_id)) {
  bool any = false;
  has_cross_ = true;
  for (const auto& s : seqs) {
    if (s.model_id != id_) continue;
    any = true;
    has_cross_ = has_cross_ && s.cross.has_value();
    by_doc_[s.doc_id] = s;
  }
  if (!any) has_cross_ = false;
}

TokenScoreSeq FileProvider::score(const TextSample& doc) const {
  auto it = by_doc_.find(doc.id);
  if (it == by_doc_.end())
    fail(ErrorKind::Validation, "no precomputed scores for document '" + doc.id + "' under model '" + id_ + "'");
  validate_scores(it->second);
  return it->second;
}

RemoteProvider::RemoteProvider(std::string endpoint, std::string model_id, bool want_cross, RetryPolicy policy)
    : endpoint_(std::move(endpoint)), id_(std::move(model_id)), want_cross_(want_cross), policy_(policy) {}

TokenScoreSeq RemoteProvider::score(const TextSample& doc) const {
  return remote_score(endpoint_, id_, doc.text, want_cross_, policy_, doc.id).seq;
}

}  // namespace attribkit
