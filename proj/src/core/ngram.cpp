#include "attribkit/ngram.hpp"

#include <algorithm>
#include <cstring>

#include <json.hpp>

#include "attribkit/error.hpp"
#include "attribkit/util.hpp"

namespace attribkit {

using nlohmann::json;

const char* to_string(TokenizerMode m) { return m == TokenizerMode::Character ? "char" : "word"; }

TokenizerMode parse_tokenizer_mode(const std::string& s) {
  if (s == "char" || s == "character") return TokenizerMode::Character;
  if (s == "word" || s == "unicode-word") return TokenizerMode::UnicodeWord;
  fail(ErrorKind::InvalidArgument, "unknown tokenizer mode '" + s + "' (expected char or word)");
}

namespace {

// Length of the UTF-8 sequence starting at s[i]; malformed bytes count as 1.
std::size_t utf8_len(std::string_view s, std::size_t i) {
  const auto c = static_cast<unsigned char>(s[i]);
  std::size_t n = 1;
  if ((c & 0xE0) == 0xC0) n = 2;
  else if ((c & 0xF0) == 0xE0) n = 3;
  else if ((c & 0xF8) == 0xF0) n = 4;
  if (i + n > s.size()) return 1;
  for (std::size_t j = 1; j < n; ++j)
    if ((static_cast<unsigned char>(s[i + j]) & 0xC0) != 0x80) return 1;
  return n;
}

char32_t decode(std::string_view cp) {
  const auto b0 = static_cast<unsigned char>(cp[0]);
  switch (cp.size()) {
    case 2: return ((b0 & 0x1F) << 6) | (cp[1] & 0x3F);
    case 3: return ((b0 & 0x0F) << 12) | ((cp[1] & 0x3F) << 6) | (cp[2] & 0x3F);
    case 4: return ((b0 & 0x07) << 18) | ((cp[1] & 0x3F) << 12) | ((cp[2] & 0x3F) << 6) | (cp[3] & 0x3F);
    default: return b0;
  }
}

bool is_space(char32_t c) {
  return c == U' ' || (c >= U'\t' && c <= U'\r') || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F || c == 0x205F || c == 0x3000;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, TokenizerMode mode) {
  std::vector<std::string> out;
  std::string word;
  for (std::size_t i = 0; i < text.size();) {
    const auto n = utf8_len(text, i);
    const auto cp = text.substr(i, n);
    i += n;
    if (mode == TokenizerMode::Character) {
      out.emplace_back(cp);
    } else if (is_space(decode(cp))) {
      if (!word.empty()) out.push_back(std::move(word));
      word.clear();
    } else {
      word += cp;
    }
  }
  if (!word.empty()) out.push_back(std::move(word));
  return out;
}

std::string NgramModel::context_key(std::span<const TokenId> context) {
  std::string key(context.size() * sizeof(TokenId), '\0');
  if (!context.empty()) std::memcpy(key.data(), context.data(), key.size());
  return key;
}

NgramModel NgramModel::train(std::span<const std::string> texts, int order, double smoothing_k, TokenizerMode mode) {
  if (texts.empty()) fail(ErrorKind::InvalidArgument, "cannot train an n-gram model on an empty text collection");
  if (order < 1) fail(ErrorKind::InvalidArgument, "n-gram order must be >= 1");
  if (!(smoothing_k > 0)) fail(ErrorKind::InvalidArgument, "smoothing constant k must be > 0");

  NgramModel m;
  m.order_ = order;
  m.k_ = smoothing_k;
  m.mode_ = mode;

  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(texts.size());
  for (const auto& t : texts) {
    tokenized.push_back(tokenize(t, mode));
    for (const auto& tok : tokenized.back()) {
      if (!m.index_.count(tok)) {
        m.index_.emplace(tok, static_cast<TokenId>(m.vocab_.size()));
        m.vocab_.push_back(tok);
      }
    }
  }
  m.index_.emplace(kUnknown, static_cast<TokenId>(m.vocab_.size()));
  m.vocab_.emplace_back(kUnknown);

  const std::size_t ctx_len = static_cast<std::size_t>(order - 1);
  for (const auto& toks : tokenized) {
    std::vector<TokenId> ctx(ctx_len, kBegin);
    for (const auto& tok : toks) {
      const TokenId id = m.index_.at(tok);
      auto& cc = m.counts_[context_key(ctx)];
      ++cc.total;
      ++cc.next[id];
      if (ctx_len) {
        std::rotate(ctx.begin(), ctx.begin() + 1, ctx.end());
        ctx.back() = id;
      }
    }
  }
  return m;
}

NgramModel::TokenId NgramModel::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? unknown_id() : it->second;
}

std::vector<NgramModel::TokenId> NgramModel::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const auto& tok : tokenize(text, mode_)) ids.push_back(id_of(tok));
  return ids;
}

void NgramModel::distribution(std::span<const TokenId> context, std::vector<double>& out) const {
  const std::size_t V = vocab_.size();
  out.assign(V, 0.0);
  auto it = counts_.find(context_key(context));
  const double total = it == counts_.end() ? 0.0 : static_cast<double>(it->second.total);
  const double denom = total + k_ * static_cast<double>(V);
  std::fill(out.begin(), out.end(), k_ / denom);
  if (it != counts_.end())
    for (const auto& [id, c] : it->second.next) out[static_cast<std::size_t>(id)] = (static_cast<double>(c) + k_) / denom;
}

std::vector<double> NgramModel::distribution(std::span<const TokenId> context) const {
  std::vector<double> out;
  distribution(context, out);
  return out;
}

double NgramModel::probability(std::span<const TokenId> context, TokenId next) const {
  const double V = static_cast<double>(vocab_.size());
  auto it = counts_.find(context_key(context));
  if (it == counts_.end()) return 1.0 / V;
  auto jt = it->second.next.find(next);
  const double c = jt == it->second.next.end() ? 0.0 : static_cast<double>(jt->second);
  return (c + k_) / (static_cast<double>(it->second.total) + k_ * V);
}

bool NgramModel::compatible_with(const NgramModel& other) const {
  return mode_ == other.mode_ && vocab_ == other.vocab_;
}

std::string NgramModel::to_json() const {
  json doc;
  doc["format_version"] = 1;
  doc["order"] = order_;
  doc["k"] = k_;
  doc["tokenizer"] = to_string(mode_);
  doc["vocab"] = vocab_;
  std::vector<std::pair<std::vector<TokenId>, const ContextCounts*>> rows;
  for (const auto& [key, cc] : counts_) {
    std::vector<TokenId> ctx(key.size() / sizeof(TokenId));
    if (!ctx.empty()) std::memcpy(ctx.data(), key.data(), key.size());
    rows.emplace_back(std::move(ctx), &cc);
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  json contexts = json::array();
  for (const auto& [ctx, cc] : rows) {
    std::vector<std::pair<TokenId, std::uint64_t>> next(cc->next.begin(), cc->next.end());
    std::sort(next.begin(), next.end());
    contexts.push_back({{"ctx", ctx}, {"total", cc->total}, {"next", next}});
  }
  doc["contexts"] = std::move(contexts);
  return doc.dump();
}

NgramModel NgramModel::from_json(const std::string& text) {
  NgramModel m;
  try {
    const auto doc = json::parse(text);
    m.order_ = doc.at("order").get<int>();
    m.k_ = doc.at("k").get<double>();
    m.mode_ = parse_tokenizer_mode(doc.at("tokenizer").get<std::string>());
    m.vocab_ = doc.at("vocab").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < m.vocab_.size(); ++i) m.index_.emplace(m.vocab_[i], static_cast<TokenId>(i));
    for (const auto& c : doc.at("contexts")) {
      auto ctx = c.at("ctx").get<std::vector<TokenId>>();
      auto& cc = m.counts_[context_key(ctx)];
      cc.total = c.at("total").get<std::uint64_t>();
      for (const auto& [id, n] : c.at("next").get<std::vector<std::pair<TokenId, std::uint64_t>>>()) cc.next[id] = n;
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("malformed n-gram model: ") + e.what());
  }
  if (m.vocab_.empty() || m.vocab_.back() != kUnknown || m.order_ < 1 || !(m.k_ > 0))
    fail(ErrorKind::Parse, "malformed n-gram model: invalid header");
  return m;
}

void NgramModel::save(const std::filesystem::path& path) const { write_file_atomic(path, to_json()); }

NgramModel NgramModel::load(const std::filesystem::path& path) { return from_json(read_file(path)); }

std::string NgramModel::fingerprint() const { return hex64(fnv1a(to_json())); }

}  // namespace attribkit
