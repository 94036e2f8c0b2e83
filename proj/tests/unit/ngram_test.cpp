#include "doctest.h"

#include <atomic>
#include <cmath>
#include <fstream>
#include <random>
#include <thread>

#include "../common/fixtures.hpp"
#include "attribkit/error.hpp"
#include "attribkit/ngram.hpp"
#include "attribkit/scores.hpp"
#include "httplib.h"

using namespace attribkit;

namespace {

NgramModel uniform_model(std::vector<std::string> vocab) {
  std::string v;
  for (std::size_t i = 0; i < vocab.size(); ++i) v += (i ? ",\"" : "\"") + vocab[i] + "\"";
  return NgramModel::from_json(R"({"order":1,"k":1,"tokenizer":"char","vocab":[)" + v + R"(],"contexts":[]})");
}

std::vector<std::string> random_texts(std::mt19937_64& rng, std::size_t n, std::size_t len, const std::string& alphabet) {
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  std::vector<std::string> out(n);
  for (auto& t : out)
    for (std::size_t i = 0; i < len; ++i) t += alphabet[pick(rng)];
  return out;
}

}  // namespace

TEST_CASE("tokenizer") {
  CHECK(tokenize("ab c", TokenizerMode::Character) == std::vector<std::string>{"a", "b", " ", "c"});
  CHECK(tokenize("\xC3\xA9t\xC3\xA9", TokenizerMode::Character).size() == 3);
  CHECK(tokenize("  one two\tthree\n", TokenizerMode::UnicodeWord) == std::vector<std::string>{"one", "two", "three"});
  CHECK(tokenize("", TokenizerMode::Character).empty());
}

TEST_CASE("add-k smoothing arithmetic") {
  const std::vector<std::string> ab = {"ab"};
  const auto m = NgramModel::train(ab, 1, 1.0, TokenizerMode::Character);
  CHECK(m.vocab_size() == 3);
  CHECK(m.vocab().back() == "<unk>");
  CHECK(m.probability({}, m.id_of("a")) == doctest::Approx(0.4).epsilon(1e-15));

  const std::vector<std::string> aaaa = {"aaaa"};
  const auto m2 = NgramModel::train(aaaa, 2, 1.0, TokenizerMode::Character);
  CHECK(m2.vocab_size() == 2);
  const std::vector<NgramModel::TokenId> ctx = {m2.id_of("a")};
  CHECK(m2.probability(ctx, m2.id_of("a")) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(m2.id_of("zz") == m2.unknown_id());
}

TEST_CASE("distributions normalize") {
  std::mt19937_64 rng(17);
  const auto texts = random_texts(rng, 20, 60, "abcdefg");
  for (int order : {1, 2, 3}) {
    const auto m = NgramModel::train(texts, order, 0.3, TokenizerMode::Character);
    std::uniform_int_distribution<int> pick(-1, static_cast<int>(m.vocab_size()) - 1);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<NgramModel::TokenId> ctx(order - 1);
      for (auto& c : ctx) c = pick(rng);
      double total = 0.0;
      for (double p : m.distribution(ctx)) total += p;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("invalid training arguments") {
  const std::vector<std::string> none;
  const std::vector<std::string> one = {"a"};
  CHECK_THROWS_AS(NgramModel::train(none, 2, 1.0, TokenizerMode::Character), Error);
  CHECK_THROWS_AS(NgramModel::train(one, 0, 1.0, TokenizerMode::Character), Error);
  CHECK_THROWS_AS(NgramModel::train(one, 2, 0.0, TokenizerMode::Character), Error);
}

TEST_CASE("model persistence") {
  std::mt19937_64 rng(3);
  const auto texts = random_texts(rng, 10, 40, "xyz ");
  const auto m = NgramModel::train(texts, 3, 0.5, TokenizerMode::Character);
  fixtures::TempDir dir("ngram");
  m.save(dir / "m.json");
  const auto back = NgramModel::load(dir / "m.json");
  CHECK(back.to_json() == m.to_json());
  CHECK(back.fingerprint() == m.fingerprint());
  CHECK(score_text(back, "xyzzy x") == score_text(m, "xyzzy x"));
  CHECK_THROWS_AS(NgramModel::from_json("{}"), Error);
}

TEST_CASE("one-hot model on its own text") {
  const std::vector<std::string> text = {"abcdabcdabcd"};
  const auto m = NgramModel::train(text, 4, 1e-9, TokenizerMode::Character);
  const auto seq = score_text(m, text[0]);
  for (const auto& t : seq.tokens) {
    CHECK(t.logprob == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(t.rank == 1);
    CHECK(t.entropy == doctest::Approx(0.0).epsilon(1e-6));
  }
}

TEST_CASE("uniform model ranks follow the tie-break") {
  const auto m = uniform_model({"a", "b", "c", "<unk>"});
  const auto seq = score_text(m, "abz");
  REQUIRE(seq.tokens.size() == 3);
  CHECK(seq.tokens[0].rank == 1);
  CHECK(seq.tokens[1].rank == 2);
  CHECK(seq.tokens[2].rank == 4);
  for (const auto& t : seq.tokens) {
    CHECK(t.entropy == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(t.logprob == doctest::Approx(-std::log(4.0)).epsilon(1e-12));
  }
}

TEST_CASE("rank and entropy match enumeration") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto texts = random_texts(rng, 3, 25, trial % 2 ? "ab" : "abcd");
    const int order = 1 + trial % 3;
    const auto m = NgramModel::train(texts, order, 0.1 + 0.1 * trial, TokenizerMode::Character);
    const auto probe = random_texts(rng, 1, 30, "abcde")[0];
    const auto seq = score_text(m, probe);
    const auto ids = m.encode(probe);
    std::vector<NgramModel::TokenId> hist(order - 1, NgramModel::kBegin);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const std::vector<NgramModel::TokenId> ctx(hist.end() - (order - 1), hist.end());
      std::vector<double> p(m.vocab_size());
      for (std::size_t v = 0; v < p.size(); ++v) p[v] = m.probability(ctx, static_cast<NgramModel::TokenId>(v));
      const auto x = static_cast<std::size_t>(ids[i]);
      // Rank: position of x after a stable sort by descending probability.
      std::vector<std::size_t> order_idx(p.size());
      for (std::size_t v = 0; v < p.size(); ++v) order_idx[v] = v;
      std::stable_sort(order_idx.begin(), order_idx.end(), [&](auto a, auto b) { return p[a] > p[b]; });
      const auto rank = std::find(order_idx.begin(), order_idx.end(), x) - order_idx.begin() + 1;
      double h = 0.0;
      for (double pv : p) h -= pv * std::log(pv);
      CHECK(seq.tokens[i].rank == rank);
      CHECK(seq.tokens[i].entropy == doctest::Approx(h).epsilon(1e-12));
      CHECK(seq.tokens[i].logprob == doctest::Approx(std::log(p[x])).epsilon(1e-12));
      CHECK(p[order_idx[0]] >= p[x]);
      hist.push_back(ids[i]);
    }
  }
}

TEST_CASE("score invariants") {
  std::mt19937_64 rng(21);
  const auto texts = random_texts(rng, 8, 50, "abcdefghij ");
  const auto m = NgramModel::train(texts, 2, 0.5, TokenizerMode::Character);
  const auto partner = NgramModel::train(texts, 1, 0.5, TokenizerMode::Character);
  for (int trial = 0; trial < 30; ++trial) {
    const auto probe = random_texts(rng, 1, 40, "abcdefghijklm ")[0];
    const auto seq = score_text(m, probe, &partner);
    double mean = 0.0;
    for (const auto& t : seq.tokens) {
      mean += t.logprob;
      CHECK(t.entropy <= std::log(static_cast<double>(m.vocab_size())) + 1e-12);
    }
    mean /= static_cast<double>(seq.tokens.size());
    CHECK(std::exp(-mean) >= 1.0);
    CHECK_NOTHROW(validate_scores(seq));
    CHECK(score_text(m, probe, &partner) == seq);
  }

  SUBCASE("same-model cross summaries") {
    const auto seq = score_text(m, "abcab jjj", &m);
    for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
      CHECK((*seq.cross)[i].sample_mu == -seq.tokens[i].entropy);
      CHECK((*seq.cross)[i].xent == seq.tokens[i].entropy);
    }
  }

  SUBCASE("incompatible partner") {
    const std::vector<std::string> other = {"qrs"};
    const auto o = NgramModel::train(other, 1, 0.5, TokenizerMode::Character);
    CHECK_THROWS_AS(score_text(m, "abc", &o), Error);
  }

  SUBCASE("empty text") { CHECK_THROWS_AS(score_text(m, ""), Error); }
}

TEST_CASE("score file round trip") {
  std::mt19937_64 rng(4);
  fixtures::TempDir dir("scores");
  std::vector<TokenScoreSeq> seqs;
  for (int i = 0; i < 5; ++i) {
    auto s = fixtures::random_seq(rng, 10 + i, i % 2 == 0);
    s.doc_id = "d" + std::to_string(i);
    seqs.push_back(s);
  }
  save_scores(seqs, dir / "s.jsonl");
  const auto back = load_scores(dir / "s.jsonl");
  REQUIRE(back.size() == seqs.size());
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    CHECK(back[i] == seqs[i]);
    CHECK(back[i].cross.has_value() == (i % 2 == 0));
  }
}

TEST_CASE("score file errors") {
  const std::string missing_rank =
      R"({"doc_id":"doc-7","model_id":"m","tokens":[{"lp":-1.0,"rank":1,"ent":0.5},{"lp":-1.0,"ent":0.5}]})";
  try {
    scores_from_json(missing_rank);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("doc-7") != std::string::npos);
    CHECK(std::string(e.what()).find("rank") != std::string::npos);
  }
  const std::string mismatch =
      R"({"doc_id":"doc-8","model_id":"m","tokens":[{"lp":-1.0,"rank":1,"ent":0.5}],"cross":[]})";
  CHECK_THROWS_WITH_AS(scores_from_json(mismatch), doctest::Contains("doc-8"), Error);
}

TEST_CASE("large score file keeps its count") {
  std::mt19937_64 rng(12);
  fixtures::TempDir dir("bulk");
  std::vector<TokenScoreSeq> seqs;
  seqs.reserve(10000);
  for (int i = 0; i < 10000; ++i) {
    auto s = fixtures::random_seq(rng, 3, false);
    s.doc_id = "d" + std::to_string(i);
    seqs.push_back(std::move(s));
  }
  save_scores(seqs, dir / "big.jsonl");
  std::ifstream in(dir / "big.jsonl");
  std::size_t lines = 0;
  for (std::string l; std::getline(in, l);) lines += !l.empty();
  CHECK(lines == 10000);
  CHECK(load_scores(dir / "big.jsonl").size() == lines);
}

namespace {

// Loopback scoring server. The handler is swapped per test.
class ScoreServer {
 public:
  explicit ScoreServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/score", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~ScoreServer() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

const char* kFixture =
    R"({"doc_id":"fx","model_id":"remote-m","tokens":[{"lp":-0.5,"rank":1,"ent":0.7},{"lp":-2.0,"rank":3,"ent":1.1}],)"
    R"("cross":[{"mu":-0.6,"var":0.2,"xent":0.6},{"mu":-1.5,"var":0.4,"xent":1.5}]})";

RetryPolicy fast_policy(int attempts) {
  RetryPolicy p;
  p.max_attempts = attempts;
  p.initial_backoff = std::chrono::milliseconds(1);
  p.timeout = std::chrono::seconds(5);
  return p;
}

}  // namespace

TEST_CASE("remote scoring") {
  SUBCASE("fixture round trip") {
    std::string seen_body;
    ScoreServer server([&](const httplib::Request& req, httplib::Response& res) {
      seen_body = req.body;
      res.set_content(kFixture, "application/json");
    });
    const auto r = remote_score(server.endpoint(), "remote-m", "hello", true, fast_policy(3), "fx");
    CHECK(r.attempts == 1);
    CHECK(r.seq == scores_from_json(kFixture));
    CHECK(seen_body.find("\"want_cross\":true") != std::string::npos);
    CHECK(seen_body.find("\"text\":\"hello\"") != std::string::npos);
  }

  SUBCASE("rank 0 is not retried") {
    std::atomic<int> calls{0};
    ScoreServer server([&](const httplib::Request&, httplib::Response& res) {
      ++calls;
      res.set_content(R"({"doc_id":"x","model_id":"m","tokens":[{"lp":-0.5,"rank":0,"ent":0.7}]})",
                      "application/json");
    });
    try {
      remote_score(server.endpoint(), "m", "t", false, fast_policy(5));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK_FALSE(e.retryable());
    }
    CHECK(calls == 1);
  }

  SUBCASE("transient failures are retried") {
    std::atomic<int> calls{0};
    ScoreServer server([&](const httplib::Request&, httplib::Response& res) {
      if (++calls <= 3) {
        res.status = 503;
        return;
      }
      res.set_content(kFixture, "application/json");
    });
    const auto r = remote_score(server.endpoint(), "remote-m", "t", true, fast_policy(5));
    CHECK(r.attempts == 4);
    CHECK(calls == 4);
  }

  SUBCASE("retry budget exhausted") {
    ScoreServer server([&](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    try {
      remote_score(server.endpoint(), "m", "t", false, fast_policy(2));
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.retryable());
    }
  }

  SUBCASE("unreachable endpoint") {
    CHECK_THROWS_AS(remote_score("http://127.0.0.1:1", "m", "t", false, fast_policy(2)), Error);
  }
}
