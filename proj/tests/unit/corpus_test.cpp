#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <random>

#include "../common/fixtures.hpp"
#include "attribkit/corpus.hpp"
#include "attribkit/error.hpp"
#include "attribkit/util.hpp"

using namespace attribkit;

namespace {

TextSample sample(std::string id, std::string lang, std::string label, Split split) {
  return {std::move(id), "some text", std::move(lang), std::move(label), split};
}

// n documents per (class, split) for one language.
std::vector<TextSample> uniform_language(const std::string& lang, std::size_t train, std::size_t test) {
  std::vector<TextSample> out;
  for (const auto& c : ClassRegistry::builtin().names()) {
    for (std::size_t i = 0; i < train; ++i) out.push_back(sample(lang + c + "tr" + std::to_string(i), lang, c, Split::Train));
    for (std::size_t i = 0; i < test; ++i) out.push_back(sample(lang + c + "te" + std::to_string(i), lang, c, Split::Test));
  }
  return out;
}

}  // namespace

TEST_CASE("registry covers the study languages") {
  const auto reg = LanguageRegistry::builtin();
  CHECK(reg.languages().size() == 18);
  for (const auto& row : fixtures::language_sizes()) CHECK(reg.contains(row.code));

  const std::vector<std::pair<std::string, std::size_t>> sizes = {
      {"Germanic", 3}, {"Romance", 3}, {"Slavic-Latin", 5}, {"Slavic-Cyrillic", 3},
      {"Uralic", 1},   {"Hellenic", 1},   {"Semitic", 1},      {"Sino-Tibetan", 1}};
  CHECK(reg.families().size() == sizes.size());
  for (const auto& [family, n] : sizes) CHECK(reg.family_members(family).size() == n);
  CHECK(reg.display_order().size() == 18);
  CHECK(reg.at("ru").script == "Cyrillic");
  CHECK_THROWS_AS(reg.at("xx"), Error);
}

TEST_CASE("class registry") {
  const auto classes = ClassRegistry::builtin();
  CHECK(classes.names().size() == 8);
  CHECK(classes.human().name == "human");
  std::string letters;
  for (const auto& c : classes.classes()) letters += c.letter;
  CHECK(letters == "MOEVLAGH");
}

TEST_CASE("per-language corpus sizes") {
  const auto corpus = fixtures::sized_corpus();
  CHECK(corpus.count(Split::Train) == 143114);
  CHECK(corpus.count(Split::Test) == 42943);

  std::size_t en_train = 0;
  for (const auto& c : ClassRegistry::builtin().names()) en_train += corpus.count("en", c, Split::Train);
  CHECK(en_train == 7954);

  SUBCASE("balance at 95 percent") {
    const auto report = validate_balance(corpus, ClassRegistry::builtin(), {1000, 300}, Rational::parse("0.95"));
    CHECK(report.pass);
    CHECK(report.languages.size() == 18);
  }

  SUBCASE("single language selection") {
    SelectionSpec spec;
    spec.human_langs = spec.machine_langs = {"en"};
    const auto en = select(corpus, ClassRegistry::builtin(), spec, 1);
    CHECK(en.count(Split::Train) == 7954);
    CHECK(en.count(Split::Test) == 2384);
    CHECK(en.langs() == std::set<std::string>{"en"});
  }

  SUBCASE("fraction 1 over all languages is the identity") {
    SelectionSpec spec;
    for (const auto& row : fixtures::language_sizes()) spec.human_langs.insert(row.code);
    spec.machine_langs = spec.human_langs;
    spec.fraction = Rational::parse("1");
    const auto all = select(corpus, ClassRegistry::builtin(), spec, 9);
    REQUIRE(all.size() == corpus.size());
    CHECK(corpus_to_jsonl(all) == corpus_to_jsonl(corpus));
  }

  SUBCASE("one third of three languages") {
    SelectionSpec spec;
    spec.human_langs = spec.machine_langs = {"en", "es", "ru"};
    spec.fraction = Rational::parse("1/3");
    const auto third = select(corpus, ClassRegistry::builtin(), spec, 3);
    std::size_t expected = 0;
    for (const auto& [key, n] : corpus.cells()) {
      const auto& [lang, label, split] = key;
      if (split == Split::Train && spec.human_langs.count(lang)) expected += (n + 2) / 3;
    }
    CHECK(third.count(Split::Train) == expected);
    const auto diff = static_cast<long>(third.count(Split::Train)) - 7954L;
    CHECK(std::abs(diff) <= 24);
    for (const auto& [key, n] : third.cells()) CHECK(n == (corpus.cells().at(key) + 2) / 3);
  }
}

TEST_CASE("balance failures are listed") {
  auto docs = uniform_language("en", 1000, 300);
  auto de = uniform_language("de", 1000, 300);
  // Drop 60 mistral train documents from de.
  std::size_t dropped = 0;
  de.erase(std::remove_if(de.begin(), de.end(),
                          [&](const TextSample& s) {
                            return s.label == "mistral" && s.split == Split::Train && dropped++ < 60;
                          }),
           de.end());
  docs.insert(docs.end(), de.begin(), de.end());
  const Corpus corpus(docs);

  const auto report = validate_balance(corpus, ClassRegistry::builtin(), {1000, 300}, Rational::parse("0.95"));
  CHECK_FALSE(report.pass);
  for (const auto& l : report.languages) {
    if (l.lang == "en") CHECK(l.pass);
    if (l.lang == "de") {
      CHECK_FALSE(l.pass);
      REQUIRE(l.failing.size() == 1);
      CHECK(l.failing[0].label == "mistral");
      CHECK(l.failing[0].count == 940);
      CHECK(l.failing[0].required == 950);
    }
  }

  SUBCASE("pass is invariant under reordering") {
    auto shuffled = docs;
    std::mt19937_64 rng(5);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto again = validate_balance(Corpus(shuffled), ClassRegistry::builtin(), {1000, 300}, Rational::parse("0.95"));
    CHECK(again.to_json() == report.to_json());
  }
}

TEST_CASE("exact targets pass at fraction 1") {
  const Corpus corpus(uniform_language("pl", 10, 3));
  CHECK(validate_balance(corpus, ClassRegistry::builtin(), {10, 3}, Rational::parse("1")).pass);
  CHECK_FALSE(validate_balance(corpus, ClassRegistry::builtin(), {11, 3}, Rational::parse("1")).pass);
}

TEST_CASE("rational parsing") {
  CHECK(Rational::parse("1/3").ceil_of(100) == 34);
  CHECK(Rational::parse("0.95").ceil_of(1000) == 950);
  CHECK(Rational::parse("0.95").ceil_of(300) == 285);
  CHECK(Rational::parse("2/6").den == 3);
  CHECK_THROWS_AS(Rational::parse("0"), Error);
  CHECK_THROWS_AS(Rational::parse("3/2"), Error);
  CHECK_THROWS_AS(Rational::parse("abc"), Error);
}

TEST_CASE("corpus parsing") {
  auto langs = LanguageRegistry::builtin();
  auto classes = ClassRegistry::builtin();

  SUBCASE("empty input") {
    const auto c = parse_corpus({}, langs, classes);
    CHECK(c.empty());
    CHECK(c.count(Split::Train) == 0);
  }

  SUBCASE("round trip") {
    const Corpus c({sample("a", "en", "human", Split::Train), sample("b", "de", "opt", Split::Test)});
    const auto lines = split(corpus_to_jsonl(c), '\n');
    const auto back = parse_corpus(lines, langs, classes);
    CHECK(corpus_to_jsonl(back) == corpus_to_jsonl(c));
  }

  SUBCASE("errors name the line") {
    const std::vector<std::string> lines = {
        R"({"id":"a","text":"t","lang":"en","label":"human","split":"train"})",
        R"({"id":"b","text":"t","lang":"en","label":"human"})"};
    try {
      parse_corpus(lines, langs, classes, {}, "c.jsonl");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("c.jsonl:2") != std::string::npos);
      CHECK(std::string(e.what()).find("split") != std::string::npos);
    }
  }

  SUBCASE("duplicate ids") {
    const std::vector<std::string> lines = {
        R"({"id":"a","text":"t","lang":"en","label":"human","split":"train"})",
        R"({"id":"a","text":"u","lang":"en","label":"opt","split":"test"})"};
    CHECK_THROWS_WITH_AS(parse_corpus(lines, langs, classes), doctest::Contains("duplicate id 'a'"), Error);
  }

  SUBCASE("unregistered language") {
    const std::vector<std::string> lines = {R"({"id":"a","text":"t","lang":"fr","label":"human","split":"train"})"};
    CHECK_THROWS_AS(parse_corpus(lines, langs, classes), Error);
    const auto c = parse_corpus(lines, langs, classes, {true});
    CHECK(c.size() == 1);
    CHECK(langs.at("fr").family == "unknown");
  }

  SUBCASE("file round trip") {
    fixtures::TempDir dir("corpus");
    const Corpus c({sample("a", "en", "human", Split::Train)});
    save_corpus(c, dir / "c.jsonl");
    CHECK(load_corpus(dir / "c.jsonl", langs, classes).size() == 1);
    CHECK_THROWS_AS(load_corpus(dir / "missing.jsonl", langs, classes), Error);
  }
}

TEST_CASE("selection") {
  std::vector<TextSample> docs = uniform_language("en", 30, 9);
  const auto es = uniform_language("es", 30, 9);
  docs.insert(docs.end(), es.begin(), es.end());
  const Corpus corpus(docs);
  const auto classes = ClassRegistry::builtin();

  SUBCASE("missing languages are named") {
    SelectionSpec spec;
    spec.human_langs = {"en", "zh"};
    spec.machine_langs = {"en", "ar"};
    CHECK_THROWS_WITH_AS(select(corpus, classes, spec, 1), doctest::Contains("zh"), Error);
  }

  SUBCASE("human and machine language sets are independent") {
    SelectionSpec spec;
    spec.human_langs = {"en"};
    spec.machine_langs = {"es"};
    const auto out = select(corpus, classes, spec, 1);
    for (const auto& s : out.samples()) CHECK((s.label == "human") == (s.lang == "en"));
    CHECK(out.size() == 39 + 7 * 39);
  }

  SUBCASE("fraction gives exact ceil counts for any seed") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      SelectionSpec spec;
      spec.human_langs = spec.machine_langs = {"en", "es"};
      spec.fraction = Rational::parse("0.3");
      const auto out = select(corpus, classes, spec, seed);
      for (const auto& [key, n] : out.cells()) CHECK(n == (std::get<2>(key) == Split::Train ? 9u : 3u));
    }
  }

  SUBCASE("idempotent and monotone") {
    SelectionSpec spec;
    spec.human_langs = spec.machine_langs = {"en", "es"};
    spec.fraction = Rational::parse("1/2");
    const auto once = select(corpus, classes, spec, 4);
    for (const auto& [key, n] : once.cells()) CHECK(n <= corpus.cells().at(key));
    spec.fraction = Rational::parse("1");
    CHECK(corpus_to_jsonl(select(once, classes, spec, 8)) == corpus_to_jsonl(once));
  }

  SUBCASE("deterministic") {
    SelectionSpec spec;
    spec.human_langs = spec.machine_langs = {"en"};
    spec.per_class_cap = 7;
    CHECK(corpus_to_jsonl(select(corpus, classes, spec, 11)) == corpus_to_jsonl(select(corpus, classes, spec, 11)));
    CHECK(select(corpus, classes, spec, 11).count("en", "opt", Split::Train) == 7);
  }
}

TEST_CASE("equalized union keeps one language's training size") {
  std::vector<TextSample> docs;
  for (const auto* l : {"xa", "xb", "xc"}) {
    auto part = uniform_language(l, 100, 30);
    docs.insert(docs.end(), part.begin(), part.end());
  }
  const Corpus corpus(docs);
  const auto out = select_equalized_union(corpus, {"xa", "xb", "xc"}, 2);
  const auto single = 100 * 8;
  CHECK(std::abs(static_cast<long>(out.count(Split::Train)) - single) <= 3);
  CHECK(out.count(Split::Test) == 0);
  for (const auto& l : {"xa", "xb", "xc"}) {
    std::size_t n = 0;
    for (const auto& c : ClassRegistry::builtin().names()) n += out.count(l, c, Split::Train);
    CHECK(n >= 8 * 33);
  }
}

TEST_CASE("check_cl") {
  const auto reg = LanguageRegistry::builtin();
  std::set<std::string> all;
  for (const auto& row : fixtures::language_sizes()) all.insert(row.code);
  CHECK(check_cl({{"ru"}, all}, reg) == RunKind::CrossLingual);
  CHECK(check_cl({all, all}, reg) == RunKind::Multilingual);
  CHECK_THROWS_AS(check_cl({{"en", "fr"}, {"en"}}, reg), Error);
  CHECK_THROWS_WITH_AS(check_cl({{"en", "de"}, {"en", "es"}}, reg),
                       doctest::Contains("test set must cover training languages"), Error);
  CHECK_THROWS_AS(check_cl({{}, {"en"}}, reg), Error);
}
