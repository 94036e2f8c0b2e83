#include "attribkit/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include <json.hpp>

#include "attribkit/error.hpp"
#include "attribkit/util.hpp"

namespace attribkit {

using nlohmann::json;

namespace {

const std::vector<std::string> kFamilyOrder = {"Germanic", "Romance",  "Slavic-Latin", "Slavic-Cyrillic",
                                               "Uralic",   "Hellenic", "Semitic",      "Sino-Tibetan"};

}  // namespace

LanguageRegistry LanguageRegistry::builtin() {
  LanguageRegistry r;
  const std::vector<LanguageInfo> table = {
      {"nl", "Germanic", "Latin"},         {"en", "Germanic", "Latin"},        {"de", "Germanic", "Latin"},
      {"el", "Hellenic", "Greek"},         {"ar", "Semitic", "Arabic"},        {"zh", "Sino-Tibetan", "Hanzi"},
      {"bg", "Slavic-Cyrillic", "Cyrillic"}, {"uk", "Slavic-Cyrillic", "Cyrillic"}, {"ru", "Slavic-Cyrillic", "Cyrillic"},
      {"hr", "Slavic-Latin", "Latin"},     {"cs", "Slavic-Latin", "Latin"},    {"pl", "Slavic-Latin", "Latin"},
      {"sk", "Slavic-Latin", "Latin"},     {"sl", "Slavic-Latin", "Latin"},    {"pt", "Romance", "Latin"},
      {"ro", "Romance", "Latin"},          {"es", "Romance", "Latin"},         {"hu", "Uralic", "Latin"},
  };
  for (const auto& l : table) r.add(l);
  return r;
}

void LanguageRegistry::add(LanguageInfo info) {
  if (info.code.empty()) fail(ErrorKind::InvalidArgument, "language code must be non-empty");
  if (contains(info.code)) fail(ErrorKind::InvalidArgument, "language code '" + info.code + "' already registered");
  langs_.push_back(std::move(info));
}

void LanguageRegistry::extend_from_file(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  if (!doc.is_array()) fail(ErrorKind::Parse, path.string() + ": registry file must be a JSON array");
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& e = doc[i];
    for (const char* key : {"code", "family", "script"}) {
      if (!e.is_object() || !e.contains(key) || !e[key].is_string())
        fail(ErrorKind::Parse, path.string() + ": entry " + std::to_string(i) + " missing string field '" + key + "'");
    }
    add({e["code"].get<std::string>(), e["family"].get<std::string>(), e["script"].get<std::string>()});
  }
}

const LanguageInfo* LanguageRegistry::find(const std::string& code) const {
  for (const auto& l : langs_)
    if (l.code == code) return &l;
  return nullptr;
}

const LanguageInfo& LanguageRegistry::at(const std::string& code) const {
  const auto* l = find(code);
  if (!l) fail(ErrorKind::Validation, "unregistered language '" + code + "'");
  return *l;
}

std::vector<std::string> LanguageRegistry::families() const {
  std::vector<std::string> out;
  for (const auto& f : kFamilyOrder)
    if (std::any_of(langs_.begin(), langs_.end(), [&](const auto& l) { return l.family == f; })) out.push_back(f);
  for (const auto& l : langs_)
    if (std::find(out.begin(), out.end(), l.family) == out.end()) out.push_back(l.family);
  return out;
}

std::vector<std::string> LanguageRegistry::family_members(const std::string& family) const {
  std::vector<std::string> out;
  for (const auto& l : langs_)
    if (l.family == family) out.push_back(l.code);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> LanguageRegistry::display_order() const {
  std::vector<std::string> out;
  for (const auto& f : families()) {
    auto members = family_members(f);
    out.insert(out.end(), members.begin(), members.end());
  }
  return out;
}

std::string LanguageRegistry::script_abbrev(const std::string& script) {
  if (script == "Latin") return "Lat";
  if (script == "Cyrillic") return "Cyr";
  if (script == "Greek") return "Grk";
  if (script == "Arabic") return "Arab";
  if (script == "Hanzi") return "Han";
  return script;
}

ClassRegistry ClassRegistry::builtin() {
  ClassRegistry r;
  r.add({"mistral", AuthorKind::Machine, 'M'});
  r.add({"opt", AuthorKind::Machine, 'O'});
  r.add({"eagle", AuthorKind::Machine, 'E'});
  r.add({"vicuna", AuthorKind::Machine, 'V'});
  r.add({"llama2", AuthorKind::Machine, 'L'});
  r.add({"aya", AuthorKind::Machine, 'A'});
  r.add({"gpt-3.5", AuthorKind::Machine, 'G'});
  r.add({"human", AuthorKind::Human, 'H'});
  return r;
}

void ClassRegistry::add(AuthorClass c) {
  if (find(c.name)) fail(ErrorKind::InvalidArgument, "class '" + c.name + "' already registered");
  if (c.kind == AuthorKind::Human &&
      std::any_of(classes_.begin(), classes_.end(), [](const auto& x) { return x.kind == AuthorKind::Human; }))
    fail(ErrorKind::InvalidArgument, "only one human class is allowed");
  classes_.push_back(std::move(c));
}

const AuthorClass* ClassRegistry::find(const std::string& name) const {
  for (const auto& c : classes_)
    if (c.name == name) return &c;
  return nullptr;
}

std::vector<std::string> ClassRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& c : classes_) out.push_back(c.name);
  return out;
}

const AuthorClass& ClassRegistry::human() const {
  for (const auto& c : classes_)
    if (c.kind == AuthorKind::Human) return c;
  fail(ErrorKind::Validation, "class registry has no human class");
}

const char* to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  fail(ErrorKind::Parse, "split must be \"train\" or \"test\", got \"" + s + "\"");
}

Corpus::Corpus(std::vector<TextSample> samples) : samples_(std::move(samples)) {
  for (const auto& s : samples_) ++cells_[{s.lang, s.label, s.split}];
}

std::size_t Corpus::count(const std::string& lang, const std::string& label, Split split) const {
  auto it = cells_.find({lang, label, split});
  return it == cells_.end() ? 0 : it->second;
}

std::size_t Corpus::count(Split split) const {
  std::size_t n = 0;
  for (const auto& [k, v] : cells_)
    if (std::get<2>(k) == split) n += v;
  return n;
}

std::set<std::string> Corpus::langs() const {
  std::set<std::string> out;
  for (const auto& [k, v] : cells_) out.insert(std::get<0>(k));
  return out;
}

std::set<std::string> Corpus::labels() const {
  std::set<std::string> out;
  for (const auto& [k, v] : cells_) out.insert(std::get<1>(k));
  return out;
}

Corpus Corpus::filter_split(Split split) const {
  std::vector<TextSample> out;
  for (const auto& s : samples_)
    if (s.split == split) out.push_back(s);
  return Corpus(std::move(out));
}

Corpus parse_corpus(const std::vector<std::string>& lines, LanguageRegistry& langs, ClassRegistry& classes,
                    const LoadOptions& opts, const std::string& source) {
  std::vector<TextSample> samples;
  std::unordered_map<std::string, std::size_t> seen;  // id -> line number
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t lineno = i + 1;
    const auto& line = lines[i];
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, where + ": malformed record: " + e.what());
    }
    if (!rec.is_object()) fail(ErrorKind::Parse, where + ": record must be a JSON object");
    auto field = [&](const char* key) {
      if (!rec.contains(key) || !rec[key].is_string())
        fail(ErrorKind::Parse, where + ": missing or non-string field '" + key + "'");
      return rec[key].get<std::string>();
    };
    TextSample s;
    s.id = field("id");
    s.text = field("text");
    s.lang = field("lang");
    s.label = field("label");
    try {
      s.split = parse_split(field("split"));
    } catch (const Error& e) {
      fail(ErrorKind::Parse, where + ": " + e.what());
    }
    if (s.text.empty()) fail(ErrorKind::Parse, where + ": empty text for id '" + s.id + "'");
    if (auto [it, inserted] = seen.emplace(s.id, lineno); !inserted)
      fail(ErrorKind::Validation, source + ": duplicate id '" + s.id + "' at lines " + std::to_string(it->second) +
                                      " and " + std::to_string(lineno));
    if (!langs.contains(s.lang)) {
      if (!opts.allow_unregistered)
        fail(ErrorKind::Validation, where + ": unknown language '" + s.lang + "' (use --allow-unregistered)");
      langs.add({s.lang, "unknown", "unknown"});
    }
    if (!classes.find(s.label)) {
      if (!opts.allow_unregistered)
        fail(ErrorKind::Validation, where + ": unknown label '" + s.label + "' (use --allow-unregistered)");
      char letter = static_cast<char>(std::toupper(static_cast<unsigned char>(s.label[0])));
      classes.add({s.label, AuthorKind::Machine, letter});
    }
    samples.push_back(std::move(s));
  }
  return Corpus(std::move(samples));
}

Corpus load_corpus(const std::filesystem::path& path, LanguageRegistry& langs, ClassRegistry& classes,
                   const LoadOptions& opts) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::Io, "corpus file not found: " + path.string());
  return parse_corpus(read_lines(path), langs, classes, opts, path.string());
}

std::string corpus_to_jsonl(const Corpus& corpus) {
  std::string out;
  for (const auto& s : corpus.samples()) {
    json rec = {{"id", s.id}, {"text", s.text}, {"lang", s.lang}, {"label", s.label}, {"split", to_string(s.split)}};
    out += rec.dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  write_file_atomic(path, corpus_to_jsonl(corpus));
}

std::size_t Rational::ceil_of(std::size_t n) const {
  const auto prod = static_cast<std::int64_t>(n) * num;
  return static_cast<std::size_t>((prod + den - 1) / den);
}

Rational Rational::parse(const std::string& text) {
  Rational r;
  try {
    if (auto slash = text.find('/'); slash != std::string::npos) {
      r.num = std::stoll(text.substr(0, slash));
      r.den = std::stoll(text.substr(slash + 1));
    } else if (auto dot = text.find('.'); dot != std::string::npos) {
      const std::string frac = text.substr(dot + 1);
      r.den = 1;
      for (std::size_t i = 0; i < frac.size(); ++i) r.den *= 10;
      r.num = std::stoll(text.substr(0, dot).empty() ? "0" : text.substr(0, dot)) * r.den +
              (frac.empty() ? 0 : std::stoll(frac));
    } else {
      r.num = std::stoll(text);
      r.den = 1;
    }
  } catch (const std::exception&) {
    fail(ErrorKind::Parse, "cannot parse fraction '" + text + "'");
  }
  if (r.den <= 0 || r.num <= 0 || r.num > r.den)
    fail(ErrorKind::InvalidArgument, "fraction '" + text + "' must lie in (0, 1]");
  const auto g = std::gcd(r.num, r.den);
  r.num /= g;
  r.den /= g;
  return r;
}

std::string BalanceReport::to_json() const {
  json doc = {{"pass", pass}, {"languages", json::array()}};
  for (const auto& l : languages) {
    json lj = {{"lang", l.lang}, {"pass", l.pass}, {"failing", json::array()}};
    for (const auto& c : l.failing)
      lj["failing"].push_back({{"label", c.label}, {"split", to_string(c.split)}, {"count", c.count},
                               {"required", c.required}});
    doc["languages"].push_back(lj);
  }
  return doc.dump(2);
}

BalanceReport validate_balance(const Corpus& corpus, const ClassRegistry& classes, const BalanceTargets& targets,
                               Rational min_fraction) {
  BalanceReport report;
  const std::size_t need_train = min_fraction.ceil_of(targets.train);
  const std::size_t need_test = min_fraction.ceil_of(targets.test);
  for (const auto& lang : corpus.langs()) {
    LanguageBalance lb;
    lb.lang = lang;
    for (const auto& cls : classes.classes()) {
      for (auto [split, need] : {std::pair{Split::Train, need_train}, std::pair{Split::Test, need_test}}) {
        const auto n = corpus.count(lang, cls.name, split);
        if (n < need) {
          lb.pass = false;
          lb.failing.push_back({lang, cls.name, split, n, need});
        }
      }
    }
    report.pass = report.pass && lb.pass;
    report.languages.push_back(std::move(lb));
  }
  return report;
}

namespace {

// Chooses k of n positions uniformly without replacement; returned sorted.
std::vector<std::size_t> sample_positions(std::size_t n, std::size_t k, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (k >= n) return idx;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::uint64_t cell_seed(std::uint64_t seed, const CellKey& key) {
  const auto& [lang, label, split] = key;
  return derive_seed(seed, "select/" + lang + "/" + label + "/" + to_string(split));
}

Corpus subsample_cells(const Corpus& corpus, const std::vector<std::size_t>& candidates,
                       const std::map<CellKey, std::size_t>& quota, std::uint64_t seed) {
  std::map<CellKey, std::vector<std::size_t>> by_cell;
  for (auto i : candidates) {
    const auto& s = corpus.samples()[i];
    by_cell[{s.lang, s.label, s.split}].push_back(i);
  }
  std::vector<std::size_t> keep;
  for (const auto& [key, members] : by_cell) {
    auto it = quota.find(key);
    const std::size_t k = it == quota.end() ? members.size() : std::min(it->second, members.size());
    for (auto p : sample_positions(members.size(), k, cell_seed(seed, key))) keep.push_back(members[p]);
  }
  std::sort(keep.begin(), keep.end());
  std::vector<TextSample> out;
  out.reserve(keep.size());
  for (auto i : keep) out.push_back(corpus.samples()[i]);
  return Corpus(std::move(out));
}

}  // namespace

Corpus select(const Corpus& corpus, const ClassRegistry& classes, const SelectionSpec& spec, std::uint64_t seed) {
  const auto present = corpus.langs();
  std::vector<std::string> missing;
  for (const auto* set : {&spec.human_langs, &spec.machine_langs})
    for (const auto& l : *set)
      if (!present.count(l) && std::find(missing.begin(), missing.end(), l) == missing.end()) missing.push_back(l);
  if (!missing.empty()) fail(ErrorKind::Validation, "languages absent from corpus: " + join(missing, ", "));

  const std::string human = classes.human().name;
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus.samples()[i];
    const auto& langs = s.label == human ? spec.human_langs : spec.machine_langs;
    if (langs.count(s.lang)) candidates.push_back(i);
  }

  std::map<CellKey, std::size_t> quota;
  for (auto i : candidates) {
    const auto& s = corpus.samples()[i];
    CellKey key{s.lang, s.label, s.split};
    if (quota.count(key)) continue;
    std::size_t n = corpus.count(s.lang, s.label, s.split);
    if (spec.fraction) n = spec.fraction->ceil_of(n);
    if (spec.per_class_cap) n = std::min(n, *spec.per_class_cap);
    quota[key] = n;
  }
  return subsample_cells(corpus, candidates, quota, seed);
}

Corpus select_equalized_union(const Corpus& corpus, const std::set<std::string>& langs, std::uint64_t seed) {
  const auto present = corpus.langs();
  std::vector<std::string> missing;
  for (const auto& l : langs)
    if (!present.count(l)) missing.push_back(l);
  if (!missing.empty()) fail(ErrorKind::Validation, "languages absent from corpus: " + join(missing, ", "));
  if (langs.empty()) return Corpus{};

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus.samples()[i];
    if (s.split == Split::Train && langs.count(s.lang)) candidates.push_back(i);
  }
  const auto m = langs.size();
  std::map<CellKey, std::size_t> quota;
  for (const auto& label : corpus.labels()) {
    std::size_t total = 0;
    for (const auto& l : langs) total += corpus.count(l, label, Split::Train);
    // Target per class: the rounded mean single-language cell size.
    const std::size_t target = (total + m / 2) / m;
    std::size_t idx = 0;
    for (const auto& l : langs) {
      quota[{l, label, Split::Train}] = target / m + (idx < target % m ? 1 : 0);
      ++idx;
    }
  }
  return subsample_cells(corpus, candidates, quota, seed);
}

RunKind check_cl(const ExperimentLanguages& langs, const LanguageRegistry& registry) {
  if (langs.train.empty() || langs.test.empty())
    fail(ErrorKind::InvalidArgument, "train and test language sets must be non-empty");
  for (const auto* set : {&langs.train, &langs.test})
    for (const auto& l : *set)
      if (!registry.contains(l)) fail(ErrorKind::Validation, "unregistered language '" + l + "'");
  if (langs.train == langs.test) return RunKind::Multilingual;
  if (std::includes(langs.test.begin(), langs.test.end(), langs.train.begin(), langs.train.end()))
    return RunKind::CrossLingual;
  fail(ErrorKind::Validation, "test set must cover training languages");
}

const char* to_string(RunKind k) { return k == RunKind::Multilingual ? "ML-MGT" : "CL-MGT"; }

}  // namespace attribkit
