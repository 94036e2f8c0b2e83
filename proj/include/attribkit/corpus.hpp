#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace attribkit {

struct LanguageInfo {
  std::string code;
  std::string family;
  std::string script;
};

// Language taxonomy. The built-in table holds the 18 study languages; user
// extensions are appended after them and may not redefine a code.
class LanguageRegistry {
 public:
  static LanguageRegistry builtin();
  static LanguageRegistry empty() { return LanguageRegistry{}; }

  // Extension file: JSON array of {code, family, script}.
  void extend_from_file(const std::filesystem::path& path);
  void add(LanguageInfo info);

  const LanguageInfo* find(const std::string& code) const;
  const LanguageInfo& at(const std::string& code) const;
  bool contains(const std::string& code) const { return find(code) != nullptr; }

  const std::vector<LanguageInfo>& languages() const { return langs_; }

  // Family names in display order (built-in order first, then first appearance).
  std::vector<std::string> families() const;
  // Codes of a family sorted alphabetically.
  std::vector<std::string> family_members(const std::string& family) const;
  // All codes grouped by family in display order.
  std::vector<std::string> display_order() const;

  static std::string script_abbrev(const std::string& script);

 private:
  std::vector<LanguageInfo> langs_;
};

enum class AuthorKind { Human, Machine };

struct AuthorClass {
  std::string name;
  AuthorKind kind = AuthorKind::Machine;
  char letter = '?';
};

class ClassRegistry {
 public:
  // Mistral, OPT, Eagle, Vicuna, Llama2, Aya, GPT-3.5, human (letters MOEVLAGH).
  static ClassRegistry builtin();

  void add(AuthorClass c);
  const AuthorClass* find(const std::string& name) const;
  const std::vector<AuthorClass>& classes() const { return classes_; }
  std::vector<std::string> names() const;
  const AuthorClass& human() const;

 private:
  std::vector<AuthorClass> classes_;
};

enum class Split { Train, Test };

const char* to_string(Split s);
Split parse_split(const std::string& s);

struct TextSample {
  std::string id;
  std::string text;
  std::string lang;
  std::string label;
  Split split = Split::Train;
};

using CellKey = std::tuple<std::string, std::string, Split>;  // (lang, label, split)

class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<TextSample> samples);

  const std::vector<TextSample>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }

  std::size_t count(const std::string& lang, const std::string& label, Split split) const;
  std::size_t count(Split split) const;
  const std::map<CellKey, std::size_t>& cells() const { return cells_; }
  std::set<std::string> langs() const;
  std::set<std::string> labels() const;

  Corpus filter_split(Split split) const;

 private:
  std::vector<TextSample> samples_;
  std::map<CellKey, std::size_t> cells_;
};

struct LoadOptions {
  bool allow_unregistered = false;
};

// Registries are taken by reference so that unregistered codes admitted by
// allow_unregistered can be recorded (family/script "unknown").
Corpus load_corpus(const std::filesystem::path& path, LanguageRegistry& langs, ClassRegistry& classes,
                   const LoadOptions& opts = {});
Corpus parse_corpus(const std::vector<std::string>& lines, LanguageRegistry& langs, ClassRegistry& classes,
                    const LoadOptions& opts = {}, const std::string& source = "<memory>");
std::string corpus_to_jsonl(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct BalanceTargets {
  std::size_t train = 1000;
  std::size_t test = 300;
};

struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  // ceil(num * n / den) in exact integer arithmetic.
  std::size_t ceil_of(std::size_t n) const;
  static Rational parse(const std::string& text);  // "1/3", "0.95", "1"
};

struct BalanceCell {
  std::string lang;
  std::string label;
  Split split;
  std::size_t count;
  std::size_t required;
};

struct LanguageBalance {
  std::string lang;
  bool pass = true;
  std::vector<BalanceCell> failing;
};

struct BalanceReport {
  bool pass = true;
  std::vector<LanguageBalance> languages;
  std::string to_json() const;
};

BalanceReport validate_balance(const Corpus& corpus, const ClassRegistry& classes, const BalanceTargets& targets,
                               Rational min_fraction);

struct SelectionSpec {
  std::set<std::string> human_langs;    // L'
  std::set<std::string> machine_langs;  // L''
  std::optional<std::size_t> per_class_cap;
  std::optional<Rational> fraction;
};

// X^ = g(X_h, L') u g(X_m, L''); per-(lang, class, split) cells optionally
// subsampled to ceil(fraction * cell), then capped. Output keeps corpus order.
Corpus select(const Corpus& corpus, const ClassRegistry& classes, const SelectionSpec& spec, std::uint64_t seed);

// Subsamples the train split of `langs` so that every (class) cell of the union
// has the mean single-language size, apportioned evenly across languages.
Corpus select_equalized_union(const Corpus& corpus, const std::set<std::string>& langs, std::uint64_t seed);

enum class RunKind { Multilingual, CrossLingual };

struct ExperimentLanguages {
  std::set<std::string> train;
  std::set<std::string> test;
};

RunKind check_cl(const ExperimentLanguages& langs, const LanguageRegistry& registry);
const char* to_string(RunKind k);

}  // namespace attribkit
