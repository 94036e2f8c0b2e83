#include "attribkit/report.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <sstream>

#include "attribkit/error.hpp"
#include "attribkit/util.hpp"

namespace attribkit {

const char* to_string(Layout l) {
  switch (l) {
    case Layout::Table2: return "table2";
    case Layout::Table3: return "table3";
    case Layout::Table4: return "table4";
    case Layout::Confusion: return "confusion";
    case Layout::Generators: return "generators";
  }
  return "?";
}

Layout parse_layout(const std::string& s) {
  for (auto l : {Layout::Table2, Layout::Table3, Layout::Table4, Layout::Confusion, Layout::Generators})
    if (s == to_string(l)) return l;
  fail(ErrorKind::InvalidArgument, "unknown layout '" + s + "' (expected table2, table3, table4, confusion, generators)");
}

void write_report(const Report& r, const std::filesystem::path& stem) {
  write_file_atomic(stem.string() + ".md", r.markdown);
  write_file_atomic(stem.string() + ".csv", r.csv);
}

char class_letter(const std::string& name, const ClassRegistry& classes) {
  if (const auto* c = classes.find(name)) return c->letter;
  return name.empty() ? '?' : static_cast<char>(std::toupper(static_cast<unsigned char>(name[0])));
}

namespace {

constexpr const char* kMissing = "—";

struct ColumnGroup {
  std::string label;
  std::vector<std::string> langs;
};

std::vector<ColumnGroup> group_languages(const std::set<std::string>& present, const LanguageRegistry& reg) {
  std::vector<ColumnGroup> groups;
  ColumnGroup others{"Others", {}};
  for (const auto& fam : reg.families()) {
    ColumnGroup g{fam, {}};
    for (const auto& code : reg.family_members(fam))
      if (present.count(code)) g.langs.push_back(code);
    if (g.langs.size() == 1)
      others.langs.push_back(g.langs[0]);
    else if (!g.langs.empty())
      groups.push_back(std::move(g));
  }
  for (const auto& code : present)
    if (!reg.contains(code)) others.langs.push_back(code);
  if (!others.langs.empty()) groups.push_back(std::move(others));
  return groups;
}

struct RowKey {
  std::string train;
  std::string method;
  bool operator==(const RowKey&) const = default;
};

std::vector<RowKey> row_keys(const std::vector<ScoreRecord>& records) {
  std::vector<RowKey> keys;
  for (const auto& r : records) {
    RowKey k{r.train_langs, r.method};
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  }
  return keys;
}

using RecordIndex = std::map<std::tuple<std::string, std::string, std::string>, const ScoreRecord*>;

RecordIndex index_records(const std::vector<ScoreRecord>& records) {
  RecordIndex idx;
  for (const auto& r : records) idx[{r.train_langs, r.method, r.test_lang}] = &r;
  return idx;
}

std::optional<double> lookup(const RecordIndex& idx, const RowKey& k, const std::string& lang) {
  auto it = idx.find({k.train, k.method, lang});
  if (it == idx.end()) return std::nullopt;
  return it->second->macro;
}

std::string md_row(const std::vector<std::string>& cells) {
  std::string s = "|";
  for (const auto& c : cells) s += " " + c + " |";
  return s + "\n";
}

std::string md_rule(std::size_t label_cols, std::size_t value_cols) {
  std::string s = "|";
  for (std::size_t i = 0; i < label_cols; ++i) s += "---|";
  for (std::size_t i = 0; i < value_cols; ++i) s += "---:|";
  return s + "\n";
}

std::string csv_row(const std::vector<std::string>& cells) {
  std::vector<std::string> esc;
  for (const auto& c : cells) esc.push_back(csv_escape(c));
  return join(esc, ",") + "\n";
}

std::string csv_value(const std::optional<double>& v) { return v ? fmt_fixed(*v, 6) : ""; }

// Marks the largest value of every column (ties share the mark).
std::vector<std::vector<bool>> best_marks(const std::vector<std::vector<std::optional<double>>>& grid) {
  std::vector<std::vector<bool>> best(grid.size());
  if (grid.empty()) return best;
  const std::size_t cols = grid[0].size();
  for (auto& b : best) b.assign(cols, false);
  for (std::size_t c = 0; c < cols; ++c) {
    std::optional<double> mx;
    for (const auto& row : grid)
      if (row[c] && (!mx || *row[c] > *mx)) mx = row[c];
    if (!mx) continue;
    for (std::size_t r = 0; r < grid.size(); ++r)
      if (grid[r][c] && std::abs(*grid[r][c] - *mx) <= 1e-12) best[r][c] = true;
  }
  return best;
}

std::string md_value(const std::optional<double>& v, bool best) {
  if (!v) return kMissing;
  return best ? "**" + fmt_fixed(*v, 2) + "**" : fmt_fixed(*v, 2);
}

std::string script_footer(const std::vector<std::string>& codes, const LanguageRegistry& reg) {
  std::vector<std::string> seen;
  for (const auto& code : codes) {
    const auto* info = reg.find(code);
    if (!info) continue;
    auto item = LanguageRegistry::script_abbrev(info->script) + " = " + info->script;
    if (std::find(seen.begin(), seen.end(), item) == seen.end()) seen.push_back(item);
  }
  if (seen.empty()) return "";
  return "\nScripts: " + join(seen, ", ") + ".\n";
}

std::string script_of(const std::string& code, const LanguageRegistry& reg) {
  const auto* info = reg.find(code);
  return info ? LanguageRegistry::script_abbrev(info->script) : "?";
}

Report render_language_table(const std::vector<ScoreRecord>& records, const LanguageRegistry& reg, bool with_train,
                             const std::string& title) {
  std::set<std::string> present;
  for (const auto& r : records)
    if (r.test_lang != kPooled && r.test_lang != kLanguageMean) present.insert(r.test_lang);
  const auto groups = group_languages(present, reg);
  std::vector<std::string> cols;
  for (const auto& g : groups) cols.insert(cols.end(), g.langs.begin(), g.langs.end());

  const auto keys = row_keys(records);
  const auto idx = index_records(records);
  Report rep;

  // Value grid: languages, then pooled, then mean.
  std::vector<std::vector<std::optional<double>>> grid;
  for (const auto& k : keys) {
    std::vector<std::optional<double>> row;
    for (const auto& c : cols) row.push_back(lookup(idx, k, c));
    row.push_back(lookup(idx, k, kPooled));
    row.push_back(lookup(idx, k, kLanguageMean));
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row[i]) continue;
      const std::string col = i < cols.size() ? cols[i] : (i == cols.size() ? "all (pooled)" : "all (mean)");
      rep.warnings.push_back("missing cell: method " + k.method + ", train " + k.train + ", test " + col);
    }
    grid.push_back(std::move(row));
  }
  const auto best = best_marks(grid);

  const std::size_t label_cols = with_train ? 2 : 1;
  std::ostringstream md;
  md << "## " << title << "\n\n";
  std::vector<std::string> head;
  if (with_train) head.push_back("Train");
  head.push_back("Method");
  head.insert(head.end(), cols.begin(), cols.end());
  head.push_back("all (pooled / mean)");
  md << md_row(head) << md_rule(label_cols, cols.size() + 1);

  std::vector<std::string> fam_row(label_cols, "");
  fam_row.back() = "*Family*";
  for (const auto& g : groups)
    for (std::size_t i = 0; i < g.langs.size(); ++i) fam_row.push_back(i == 0 ? g.label : "");
  fam_row.push_back("");
  md << md_row(fam_row);
  std::vector<std::string> script_row(label_cols, "");
  script_row.back() = "*Script*";
  for (const auto& c : cols) script_row.push_back(script_of(c, reg));
  script_row.push_back("");
  md << md_row(script_row);

  for (std::size_t r = 0; r < keys.size(); ++r) {
    std::vector<std::string> cells;
    if (with_train) cells.push_back(keys[r].train);
    cells.push_back(keys[r].method);
    for (std::size_t c = 0; c < cols.size(); ++c) cells.push_back(md_value(grid[r][c], best[r][c]));
    const std::size_t p = cols.size();
    cells.push_back(md_value(grid[r][p], best[r][p]) + " / " + md_value(grid[r][p + 1], best[r][p + 1]));
    md << md_row(cells);
  }
  md << script_footer(cols, reg);
  md << "\nall: pooled = macro F1 over the pooled test set; mean = unweighted mean of per-language macro F1.\n";
  if (!rep.warnings.empty()) {
    md << "\nWarnings:\n";
    for (const auto& w : rep.warnings) md << "- " << w << "\n";
  }
  rep.markdown = md.str();

  std::ostringstream csv;
  std::vector<std::string> chead = {"method", "train_langs"};
  chead.insert(chead.end(), cols.begin(), cols.end());
  chead.push_back("all_pooled");
  chead.push_back("all_mean");
  csv << csv_row(chead);
  for (std::size_t r = 0; r < keys.size(); ++r) {
    std::vector<std::string> cells = {keys[r].method, keys[r].train};
    for (const auto& v : grid[r]) cells.push_back(csv_value(v));
    csv << csv_row(cells);
  }
  rep.csv = csv.str();
  return rep;
}

}  // namespace

Report render_table2(const std::vector<ScoreRecord>& records, const LanguageRegistry& langs) {
  return render_language_table(records, langs, false, "Multilingual attribution (macro F1)");
}

Report render_table3(const std::vector<ScoreRecord>& records, const LanguageRegistry& langs) {
  return render_language_table(records, langs, true, "Cross-lingual attribution (macro F1)");
}

Report render_table4(const std::vector<ScoreRecord>& records, const LanguageRegistry& langs) {
  std::set<std::string> present;
  for (const auto& r : records)
    if (r.test_lang != kPooled && r.test_lang != kLanguageMean) present.insert(r.test_lang);

  std::vector<std::string> families;
  std::map<std::string, std::size_t> family_n;
  for (const auto& fam : langs.families()) {
    std::size_t n = 0;
    for (const auto& code : langs.family_members(fam)) n += present.count(code);
    if (n == 0) continue;
    families.push_back(fam);
    family_n[fam] = n;
  }

  Report rep;
  for (const auto& code : present)
    if (!langs.contains(code)) rep.warnings.push_back("language without family: " + code);

  const auto keys = row_keys(records);
  const auto idx = index_records(records);
  std::vector<std::vector<std::optional<double>>> grid;
  for (const auto& k : keys) {
    std::map<std::string, double> per_lang;
    for (const auto& code : present)
      if (auto v = lookup(idx, k, code); v && langs.contains(code)) per_lang[code] = *v;
    std::map<std::string, FamilyMean> means;
    for (const auto& fm : aggregate_by_family(per_lang, langs)) means[fm.family] = fm;
    std::vector<std::optional<double>> row;
    for (const auto& fam : families) {
      auto it = means.find(fam);
      if (it == means.end()) {
        row.push_back(std::nullopt);
        rep.warnings.push_back("missing cell: method " + k.method + ", train " + k.train + ", family " + fam);
        continue;
      }
      if (it->second.n != family_n[fam])
        rep.warnings.push_back("partial family: method " + k.method + ", train " + k.train + ", family " + fam +
                               " (" + std::to_string(it->second.n) + " of " + std::to_string(family_n[fam]) + ")");
      row.push_back(it->second.mean);
    }
    grid.push_back(std::move(row));
  }
  const auto best = best_marks(grid);

  std::ostringstream md;
  md << "## Cross-lingual attribution by language family (mean macro F1)\n\n";
  std::vector<std::string> head = {"Train", "Method"};
  for (const auto& fam : families) head.push_back(fam + " (N=" + std::to_string(family_n[fam]) + ")");
  md << md_row(head) << md_rule(2, families.size());
  for (std::size_t r = 0; r < keys.size(); ++r) {
    std::vector<std::string> cells = {keys[r].train, keys[r].method};
    for (std::size_t c = 0; c < families.size(); ++c) cells.push_back(md_value(grid[r][c], best[r][c]));
    md << md_row(cells);
  }
  md << "\nN = number of test languages in the family.\n";
  if (!rep.warnings.empty()) {
    md << "\nWarnings:\n";
    for (const auto& w : rep.warnings) md << "- " << w << "\n";
  }
  rep.markdown = md.str();

  std::ostringstream csv;
  csv << csv_row({"method", "train_langs", "family", "n", "mean_macro_f1"});
  for (std::size_t r = 0; r < keys.size(); ++r)
    for (std::size_t c = 0; c < families.size(); ++c)
      csv << csv_row({keys[r].method, keys[r].train, families[c], std::to_string(family_n[families[c]]),
                      csv_value(grid[r][c])});
  rep.csv = csv.str();
  return rep;
}

Report render_confusion(const ConfusionMatrix& m, const ClassRegistry& classes, const std::string& title) {
  Report rep;
  const auto pct = row_percent(m);
  std::vector<std::string> letters;
  for (const auto& c : m.classes) letters.push_back(std::string(1, class_letter(c, classes)));

  std::ostringstream md;
  md << "## " << title << "\n\n";
  std::vector<std::string> head = {"true \\ pred"};
  head.insert(head.end(), letters.begin(), letters.end());
  head.push_back("n");
  md << md_row(head) << md_rule(1, letters.size() + 1);
  for (std::size_t i = 0; i < m.classes.size(); ++i) {
    std::vector<std::string> cells = {letters[i]};
    for (std::size_t j = 0; j < m.classes.size(); ++j) cells.push_back(fmt_fixed(pct.percent[i][j], 1));
    cells.push_back(std::to_string(m.support(i)));
    md << md_row(cells);
    if (pct.zero_support[i]) rep.warnings.push_back("no support for class " + m.classes[i]);
  }
  std::vector<std::string> legend;
  for (std::size_t i = 0; i < m.classes.size(); ++i) legend.push_back(letters[i] + " = " + m.classes[i]);
  md << "\nRow percentages (rows = true class, columns = predicted class). " << join(legend, ", ") << ".\n";
  if (!rep.warnings.empty()) {
    md << "\nWarnings:\n";
    for (const auto& w : rep.warnings) md << "- " << w << "\n";
  }
  rep.markdown = md.str();

  std::ostringstream csv;
  std::vector<std::string> chead = {"true", "support"};
  chead.insert(chead.end(), m.classes.begin(), m.classes.end());
  csv << csv_row(chead);
  for (std::size_t i = 0; i < m.classes.size(); ++i) {
    std::vector<std::string> cells = {m.classes[i], std::to_string(m.support(i))};
    for (std::size_t j = 0; j < m.classes.size(); ++j) cells.push_back(fmt_fixed(pct.percent[i][j], 6));
    csv << csv_row(cells);
  }
  rep.csv = csv.str();
  return rep;
}

Report render_generators(const GeneratorTable& t, const ClassRegistry& classes) {
  Report rep;
  std::ostringstream md;
  md << "## Per-generator F1: " << t.method << " (train " << t.train_langs << ")\n\n";
  std::vector<std::string> head = {"Class"};
  head.insert(head.end(), t.langs.begin(), t.langs.end());
  md << md_row(head) << md_rule(1, t.langs.size());
  std::vector<std::vector<std::optional<double>>> grid;
  for (std::size_t c = 0; c < t.classes.size(); ++c) {
    std::vector<std::optional<double>> row;
    for (std::size_t l = 0; l < t.langs.size(); ++l) {
      if (t.support[c][l] > 0) {
        row.push_back(t.f1[c][l]);
      } else {
        row.push_back(std::nullopt);
        rep.warnings.push_back("no support: class " + t.classes[c] + ", test " + t.langs[l]);
      }
    }
    grid.push_back(std::move(row));
  }
  for (std::size_t c = 0; c < t.classes.size(); ++c) {
    std::vector<std::string> cells = {std::string(1, class_letter(t.classes[c], classes)) + " (" + t.classes[c] + ")"};
    for (const auto& v : grid[c]) cells.push_back(md_value(v, false));
    md << md_row(cells);
  }
  std::vector<std::string> macro = {"macro"};
  for (double v : t.macro) macro.push_back(fmt_fixed(v, 2));
  md << md_row(macro);
  md << "\nPer-class F1 from each test language's confusion matrix; the macro row is their unweighted mean.\n";
  if (!rep.warnings.empty()) {
    md << "\nWarnings:\n";
    for (const auto& w : rep.warnings) md << "- " << w << "\n";
  }
  rep.markdown = md.str();

  std::ostringstream csv;
  csv << csv_row({"method", "train_langs", "class", "test_lang", "f1", "support"});
  for (std::size_t c = 0; c < t.classes.size(); ++c)
    for (std::size_t l = 0; l < t.langs.size(); ++l)
      csv << csv_row({t.method, t.train_langs, t.classes[c], t.langs[l], csv_value(grid[c][l]),
                      std::to_string(t.support[c][l])});
  for (std::size_t l = 0; l < t.langs.size(); ++l)
    csv << csv_row({t.method, t.train_langs, "macro", t.langs[l], fmt_fixed(t.macro[l], 6), ""});
  rep.csv = csv.str();
  return rep;
}

}  // namespace attribkit
