#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "attribkit/corpus.hpp"
#include "attribkit/evalx.hpp"

namespace attribkit {

enum class Layout { Table2, Table3, Table4, Confusion, Generators };
const char* to_string(Layout l);
Layout parse_layout(const std::string& s);

struct Report {
  std::string markdown;
  std::string csv;
  std::vector<std::string> warnings;  // missing cells, zero-support rows
};

// Writes <stem>.md and <stem>.csv atomically.
void write_report(const Report& r, const std::filesystem::path& stem);

// Single letter for a class (registry letter, else the uppercased first character).
char class_letter(const std::string& name, const ClassRegistry& classes);

// Rows = methods, columns = test languages grouped by family (single-language
// families collapse into "Others") followed by one "all" column holding the
// pooled and the per-language-mean macro F1.
Report render_table2(const std::vector<ScoreRecord>& records, const LanguageRegistry& langs);

// As table2 with one row per (training languages, method).
Report render_table3(const std::vector<ScoreRecord>& records, const LanguageRegistry& langs);

// Per-family means of per-language macro F1, one row per (training languages, method).
Report render_table4(const std::vector<ScoreRecord>& records, const LanguageRegistry& langs);

// Row percentages with single-letter class labels.
Report render_confusion(const ConfusionMatrix& m, const ClassRegistry& classes, const std::string& title);

// Per-class F1 for every (class, test language); classes in registry order.
struct GeneratorTable {
  std::string method;
  std::string train_langs;
  std::vector<std::string> classes;
  std::vector<std::string> langs;              // display order, then "all"
  std::vector<std::vector<double>> f1;         // [class][lang]
  std::vector<std::vector<std::int64_t>> support;
  std::vector<double> macro;                   // per lang, mean over classes
};

Report render_generators(const GeneratorTable& t, const ClassRegistry& classes);

}  // namespace attribkit
