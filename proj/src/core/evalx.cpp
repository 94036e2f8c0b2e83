#include "attribkit/evalx.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "attribkit/error.hpp"
#include "attribkit/util.hpp"

namespace attribkit {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> class_order)
    : classes(std::move(class_order)), counts(classes.size(), std::vector<std::int64_t>(classes.size(), 0)) {}

std::size_t ConfusionMatrix::index_of(const std::string& label) const {
  auto it = std::find(classes.begin(), classes.end(), label);
  if (it == classes.end()) fail(ErrorKind::Validation, "unknown label '" + label + "'");
  return static_cast<std::size_t>(it - classes.begin());
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t n = 0;
  for (const auto& row : counts)
    for (auto c : row) n += c;
  return n;
}

std::int64_t ConfusionMatrix::support(std::size_t i) const {
  std::int64_t n = 0;
  for (auto c : counts[i]) n += c;
  return n;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.classes != classes) fail(ErrorKind::InvalidArgument, "cannot add confusion matrices with different classes");
  for (std::size_t i = 0; i < counts.size(); ++i)
    for (std::size_t j = 0; j < counts.size(); ++j) counts[i][j] += other.counts[i][j];
  return *this;
}

ConfusionMatrix confusion(std::span<const std::string> truth, std::span<const std::string> pred,
                          const std::vector<std::string>& class_order) {
  if (truth.size() != pred.size())
    fail(ErrorKind::InvalidArgument, "truth and prediction lengths differ (" + std::to_string(truth.size()) + " vs " +
                                         std::to_string(pred.size()) + ")");
  ConfusionMatrix m(class_order);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < class_order.size(); ++i) index[class_order[i]] = i;
  auto lookup = [&](const std::string& l) {
    auto it = index.find(l);
    if (it == index.end()) fail(ErrorKind::Validation, "unknown label '" + l + "'");
    return it->second;
  };
  for (std::size_t i = 0; i < truth.size(); ++i) m.add(lookup(truth[i]), lookup(pred[i]));
  return m;
}

ConfusionMatrix confusion(std::span<const int> truth, std::span<const int> pred,
                          const std::vector<std::string>& class_order) {
  if (truth.size() != pred.size()) fail(ErrorKind::InvalidArgument, "truth and prediction lengths differ");
  ConfusionMatrix m(class_order);
  const int k = static_cast<int>(class_order.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= k || pred[i] < 0 || pred[i] >= k)
      fail(ErrorKind::Validation, "label index out of range at position " + std::to_string(i));
    m.add(static_cast<std::size_t>(truth[i]), static_cast<std::size_t>(pred[i]));
  }
  return m;
}

RowPercent row_percent(const ConfusionMatrix& m) {
  RowPercent out;
  for (std::size_t i = 0; i < m.counts.size(); ++i) {
    const auto support = m.support(i);
    std::vector<double> row(m.counts.size(), 0.0);
    if (support > 0)
      for (std::size_t j = 0; j < row.size(); ++j)
        row[j] = 100.0 * static_cast<double>(m.counts[i][j]) / static_cast<double>(support);
    out.percent.push_back(std::move(row));
    out.zero_support.push_back(support == 0);
  }
  return out;
}

F1Scores f1_scores(const ConfusionMatrix& m) {
  const std::size_t k = m.classes.size();
  F1Scores s;
  s.precision.assign(k, 0.0);
  s.recall.assign(k, 0.0);
  s.f1.assign(k, 0.0);
  s.support.assign(k, 0);
  std::int64_t total_support = 0;
  double weighted_sum = 0.0, macro_sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const auto tp = static_cast<double>(m.counts[i][i]);
    std::int64_t col = 0;
    for (std::size_t r = 0; r < k; ++r) col += m.counts[r][i];
    const auto row = m.support(i);
    s.support[i] = row;
    s.precision[i] = col > 0 ? tp / static_cast<double>(col) : 0.0;
    s.recall[i] = row > 0 ? tp / static_cast<double>(row) : 0.0;
    const double pr = s.precision[i] + s.recall[i];
    s.f1[i] = pr > 0 ? 2.0 * s.precision[i] * s.recall[i] / pr : 0.0;
    macro_sum += s.f1[i];
    if (row > 0) {
      weighted_sum += static_cast<double>(row) * s.f1[i];
      total_support += row;
    }
  }
  s.macro = k ? macro_sum / static_cast<double>(k) : 0.0;
  s.weighted = total_support > 0 ? weighted_sum / static_cast<double>(total_support) : 0.0;
  return s;
}

std::vector<FamilyMean> aggregate_by_family(const std::map<std::string, double>& per_language,
                                            const LanguageRegistry& registry) {
  std::vector<FamilyMean> out;
  for (const auto& family : registry.families()) {
    FamilyMean fm;
    fm.family = family;
    double sum = 0.0;
    for (const auto& code : registry.family_members(family)) {
      auto it = per_language.find(code);
      if (it == per_language.end()) continue;
      sum += it->second;
      ++fm.n;
    }
    if (fm.n == 0) continue;
    fm.mean = sum / static_cast<double>(fm.n);
    out.push_back(fm);
  }
  for (const auto& [code, v] : per_language)
    if (!registry.contains(code)) fail(ErrorKind::Validation, "language '" + code + "' has no registered family");
  return out;
}

std::string predictions_to_jsonl(const std::vector<Prediction>& preds) {
  std::string out;
  for (const auto& p : preds) {
    json rec = {{"doc_id", p.doc_id}, {"lang", p.lang}, {"true", p.truth}, {"pred", p.pred}};
    if (p.proba) rec["proba"] = *p.proba;
    out += rec.dump();
    out += '\n';
  }
  return out;
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::Io, "predictions file not found: " + path.string());
  std::vector<Prediction> out;
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    json rec;
    try {
      rec = json::parse(lines[i]);
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, where + ": malformed record: " + e.what());
    }
    Prediction p;
    auto field = [&](const char* key) {
      if (!rec.is_object() || !rec.contains(key) || !rec[key].is_string())
        fail(ErrorKind::Parse, where + ": missing or non-string field '" + key + "'");
      return rec[key].get<std::string>();
    };
    p.doc_id = field("doc_id");
    p.lang = field("lang");
    p.truth = field("true");
    p.pred = field("pred");
    if (rec.contains("proba") && !rec["proba"].is_null()) {
      try {
        p.proba = rec["proba"].get<std::map<std::string, double>>();
      } catch (const json::exception&) {
        fail(ErrorKind::Parse, where + ": 'proba' must map labels to numbers");
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

void save_predictions(const std::vector<Prediction>& preds, const std::filesystem::path& path) {
  write_file_atomic(path, predictions_to_jsonl(preds));
}

std::vector<std::string> class_order_for(const std::vector<Prediction>& preds, const ClassRegistry& classes) {
  std::set<std::string> seen;
  for (const auto& p : preds) {
    seen.insert(p.truth);
    seen.insert(p.pred);
  }
  std::vector<std::string> out;
  for (const auto& c : classes.classes())
    if (seen.erase(c.name)) out.push_back(c.name);
  out.insert(out.end(), seen.begin(), seen.end());
  return out;
}

InternalExternal internal_external(const std::vector<Prediction>& preds, const std::set<std::string>& train_langs,
                                   const std::vector<std::string>& class_order) {
  InternalExternal out{ConfusionMatrix(class_order), ConfusionMatrix(class_order)};
  for (const auto& p : preds) {
    auto& m = train_langs.count(p.lang) ? out.internal : out.external;
    m.add(m.index_of(p.truth), m.index_of(p.pred));
  }
  return out;
}

std::string train_tag(const std::set<std::string>& langs) {
  return join(std::vector<std::string>(langs.begin(), langs.end()), "-");
}

namespace {

ScoreRecord make_record(const std::string& method, const std::string& train, const std::string& test,
                        const ConfusionMatrix& m) {
  const auto s = f1_scores(m);
  return {method, train, test, m.classes, s.f1, s.support, s.macro, s.weighted};
}

}  // namespace

std::vector<ScoreRecord> evaluate_predictions(const std::vector<Prediction>& preds, const std::string& method,
                                              const std::string& train_langs,
                                              const std::vector<std::string>& class_order,
                                              const LanguageRegistry& registry) {
  std::set<std::string> langs;
  for (const auto& p : preds) langs.insert(p.lang);
  std::vector<std::string> order;
  for (const auto& code : registry.display_order())
    if (langs.erase(code)) order.push_back(code);
  order.insert(order.end(), langs.begin(), langs.end());

  std::vector<ScoreRecord> out;
  ConfusionMatrix pooled(class_order);
  double macro_sum = 0.0;
  for (const auto& lang : order) {
    ConfusionMatrix m(class_order);
    for (const auto& p : preds)
      if (p.lang == lang) m.add(m.index_of(p.truth), m.index_of(p.pred));
    pooled += m;
    out.push_back(make_record(method, train_langs, lang, m));
    macro_sum += out.back().macro;
  }
  out.push_back(make_record(method, train_langs, kPooled, pooled));
  ScoreRecord mean;
  mean.method = method;
  mean.train_langs = train_langs;
  mean.test_lang = kLanguageMean;
  mean.macro = order.empty() ? 0.0 : macro_sum / static_cast<double>(order.size());
  mean.weighted = mean.macro;
  mean.support = {pooled.total()};
  out.push_back(std::move(mean));
  return out;
}

std::string results_to_csv(const std::vector<ScoreRecord>& records) {
  std::string out = "method,train_langs,test_lang,class,f1,support\n";
  auto row = [&](const ScoreRecord& r, const std::string& cls, double f1, std::int64_t support) {
    out += csv_escape(r.method) + ',' + csv_escape(r.train_langs) + ',' + csv_escape(r.test_lang) + ',' +
           csv_escape(cls) + ',' + fmt_exact(f1) + ',' + std::to_string(support) + '\n';
  };
  for (const auto& r : records) {
    std::int64_t total = 0;
    for (std::size_t i = 0; i < r.classes.size(); ++i) {
      row(r, r.classes[i], r.f1[i], r.support[i]);
      total += r.support[i];
    }
    if (r.test_lang == kLanguageMean) {
      row(r, "macro", r.macro, r.support.empty() ? 0 : r.support.front());
    } else {
      row(r, "macro", r.macro, total);
      row(r, "weighted", r.weighted, total);
    }
  }
  return out;
}

std::vector<ScoreRecord> results_from_csv(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("method,train_langs,test_lang,class,f1,support", 0) != 0)
    fail(ErrorKind::Parse, where + ": not a results file (bad header)");
  std::vector<ScoreRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto c = parse_csv_line(line);
    if (c.size() != 6) fail(ErrorKind::Parse, where + ":" + std::to_string(lineno) + ": expected 6 fields");
    double f1 = 0.0;
    std::int64_t support = 0;
    try {
      f1 = std::stod(c[4]);
      support = std::stoll(c[5]);
    } catch (const std::exception&) {
      fail(ErrorKind::Parse, where + ":" + std::to_string(lineno) + ": bad f1/support value");
    }
    if (out.empty() || out.back().method != c[0] || out.back().train_langs != c[1] || out.back().test_lang != c[2]) {
      ScoreRecord r;
      r.method = c[0];
      r.train_langs = c[1];
      r.test_lang = c[2];
      out.push_back(std::move(r));
    }
    auto& r = out.back();
    if (c[3] == "macro") {
      r.macro = f1;
      if (r.test_lang == kLanguageMean) {
        r.weighted = f1;
        r.support = {support};
      }
    } else if (c[3] == "weighted") {
      r.weighted = f1;
    } else {
      r.classes.push_back(c[3]);
      r.f1.push_back(f1);
      r.support.push_back(support);
    }
  }
  return out;
}

void save_results(const std::vector<ScoreRecord>& records, const std::filesystem::path& path) {
  write_file_atomic(path, results_to_csv(records));
}

std::vector<ScoreRecord> load_results(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorKind::Io, "results file not found: " + path.string());
  return results_from_csv(read_file(path), path.string());
}

}  // namespace attribkit
