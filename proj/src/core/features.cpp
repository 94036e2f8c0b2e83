#include "attribkit/features.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "attribkit/error.hpp"
#include "attribkit/util.hpp"

namespace attribkit {

const char* feature_name(Feature f) {
  switch (f) {
    case Feature::LogLik: return "loglik";
    case Feature::Perplexity: return "perplexity";
    case Feature::RankMean: return "rank_mean";
    case Feature::LogRankMean: return "logrank_mean";
    case Feature::EntropyMean: return "entropy_mean";
    case Feature::Lrr: return "lrr";
    case Feature::LlmDeviation: return "llm_deviation";
    case Feature::FastDetectGpt: return "fastdetectgpt";
    case Feature::Binoculars: return "binoculars";
  }
  return "?";
}

Feature parse_feature(const std::string& name) {
  for (auto f : kAllFeatures)
    if (name == feature_name(f)) return f;
  fail(ErrorKind::InvalidArgument, "unknown feature '" + name + "'");
}

DeviationStrategy parse_deviation_strategy(const std::string& s) {
  if (s == "logprob_std") return DeviationStrategy::LogprobStd;
  if (s == "logprob_mad") return DeviationStrategy::LogprobMad;
  fail(ErrorKind::InvalidArgument, "unknown llm_deviation strategy '" + s + "'");
}

const char* to_string(DeviationStrategy s) {
  return s == DeviationStrategy::LogprobStd ? "logprob_std" : "logprob_mad";
}

double FeatureVector::get(Feature f) const {
  switch (f) {
    case Feature::LogLik: return loglik;
    case Feature::Perplexity: return perplexity;
    case Feature::RankMean: return rank_mean;
    case Feature::LogRankMean: return logrank_mean;
    case Feature::EntropyMean: return entropy_mean;
    case Feature::Lrr: return lrr;
    case Feature::LlmDeviation: return llm_deviation;
    case Feature::FastDetectGpt: return fastdetectgpt;
    case Feature::Binoculars: return binoculars;
  }
  return 0.0;
}

void FeatureVector::set(Feature f, double v) {
  switch (f) {
    case Feature::LogLik: loglik = v; break;
    case Feature::Perplexity: perplexity = v; break;
    case Feature::RankMean: rank_mean = v; break;
    case Feature::LogRankMean: logrank_mean = v; break;
    case Feature::EntropyMean: entropy_mean = v; break;
    case Feature::Lrr: lrr = v; break;
    case Feature::LlmDeviation: llm_deviation = v; break;
    case Feature::FastDetectGpt: fastdetectgpt = v; break;
    case Feature::Binoculars: binoculars = v; break;
  }
}

FeatureVector single_model_features(const TokenScoreSeq& seq, DeviationStrategy deviation) {
  if (seq.tokens.empty()) fail(ErrorKind::InvalidArgument, "document '" + seq.doc_id + "': empty score sequence");
  const double T = static_cast<double>(seq.tokens.size());
  double sum_lp = 0.0, sum_rank = 0.0, sum_logrank = 0.0, sum_ent = 0.0;
  for (const auto& t : seq.tokens) {
    sum_lp += t.logprob;
    sum_rank += static_cast<double>(t.rank);
    sum_logrank += std::log(static_cast<double>(t.rank));
    sum_ent += t.entropy;
  }
  FeatureVector fv;
  fv.doc_id = seq.doc_id;
  fv.loglik = sum_lp / T;
  fv.perplexity = std::exp(-fv.loglik);
  fv.rank_mean = sum_rank / T;
  fv.logrank_mean = sum_logrank / T;
  fv.entropy_mean = sum_ent / T;
  fv.lrr = std::abs(sum_lp) / std::max(sum_logrank, kEpsDenominator);

  double dev = 0.0;
  for (const auto& t : seq.tokens) {
    const double d = t.logprob - fv.loglik;
    dev += deviation == DeviationStrategy::LogprobStd ? d * d : std::abs(d);
  }
  fv.llm_deviation = deviation == DeviationStrategy::LogprobStd ? std::sqrt(dev / T) : dev / T;
  return fv;
}

double fast_detect_gpt(const TokenScoreSeq& seq) {
  if (!seq.cross) fail(ErrorKind::InvalidArgument, "document '" + seq.doc_id + "': Fast-DetectGPT needs cross summaries");
  double sum_lp = 0.0, sum_mu = 0.0, sum_var = 0.0;
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    sum_lp += seq.tokens[i].logprob;
    sum_mu += (*seq.cross)[i].sample_mu;
    sum_var += (*seq.cross)[i].sample_var;
  }
  if (sum_var < kEpsVariance) return 0.0;
  return (sum_lp - sum_mu) / std::sqrt(sum_var);
}

double binoculars(const TokenScoreSeq& seq) {
  if (!seq.cross) fail(ErrorKind::InvalidArgument, "document '" + seq.doc_id + "': Binoculars needs cross summaries");
  if (seq.tokens.empty()) fail(ErrorKind::InvalidArgument, "document '" + seq.doc_id + "': empty score sequence");
  const double T = static_cast<double>(seq.tokens.size());
  double sum_lp = 0.0, sum_xent = 0.0;
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    sum_lp += seq.tokens[i].logprob;
    sum_xent += (*seq.cross)[i].xent;
  }
  const double log_ppl = -sum_lp / T;
  const double log_xppl = sum_xent / T;
  if (log_xppl < kEpsDenominator) return 1.0;
  return log_ppl / log_xppl;
}

FeatureMatrix FeatureMatrix::subset(const std::vector<std::size_t>& idx) const {
  FeatureMatrix out;
  out.columns = columns;
  out.omitted = omitted;
  for (auto i : idx) {
    out.doc_ids.push_back(doc_ids[i]);
    out.langs.push_back(langs[i]);
    out.labels.push_back(labels[i]);
    out.rows.push_back(rows[i]);
  }
  return out;
}

FeatureMatrix FeatureMatrix::select_columns(const std::vector<Feature>& wanted) const {
  std::vector<std::size_t> pos;
  for (auto f : wanted) {
    auto it = std::find(columns.begin(), columns.end(), f);
    if (it == columns.end())
      fail(ErrorKind::Validation, std::string("feature '") + feature_name(f) + "' is not present in the feature matrix");
    pos.push_back(static_cast<std::size_t>(it - columns.begin()));
  }
  FeatureMatrix out;
  out.doc_ids = doc_ids;
  out.langs = langs;
  out.labels = labels;
  out.columns = wanted;
  for (auto f : columns)
    if (std::find(wanted.begin(), wanted.end(), f) == wanted.end()) out.omitted.push_back(f);
  for (const auto& r : rows) {
    std::vector<double> row;
    row.reserve(pos.size());
    for (auto p : pos) row.push_back(r[p]);
    out.rows.push_back(std::move(row));
  }
  return out;
}

std::vector<std::string> FeatureMatrix::column_names() const {
  std::vector<std::string> out;
  for (auto f : columns) out.emplace_back(feature_name(f));
  return out;
}

FeatureMatrix featurize(const Corpus& corpus, const ScorerSet& scorers, int jobs) {
  if (!scorers.base) fail(ErrorKind::InvalidArgument, "featurize requires a base scorer");
  FeatureMatrix m;
  m.columns.assign(kAllFeatures.begin(), kAllFeatures.begin() + 7);
  const bool use_fdg = scorers.fastdetect && scorers.fastdetect->provides_cross();
  const bool use_bino = scorers.binoculars && scorers.binoculars->provides_cross();
  (use_fdg ? m.columns : m.omitted).push_back(Feature::FastDetectGpt);
  (use_bino ? m.columns : m.omitted).push_back(Feature::Binoculars);

  const auto& docs = corpus.samples();
  m.rows.resize(docs.size());
  parallel_for(docs.size(), jobs, [&](std::size_t i) {
    const auto& doc = docs[i];
    try {
      FeatureVector fv = single_model_features(scorers.base->score(doc), scorers.deviation);
      if (use_fdg) fv.fastdetectgpt = fast_detect_gpt(scorers.fastdetect->score(doc));
      if (use_bino) fv.binoculars = binoculars(scorers.binoculars->score(doc));
      std::vector<double> row;
      for (auto f : m.columns) {
        const double v = fv.get(f);
        if (!std::isfinite(v))
          fail(ErrorKind::Validation, std::string("non-finite feature '") + feature_name(f) + "'");
        row.push_back(v);
      }
      m.rows[i] = std::move(row);
    } catch (const Error& e) {
      throw Error(e.kind(), "featurize failed for document '" + doc.id + "': " + e.what());
    }
  });
  for (const auto& doc : docs) {
    m.doc_ids.push_back(doc.id);
    m.langs.push_back(doc.lang);
    m.labels.push_back(doc.label);
  }
  return m;
}

std::string feature_matrix_to_csv(const FeatureMatrix& m) {
  std::string out = "doc_id,lang,label";
  for (auto f : m.columns) {
    out += ',';
    out += feature_name(f);
  }
  out += '\n';
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    out += csv_escape(m.doc_ids[i]) + ',' + csv_escape(m.langs[i]) + ',' + csv_escape(m.labels[i]);
    for (double v : m.rows[i]) {
      out += ',';
      out += fmt_exact(v);
    }
    out += '\n';
  }
  return out;
}

FeatureMatrix feature_matrix_from_csv(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Parse, where + ": empty feature file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = parse_csv_line(line);
  if (header.size() < 3 || header[0] != "doc_id" || header[1] != "lang" || header[2] != "label")
    fail(ErrorKind::Parse, where + ": header must start with doc_id,lang,label");
  FeatureMatrix m;
  for (std::size_t c = 3; c < header.size(); ++c) m.columns.push_back(parse_feature(header[c]));
  for (auto f : kAllFeatures)
    if (std::find(m.columns.begin(), m.columns.end(), f) == m.columns.end()) m.omitted.push_back(f);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = parse_csv_line(line);
    if (cells.size() != header.size())
      fail(ErrorKind::Parse, where + ":" + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                                 " fields, got " + std::to_string(cells.size()));
    m.doc_ids.push_back(cells[0]);
    m.langs.push_back(cells[1]);
    m.labels.push_back(cells[2]);
    std::vector<double> row;
    for (std::size_t c = 3; c < cells.size(); ++c) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cells[c], &used));
        if (used != cells[c].size()) throw std::invalid_argument("trailing characters");
      } catch (const std::exception&) {
        fail(ErrorKind::Parse, where + ":" + std::to_string(lineno) + ": field '" + header[c] + "' is not a number");
      }
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

void save_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path) {
  write_file_atomic(path, feature_matrix_to_csv(m));
}

FeatureMatrix load_feature_matrix(const std::filesystem::path& path) {
  return feature_matrix_from_csv(read_file(path), path.string());
}

}  // namespace attribkit
