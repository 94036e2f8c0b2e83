#pragma once

// Straight-line reference computations used by the unit tests and the
// acceptance suite. Deliberately naive: no shared code with the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "attribkit/classify.hpp"
#include "attribkit/scores.hpp"

namespace oracles {

struct NaiveFeatures {
  double loglik, perplexity, rank_mean, logrank_mean, entropy_mean, lrr, deviation, fdg, bino;
};

inline NaiveFeatures naive_features(const attribkit::TokenScoreSeq& s) {
  NaiveFeatures f{};
  const std::size_t T = s.tokens.size();
  std::vector<double> lp(T);
  for (std::size_t i = 0; i < T; ++i) lp[i] = s.tokens[i].logprob;

  double total = 0;
  for (double v : lp) total = total + v;
  f.loglik = total / double(T);
  f.perplexity = std::exp(-f.loglik);

  double r = 0, lr = 0, h = 0;
  for (std::size_t i = 0; i < T; ++i) {
    r = r + double(s.tokens[i].rank);
    lr = lr + std::log(double(s.tokens[i].rank));
    h = h + s.tokens[i].entropy;
  }
  f.rank_mean = r / double(T);
  f.logrank_mean = lr / double(T);
  f.entropy_mean = h / double(T);
  f.lrr = std::fabs(total) / (lr > 1e-10 ? lr : 1e-10);

  double ss = 0;
  for (double v : lp) ss = ss + (v - f.loglik) * (v - f.loglik);
  f.deviation = std::sqrt(ss / double(T));

  f.fdg = 0;
  f.bino = 1;
  if (s.cross) {
    double mu = 0, var = 0, xent = 0;
    for (const auto& c : *s.cross) {
      mu = mu + c.sample_mu;
      var = var + c.sample_var;
      xent = xent + c.xent;
    }
    f.fdg = var < 1e-12 ? 0.0 : (total - mu) / std::sqrt(var);
    const double log_ppl = -total / double(T);
    const double log_xppl = xent / double(T);
    f.bino = log_xppl < 1e-10 ? 1.0 : log_ppl / log_xppl;
  }
  return f;
}

inline bool close(double a, double b, double tol) { return std::fabs(a - b) <= tol * std::max(1.0, std::fabs(b)); }

// Per-sample F1 with explicit tp/fp/fn tallies.
struct NaiveF1 {
  std::vector<std::vector<std::int64_t>> counts;
  std::vector<double> f1;
  double macro = 0;
  double weighted = 0;
};

inline NaiveF1 naive_f1(const std::vector<int>& truth, const std::vector<int>& pred, int k) {
  NaiveF1 out;
  out.counts.assign(k, std::vector<std::int64_t>(k, 0));
  for (std::size_t i = 0; i < truth.size(); ++i)
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b)
        if (truth[i] == a && pred[i] == b) out.counts[a][b] += 1;
  std::int64_t supported_total = 0;
  double weighted_sum = 0;
  for (int c = 0; c < k; ++c) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] == c && pred[i] == c) ++tp;
      if (truth[i] != c && pred[i] == c) ++fp;
      if (truth[i] == c && pred[i] != c) ++fn;
    }
    const double p = tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp);
    const double r = tp + fn == 0 ? 0.0 : double(tp) / double(tp + fn);
    const double f = p + r == 0 ? 0.0 : 2 * p * r / (p + r);
    out.f1.push_back(f);
    if (tp + fn > 0) {
      supported_total += tp + fn;
      weighted_sum += f * double(tp + fn);
    }
  }
  double sum = 0;
  for (double f : out.f1) sum += f;
  out.macro = k ? sum / k : 0.0;
  out.weighted = supported_total ? weighted_sum / double(supported_total) : 0.0;
  return out;
}

// Max relative error between the analytic gradient and central differences.
inline double gradient_check(attribkit::Network net, const attribkit::Matrix& X, const std::vector<int>& y,
                             double l2, double step = 1e-5) {
  attribkit::Network grad;
  net.loss(X, y, l2, &grad);
  const auto analytic = grad.parameters();
  auto theta = net.parameters();
  double worst = 0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double saved = theta[i];
    theta[i] = saved + step;
    net.set_parameters(theta);
    const double up = net.loss(X, y, l2);
    theta[i] = saved - step;
    net.set_parameters(theta);
    const double down = net.loss(X, y, l2);
    theta[i] = saved;
    const double numeric = (up - down) / (2 * step);
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-6});
    worst = std::max(worst, std::fabs(analytic[i] - numeric) / denom);
  }
  net.set_parameters(theta);
  return worst;
}

}  // namespace oracles
