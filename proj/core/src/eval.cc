// core/src/eval.cc

// Copyright 2026  The dropclass Authors

// See the LICENSE file in the top-level directory for the full text.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "dropclass/eval.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "dropclass/error.h"
#include "dropclass/head.h"
#include "dropclass/io.h"
#include "dropclass/rng.h"
#include "dropclass/schedule.h"

namespace dropclass {

EmbeddingTable ExtractAll(const EmbedderParams &embedder, const LabeledCorpus &corpus,
                          std::span<const std::string> utt_ids) {
  EmbeddingTable table;
  if (utt_ids.empty()) {
    for (const auto &u : corpus.utterances) table[u.id] = Forward(embedder, u.features);
    return table;
  }
  for (const auto &id : utt_ids) {
    const Utterance *u = corpus.Find(id);
    if (u == nullptr) throw ValidationError("lookup error: unknown utterance " + id);
    table[id] = Forward(embedder, u->features);
  }
  return table;
}

double CosineScore(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ShapeError("embeddings have dims " + std::to_string(a.size()) + " and " +
                     std::to_string(b.size()));
  const double na = Norm(a);
  const double nb = Norm(b);
  if (!(na > 0.0) || !(nb > 0.0))
    throw ValidationError("degenerate embedding: zero vector in cosine score");
  return Dot(a, b) / (na * nb);
}

ScoredTrials ScoreTrials(const EmbeddingTable &embeddings, const TrialList &trials) {
  ScoredTrials out;
  out.reserve(trials.trials.size());
  for (const auto &t : trials.trials) {
    auto a = embeddings.find(t.utt_a);
    auto b = embeddings.find(t.utt_b);
    if (a == embeddings.end())
      throw ValidationError("lookup error: unknown utterance " + t.utt_a);
    if (b == embeddings.end())
      throw ValidationError("lookup error: unknown utterance " + t.utt_b);
    out.push_back({t.utt_a, t.utt_b, CosineScore(a->second, b->second), t.is_target});
  }
  return out;
}

EerResult ComputeEer(std::span<const double> target_scores,
                     std::span<const double> nontarget_scores) {
  if (target_scores.empty() || nontarget_scores.empty())
    throw ValidationError("EER needs at least one target and one nontarget score");
  for (auto scores : {target_scores, nontarget_scores})
    for (double s : scores)
      if (!std::isfinite(s)) throw NumericError("non-finite trial score");

  std::vector<double> tar(target_scores.begin(), target_scores.end());
  std::vector<double> non(nontarget_scores.begin(), nontarget_scores.end());
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());
  std::vector<double> thresholds;
  thresholds.reserve(tar.size() + non.size());
  std::merge(tar.begin(), tar.end(), non.begin(), non.end(),
             std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double n_tar = static_cast<double>(tar.size());
  const double n_non = static_cast<double>(non.size());
  EerResult result;
  result.n_target = static_cast<int>(tar.size());
  result.n_nontarget = static_cast<int>(non.size());
  result.degenerate = thresholds.size() == 1;

  // Walk thresholds upward; FAR falls and FRR rises monotonically.
  std::size_t tar_below = 0, non_below = 0;
  double prev_far = 0.0, prev_frr = 0.0, prev_t = 0.0;
  for (std::size_t k = 0; k <= thresholds.size(); ++k) {
    const bool sentinel = k == thresholds.size();
    const double t = sentinel ? thresholds.back() : thresholds[k];
    if (!sentinel) {
      while (tar_below < tar.size() && tar[tar_below] < t) ++tar_below;
      while (non_below < non.size() && non[non_below] < t) ++non_below;
    } else {
      tar_below = tar.size();
      non_below = non.size();
    }
    const double far = (n_non - static_cast<double>(non_below)) / n_non;
    const double frr = static_cast<double>(tar_below) / n_tar;
    const double diff = far - frr;
    if (diff == 0.0) {
      result.eer = far;
      result.threshold = t;
      return result;
    }
    if (diff < 0.0) {
      // k > 0 here: at the lowest threshold FRR = 0 so diff > 0.
      const double prev_diff = prev_far - prev_frr;
      const double alpha = prev_diff / (prev_diff - diff);
      result.eer = prev_far + alpha * (far - prev_far);
      result.threshold = sentinel ? prev_t : prev_t + alpha * (t - prev_t);
      return result;
    }
    prev_far = far;
    prev_frr = frr;
    prev_t = t;
  }
  // Unreachable: the sentinel has FAR = 0, FRR = 1.
  throw NumericError("EER sweep found no crossing");
}

EerResult ComputeEer(const ScoredTrials &scored) {
  std::vector<double> tar, non;
  for (const auto &s : scored) (s.is_target ? tar : non).push_back(s.score);
  return ComputeEer(tar, non);
}

double KlToUniform(std::span<const double> p) {
  const double m = static_cast<double>(p.size());
  double kl = 0.0;
  for (double v : p)
    if (v > 0.0) kl += v * std::log(v * m);
  return kl;
}

double Quantile(std::vector<double> values, double q) {
  if (values.empty()) throw EmptyDataError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

RankedProbabilityReport BootstrapRankedProbabilities(const Model &model,
                                                     const LabeledCorpus &data,
                                                     int n_bootstrap, std::uint64_t seed) {
  if (n_bootstrap < 1) throw ValidationError("n_bootstrap must be >= 1");
  if (data.utterances.empty()) throw EmptyDataError("bootstrap over zero utterances");

  // Per-utterance posteriors over the class rows are computed once; each
  // replica only averages a resampled multiset of them.
  const std::vector<int> rows = model.ClassRows();
  std::vector<std::vector<double>> posteriors;
  posteriors.reserve(data.utterances.size());
  for (const auto &u : data.utterances)
    posteriors.push_back(Softmax(
        MaskedLogits(Forward(model.embedder, u.features), model.head.weights, rows)));

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < data.utterances.size(); ++i)
    by_class[data.utterances[i].class_id].push_back(i);
  std::vector<const std::vector<std::size_t> *> groups;
  for (const auto &[id, members] : by_class) groups.push_back(&members);

  const std::size_t width = rows.size();
  std::vector<std::vector<double>> curves(n_bootstrap);
  for (int r = 0; r < n_bootstrap; ++r) {
    Rng rng = Rng::Derive(seed, "bootstrap", r);
    std::vector<double> sum(width, 0.0);
    std::size_t count = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto &members = *groups[rng.UniformInt(groups.size())];
      for (std::size_t k = 0; k < members.size(); ++k) {
        const auto &p = posteriors[members[rng.UniformInt(members.size())]];
        for (std::size_t j = 0; j < width; ++j) sum[j] += p[j];
        ++count;
      }
    }
    for (double &v : sum) v /= static_cast<double>(count);
    std::sort(sum.begin(), sum.end(), std::greater<>());
    curves[r] = std::move(sum);
  }

  RankedProbabilityReport report;
  report.n_bootstrap = n_bootstrap;
  std::vector<double> column(n_bootstrap);
  for (std::size_t k = 0; k < width; ++k) {
    for (int r = 0; r < n_bootstrap; ++r) column[r] = curves[r][k];
    report.median.push_back(Quantile(column, 0.5));
    report.low.push_back(Quantile(column, 0.025));
    report.high.push_back(Quantile(column, 0.975));
  }
  return report;
}

std::string FormatDouble(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string FormatScores(const ScoredTrials &scored) {
  std::ostringstream out;
  for (const auto &s : scored)
    out << s.utt_a << '\t' << s.utt_b << '\t' << FormatDouble(s.score) << '\t'
        << (s.is_target ? 1 : 0) << '\n';
  return out.str();
}

ScoredTrials ParseScores(const std::string &text) {
  ScoredTrials out;
  int line_no = 0;
  for (const auto &line : SplitString(text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    auto f = SplitString(line, '\t');
    if (f.size() != 4 || (f[3] != "0" && f[3] != "1"))
      throw ValidationError("scores line " + std::to_string(line_no) + " is malformed");
    double score = 0.0;
    auto res = std::from_chars(f[2].data(), f[2].data() + f[2].size(), score);
    if (res.ec != std::errc() || res.ptr != f[2].data() + f[2].size())
      throw ValidationError("scores line " + std::to_string(line_no) + " has a bad score");
    out.push_back({f[0], f[1], score, f[3] == "1"});
  }
  return out;
}

std::string FormatEerJson(const EerResult &result) {
  std::ostringstream out;
  out << "{\"eer\": " << FormatDouble(result.eer)
      << ", \"threshold\": " << FormatDouble(result.threshold)
      << ", \"n_target\": " << result.n_target
      << ", \"n_nontarget\": " << result.n_nontarget << "}\n";
  return out.str();
}

std::string FormatReportCsv(const RankedProbabilityReport &report) {
  std::ostringstream out;
  out << "rank,p_median,p_low,p_high\n";
  for (std::size_t k = 0; k < report.median.size(); ++k)
    out << (k + 1) << ',' << FormatDouble(report.median[k]) << ','
        << FormatDouble(report.low[k]) << ',' << FormatDouble(report.high[k]) << '\n';
  return out.str();
}

}  // namespace dropclass
