// core/include/dropclass/eval.h

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

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dropclass/corpus.h"
#include "dropclass/model.h"

namespace dropclass {

using EmbeddingTable = std::map<std::string, std::vector<double>>;

// Full-utterance embeddings. With `utt_ids` empty every utterance is
// extracted; otherwise only the listed ones, and an unknown id is an error.
EmbeddingTable ExtractAll(const EmbedderParams &embedder, const LabeledCorpus &corpus,
                          std::span<const std::string> utt_ids = {});

double CosineScore(std::span<const double> a, std::span<const double> b);

struct ScoredTrial {
  std::string utt_a;
  std::string utt_b;
  double score = 0.0;
  bool is_target = false;
};

using ScoredTrials = std::vector<ScoredTrial>;

ScoredTrials ScoreTrials(const EmbeddingTable &embeddings, const TrialList &trials);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
  int n_target = 0;
  int n_nontarget = 0;
  // Set when every score is identical and the crossing is not informative.
  bool degenerate = false;
};

// Operating points are every distinct score plus one point above the largest.
// At threshold t, FAR = #{nontarget >= t} / N_non and FRR = #{target < t} / N_tar.
// The EER is read at the first sign change of FAR - FRR, linearly
// interpolated between the two bracketing operating points.
EerResult ComputeEer(std::span<const double> target_scores,
                     std::span<const double> nontarget_scores);
EerResult ComputeEer(const ScoredTrials &scored);

// sum_i p_i ln(p_i M), with 0 ln 0 = 0. Nats.
double KlToUniform(std::span<const double> p);

struct RankedProbabilityReport {
  int n_bootstrap = 0;
  std::vector<double> median;  // per rank, descending
  std::vector<double> low;     // 2.5% quantile
  std::vector<double> high;    // 97.5% quantile
};

// Each replica resamples classes with replacement, then utterances within
// each drawn class with replacement, computes p_average over the model's
// class rows and sorts it descending. Quantiles per rank use linear
// interpolation between order statistics.
RankedProbabilityReport BootstrapRankedProbabilities(const Model &model,
                                                     const LabeledCorpus &data,
                                                     int n_bootstrap, std::uint64_t seed);

// Linear-interpolation quantile of an unsorted sample, q in [0, 1].
double Quantile(std::vector<double> values, double q);

// scores file: utt_a<TAB>utt_b<TAB>score<TAB>{1|0}
std::string FormatScores(const ScoredTrials &scored);
ScoredTrials ParseScores(const std::string &text);
// {"eer", "threshold", "n_target", "n_nontarget"}
std::string FormatEerJson(const EerResult &result);
// rank,p_median,p_low,p_high
std::string FormatReportCsv(const RankedProbabilityReport &report);

// Shortest round-trip decimal representation of a double.
std::string FormatDouble(double value);

}  // namespace dropclass
