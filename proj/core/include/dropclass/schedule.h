// core/include/dropclass/schedule.h

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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dropclass/corpus.h"
#include "dropclass/matrix.h"
#include "dropclass/model.h"
#include "dropclass/rng.h"

namespace dropclass {

enum class DropMode {
  kNone,
  kDropClass,         // resample R from all classes every period
  kDropAdapt,         // permanently drop the least probable classes
  kDropAdaptCombine,  // as DropAdapt, dropped data merged into one new class
  kDropRandom,        // permanently drop random classes
  kDropOnlyData,      // DropAdapt ranking, but only the data is filtered
};

const char *DropModeName(DropMode mode);
DropMode ParseDropMode(const std::string &name);
// Modes that rank classes by p_average on enrolment data.
bool NeedsEnrolData(DropMode mode);
// Modes whose active set only ever shrinks.
bool IsPermanent(DropMode mode);

struct DropConfig {
  DropMode mode = DropMode::kNone;
  int period = 1;      // P, iterations between refreshes
  int drop_count = 0;  // D, classes dropped per refresh
  // Fraction of the enrolment utterances used for p_average (1 = all).
  double enrol_fraction = 1.0;
  void Validate() const;
};

// Uniform random subset of size n_classes - drop_count, sorted ascending.
std::vector<int> SampleSubset(int n_classes, int drop_count, Rng &rng);

// W* = rows of W listed in `active` (validated), ascending.
Matrix MaskWeights(const Matrix &w, std::span<const int> active);
// Copies the rows of `masked` back to rows `active` of `full`.
void WriteBackRows(const Matrix &masked, std::span<const int> active, Matrix *full);

// Subset of a corpus with labels remapped to head-local indices.
struct DataView {
  const LabeledCorpus *corpus = nullptr;
  std::vector<std::size_t> utterances;  // indices into corpus->utterances
  std::vector<int> labels;              // local label per entry
  int n_labels = 0;

  std::size_t size() const { return utterances.size(); }
  const Utterance &utterance(std::size_t i) const {
    return corpus->utterances[utterances[i]];
  }
  // Entry positions grouped by local label.
  std::vector<std::vector<std::size_t>> ByLabel() const;
};

// Utterances whose class is in `active`; local label = position in `active`.
DataView FilterData(const LabeledCorpus &corpus, std::span<const int> active);

// Mean over utterances of softmax(W_rows h), raw logits, no margin or scale.
// `rows` defaults to the model's class rows. Result is indexed like `rows`.
std::vector<double> PAverage(const Model &model, const LabeledCorpus &data,
                             std::span<const int> rows = {});
// Same, from precomputed embeddings.
std::vector<double> PAverageFromEmbeddings(std::span<const std::vector<double>> embeddings,
                                           const Matrix &w, std::span<const int> rows);

// Removes the `drop_count` classes of `active` with the smallest p (p is
// indexed by class id); ties drop the lower class id first.
std::vector<int> RankAndDrop(std::span<const double> p, std::span<const int> active,
                             int drop_count);

// Elementwise mean of the listed rows.
std::vector<double> MeanOfRows(const Matrix &w, std::span<const int> rows);

struct CombineResult {
  DataView view;      // every utterance; dropped classes relabeled |R|
  Matrix head_plus;   // rows of W in R, then the mean of the dropped rows
};

CombineResult ApplyCombine(const LabeledCorpus &corpus, std::span<const int> dropped,
                           const Matrix &w, std::span<const int> active);

// Everything a refresh decided, for logs and diagnostics.
struct RefreshEvent {
  int iteration = 0;
  DropMode mode = DropMode::kNone;
  int active_classes = 0;
  int head_rows = 0;
  std::vector<int> dropped;
  // p_average on enrolment data before the drop, over all n_classes class
  // rows and over the current head's class rows (RankingRows). Empty when no
  // enrolment data was given.
  std::vector<double> p_full;
  std::vector<double> p_active;
  std::optional<double> kl_full;
  std::optional<double> kl_active;
};

class DropState {
 public:
  DropState(const DropConfig &config, int n_classes, std::uint64_t seed);

  DropMode mode() const { return config_.mode; }
  const DropConfig &config() const { return config_; }
  // Sorted class ids R whose data (and, except drop_only_data, head rows) are used.
  const std::vector<int> &active() const { return active_; }
  // Class id -> local label, -1 for classes without data.
  const std::vector<int> &global_to_local() const { return global_to_local_; }
  const std::vector<int> &dropped_total() const { return dropped_total_; }
  int iterations_since_refresh() const { return iterations_since_refresh_; }
  int refresh_count() const { return refresh_count_; }

  bool RefreshDue() const;
  // Counts one finished training iteration.
  void Tick();

  // Head rows trained against, given the model's current head.
  std::vector<int> HeadRows(const Model &model) const;
  // HeadRows without the merged row: the classes p_average ranks and the
  // distribution whose KL-to-uniform tracks adaptation.
  std::vector<int> RankingRows(const Model &model) const;
  // Training data with local labels matching HeadRows.
  DataView View(const LabeledCorpus &train) const;

  // Applies one refresh: updates R, and for Combine appends the merged head
  // row to `model` on first use. `enrol` is required for NeedsEnrolData modes.
  RefreshEvent Refresh(Model *model, const LabeledCorpus *enrol, int iteration);

 private:
  void RebuildRemap();

  DropConfig config_;
  int n_classes_;
  std::vector<int> active_;
  std::vector<int> global_to_local_;
  std::vector<int> dropped_total_;
  int iterations_since_refresh_ = 0;
  int refresh_count_ = 0;
  Rng rng_;
  std::uint64_t seed_;
};

std::string FormatRefreshRecord(const RefreshEvent &event);

}  // namespace dropclass
