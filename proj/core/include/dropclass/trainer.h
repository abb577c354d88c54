// core/include/dropclass/trainer.h

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
#include <string>
#include <vector>

#include "dropclass/corpus.h"
#include "dropclass/head.h"
#include "dropclass/model.h"
#include "dropclass/rng.h"
#include "dropclass/schedule.h"

namespace dropclass {

struct TrainConfig {
  int total_iterations = 2000;
  int batch_size = 16;
  int frames_per_example = 50;
  double lr = 0.2;
  double momentum = 0.5;
  // 1-based iteration numbers after which the learning rate halves.
  std::vector<int> lr_halving_steps;
  LossSpec loss;
  // Recompute the AdaCos scale from |head rows| whenever the head changes.
  bool adacos_reset_on_refresh = true;
  DropConfig drop;
  std::uint64_t seed = 0;
  // 0 = DCK_THREADS if set, else 1.
  int threads = 0;

  void Validate(int n_classes) const;
  // The reference recipe's halving points (60k/80k/90k/110k of 120k) scaled
  // to `total_iterations`.
  static std::vector<int> ScaledHalvings(int total_iterations);
  // Learning rate used at 1-based iteration `iteration`.
  double LearningRateAt(int iteration, double base_lr) const;
};

struct Example {
  FeatureView features;
  std::size_t label = 0;
};

struct Batch {
  std::vector<Example> examples;
  // True when the view had fewer than B labels and the batch was shrunk.
  bool reduced = false;
};

// B examples from B distinct local labels (uniform without replacement), one
// uniformly chosen utterance per label, a uniform contiguous crop of
// `frames_per_example` frames (the whole utterance when shorter).
Batch ComposeBatch(const DataView &view, int batch_size, int frames_per_example, Rng &rng);

// Classical momentum buffers, full size. Head rows outside the active set are
// never touched.
struct Velocity {
  EmbedderTensors embedder;
  Matrix head;

  static Velocity ZerosFor(const Model &model);
};

struct StepResult {
  double loss = 0.0;
};

// One SGD step on the batch mean loss:
//   v <- momentum * v - lr * g;  p <- p + v
// for every embedder slot and for the head rows in `head_rows`. Throws
// NumericError before touching any parameter when the loss or a gradient is
// not finite. For AdaCos the scale in `loss` is updated from the batch first.
StepResult Step(Model *model, Velocity *velocity, const Batch &batch, LossSpec *loss,
                std::span<const int> head_rows, double lr, double momentum,
                int threads = 1);

struct MetricsRow {
  int iteration = 0;
  double loss = 0.0;
  double lr = 0.0;
  int active_classes = 0;
  int head_rows = 0;
  std::optional<double> kl_to_uniform;
  std::optional<double> eer;
  double wall_seconds = 0.0;  // not persisted
};

class MetricsLog {
 public:
  // Iterations must strictly increase.
  void Append(const MetricsRow &row);
  void AddRefresh(RefreshEvent event) { refreshes_.push_back(std::move(event)); }

  const std::vector<MetricsRow> &rows() const { return rows_; }
  std::vector<MetricsRow> &mutable_rows() { return rows_; }
  const std::vector<RefreshEvent> &refreshes() const { return refreshes_; }

  // iter,loss,lr,active_classes,kl_to_uniform,eer
  std::string ToCsv() const;
  // iter<TAB>mode<TAB>|R|<TAB>dropped_ids_csv per refresh.
  std::string RefreshLog() const;
  // iter,p_0,...,p_{M-1} per refresh that had enrolment data.
  std::string PAverageCsv() const;

  // p_average KL on the enrolment data after the last iteration.
  std::optional<double> final_kl_full;
  std::optional<double> final_kl_active;
  std::vector<std::string> warnings;

 private:
  std::vector<MetricsRow> rows_;
  std::vector<RefreshEvent> refreshes_;
};

// Optional held-out verification set scored at every refresh and at the end.
struct ValidationSet {
  const LabeledCorpus *corpus = nullptr;
  const TrialList *trials = nullptr;
};

struct RunInputs {
  const LabeledCorpus *train = nullptr;
  const LabeledCorpus *enrol = nullptr;
  ValidationSet validation;
  // Written with the last good parameters when a NumericError aborts the run.
  std::string abort_checkpoint_path;
};

struct RunResult {
  Model model;
  MetricsLog log;
};

// Training from scratch: a fresh model seeded from config.seed.
RunResult Train(const TrainConfig &config, const EmbedderConfig &embedder,
                const RunInputs &inputs);

// Fine-tuning: starts from `source` at source.final_lr; halvings only if the
// config lists them.
RunResult Adapt(const TrainConfig &config, const Model &source, const RunInputs &inputs);

// Resolves TrainConfig::threads.
int ResolveThreads(int requested);

}  // namespace dropclass
