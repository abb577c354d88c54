// core/src/schedule.cc

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

#include "dropclass/schedule.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dropclass/error.h"
#include "dropclass/eval.h"

namespace dropclass {

const char *DropModeName(DropMode mode) {
  switch (mode) {
    case DropMode::kNone: return "none";
    case DropMode::kDropClass: return "dropclass";
    case DropMode::kDropAdapt: return "dropadapt";
    case DropMode::kDropAdaptCombine: return "dropadapt_combine";
    case DropMode::kDropRandom: return "drop_random";
    case DropMode::kDropOnlyData: return "drop_only_data";
  }
  return "none";
}

DropMode ParseDropMode(const std::string &name) {
  for (DropMode m : {DropMode::kNone, DropMode::kDropClass, DropMode::kDropAdapt,
                     DropMode::kDropAdaptCombine, DropMode::kDropRandom,
                     DropMode::kDropOnlyData})
    if (name == DropModeName(m)) return m;
  throw ValidationError("unknown drop mode '" + name +
                        "' (none, dropclass, dropadapt, dropadapt_combine, "
                        "drop_random, drop_only_data)");
}

bool NeedsEnrolData(DropMode mode) {
  return mode == DropMode::kDropAdapt || mode == DropMode::kDropAdaptCombine ||
         mode == DropMode::kDropOnlyData;
}

bool IsPermanent(DropMode mode) {
  return NeedsEnrolData(mode) || mode == DropMode::kDropRandom;
}

void DropConfig::Validate() const {
  if (mode == DropMode::kNone) return;
  if (period < 1) throw ValidationError("drop period P must be >= 1");
  if (drop_count < 1) throw ValidationError("drop count D must be >= 1");
  if (!(enrol_fraction > 0.0 && enrol_fraction <= 1.0))
    throw ValidationError("enrol_fraction must be in (0, 1]");
}

std::vector<int> SampleSubset(int n_classes, int drop_count, Rng &rng) {
  if (drop_count < 1 || drop_count >= n_classes)
    throw ValidationError("parameter error: need 1 <= D < M, got D=" +
                          std::to_string(drop_count) + " M=" + std::to_string(n_classes));
  // Partial Fisher-Yates: the first M-D slots are a uniform subset.
  std::vector<int> ids(n_classes);
  std::iota(ids.begin(), ids.end(), 0);
  const int keep = n_classes - drop_count;
  for (int i = 0; i < keep; ++i) {
    const int j = i + static_cast<int>(rng.UniformInt(n_classes - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(keep);
  std::sort(ids.begin(), ids.end());
  return ids;
}

Matrix MaskWeights(const Matrix &w, std::span<const int> active) {
  ValidateMask(active, w.rows());
  return w.SelectRows(active);
}

void WriteBackRows(const Matrix &masked, std::span<const int> active, Matrix *full) {
  ValidateMask(active, full->rows());
  if (masked.rows() != active.size() || masked.cols() != full->cols())
    throw ShapeError("masked head does not match the active set");
  for (std::size_t i = 0; i < active.size(); ++i) {
    auto src = masked.Row(i);
    std::copy(src.begin(), src.end(), full->Row(active[i]).begin());
  }
}

std::vector<std::vector<std::size_t>> DataView::ByLabel() const {
  std::vector<std::vector<std::size_t>> groups(n_labels);
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  return groups;
}

DataView FilterData(const LabeledCorpus &corpus, std::span<const int> active) {
  ValidateMask(active, corpus.n_classes);
  std::vector<int> local(corpus.n_classes, -1);
  for (std::size_t i = 0; i < active.size(); ++i) local[active[i]] = static_cast<int>(i);
  DataView view;
  view.corpus = &corpus;
  view.n_labels = static_cast<int>(active.size());
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    const int label = local[corpus.utterances[i].class_id];
    if (label < 0) continue;
    view.utterances.push_back(i);
    view.labels.push_back(label);
  }
  if (view.utterances.empty())
    throw EmptyDataError("no utterances belong to the permitted classes");
  return view;
}

std::vector<double> PAverageFromEmbeddings(std::span<const std::vector<double>> embeddings,
                                           const Matrix &w, std::span<const int> rows) {
  if (embeddings.empty()) throw EmptyDataError("p_average over zero utterances");
  std::vector<double> sum(rows.size(), 0.0);
  for (const auto &h : embeddings) {
    const std::vector<double> p = Softmax(MaskedLogits(h, w, rows));
    for (std::size_t j = 0; j < p.size(); ++j) sum[j] += p[j];
  }
  const double inv_n = 1.0 / static_cast<double>(embeddings.size());
  for (double &v : sum) v *= inv_n;
  return sum;
}

std::vector<double> PAverage(const Model &model, const LabeledCorpus &data,
                             std::span<const int> rows) {
  if (data.utterances.empty()) throw EmptyDataError("p_average over zero utterances");
  std::vector<int> class_rows;
  if (rows.empty()) {
    class_rows = model.ClassRows();
    rows = class_rows;
  }
  std::vector<std::vector<double>> embeddings;
  embeddings.reserve(data.utterances.size());
  for (const auto &u : data.utterances)
    embeddings.push_back(Forward(model.embedder, u.features));
  return PAverageFromEmbeddings(embeddings, model.head.weights, rows);
}

std::vector<int> RankAndDrop(std::span<const double> p, std::span<const int> active,
                             int drop_count) {
  if (drop_count < 0 || drop_count >= static_cast<int>(active.size()))
    throw ValidationError("parameter error: cannot drop " + std::to_string(drop_count) +
                          " of " + std::to_string(active.size()) + " classes");
  std::vector<int> order(active.begin(), active.end());
  for (int c : order)
    if (c < 0 || static_cast<std::size_t>(c) >= p.size())
      throw ValidationError("class id " + std::to_string(c) + " has no probability");
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (p[a] != p[b]) return p[a] < p[b];
    return a < b;
  });
  std::vector<int> kept(order.begin() + drop_count, order.end());
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<double> MeanOfRows(const Matrix &w, std::span<const int> rows) {
  if (rows.empty()) throw ValidationError("mean of zero rows");
  std::vector<double> mean(w.cols(), 0.0);
  for (int r : rows) {
    if (r < 0 || static_cast<std::size_t>(r) >= w.rows())
      throw ValidationError("row id " + std::to_string(r) + " out of range");
    auto row = w.Row(r);
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += row[i];
  }
  for (double &v : mean) v /= static_cast<double>(rows.size());
  return mean;
}

CombineResult ApplyCombine(const LabeledCorpus &corpus, std::span<const int> dropped,
                           const Matrix &w, std::span<const int> active) {
  if (dropped.empty()) throw ValidationError("combine needs at least one dropped class");
  ValidateMask(active, w.rows());
  std::vector<int> local(corpus.n_classes, -1);
  for (std::size_t i = 0; i < active.size(); ++i) local[active[i]] = static_cast<int>(i);
  const int merged = static_cast<int>(active.size());
  for (int c : dropped) {
    if (c < 0 || c >= corpus.n_classes)
      throw ValidationError("dropped class id " + std::to_string(c) + " out of range");
    if (local[c] >= 0)
      throw ValidationError("class " + std::to_string(c) + " is both kept and dropped");
    local[c] = merged;
  }
  const std::vector<double> mean = MeanOfRows(w, dropped);

  CombineResult out;
  out.view.corpus = &corpus;
  out.view.n_labels = merged + 1;
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    const int label = local[corpus.utterances[i].class_id];
    if (label < 0) continue;
    out.view.utterances.push_back(i);
    out.view.labels.push_back(label);
  }
  out.head_plus = w.SelectRows(active);
  out.head_plus.AppendRow(mean);
  return out;
}

DropState::DropState(const DropConfig &config, int n_classes, std::uint64_t seed)
    : config_(config),
      n_classes_(n_classes),
      rng_(Rng::Derive(seed, "drop-schedule")),
      seed_(seed) {
  config_.Validate();
  if (n_classes < 1) throw ValidationError("drop schedule needs >= 1 class");
  if (config_.mode != DropMode::kNone && config_.drop_count >= n_classes)
    throw ValidationError("parameter error: D=" + std::to_string(config_.drop_count) +
                          " must be < M=" + std::to_string(n_classes));
  active_.resize(n_classes);
  std::iota(active_.begin(), active_.end(), 0);
  RebuildRemap();
}

bool DropState::RefreshDue() const {
  if (config_.mode == DropMode::kNone) return false;
  return refresh_count_ == 0 || iterations_since_refresh_ >= config_.period;
}

void DropState::Tick() {
  if (config_.mode != DropMode::kNone) ++iterations_since_refresh_;
}

void DropState::RebuildRemap() {
  global_to_local_.assign(n_classes_, -1);
  switch (config_.mode) {
    case DropMode::kNone:
    case DropMode::kDropOnlyData:
      for (int c : active_) global_to_local_[c] = c;
      break;
    case DropMode::kDropAdaptCombine:
      for (std::size_t i = 0; i < active_.size(); ++i) global_to_local_[active_[i]] = i;
      for (int c : dropped_total_) global_to_local_[c] = static_cast<int>(active_.size());
      break;
    default:
      for (std::size_t i = 0; i < active_.size(); ++i) global_to_local_[active_[i]] = i;
      break;
  }
}

std::vector<int> DropState::HeadRows(const Model &model) const {
  switch (config_.mode) {
    case DropMode::kNone:
    case DropMode::kDropOnlyData:
      return model.ClassRows();
    case DropMode::kDropAdaptCombine: {
      std::vector<int> rows = active_;
      if (model.has_merged_row) rows.push_back(model.n_classes);
      return rows;
    }
    default:
      return active_;
  }
}

std::vector<int> DropState::RankingRows(const Model &model) const {
  std::vector<int> rows = HeadRows(model);
  std::erase_if(rows, [&](int r) { return r >= model.n_classes; });
  return rows;
}

DataView DropState::View(const LabeledCorpus &train) const {
  if (train.n_classes != n_classes_)
    throw ShapeError("training corpus has " + std::to_string(train.n_classes) +
                     " classes, schedule has " + std::to_string(n_classes_));
  DataView view;
  view.corpus = &train;
  view.n_labels = 0;
  for (int label : global_to_local_) view.n_labels = std::max(view.n_labels, label + 1);
  if (config_.mode == DropMode::kNone || config_.mode == DropMode::kDropOnlyData)
    view.n_labels = n_classes_;
  for (std::size_t i = 0; i < train.utterances.size(); ++i) {
    const int label = global_to_local_[train.utterances[i].class_id];
    if (label < 0) continue;
    view.utterances.push_back(i);
    view.labels.push_back(label);
  }
  if (view.utterances.empty())
    throw EmptyDataError("no training utterances belong to the permitted classes");
  return view;
}

RefreshEvent DropState::Refresh(Model *model, const LabeledCorpus *enrol, int iteration) {
  if (config_.mode == DropMode::kNone) throw ValidationError("refresh called in mode none");
  if (model->n_classes != n_classes_)
    throw ShapeError("model has " + std::to_string(model->n_classes) +
                     " classes, schedule has " + std::to_string(n_classes_));
  if (NeedsEnrolData(config_.mode) && (enrol == nullptr || enrol->utterances.empty()))
    throw EmptyDataError(std::string("mode ") + DropModeName(config_.mode) +
                         " needs enrolment data");
  RefreshEvent ev;
  ev.iteration = iteration;
  ev.mode = config_.mode;

  const std::vector<int> ranking_rows = RankingRows(*model);
  if (enrol != nullptr && !enrol->utterances.empty()) {
    std::vector<std::size_t> use(enrol->utterances.size());
    std::iota(use.begin(), use.end(), 0);
    if (config_.enrol_fraction < 1.0) {
      Rng pick = Rng::Derive(seed_, "enrol-subset");
      pick.Shuffle(&use);
      use.resize(std::max<std::size_t>(
          1, static_cast<std::size_t>(std::ceil(config_.enrol_fraction * use.size()))));
      std::sort(use.begin(), use.end());
    }
    std::vector<std::vector<double>> embeddings;
    embeddings.reserve(use.size());
    for (std::size_t i : use)
      embeddings.push_back(Forward(model->embedder, enrol->utterances[i].features));
    const std::vector<int> class_rows = model->ClassRows();
    ev.p_full = PAverageFromEmbeddings(embeddings, model->head.weights, class_rows);
    ev.p_active = PAverageFromEmbeddings(embeddings, model->head.weights, ranking_rows);
    ev.kl_full = KlToUniform(ev.p_full);
    ev.kl_active = KlToUniform(ev.p_active);
  }

  std::vector<int> next;
  switch (config_.mode) {
    case DropMode::kDropClass:
      next = SampleSubset(n_classes_, config_.drop_count, rng_);
      break;
    case DropMode::kDropRandom: {
      if (config_.drop_count >= static_cast<int>(active_.size()))
        throw ValidationError("parameter error: cannot drop " +
                              std::to_string(config_.drop_count) + " of " +
                              std::to_string(active_.size()) + " remaining classes");
      std::vector<int> order = active_;
      rng_.Shuffle(&order);
      next.assign(order.begin() + config_.drop_count, order.end());
      std::sort(next.begin(), next.end());
      break;
    }
    default: {
      std::vector<double> by_class(n_classes_, 0.0);
      for (std::size_t j = 0; j < ranking_rows.size(); ++j)
        by_class[ranking_rows[j]] = ev.p_active[j];
      next = RankAndDrop(by_class, active_, config_.drop_count);
      break;
    }
  }

  std::vector<int> dropped;
  std::set_difference(active_.begin(), active_.end(), next.begin(), next.end(),
                      std::back_inserter(dropped));
  if (config_.mode == DropMode::kDropClass) {
    std::vector<int> all(n_classes_);
    std::iota(all.begin(), all.end(), 0);
    dropped.clear();
    std::set_difference(all.begin(), all.end(), next.begin(), next.end(),
                        std::back_inserter(dropped));
  }

  // The merged row is created once, from the first batch of dropped rows, and
  // then trained like any other row; later drops join the merged class.
  if (config_.mode == DropMode::kDropAdaptCombine && !model->has_merged_row) {
    const std::vector<double> mean = MeanOfRows(model->head.weights, dropped);
    model->head.weights.AppendRow(mean);
    model->head.grads.AppendRow(std::vector<double>(mean.size(), 0.0));
    model->has_merged_row = true;
  }

  ev.dropped = dropped;
  if (IsPermanent(config_.mode))
    dropped_total_.insert(dropped_total_.end(), dropped.begin(), dropped.end());
  std::sort(dropped_total_.begin(), dropped_total_.end());
  active_ = std::move(next);
  RebuildRemap();
  iterations_since_refresh_ = 0;
  ++refresh_count_;
  model->active_rows = HeadRows(*model);
  ev.active_classes = static_cast<int>(active_.size());
  ev.head_rows = static_cast<int>(model->active_rows.size());
  return ev;
}

std::string FormatRefreshRecord(const RefreshEvent &event) {
  std::ostringstream out;
  out << event.iteration << '\t' << DropModeName(event.mode) << '\t'
      << event.active_classes << '\t';
  for (std::size_t i = 0; i < event.dropped.size(); ++i)
    out << (i ? "," : "") << event.dropped[i];
  return out.str();
}

}  // namespace dropclass
