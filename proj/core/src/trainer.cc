// core/src/trainer.cc

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

#include "dropclass/trainer.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <sstream>

#include "dropclass/error.h"
#include "dropclass/eval.h"
#include "parallel.h"

namespace dropclass {

void TrainConfig::Validate(int n_classes) const {
  if (total_iterations < 1) throw ValidationError("total_iterations must be >= 1");
  if (batch_size < 2) throw ValidationError("batch_size must be >= 2");
  if (frames_per_example < 1) throw ValidationError("frames_per_example must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ValidationError("momentum must be in [0, 1)");
  for (std::size_t i = 0; i < lr_halving_steps.size(); ++i) {
    const int step = lr_halving_steps[i];
    if (step < 1 || step >= total_iterations)
      throw ValidationError("lr halving step " + std::to_string(step) +
                            " must be in [1, total_iterations)");
    if (i > 0 && step <= lr_halving_steps[i - 1])
      throw ValidationError("lr halving steps must be strictly increasing");
  }
  loss.Validate();
  drop.Validate();
  if (drop.mode != DropMode::kNone && drop.drop_count >= n_classes)
    throw ValidationError("drop count D=" + std::to_string(drop.drop_count) +
                          " must be < M=" + std::to_string(n_classes));
  if (IsPermanent(drop.mode)) {
    const long refreshes = (total_iterations + drop.period - 1) / drop.period;
    const long remaining = n_classes - refreshes * drop.drop_count;
    if (remaining < 1)
      throw ValidationError(std::to_string(refreshes) + " refreshes dropping " +
                            std::to_string(drop.drop_count) + " classes each exhaust all " +
                            std::to_string(n_classes) + " classes");
  }
}

std::vector<int> TrainConfig::ScaledHalvings(int total_iterations) {
  std::vector<int> steps;
  for (double frac : {60.0 / 120.0, 80.0 / 120.0, 90.0 / 120.0, 110.0 / 120.0}) {
    const int step = static_cast<int>(std::lround(frac * total_iterations));
    if (step >= 1 && step < total_iterations && (steps.empty() || step > steps.back()))
      steps.push_back(step);
  }
  return steps;
}

double TrainConfig::LearningRateAt(int iteration, double base_lr) const {
  int halvings = 0;
  for (int step : lr_halving_steps)
    if (step < iteration) ++halvings;
  return std::ldexp(base_lr, -halvings);
}

int ResolveThreads(int requested) {
  if (requested > 0) return requested;
  if (const char *env = std::getenv("DCK_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

Batch ComposeBatch(const DataView &view, int batch_size, int frames_per_example, Rng &rng) {
  if (view.size() == 0) throw EmptyDataError("cannot compose a batch from an empty view");
  const auto groups = view.ByLabel();
  std::vector<int> labels;
  for (int l = 0; l < view.n_labels; ++l)
    if (!groups[l].empty()) labels.push_back(l);

  Batch batch;
  int b = batch_size;
  if (static_cast<int>(labels.size()) < b) {
    b = static_cast<int>(labels.size());
    batch.reduced = true;
  }
  // Partial Fisher-Yates over the label list.
  for (int i = 0; i < b; ++i) {
    const std::size_t j = i + rng.UniformInt(labels.size() - i);
    std::swap(labels[i], labels[j]);
  }
  for (int i = 0; i < b; ++i) {
    const auto &members = groups[labels[i]];
    const Utterance &utt = view.utterance(members[rng.UniformInt(members.size())]);
    const auto &f = utt.features;
    std::size_t length = std::min<std::size_t>(frames_per_example, f.frames);
    std::size_t start = f.frames > length ? rng.UniformInt(f.frames - length + 1) : 0;
    batch.examples.push_back(
        {FeatureView(f.values.data() + start * f.dim, length, f.dim),
         static_cast<std::size_t>(labels[i])});
  }
  return batch;
}

Velocity Velocity::ZerosFor(const Model &model) {
  return {ZeroTensors(model.embedder.config()),
          Matrix(model.head.rows(), model.head.dim())};
}

namespace {

// Checkpoints hold 32-bit floats; anything past that range cannot be saved.
bool Storable(std::span<const double> values) {
  const double limit = std::numeric_limits<float>::max();
  for (double v : values)
    if (!(std::abs(v) <= limit)) return false;
  return true;
}

}  // namespace

StepResult Step(Model *model, Velocity *velocity, const Batch &batch, LossSpec *loss,
                std::span<const int> head_rows, double lr, double momentum, int threads) {
  const std::size_t n = batch.examples.size();
  if (n == 0) throw EmptyDataError("empty batch");
  ValidateMask(head_rows, model->head.rows());
  if (velocity->head.rows() != model->head.rows())
    throw ShapeError("velocity does not match the head");

  std::vector<ForwardCache> caches(n);
  std::vector<std::vector<double>> embeddings(n);
  internal::ParallelFor(n, threads, [&](std::size_t i) {
    embeddings[i] = Forward(model->embedder, batch.examples[i].features, &caches[i]);
  });

  const Matrix w_active = model->head.weights.SelectRows(head_rows);
  for (const auto &ex : batch.examples)
    if (ex.label >= head_rows.size())
      throw ValidationError("label error: label " + std::to_string(ex.label) +
                            " outside the active head");
  if (loss->kind == LossKind::kAdaCos) {
    std::vector<std::vector<double>> cosines(n);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      cosines[i] = CosineLogits(embeddings[i], w_active);
      labels[i] = batch.examples[i].label;
    }
    loss->scale = AdaCosUpdatedScale(cosines, labels, loss->scale);
  }

  std::vector<LossResult> results(n);
  std::vector<EmbedderTensors> grads(n);
  internal::ParallelFor(n, threads, [&](std::size_t i) {
    results[i] = LossAndGrads(embeddings[i], w_active, batch.examples[i].label, *loss);
    grads[i] = ZeroTensors(model->embedder.config());
    Backward(caches[i], results[i].grad_h, &grads[i]);
  });

  // Fixed-order reduction, then the batch mean.
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss_sum = 0.0;
  EmbedderTensors &g = model->embedder.grads();
  g.SetZero();
  Matrix head_grad(head_rows.size(), model->head.dim());
  for (std::size_t i = 0; i < n; ++i) {
    loss_sum += results[i].loss;
    for (std::size_t s = 0; s < g.slots.size(); ++s) {
      auto dst = g.slots[s].Values();
      auto src = grads[i].slots[s].Values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
    auto dst = head_grad.Values();
    auto src = results[i].grad_w.Values();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
  }
  const double mean_loss = loss_sum * inv_n;
  for (auto &slot : g.slots)
    for (double &v : slot.Values()) v *= inv_n;
  for (double &v : head_grad.Values()) v *= inv_n;
  if (!std::isfinite(mean_loss) || !g.AllFinite() || !AllFinite(head_grad.Values()))
    throw NumericError("non-finite loss or gradient in training step");

  // Stage the update so an overflow leaves parameters and velocity untouched.
  EmbedderTensors new_values = model->embedder.values();
  EmbedderTensors new_velocity = velocity->embedder;
  for (std::size_t s = 0; s < new_values.slots.size(); ++s) {
    auto p = new_values.slots[s].Values();
    auto v = new_velocity.slots[s].Values();
    auto gs = g.slots[s].Values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = momentum * v[k] - lr * gs[k];
      p[k] += v[k];
    }
  }
  Matrix head_values = model->head.weights.SelectRows(head_rows);
  Matrix head_velocity = velocity->head.SelectRows(head_rows);
  for (std::size_t j = 0; j < head_rows.size(); ++j) {
    auto p = head_values.Row(j);
    auto v = head_velocity.Row(j);
    auto gs = head_grad.Row(j);
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = momentum * v[k] - lr * gs[k];
      p[k] += v[k];
    }
  }
  bool ok = Storable(head_values.Values()) && AllFinite(head_velocity.Values()) &&
            new_velocity.AllFinite();
  for (const auto &slot : new_values.slots) ok = ok && Storable(slot.Values());
  if (!ok)
    throw NumericError("non-finite parameters after training step");

  model->head.grads.SetZero();
  WriteBackRows(head_grad, head_rows, &model->head.grads);
  model->embedder.MutableValues() = std::move(new_values);
  velocity->embedder = std::move(new_velocity);
  WriteBackRows(head_values, head_rows, &model->head.weights);
  WriteBackRows(head_velocity, head_rows, &velocity->head);
  return {mean_loss};
}

void MetricsLog::Append(const MetricsRow &row) {
  if (!rows_.empty() && row.iteration <= rows_.back().iteration)
    throw ValidationError("metrics iterations must strictly increase");
  rows_.push_back(row);
}

std::string MetricsLog::ToCsv() const {
  std::ostringstream out;
  out << "iter,loss,lr,active_classes,kl_to_uniform,eer\n";
  for (const auto &r : rows_) {
    out << r.iteration << ',' << FormatDouble(r.loss) << ',' << FormatDouble(r.lr) << ','
        << r.active_classes << ',';
    if (r.kl_to_uniform) out << FormatDouble(*r.kl_to_uniform);
    out << ',';
    if (r.eer) out << FormatDouble(*r.eer);
    out << '\n';
  }
  return out.str();
}

std::string MetricsLog::RefreshLog() const {
  std::string out;
  for (const auto &ev : refreshes_) out += FormatRefreshRecord(ev) + "\n";
  return out;
}

std::string MetricsLog::PAverageCsv() const {
  std::ostringstream out;
  for (const auto &ev : refreshes_) {
    if (ev.p_full.empty()) continue;
    out << ev.iteration;
    for (double p : ev.p_full) out << ',' << FormatDouble(p);
    out << '\n';
  }
  return out.str();
}

namespace {

std::optional<double> ValidationEer(const Model &model, const ValidationSet &validation) {
  if (validation.corpus == nullptr || validation.trials == nullptr) return std::nullopt;
  const EmbeddingTable table = ExtractAll(model.embedder, *validation.corpus);
  return ComputeEer(ScoreTrials(table, *validation.trials)).eer;
}

RunResult RunLoop(const TrainConfig &config, Model model, const RunInputs &inputs,
                  double base_lr, bool resume_scale) {
  if (inputs.train == nullptr) throw EmptyDataError("no training corpus");
  const LabeledCorpus &train = *inputs.train;
  if (train.n_classes != model.n_classes)
    throw ShapeError("training corpus has " + std::to_string(train.n_classes) +
                     " classes, model head has " + std::to_string(model.n_classes));
  if (train.feat_dim() != model.embedder.config().feat_dim)
    throw ShapeError("training features have dim " + std::to_string(train.feat_dim()) +
                     ", model expects " + std::to_string(model.embedder.config().feat_dim));
  config.Validate(model.n_classes);
  if (NeedsEnrolData(config.drop.mode) &&
      (inputs.enrol == nullptr || inputs.enrol->utterances.empty()))
    throw ValidationError(std::string("mode ") + DropModeName(config.drop.mode) +
                          " requires enrolment data");

  const auto start = std::chrono::steady_clock::now();
  const int threads = ResolveThreads(config.threads);
  DropState state(config.drop, model.n_classes, config.seed);
  LossSpec loss = config.loss;
  std::vector<int> head_rows = state.HeadRows(model);
  if (loss.kind == LossKind::kAdaCos)
    loss.scale = (resume_scale && model.loss_scale > 0.0) ? model.loss_scale
                                                          : AdaCosInitialScale(head_rows.size());
  Velocity velocity = Velocity::ZerosFor(model);
  Rng batch_rng = Rng::Derive(config.seed, "batches");
  DataView view = state.View(train);
  bool warned = false;

  RunResult result;
  for (int it = 1; it <= config.total_iterations; ++it) {
    MetricsRow row;
    row.iteration = it;
    if (state.RefreshDue()) {
      RefreshEvent ev = state.Refresh(&model, inputs.enrol, it);
      view = state.View(train);
      head_rows = state.HeadRows(model);
      while (velocity.head.rows() < model.head.rows())
        velocity.head.AppendRow(std::vector<double>(model.head.dim(), 0.0));
      if (loss.kind == LossKind::kAdaCos && config.adacos_reset_on_refresh)
        loss.scale = AdaCosInitialScale(head_rows.size());
      row.kl_to_uniform = ev.kl_active;
      row.eer = ValidationEer(model, inputs.validation);
      result.log.AddRefresh(std::move(ev));
    }
    const double lr = config.LearningRateAt(it, base_lr);
    const Batch batch = ComposeBatch(view, config.batch_size, config.frames_per_example,
                                     batch_rng);
    if (batch.reduced && !warned) {
      result.log.warnings.push_back("batch size reduced to " +
                                    std::to_string(batch.examples.size()) +
                                    " (fewer classes than batch_size) at iteration " +
                                    std::to_string(it));
      warned = true;
    }
    StepResult step;
    try {
      step = Step(&model, &velocity, batch, &loss, head_rows, lr, config.momentum, threads);
    } catch (const NumericError &) {
      if (!inputs.abort_checkpoint_path.empty()) {
        model.final_lr = lr;
        model.loss_scale = loss.scale;
        model.active_rows = head_rows;
        SaveModel(model, inputs.abort_checkpoint_path);
      }
      throw;
    }
    state.Tick();
    row.loss = step.loss;
    row.lr = lr;
    row.active_classes = static_cast<int>(state.active().size());
    row.head_rows = static_cast<int>(head_rows.size());
    row.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.Append(row);
  }

  model.final_lr = config.LearningRateAt(config.total_iterations, base_lr);
  model.loss_scale = loss.scale;
  model.active_rows = head_rows;

  if (inputs.enrol != nullptr && !inputs.enrol->utterances.empty()) {
    result.log.final_kl_full = KlToUniform(PAverage(model, *inputs.enrol));
    result.log.final_kl_active =
        KlToUniform(PAverage(model, *inputs.enrol, state.RankingRows(model)));
    auto &last = result.log.mutable_rows().back();
    if (!last.kl_to_uniform) last.kl_to_uniform = result.log.final_kl_active;
  }
  if (auto eer = ValidationEer(model, inputs.validation))
    result.log.mutable_rows().back().eer = eer;
  result.model = std::move(model);
  return result;
}

}  // namespace

RunResult Train(const TrainConfig &config, const EmbedderConfig &embedder,
                const RunInputs &inputs) {
  if (inputs.train == nullptr) throw EmptyDataError("no training corpus");
  Model model = Model::Initialize(embedder, inputs.train->n_classes, config.seed);
  return RunLoop(config, std::move(model), inputs, config.lr, false);
}

RunResult Adapt(const TrainConfig &config, const Model &source, const RunInputs &inputs) {
  if (!(source.final_lr > 0.0))
    throw ValidationError("source model has no recorded final learning rate");
  if (source.has_merged_row)
    throw ValidationError("cannot adapt a model that already carries a merged class row");
  return RunLoop(config, source, inputs, source.final_lr, true);
}

}  // namespace dropclass
