// core/src/embedder.cc

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

#include "dropclass/embedder.h"

#include <algorithm>
#include <cmath>

#include "dropclass/error.h"
#include "dropclass/rng.h"

namespace dropclass {

void EmbedderConfig::Validate() const {
  if (feat_dim == 0) throw ValidationError("embedder feat_dim must be >= 1");
  if (hidden.empty()) throw ValidationError("embedder needs at least one frame layer");
  for (auto h : hidden)
    if (h == 0) throw ValidationError("embedder hidden sizes must be >= 1");
  if (embed_dim == 0) throw ValidationError("embedder embed_dim must be >= 1");
  if (!(std_floor > 0.0)) throw ValidationError("embedder std_floor must be > 0");
  if (!std::isfinite(leaky_slope)) throw ValidationError("leaky_slope must be finite");
}

std::size_t EmbedderTensors::NumScalars() const {
  std::size_t n = 0;
  for (const auto &m : slots) n += m.size();
  return n;
}

void EmbedderTensors::SetZero() {
  for (auto &m : slots) m.SetZero();
}

bool EmbedderTensors::AllFinite() const {
  return std::all_of(slots.begin(), slots.end(),
                     [](const Matrix &m) { return dropclass::AllFinite(m.Values()); });
}

EmbedderTensors ZeroTensors(const EmbedderConfig &config) {
  EmbedderTensors t;
  std::size_t in = config.feat_dim;
  for (std::size_t h : config.hidden) {
    t.slots.emplace_back(h, in);
    t.slots.emplace_back(1, h);
    in = h;
  }
  t.slots.emplace_back(config.embed_dim, config.pooled_dim());
  t.slots.emplace_back(1, config.embed_dim);
  return t;
}

EmbedderParams::EmbedderParams(const EmbedderConfig &config)
    : config_(config), values_(ZeroTensors(config)), grads_(ZeroTensors(config)) {
  config_.Validate();
}

EmbedderParams EmbedderParams::Initialize(const EmbedderConfig &config,
                                          std::uint64_t seed) {
  EmbedderParams params(config);
  EmbedderTensors &values = params.MutableValues();
  for (std::size_t layer = 0; layer < values.num_layers(); ++layer) {
    Matrix &w = values.weight(layer);
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    Rng rng = Rng::Derive(seed, "embedder-init", layer);
    for (double &v : w.Values()) v = limit * (2.0 * rng.Uniform() - 1.0);
  }
  return params;
}

std::vector<double> Forward(const EmbedderParams &params, FeatureView features,
                            ForwardCache *cache) {
  const EmbedderConfig &config = params.config();
  if (features.frames == 0) throw EmptyDataError("forward on an utterance with T=0");
  if (features.dim != config.feat_dim)
    throw ShapeError("features have dim " + std::to_string(features.dim) +
                     ", embedder expects " + std::to_string(config.feat_dim));
  const EmbedderTensors &values = params.values();
  const std::size_t frames = features.frames;
  const std::size_t n_hidden = config.hidden.size();
  const double slope = config.leaky_slope;

  ForwardCache local;
  ForwardCache &c = cache ? *cache : local;
  c.params = &params;
  c.generation = params.generation();
  c.input = features;
  c.pre_activations.resize(n_hidden);
  c.activations.resize(n_hidden);

  std::vector<double> frame_in(config.feat_dim);
  for (std::size_t k = 0; k < n_hidden; ++k) {
    const Matrix &w = values.weight(k);
    const auto b = values.bias(k).Row(0);
    Matrix &z = c.pre_activations[k];
    Matrix &a = c.activations[k];
    z = Matrix(frames, w.rows());
    a = Matrix(frames, w.rows());
    for (std::size_t t = 0; t < frames; ++t) {
      std::span<const double> in;
      if (k == 0) {
        auto f = features.Frame(t);
        std::copy(f.begin(), f.end(), frame_in.begin());
        in = frame_in;
      } else {
        in = c.activations[k - 1].Row(t);
      }
      auto zt = z.Row(t);
      auto at = a.Row(t);
      for (std::size_t j = 0; j < w.rows(); ++j) {
        zt[j] = Dot(w.Row(j), in) + b[j];
        at[j] = zt[j] > 0.0 ? zt[j] : slope * zt[j];
      }
    }
  }

  const Matrix &top = c.activations.back();
  const std::size_t width = top.cols();
  const double inv_t = 1.0 / static_cast<double>(frames);
  const double floor_sq = config.std_floor * config.std_floor;
  c.mean.assign(width, 0.0);
  c.stddev.assign(width, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    auto row = top.Row(t);
    for (std::size_t j = 0; j < width; ++j) c.mean[j] += row[j];
  }
  for (double &m : c.mean) m *= inv_t;
  // A column that never changes over time pools to exactly its value, so the
  // std branch sits on the floor without rounding noise.
  for (std::size_t j = 0; j < width; ++j) {
    bool constant = true;
    for (std::size_t t = 1; t < frames && constant; ++t) constant = top(t, j) == top(0, j);
    if (constant) c.mean[j] = top(0, j);
  }
  std::vector<double> var(width, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    auto row = top.Row(t);
    for (std::size_t j = 0; j < width; ++j) {
      const double dev = row[j] - c.mean[j];
      var[j] += dev * dev;
    }
  }
  for (std::size_t j = 0; j < width; ++j)
    c.stddev[j] = std::sqrt(var[j] * inv_t + floor_sq);

  c.pooled.resize(2 * width);
  std::copy(c.mean.begin(), c.mean.end(), c.pooled.begin());
  std::copy(c.stddev.begin(), c.stddev.end(), c.pooled.begin() + width);

  const std::size_t proj = n_hidden;
  c.embedding = MatVec(values.weight(proj), c.pooled);
  const auto pb = values.bias(proj).Row(0);
  for (std::size_t i = 0; i < c.embedding.size(); ++i) c.embedding[i] += pb[i];
  return c.embedding;
}

void Backward(const ForwardCache &cache, std::span<const double> grad_embedding,
              EmbedderTensors *grads) {
  if (cache.params == nullptr)
    throw ValidationError("cache error: backward on an empty forward cache");
  if (cache.generation != cache.params->generation())
    throw ValidationError("cache error: parameters changed since the forward pass");
  const EmbedderParams &params = *cache.params;
  const EmbedderConfig &config = params.config();
  if (grad_embedding.size() != config.embed_dim)
    throw ShapeError("embedding gradient has dim " + std::to_string(grad_embedding.size()) +
                     ", expected " + std::to_string(config.embed_dim));
  if (grads->slots.size() != params.values().slots.size())
    throw ShapeError("gradient accumulator layout does not match parameters");
  const EmbedderTensors &values = params.values();
  const std::size_t n_hidden = config.hidden.size();
  const std::size_t frames = cache.input.frames;
  const double slope = config.leaky_slope;

  // Projection.
  const Matrix &wp = values.weight(n_hidden);
  Matrix &gwp = grads->weight(n_hidden);
  auto gbp = grads->bias(n_hidden).Row(0);
  std::vector<double> grad_pooled(wp.cols(), 0.0);
  for (std::size_t i = 0; i < wp.rows(); ++i) {
    const double g = grad_embedding[i];
    gbp[i] += g;
    auto grow = gwp.Row(i);
    auto wrow = wp.Row(i);
    for (std::size_t j = 0; j < wp.cols(); ++j) {
      grow[j] += g * cache.pooled[j];
      grad_pooled[j] += g * wrow[j];
    }
  }

  // Pooling: d mean / d a_t = 1/T, d std / d a_t = (a_t - mean) / (T std).
  const Matrix &top = cache.activations.back();
  const std::size_t width = top.cols();
  const double inv_t = 1.0 / static_cast<double>(frames);
  std::vector<double> mean_coef(width), std_coef(width);
  for (std::size_t j = 0; j < width; ++j) {
    mean_coef[j] = grad_pooled[j] * inv_t;
    std_coef[j] = grad_pooled[width + j] * inv_t / cache.stddev[j];
  }
  Matrix grad_act(frames, width);
  for (std::size_t t = 0; t < frames; ++t) {
    auto row = top.Row(t);
    auto g = grad_act.Row(t);
    for (std::size_t j = 0; j < width; ++j)
      g[j] = mean_coef[j] + std_coef[j] * (row[j] - cache.mean[j]);
  }

  std::vector<double> frame_in(config.feat_dim);
  for (std::size_t k = n_hidden; k-- > 0;) {
    const Matrix &w = values.weight(k);
    Matrix &gw = grads->weight(k);
    auto gb = grads->bias(k).Row(0);
    const Matrix &z = cache.pre_activations[k];
    Matrix grad_prev = k > 0 ? Matrix(frames, w.cols()) : Matrix();
    for (std::size_t t = 0; t < frames; ++t) {
      std::span<const double> in;
      if (k == 0) {
        auto f = cache.input.Frame(t);
        std::copy(f.begin(), f.end(), frame_in.begin());
        in = frame_in;
      } else {
        in = cache.activations[k - 1].Row(t);
      }
      auto ga = grad_act.Row(t);
      auto zt = z.Row(t);
      for (std::size_t j = 0; j < w.rows(); ++j) {
        const double dz = zt[j] > 0.0 ? ga[j] : slope * ga[j];
        if (dz == 0.0) continue;
        gb[j] += dz;
        auto grow = gw.Row(j);
        for (std::size_t i = 0; i < in.size(); ++i) grow[i] += dz * in[i];
        if (k > 0) {
          auto wrow = w.Row(j);
          auto gp = grad_prev.Row(t);
          for (std::size_t i = 0; i < wrow.size(); ++i) gp[i] += dz * wrow[i];
        }
      }
    }
    if (k > 0) grad_act = std::move(grad_prev);
  }
}

double FiniteDiffCheck(const EmbedderParams &params, FeatureView features,
                       const EmbeddingLoss &loss, const GradCheckOptions &options) {
  if (!(options.epsilon > 0.0 && options.epsilon <= 1e-2))
    throw ValidationError("finite-difference epsilon must be in (0, 1e-2]");
  if (options.num_coordinates < 1)
    throw ValidationError("finite-difference check needs >= 1 coordinate");

  EmbedderParams work = params;
  EmbedderTensors analytic = ZeroTensors(work.config());
  {
    ForwardCache cache;
    auto h = Forward(work, features, &cache);
    std::vector<double> grad_h;
    const double f = loss(h, &grad_h);
    if (!std::isfinite(f)) throw NumericError("non-finite loss in gradient check");
    Backward(cache, grad_h, &analytic);
  }

  // Coordinates are drawn uniformly over all scalars; the flat index is split
  // back into (slot, offset).
  const std::size_t total = analytic.NumScalars();
  Rng rng = Rng::Derive(options.seed, "grad-check");
  double worst = 0.0;
  for (int n = 0; n < options.num_coordinates; ++n) {
    std::size_t flat = static_cast<std::size_t>(rng.UniformInt(total));
    std::size_t slot = 0;
    while (flat >= analytic.slots[slot].size()) flat -= analytic.slots[slot++].size();

    auto eval = [&](double delta) {
      double &p = work.MutableValues().slots[slot].Values()[flat];
      const double saved = p;
      p = saved + delta;
      const double f = loss(Forward(work, features), nullptr);
      work.MutableValues().slots[slot].Values()[flat] = saved;
      if (!std::isfinite(f)) throw NumericError("non-finite loss in gradient check");
      return f;
    };
    const double numeric =
        (eval(options.epsilon) - eval(-options.epsilon)) / (2.0 * options.epsilon);
    const double a = analytic.slots[slot].Values()[flat];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

}  // namespace dropclass
