// core/include/dropclass/embedder.h

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
#include <functional>
#include <span>
#include <vector>

#include "dropclass/corpus.h"
#include "dropclass/matrix.h"

namespace dropclass {

// Frame-level layers (affine + leaky rectifier) -> mean/std pooling over time
// -> affine projection to the embedding. No temporal context splicing.
struct EmbedderConfig {
  std::size_t feat_dim = 20;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t embed_dim = 32;
  // Negative-side slope of the rectifier. 1.0 turns the frame layers linear.
  double leaky_slope = 0.01;
  // Pooled std is sqrt(var + std_floor^2).
  double std_floor = 1e-6;

  std::size_t pooled_dim() const { return 2 * hidden.back(); }
  void Validate() const;
  bool operator==(const EmbedderConfig &) const = default;
};

// One tensor per parameter slot, in declaration order:
//   W_0, b_0, ..., W_{L-1}, b_{L-1}, W_proj, b_proj
// Weights are out x in, biases 1 x out. Used for values, gradients and
// optimizer state alike.
struct EmbedderTensors {
  std::vector<Matrix> slots;

  std::size_t num_layers() const { return slots.size() / 2; }
  Matrix &weight(std::size_t layer) { return slots[2 * layer]; }
  const Matrix &weight(std::size_t layer) const { return slots[2 * layer]; }
  Matrix &bias(std::size_t layer) { return slots[2 * layer + 1]; }
  const Matrix &bias(std::size_t layer) const { return slots[2 * layer + 1]; }

  std::size_t NumScalars() const;
  void SetZero();
  bool AllFinite() const;
  bool operator==(const EmbedderTensors &) const = default;
};

EmbedderTensors ZeroTensors(const EmbedderConfig &config);

class EmbedderParams {
 public:
  EmbedderParams() = default;
  // All-zero parameters.
  explicit EmbedderParams(const EmbedderConfig &config);
  // Glorot-uniform weights, zero biases.
  static EmbedderParams Initialize(const EmbedderConfig &config, std::uint64_t seed);

  const EmbedderConfig &config() const { return config_; }
  const EmbedderTensors &values() const { return values_; }
  // Any write through this reference invalidates outstanding forward caches.
  EmbedderTensors &MutableValues() {
    ++generation_;
    return values_;
  }
  EmbedderTensors &grads() { return grads_; }
  const EmbedderTensors &grads() const { return grads_; }
  void ZeroGrad() { grads_.SetZero(); }

  std::uint64_t generation() const { return generation_; }

 private:
  EmbedderConfig config_;
  EmbedderTensors values_;
  EmbedderTensors grads_;
  std::uint64_t generation_ = 0;
};

struct ForwardCache {
  const EmbedderParams *params = nullptr;
  std::uint64_t generation = 0;
  FeatureView input;
  std::vector<Matrix> pre_activations;  // per frame layer, T x H
  std::vector<Matrix> activations;      // per frame layer, T x H
  std::vector<double> mean;
  std::vector<double> stddev;
  std::vector<double> pooled;  // mean ++ stddev
  std::vector<double> embedding;
};

// Fills `cache` (if given) for a later Backward. The cache keeps a pointer to
// `params` and to the feature storage; both must outlive it.
std::vector<double> Forward(const EmbedderParams &params, FeatureView features,
                            ForwardCache *cache = nullptr);

// Adds d(loss)/d(params) into `grads` given d(loss)/d(embedding).
void Backward(const ForwardCache &cache, std::span<const double> grad_embedding,
              EmbedderTensors *grads);

// Returns the loss and writes d(loss)/d(embedding) into the second argument.
using EmbeddingLoss =
    std::function<double(std::span<const double>, std::vector<double> *)>;

struct GradCheckOptions {
  double epsilon = 1e-5;
  int num_coordinates = 100;
  std::uint64_t seed = 0;
};

// Max over sampled coordinates of |a - n| / max(|a|, |n|, 1e-8), comparing the
// analytic gradient a to the central difference n.
double FiniteDiffCheck(const EmbedderParams &params, FeatureView features,
                       const EmbeddingLoss &loss, const GradCheckOptions &options);

}  // namespace dropclass
