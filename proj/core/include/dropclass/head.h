// core/include/dropclass/head.h

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
#include <span>
#include <string>
#include <vector>

#include "dropclass/matrix.h"

namespace dropclass {

// Bias-free classification head: logits = W h, one row of W per class.
struct HeadMatrix {
  Matrix weights;
  Matrix grads;

  HeadMatrix() = default;
  HeadMatrix(std::size_t rows, std::size_t dim) : weights(rows, dim), grads(rows, dim) {}
  // Glorot-uniform rows.
  static HeadMatrix Initialize(std::size_t rows, std::size_t dim, std::uint64_t seed);

  std::size_t rows() const { return weights.rows(); }
  std::size_t dim() const { return weights.cols(); }
};

enum class LossKind { kSoftmax, kCosFace, kSphereFace, kArcFace, kAdaCos };

const char *LossKindName(LossKind kind);
LossKind ParseLossKind(const std::string &name);

// For AdaCos `scale` is the current dynamic scale; everything else treats it
// as a fixed hyperparameter. `margin` is ignored by softmax and AdaCos and
// must be an integer in {1,2,3,4} for SphereFace.
struct LossSpec {
  LossKind kind = LossKind::kCosFace;
  double scale = 30.0;
  double margin = 0.35;

  // cosface s=30 m=0.35, arcface s=30 m=0.2, sphereface s=30 m=4,
  // adacos s=sqrt(2)*ln(n_classes-1).
  static LossSpec Defaults(LossKind kind, std::size_t n_classes = 2);
  void Validate() const;
  bool operator==(const LossSpec &) const = default;
};

std::vector<double> Logits(std::span<const double> h, const Matrix &w);

// Throws ValidationError ("mask error") unless `active` is non-empty,
// strictly increasing and inside [0, n_rows).
void ValidateMask(std::span<const int> active, std::size_t n_rows);

// Logits restricted to the rows listed in `active`, in that order.
std::vector<double> MaskedLogits(std::span<const double> h, const Matrix &w,
                                 std::span<const int> active);

double LogSumExp(std::span<const double> z);
std::vector<double> Softmax(std::span<const double> z);

// cos(angle) between h and every row of w.
std::vector<double> CosineLogits(std::span<const double> h, const Matrix &w);

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad_h;
  Matrix grad_w;                       // same shape as the active head
  std::vector<double> probabilities;   // softmax of the modified logits
};

// Cross-entropy of one example against the active head rows `w_active`;
// `label` indexes those rows.
LossResult LossAndGrads(std::span<const double> h, const Matrix &w_active,
                        std::size_t label, const LossSpec &spec);

// Arccos clamp used by the angular kinds.
inline constexpr double kCosClamp = 1.0 - 1e-7;

double AdaCosInitialScale(std::size_t n_classes);

// Dynamic AdaCos scale from one batch:
//   B_avg = mean_i sum_{j != y_i} exp(s * cos_ij),
//   s' = ln(B_avg) / cos(min(pi/4, median_i theta_{i, y_i})),
// clamped to [1, 100]. The median is the lower median.
double AdaCosUpdatedScale(std::span<const std::vector<double>> cosines,
                          std::span<const std::size_t> labels, double scale);

}  // namespace dropclass
