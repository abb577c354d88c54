// core/src/head.cc

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

#include "dropclass/head.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dropclass/error.h"
#include "dropclass/rng.h"

namespace dropclass {

HeadMatrix HeadMatrix::Initialize(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  HeadMatrix head(rows, dim);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + dim));
  Rng rng = Rng::Derive(seed, "head-init");
  for (double &v : head.weights.Values()) v = limit * (2.0 * rng.Uniform() - 1.0);
  return head;
}

const char *LossKindName(LossKind kind) {
  switch (kind) {
    case LossKind::kSoftmax: return "softmax";
    case LossKind::kCosFace: return "cosface";
    case LossKind::kSphereFace: return "sphereface";
    case LossKind::kArcFace: return "arcface";
    case LossKind::kAdaCos: return "adacos";
  }
  return "softmax";
}

LossKind ParseLossKind(const std::string &name) {
  for (LossKind k : {LossKind::kSoftmax, LossKind::kCosFace, LossKind::kSphereFace,
                     LossKind::kArcFace, LossKind::kAdaCos})
    if (name == LossKindName(k)) return k;
  throw ValidationError("unknown loss kind '" + name +
                        "' (softmax, cosface, sphereface, arcface, adacos)");
}

LossSpec LossSpec::Defaults(LossKind kind, std::size_t n_classes) {
  switch (kind) {
    case LossKind::kSoftmax: return {kind, 1.0, 0.0};
    case LossKind::kCosFace: return {kind, 30.0, 0.35};
    case LossKind::kArcFace: return {kind, 30.0, 0.2};
    case LossKind::kSphereFace: return {kind, 30.0, 4.0};
    case LossKind::kAdaCos: return {kind, AdaCosInitialScale(n_classes), 0.0};
  }
  return {};
}

void LossSpec::Validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw ValidationError("loss scale must be > 0");
  switch (kind) {
    case LossKind::kCosFace:
    case LossKind::kArcFace:
      if (!(margin >= 0.0 && margin < 1.0))
        throw ValidationError(std::string(LossKindName(kind)) + " margin must be in [0, 1)");
      break;
    case LossKind::kSphereFace:
      if (!(margin == 1.0 || margin == 2.0 || margin == 3.0 || margin == 4.0))
        throw ValidationError("sphereface margin must be one of 1, 2, 3, 4");
      break;
    default:
      break;
  }
}

std::vector<double> Logits(std::span<const double> h, const Matrix &w) {
  return MatVec(w, h);
}

void ValidateMask(std::span<const int> active, std::size_t n_rows) {
  if (active.empty()) throw ValidationError("mask error: empty class subset");
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (active[i] < 0 || static_cast<std::size_t>(active[i]) >= n_rows)
      throw ValidationError("mask error: class id " + std::to_string(active[i]) +
                            " outside [0, " + std::to_string(n_rows) + ")");
    if (i > 0 && active[i] <= active[i - 1])
      throw ValidationError("mask error: class ids must be strictly increasing");
  }
}

std::vector<double> MaskedLogits(std::span<const double> h, const Matrix &w,
                                 std::span<const int> active) {
  ValidateMask(active, w.rows());
  if (w.cols() != h.size())
    throw ShapeError("head has dim " + std::to_string(w.cols()) + ", embedding has " +
                     std::to_string(h.size()));
  std::vector<double> y(active.size());
  for (std::size_t i = 0; i < active.size(); ++i) y[i] = Dot(w.Row(active[i]), h);
  return y;
}

double LogSumExp(std::span<const double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - top);
  return top + std::log(sum);
}

std::vector<double> Softmax(std::span<const double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += (p[i] = std::exp(z[i] - top));
  for (double &v : p) v /= sum;
  return p;
}

std::vector<double> CosineLogits(std::span<const double> h, const Matrix &w) {
  if (w.cols() != h.size())
    throw ShapeError("head has dim " + std::to_string(w.cols()) + ", embedding has " +
                     std::to_string(h.size()));
  const double hn = Norm(h);
  if (!(hn > 0.0)) throw NumericError("zero-norm embedding");
  std::vector<double> c(w.rows());
  for (std::size_t j = 0; j < w.rows(); ++j) {
    const double wn = Norm(w.Row(j));
    if (!(wn > 0.0)) throw NumericError("zero-norm head row " + std::to_string(j));
    c[j] = Dot(w.Row(j), h) / (hn * wn);
  }
  return c;
}

namespace {

struct TargetTransform {
  double value;       // modified target logit / s
  double derivative;  // d value / d cos
};

TargetTransform ArcFace(double cos_y, double margin) {
  const double c = std::clamp(cos_y, -kCosClamp, kCosClamp);
  const double theta = std::acos(c);
  const bool clamped = c != cos_y;
  return {std::cos(theta + margin),
          clamped ? 0.0 : std::sin(theta + margin) / std::sqrt(1.0 - c * c)};
}

// psi(theta) = (-1)^k cos(m theta) - 2k on [k pi/m, (k+1) pi/m]; monotone
// decreasing over [0, pi] and continuously differentiable.
TargetTransform SphereFace(double cos_y, int m) {
  const double c = std::clamp(cos_y, -kCosClamp, kCosClamp);
  const double theta = std::acos(c);
  const bool clamped = c != cos_y;
  int k = static_cast<int>(std::floor(m * theta / std::numbers::pi));
  k = std::clamp(k, 0, m - 1);
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  const double psi = sign * std::cos(m * theta) - 2.0 * k;
  const double dpsi_dtheta = -sign * m * std::sin(m * theta);
  return {psi, clamped ? 0.0 : -dpsi_dtheta / std::sqrt(1.0 - c * c)};
}

// -log softmax(z)[label]. When the target logit is the largest the loss is
// log1p of the non-target mass, which keeps its relative precision as the
// loss goes to zero.
double CrossEntropy(std::span<const double> z, std::size_t label) {
  const double top = *std::max_element(z.begin(), z.end());
  if (z[label] < top) return LogSumExp(z) - z[label];
  double rest = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j)
    if (j != label) rest += std::exp(z[j] - z[label]);
  return std::log1p(rest);
}

}  // namespace

LossResult LossAndGrads(std::span<const double> h, const Matrix &w_active,
                        std::size_t label, const LossSpec &spec) {
  const std::size_t n = w_active.rows();
  if (label >= n)
    throw ValidationError("label error: label " + std::to_string(label) +
                          " outside [0, " + std::to_string(n) + ")");
  if (w_active.cols() != h.size())
    throw ShapeError("head has dim " + std::to_string(w_active.cols()) +
                     ", embedding has " + std::to_string(h.size()));
  spec.Validate();
  const std::size_t dim = h.size();
  LossResult out;
  out.grad_h.assign(dim, 0.0);
  out.grad_w = Matrix(n, dim);

  if (spec.kind == LossKind::kSoftmax) {
    const std::vector<double> z = Logits(h, w_active);
    out.probabilities = Softmax(z);
    out.loss = CrossEntropy(z, label);
    for (std::size_t j = 0; j < n; ++j) {
      const double dz = out.probabilities[j] - (j == label ? 1.0 : 0.0);
      auto wrow = w_active.Row(j);
      auto grow = out.grad_w.Row(j);
      for (std::size_t i = 0; i < dim; ++i) {
        out.grad_h[i] += dz * wrow[i];
        grow[i] = dz * h[i];
      }
    }
  } else {
    const double s = spec.scale;
    const double hn = Norm(h);
    if (!(hn > 0.0)) throw NumericError("zero-norm embedding");
    std::vector<double> wn(n), cos(n);
    for (std::size_t j = 0; j < n; ++j) {
      wn[j] = Norm(w_active.Row(j));
      if (!(wn[j] > 0.0)) throw NumericError("zero-norm head row " + std::to_string(j));
      cos[j] = Dot(w_active.Row(j), h) / (hn * wn[j]);
    }
    TargetTransform target{cos[label], 1.0};
    switch (spec.kind) {
      case LossKind::kCosFace: target = {cos[label] - spec.margin, 1.0}; break;
      case LossKind::kArcFace: target = ArcFace(cos[label], spec.margin); break;
      case LossKind::kSphereFace:
        target = SphereFace(cos[label], static_cast<int>(spec.margin));
        break;
      default: break;
    }
    std::vector<double> z(n);
    for (std::size_t j = 0; j < n; ++j) z[j] = s * cos[j];
    z[label] = s * target.value;
    out.probabilities = Softmax(z);
    out.loss = CrossEntropy(z, label);

    // d loss / d cos_j, then through cos_j = <h, w_j> / (|h| |w_j|).
    for (std::size_t j = 0; j < n; ++j) {
      double g = (out.probabilities[j] - (j == label ? 1.0 : 0.0)) * s;
      if (j == label) g *= target.derivative;
      auto wrow = w_active.Row(j);
      auto grow = out.grad_w.Row(j);
      const double c = cos[j];
      for (std::size_t i = 0; i < dim; ++i) {
        const double h_unit = h[i] / hn;
        const double w_unit = wrow[i] / wn[j];
        out.grad_h[i] += g * (w_unit - c * h_unit) / hn;
        grow[i] = g * (h_unit - c * w_unit) / wn[j];
      }
    }
  }
  if (!std::isfinite(out.loss) || !AllFinite(out.grad_h) || !AllFinite(out.grad_w.Values()))
    throw NumericError("non-finite loss or gradient");
  return out;
}

double AdaCosInitialScale(std::size_t n_classes) {
  if (n_classes < 3) return 1.0;
  return std::clamp(std::sqrt(2.0) * std::log(static_cast<double>(n_classes) - 1.0),
                    1.0, 100.0);
}

double AdaCosUpdatedScale(std::span<const std::vector<double>> cosines,
                          std::span<const std::size_t> labels, double scale) {
  if (cosines.empty()) return scale;
  double b_sum = 0.0;
  std::vector<double> target_angles;
  for (std::size_t i = 0; i < cosines.size(); ++i) {
    for (std::size_t j = 0; j < cosines[i].size(); ++j)
      if (j != labels[i]) b_sum += std::exp(scale * cosines[i][j]);
    target_angles.push_back(
        std::acos(std::clamp(cosines[i][labels[i]], -kCosClamp, kCosClamp)));
  }
  const double b_avg = b_sum / static_cast<double>(cosines.size());
  if (!(b_avg > 0.0)) return 1.0;
  std::sort(target_angles.begin(), target_angles.end());
  const double median = target_angles[(target_angles.size() - 1) / 2];
  const double updated =
      std::log(b_avg) / std::cos(std::min(std::numbers::pi / 4.0, median));
  return std::clamp(updated, 1.0, 100.0);
}

}  // namespace dropclass
