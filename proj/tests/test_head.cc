// tests/test_head.cc

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

#include <cmath>
#include <numbers>

#include "doctest.h"
#include "dropclass/error.h"
#include "dropclass/head.h"
#include "dropclass/rng.h"
#include "oracles.h"

using namespace dropclass;

namespace {

constexpr LossKind kAllKinds[] = {LossKind::kSoftmax, LossKind::kCosFace,
                                  LossKind::kSphereFace, LossKind::kArcFace,
                                  LossKind::kAdaCos};

std::vector<double> RandomVector(std::size_t n, Rng &rng) {
  std::vector<double> v(n);
  for (double &x : v) x = rng.Normal();
  return v;
}

Matrix RandomMatrix(std::size_t rows, std::size_t cols, Rng &rng) {
  Matrix m(rows, cols);
  for (double &x : m.Values()) x = rng.Normal();
  return m;
}

std::vector<std::vector<double>> ToNested(const Matrix &m) {
  std::vector<std::vector<double>> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r].assign(m.Row(r).begin(), m.Row(r).end());
  return out;
}

// Embedding at angle theta from unit row w0 inside the plane spanned by w0, u.
std::vector<double> AtAngle(double theta, std::size_t dim, double norm = 1.0) {
  std::vector<double> h(dim, 0.0);
  h[0] = norm * std::cos(theta);
  h[1] = norm * std::sin(theta);
  return h;
}

}  // namespace

TEST_SUITE("head") {

TEST_CASE("logits") {
  Rng rng(1);
  const Matrix zero(4, 3);
  for (double y : Logits(RandomVector(3, rng), zero)) CHECK(y == 0.0);

  const Matrix w = RandomMatrix(4, 3, rng);
  const auto y = Logits(std::vector<double>{1.0, 0.0, 0.0}, w);
  for (std::size_t j = 0; j < 4; ++j) CHECK(y[j] == w(j, 0));

  for (int trial = 0; trial < 50; ++trial) {
    const Matrix wr = RandomMatrix(7, 5, rng);
    const auto h = RandomVector(5, rng);
    const auto got = Logits(h, wr);
    const auto want = oracle::NaiveLogits(h, ToNested(wr));
    for (std::size_t j = 0; j < 7; ++j) CHECK(std::abs(got[j] - want[j]) <= 1e-6);
  }
  CHECK_THROWS_AS(Logits(RandomVector(4, rng), w), ShapeError);
}

TEST_CASE("masked logits") {
  Rng rng(2);
  const Matrix w = RandomMatrix(5, 3, rng);
  const auto h = RandomVector(3, rng);
  const auto full = Logits(h, w);
  const std::vector<int> all = {0, 1, 2, 3, 4};
  CHECK(MaskedLogits(h, w, all) == full);
  const std::vector<int> r = {0, 2, 4};
  const auto y = MaskedLogits(h, w, r);
  REQUIRE(y.size() == 3);
  CHECK(y[0] == full[0]);
  CHECK(y[1] == full[2]);
  CHECK(y[2] == full[4]);

  const std::vector<int> one = {3};
  const auto single = MaskedLogits(h, w, one);
  CHECK(Softmax(single) == std::vector<double>{1.0});
  Matrix w1(1, 3);
  for (std::size_t i = 0; i < 3; ++i) w1(0, i) = w(3, i);
  CHECK(LossAndGrads(h, w1, 0, LossSpec::Defaults(LossKind::kSoftmax)).loss == 0.0);

  CHECK_THROWS_WITH_AS(MaskedLogits(h, w, std::vector<int>{}), doctest::Contains("mask error"),
                       ValidationError);
  CHECK_THROWS_AS(MaskedLogits(h, w, std::vector<int>{1, 5}), ValidationError);
  CHECK_THROWS_AS(MaskedLogits(h, w, std::vector<int>{2, 1}), ValidationError);
  CHECK_THROWS_AS(MaskedLogits(h, w, std::vector<int>{-1}), ValidationError);
}

TEST_CASE("loss spec defaults and validation") {
  CHECK(LossSpec::Defaults(LossKind::kCosFace) == LossSpec{LossKind::kCosFace, 30.0, 0.35});
  CHECK(LossSpec::Defaults(LossKind::kArcFace) == LossSpec{LossKind::kArcFace, 30.0, 0.2});
  CHECK(LossSpec::Defaults(LossKind::kSphereFace).margin == 4.0);
  CHECK(LossSpec::Defaults(LossKind::kAdaCos, 40).scale ==
        doctest::Approx(std::sqrt(2.0) * std::log(39.0)));
  CHECK_THROWS_AS((LossSpec{LossKind::kCosFace, 0.0, 0.1}.Validate()), ValidationError);
  CHECK_THROWS_AS((LossSpec{LossKind::kCosFace, 30.0, 1.0}.Validate()), ValidationError);
  CHECK_THROWS_AS((LossSpec{LossKind::kArcFace, 30.0, -0.1}.Validate()), ValidationError);
  CHECK_THROWS_AS((LossSpec{LossKind::kSphereFace, 30.0, 2.5}.Validate()), ValidationError);
  CHECK_NOTHROW((LossSpec{LossKind::kSphereFace, 30.0, 3.0}.Validate()));
  for (LossKind k : kAllKinds) CHECK(ParseLossKind(LossKindName(k)) == k);
  CHECK_THROWS_AS(ParseLossKind("triplet"), ValidationError);
}

TEST_CASE("cosface without margin at s=1 is softmax over cosines") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix w = RandomMatrix(6, 4, rng);
    const auto h = RandomVector(4, rng);
    const std::size_t label = trial % 6;
    const double got = LossAndGrads(h, w, label, {LossKind::kCosFace, 1.0, 0.0}).loss;
    const auto cos = CosineLogits(h, w);
    const auto p = oracle::NaiveSoftmax(cos);
    CHECK(got == doctest::Approx(-std::log(p[label])).epsilon(1e-12));
  }
}

TEST_CASE("two-class cosface closed form") {
  Matrix w(2, 3);
  w(0, 0) = 2.0;  // target row, unit direction e1
  w(1, 1) = 0.5;  // orthogonal
  const std::vector<double> h = {3.0, 0.0, 0.0};
  const double got = LossAndGrads(h, w, 0, {LossKind::kCosFace, 30.0, 0.35}).loss;
  CHECK(got == doctest::Approx(std::log1p(std::exp(-19.5))).epsilon(1e-12));
}

TEST_CASE("analytic gradients match central differences for h and W") {
  constexpr std::size_t kDim = 32, kRows = 10;
  Rng rng(4);
  for (LossKind kind : kAllKinds) {
    const std::string name = LossKindName(kind);
    CAPTURE(name);
    const LossSpec spec = LossSpec::Defaults(kind, kRows);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      auto h = RandomVector(kDim, rng);
      for (double &x : h) x *= 2.0 / std::sqrt(double(kDim));
      const std::size_t label = trial % kRows;
      const double theta = 0.1 + (std::numbers::pi - 0.2) * rng.Uniform();
      const Matrix w = oracle::ControlledHead(h, kRows, label, theta, 0.05, rng);
      const LossResult r = LossAndGrads(h, w, label, spec);
      auto f_h = [&](const std::vector<double> &x) { return LossAndGrads(x, w, label, spec).loss; };
      for (std::size_t i = 0; i < kDim; ++i)
        worst = std::max(worst, oracle::RelativeError(
                                    r.grad_h[i], oracle::CentralDifference(f_h, h, i, 1e-5)));
      std::vector<double> flat(w.Values().begin(), w.Values().end());
      auto f_w = [&](const std::vector<double> &x) {
        Matrix m(kRows, kDim);
        std::copy(x.begin(), x.end(), m.Values().begin());
        return LossAndGrads(h, m, label, spec).loss;
      };
      for (std::size_t i = 0; i < flat.size(); ++i)
        worst = std::max(worst, oracle::RelativeError(r.grad_w.Values()[i],
                                                      oracle::CentralDifference(f_w, flat, i, 1e-5)));
    }
    CHECK(worst <= 1e-4);
  }
}

TEST_CASE("tiny losses keep their relative precision") {
  // Target dominant: the loss is about 2e-9 and must not collapse to a
  // rounding difference of two logits near 20.
  Matrix w(3, 2);
  w(0, 0) = 1.0;
  w(1, 1) = 1.0;
  w(2, 1) = -1.0;
  const std::vector<double> h = {1.0, 0.0};
  const double want = std::log1p(2.0 * std::exp(-30.0 * (1.0 - 0.35)));
  CHECK(LossAndGrads(h, w, 0, {LossKind::kCosFace, 30.0, 0.35}).loss ==
        doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("modified-logit probabilities sum to one") {
  Rng rng(5);
  for (LossKind kind : kAllKinds) {
    for (int trial = 0; trial < 20; ++trial) {
      const LossResult r = LossAndGrads(RandomVector(6, rng), RandomMatrix(8, 6, rng),
                                        trial % 8, LossSpec::Defaults(kind, 8));
      double sum = 0.0;
      for (double p : r.probabilities) sum += p;
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("larger margins never lower the loss") {
  Rng rng(6);
  for (LossKind kind : {LossKind::kCosFace, LossKind::kArcFace}) {
    for (int trial = 0; trial < 200; ++trial) {
      Matrix w = RandomMatrix(4, 3, rng);
      // target row along e1, embedding at theta in (0.2, pi - 0.2)
      for (std::size_t i = 0; i < 3; ++i) w(0, i) = i == 0 ? 1.0 : 0.0;
      const double theta = 0.2 + (std::numbers::pi - 0.4) * rng.Uniform();
      const auto h = AtAngle(theta, 3);
      const double m1 = 0.9 * rng.Uniform(), m2 = m1 + (0.99 - m1) * rng.Uniform();
      // ArcFace is monotone in m only while theta + m stays within [0, pi].
      if (kind == LossKind::kArcFace && theta + m2 > std::numbers::pi) continue;
      const double l1 = LossAndGrads(h, w, 0, {kind, 30.0, m1}).loss;
      const double l2 = LossAndGrads(h, w, 0, {kind, 30.0, m2}).loss;
      CHECK(l2 >= l1);
    }
  }
}

TEST_CASE("angular losses are scale invariant in h, softmax is not") {
  Rng rng(7);
  for (LossKind kind : kAllKinds) {
    for (int trial = 0; trial < 20; ++trial) {
      const Matrix w = RandomMatrix(5, 4, rng);
      const auto h = RandomVector(4, rng);
      auto scaled = h;
      const double c = 0.1 + 10.0 * rng.Uniform();
      for (double &x : scaled) x *= c;
      const LossSpec spec = LossSpec::Defaults(kind, 5);
      const double a = LossAndGrads(h, w, 1, spec).loss;
      const double b = LossAndGrads(scaled, w, 1, spec).loss;
      if (kind == LossKind::kSoftmax) {
        if (std::abs(c - 1.0) > 0.05) CHECK(a != b);
      } else {
        CHECK(std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(a)));
      }
    }
  }
}

TEST_CASE("a small gradient step lowers the loss for every kind") {
  Rng rng(8);
  for (LossKind kind : kAllKinds) {
    const std::string name = LossKindName(kind);
    CAPTURE(name);
    const LossSpec spec = LossSpec::Defaults(kind, 6);
    int decreased = 0;
    const int trials = 50;
    for (int trial = 0; trial < trials; ++trial) {
      Matrix w = RandomMatrix(6, 5, rng);
      auto h = RandomVector(5, rng);
      const std::size_t label = trial % 6;
      const LossResult r = LossAndGrads(h, w, label, spec);
      for (std::size_t i = 0; i < 5; ++i) h[i] -= 1e-3 * r.grad_h[i];
      for (std::size_t i = 0; i < w.size(); ++i) w.Values()[i] -= 1e-3 * r.grad_w.Values()[i];
      decreased += LossAndGrads(h, w, label, spec).loss < r.loss;
    }
    CHECK(decreased == trials);
  }
}

TEST_CASE("masked problem equals the reduced problem built from scratch") {
  Rng rng(9);
  const Matrix w = RandomMatrix(7, 4, rng);
  const auto h = RandomVector(4, rng);
  const std::vector<int> r = {1, 3, 6};
  Matrix reduced(3, 4);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t i = 0; i < 4; ++i) reduced(k, i) = w(r[k], i);
  Matrix masked(3, 4);
  for (std::size_t k = 0; k < 3; ++k) {
    auto row = w.Row(r[k]);
    std::copy(row.begin(), row.end(), masked.Row(k).begin());
  }
  for (LossKind kind : kAllKinds) {
    const LossResult a = LossAndGrads(h, masked, 2, LossSpec::Defaults(kind, 3));
    const LossResult b = LossAndGrads(h, reduced, 2, LossSpec::Defaults(kind, 3));
    CHECK(a.loss == b.loss);
    CHECK(a.grad_h == b.grad_h);
    CHECK(a.grad_w == b.grad_w);
  }
}

TEST_CASE("sphereface target transform is monotone in the angle") {
  Matrix w(2, 3);
  w(0, 0) = 1.0;
  w(1, 2) = 1.0;
  double previous = -1.0;
  for (int k = 1; k < 300; ++k) {
    const double theta = std::numbers::pi * k / 300.0;
    const double loss = LossAndGrads(AtAngle(theta, 3), w, 0,
                                     {LossKind::kSphereFace, 30.0, 4.0}).loss;
    CHECK(loss >= previous);
    previous = loss;
  }
}

TEST_CASE("loss errors") {
  Rng rng(10);
  const Matrix w = RandomMatrix(3, 4, rng);
  const auto h = RandomVector(4, rng);
  CHECK_THROWS_WITH_AS(LossAndGrads(h, w, 3, LossSpec{}), doctest::Contains("label error"),
                       ValidationError);
  CHECK_THROWS_AS(LossAndGrads(std::vector<double>(4, 0.0), w, 0, LossSpec{}), NumericError);
  CHECK_THROWS_AS(LossAndGrads(RandomVector(3, rng), w, 0, LossSpec{}), ShapeError);
  std::vector<double> big = h;
  big[0] = 1e308;
  big[1] = 1e308;
  CHECK_THROWS_AS(LossAndGrads(big, w, 0, LossSpec::Defaults(LossKind::kSoftmax)),
                  NumericError);
}

TEST_CASE("adacos scale") {
  CHECK(AdaCosInitialScale(2) == 1.0);
  CHECK(AdaCosInitialScale(40) == doctest::Approx(std::sqrt(2.0) * std::log(39.0)));
  // Hand-computed update: one example, two non-targets at cos 0, target at cos 1.
  // B = 2 e^0 = 2, median angle 0 -> s = ln 2 / cos 0, clamped up to 1.
  std::vector<std::vector<double>> cosines = {{1.0, 0.0, 0.0}};
  std::vector<std::size_t> labels = {0};
  CHECK(AdaCosUpdatedScale(cosines, labels, 5.0) == 1.0);
  // Many non-targets: B = 99 e^{5 * 0.2}; target angle pi/3 > pi/4 so cos(pi/4) is used.
  std::vector<double> row(100, 0.2);
  row[0] = 0.5;
  cosines = {row};
  const double expected = std::log(99.0 * std::exp(1.0)) / std::cos(std::numbers::pi / 4);
  CHECK(AdaCosUpdatedScale(cosines, labels, 5.0) == doctest::Approx(expected).epsilon(1e-12));
  // Lower median of an even count of target angles.
  cosines = {row, row};
  cosines[1][0] = 0.99;
  std::vector<std::size_t> two = {0, 0};
  const double med = std::acos(0.99);
  const double b = 99.0 * std::exp(1.0);
  CHECK(AdaCosUpdatedScale(cosines, two, 5.0) ==
        doctest::Approx(std::log(b) / std::cos(med)).epsilon(1e-12));
}

}  // TEST_SUITE
