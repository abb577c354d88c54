// core/src/matrix.cc

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

#include "dropclass/matrix.h"

#include <algorithm>
#include <cmath>

#include "dropclass/error.h"

namespace dropclass {

void Matrix::SetZero() { std::fill(data_.begin(), data_.end(), 0.0); }

void Matrix::AppendRow(std::span<const double> row) {
  if (rows_ == 0 && cols_ == 0) cols_ = row.size();
  if (row.size() != cols_)
    throw ShapeError("appended row has " + std::to_string(row.size()) +
                     " columns, matrix has " + std::to_string(cols_));
  data_.insert(data_.end(), row.begin(), row.end());
  ++rows_;
}

Matrix Matrix::SelectRows(std::span<const int> rows) const {
  Matrix out(rows.size(), cols_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= rows_)
      throw ShapeError("row index " + std::to_string(rows[i]) +
                       " out of range for " + std::to_string(rows_) + " rows");
    auto src = Row(rows[i]);
    std::copy(src.begin(), src.end(), out.Row(i).begin());
  }
  return out;
}

double Dot(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double Norm(std::span<const double> a) { return std::sqrt(Dot(a, a)); }

std::vector<double> MatVec(const Matrix &w, std::span<const double> x) {
  if (w.cols() != x.size())
    throw ShapeError("matrix has " + std::to_string(w.cols()) +
                     " columns but vector has " + std::to_string(x.size()));
  std::vector<double> y(w.rows());
  for (std::size_t j = 0; j < w.rows(); ++j) y[j] = Dot(w.Row(j), x);
  return y;
}

bool AllFinite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace dropclass
