// core/src/model.cc

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

#include "dropclass/model.h"

#include <numeric>

#include "dropclass/error.h"
#include "dropclass/io.h"

namespace dropclass {

namespace {
constexpr char kModelMagic[] = "DCKM";
}

Model Model::Initialize(const EmbedderConfig &config, int n_classes, std::uint64_t seed) {
  if (n_classes < 2) throw ValidationError("head needs at least 2 classes");
  Model model;
  model.embedder = EmbedderParams::Initialize(config, seed);
  model.head = HeadMatrix::Initialize(n_classes, config.embed_dim, seed);
  model.n_classes = n_classes;
  model.active_rows = model.ClassRows();
  return model;
}

std::vector<int> Model::ClassRows() const {
  std::vector<int> rows(n_classes);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

std::vector<std::uint8_t> SerializeModel(const Model &model) {
  const EmbedderConfig &c = model.embedder.config();
  ByteWriter w;
  w.Magic(kModelMagic);
  w.U32(kCheckpointVersion);
  w.U32(static_cast<std::uint32_t>(c.feat_dim));
  w.U32(static_cast<std::uint32_t>(c.hidden.size()));
  for (auto h : c.hidden) w.U32(static_cast<std::uint32_t>(h));
  w.U32(static_cast<std::uint32_t>(c.embed_dim));
  w.F64(c.leaky_slope);
  w.F64(c.std_floor);
  w.U32(static_cast<std::uint32_t>(model.n_classes));
  w.U32(static_cast<std::uint32_t>(model.head.rows()));
  w.U32(model.has_merged_row ? 1 : 0);
  w.U32(static_cast<std::uint32_t>(model.active_rows.size()));
  for (int r : model.active_rows) w.U32(static_cast<std::uint32_t>(r));
  w.F64(model.final_lr);
  w.F64(model.loss_scale);
  for (const auto &slot : model.embedder.values().slots)
    for (double v : slot.Values()) w.F32(static_cast<float>(v));
  for (double v : model.head.weights.Values()) w.F32(static_cast<float>(v));
  return w.Take();
}

Model ParseModel(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.ExpectMagic(kModelMagic);
  const std::uint64_t version_offset = r.offset();
  const std::uint32_t version = r.U32("schema version");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version),
                      version_offset);
  EmbedderConfig c;
  c.feat_dim = r.U32("feat dim");
  const std::uint32_t n_hidden = r.U32("layer count");
  if (n_hidden == 0 || n_hidden > 64)
    throw FormatError("implausible layer count " + std::to_string(n_hidden), r.offset() - 4);
  c.hidden.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) c.hidden.push_back(r.U32("hidden size"));
  c.embed_dim = r.U32("embed dim");
  c.leaky_slope = r.F64("leaky slope");
  c.std_floor = r.F64("std floor");
  try {
    c.Validate();
  } catch (const ValidationError &e) {
    throw FormatError(e.what(), r.offset());
  }

  Model model;
  model.n_classes = static_cast<int>(r.U32("class count"));
  const std::uint32_t head_rows = r.U32("head rows");
  model.has_merged_row = r.U32("merged flag") != 0;
  if (model.n_classes < 2 ||
      head_rows != static_cast<std::uint32_t>(model.n_classes) + (model.has_merged_row ? 1 : 0))
    throw FormatError("inconsistent head row count", r.offset());
  const std::uint32_t n_active = r.U32("active count");
  if (n_active == 0 || n_active > head_rows)
    throw FormatError("bad active row count", r.offset() - 4);
  for (std::uint32_t i = 0; i < n_active; ++i) {
    const std::uint32_t row = r.U32("active row");
    if (row >= head_rows || (i > 0 && static_cast<int>(row) <= model.active_rows.back()))
      throw FormatError("bad active row id", r.offset() - 4);
    model.active_rows.push_back(static_cast<int>(row));
  }
  model.final_lr = r.F64("final lr");
  model.loss_scale = r.F64("loss scale");

  model.embedder = EmbedderParams(c);
  EmbedderTensors &values = model.embedder.MutableValues();
  for (auto &slot : values.slots)
    for (double &v : slot.Values()) v = r.F32("parameter");
  model.head = HeadMatrix(head_rows, c.embed_dim);
  for (double &v : model.head.weights.Values()) v = r.F32("head weight");
  if (!r.done())
    throw FormatError(std::to_string(r.remaining()) + " trailing bytes", r.offset());
  return model;
}

void SaveModel(const Model &model, const std::string &path) {
  WriteFileAtomic(path, SerializeModel(model));
}

Model LoadModel(const std::string &path) { return ParseModel(ReadFileBytes(path)); }

Model RoundToStoredPrecision(const Model &model) {
  return ParseModel(SerializeModel(model));
}

}  // namespace dropclass
