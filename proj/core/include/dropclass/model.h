// core/include/dropclass/model.h

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

#include "dropclass/embedder.h"
#include "dropclass/head.h"

namespace dropclass {

// Extractor plus classification head. The head always keeps one row per
// training class; Combine adaptation appends one extra row (index n_classes)
// for the merged class. `active_rows` lists the head rows the model was
// last trained against, so an adapted checkpoint is self-describing.
struct Model {
  EmbedderParams embedder;
  HeadMatrix head;
  int n_classes = 0;
  std::vector<int> active_rows;
  bool has_merged_row = false;
  // Learning rate in effect at the end of the run that produced the model.
  double final_lr = 0.0;
  // Loss scale at the end of the run (differs from the config only for AdaCos).
  double loss_scale = 0.0;

  static Model Initialize(const EmbedderConfig &config, int n_classes, std::uint64_t seed);

  // Head rows 0..n_classes-1, i.e. without the merged row.
  std::vector<int> ClassRows() const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// "DCKM" checkpoint: u32 version, architecture dims, head/remap metadata,
// then every parameter tensor as little-endian binary32 in declaration order
// followed by the head matrix.
std::vector<std::uint8_t> SerializeModel(const Model &model);
Model ParseModel(std::span<const std::uint8_t> bytes);
void SaveModel(const Model &model, const std::string &path);
Model LoadModel(const std::string &path);

// Rounds every parameter through binary32, i.e. what a save/load round trip
// produces.
Model RoundToStoredPrecision(const Model &model);

}  // namespace dropclass
