// tools/config.h

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
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dropclass/corpus.h"
#include "dropclass/embedder.h"
#include "dropclass/trainer.h"

namespace dropclass::cli {

struct KeySpec {
  const char *name;  // "section.key"
  const char *fallback;
  const char *help;
};

// Every recognised key with its default, in help order.
std::span<const KeySpec> Schema();

// Sectioned key=value settings. Values stay as text until a command asks
// for them, so `auto` can mean different things to train and adapt.
class RunConfig {
 public:
  RunConfig();

  // `[section]` headers, `key = value` lines, `#` comments.
  void LoadFile(const std::string &path);
  void LoadText(const std::string &text, const std::string &origin);
  // name is "section.key".
  void Set(const std::string &name, const std::string &value);

  const std::string &Get(const std::string &name) const;
  bool IsAuto(const std::string &name) const { return Get(name) == "auto"; }
  int GetInt(const std::string &name) const;
  std::uint64_t GetU64(const std::string &name) const;
  double GetDouble(const std::string &name) const;
  bool GetBool(const std::string &name) const;
  std::vector<int> GetIntList(const std::string &name) const;

  const std::map<std::string, std::string> &values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

// Throws ValidationError naming the key and the closest known key.
void CheckKnownKey(const std::string &name);

std::string HelpTable();

CorpusSpec CorpusFromConfig(const RunConfig &config);
SplitOptions SplitFromConfig(const RunConfig &config);
EmbedderConfig EmbedderFromConfig(const RunConfig &config, std::size_t feat_dim);
// `adapt` selects the adapt-run meaning of the `auto` values.
TrainConfig TrainFromConfig(const RunConfig &config, int n_classes, bool adapt);

// Stream seeds derived from corpus.seed.
std::uint64_t SplitSeed(const RunConfig &config);
std::uint64_t TrialSeed(const RunConfig &config);

}  // namespace dropclass::cli
