// tools/config.cc

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

#include "config.h"

#include <algorithm>
#include <charconv>
#include <sstream>

#include "dropclass/error.h"
#include "dropclass/head.h"
#include "dropclass/io.h"
#include "dropclass/rng.h"

namespace dropclass::cli {

namespace {

constexpr KeySpec kSchema[] = {
    {"corpus.n_speakers", "50", "speakers generated"},
    {"corpus.utts_per_speaker", "20", "utterances per speaker"},
    {"corpus.frames_per_utt", "50", "frames per utterance"},
    {"corpus.feat_dim", "20", "feature dimension F"},
    {"corpus.speaker_spread", "1.0", "std of speaker means"},
    {"corpus.frame_noise", "0.5", "std of per-frame noise"},
    {"corpus.skew_factor", "0.0", "shift of the first half of the speakers, in [0,1]"},
    {"corpus.seed", "0", "corpus seed; split and trial seeds derive from it"},
    {"corpus.train_fraction", "0.8", "fraction of speakers used for training"},
    {"corpus.heldout_pool_fraction", "1.0",
     "held-out speakers come from the first ceil(f*M) speaker ids"},
    {"model.hidden", "64,64", "frame-level layer widths"},
    {"model.embed_dim", "32", "embedding dimension d"},
    {"model.leaky_slope", "0.01", "negative slope of the rectifier"},
    {"model.std_floor", "1e-6", "std pooling floor"},
    {"loss.kind", "cosface", "softmax|cosface|arcface|sphereface|adacos"},
    {"loss.scale", "auto", "logit scale s (auto: per-kind default)"},
    {"loss.margin", "auto", "margin m (auto: per-kind default)"},
    {"drop.mode", "none",
     "none|dropclass (train); none|dropadapt|dropadapt_combine|drop_random|drop_only_data "
     "(adapt)"},
    {"drop.P", "1", "iterations between refreshes"},
    {"drop.D", "0", "classes dropped per refresh"},
    {"drop.enrol_fraction", "1.0", "fraction of enrolment utterances used for ranking"},
    {"train.iterations", "auto", "auto: 2000 for train, 500 for adapt"},
    {"train.batch_size", "16", "examples per step, one per class"},
    {"train.frames_per_example", "50", "frames cropped per example"},
    {"train.lr", "auto", "auto: 0.2 for train, the source model's final lr for adapt"},
    {"train.momentum", "0.5", "classical momentum"},
    {"train.halvings", "auto",
     "lr halving iterations: auto (train: 50/66.7/75/91.7% of the budget; adapt: none), "
     "none, or a comma list"},
    {"train.adacos_reset_on_refresh", "true", "reset the AdaCos scale when the head changes"},
    {"train.seed", "0", "initialisation, batch and drop seed"},
    {"train.threads", "0", "0: DCK_THREADS if set, else 1"},
    {"eval.n_target_trials", "300", "target trials written by gen-data"},
    {"eval.n_nontarget_trials", "300", "non-target trials written by gen-data"},
    {"eval.n_bootstrap", "300", "bootstrap replicas for diagnose"},
    {"eval.seed", "0", "bootstrap seed"},
};

const KeySpec *Find(const std::string &name) {
  for (const auto &k : kSchema)
    if (name == k.name) return &k;
  return nullptr;
}

std::size_t EditDistance(const std::string &a, const std::string &b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] != b[j - 1])});
      diag = up;
    }
  }
  return row[b.size()];
}

std::string Trim(const std::string &s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T ParseNumber(const std::string &name, const std::string &text) {
  T value{};
  const char *end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty())
    throw ValidationError("config key " + name + ": cannot parse '" + text + "'");
  return value;
}

}  // namespace

std::span<const KeySpec> Schema() { return kSchema; }

void CheckKnownKey(const std::string &name) {
  if (Find(name) != nullptr) return;
  const KeySpec *best = nullptr;
  std::size_t best_d = 0;
  const auto dot = name.find('.');
  const std::string bare = dot == std::string::npos ? name : name.substr(dot + 1);
  for (const auto &k : kSchema) {
    const std::string full = k.name;
    const std::string key = full.substr(full.find('.') + 1);
    const std::size_t d = std::min(EditDistance(name, full), EditDistance(bare, key));
    if (best == nullptr || d < best_d) {
      best = &k;
      best_d = d;
    }
  }
  throw ValidationError("unknown config key '" + name + "'; did you mean '" + best->name +
                        "'?");
}

RunConfig::RunConfig() {
  for (const auto &k : kSchema) values_[k.name] = k.fallback;
}

void RunConfig::LoadFile(const std::string &path) { LoadText(ReadFileText(path), path); }

void RunConfig::LoadText(const std::string &text, const std::string &origin) {
  std::string section;
  int line_no = 0;
  for (const auto &raw : SplitString(text, '\n')) {
    ++line_no;
    std::string line = raw;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = Trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where + ": malformed section header");
      section = Trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where + ": expected key = value");
    if (section.empty()) throw ValidationError(where + ": key outside any [section]");
    const std::string key = Trim(line.substr(0, eq));
    try {
      Set(section + "." + key, Trim(line.substr(eq + 1)));
    } catch (const ValidationError &e) {
      throw ValidationError(where + ": " + e.what());
    }
  }
}

void RunConfig::Set(const std::string &name, const std::string &value) {
  CheckKnownKey(name);
  values_[name] = value;
}

const std::string &RunConfig::Get(const std::string &name) const {
  auto it = values_.find(name);
  if (it == values_.end()) CheckKnownKey(name);
  return it->second;
}

int RunConfig::GetInt(const std::string &name) const {
  return ParseNumber<int>(name, Get(name));
}

std::uint64_t RunConfig::GetU64(const std::string &name) const {
  return ParseNumber<std::uint64_t>(name, Get(name));
}

double RunConfig::GetDouble(const std::string &name) const {
  return ParseNumber<double>(name, Get(name));
}

bool RunConfig::GetBool(const std::string &name) const {
  const std::string &v = Get(name);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("config key " + name + ": expected true or false, got '" + v + "'");
}

std::vector<int> RunConfig::GetIntList(const std::string &name) const {
  std::vector<int> out;
  for (const auto &item : SplitString(Get(name), ','))
    out.push_back(ParseNumber<int>(name, Trim(item)));
  return out;
}

std::string HelpTable() {
  std::ostringstream out;
  out << "Config keys (file sections [corpus] [model] [loss] [drop] [train] [eval];\n"
         "override any key with --section.key value):\n";
  for (const auto &k : kSchema) {
    std::string left = std::string("  ") + k.name + " = " + k.fallback;
    if (left.size() < 40) left.resize(40, ' ');
    out << left << "  " << k.help << '\n';
  }
  return out.str();
}

CorpusSpec CorpusFromConfig(const RunConfig &config) {
  CorpusSpec spec;
  spec.n_speakers = config.GetInt("corpus.n_speakers");
  spec.utts_per_speaker = config.GetInt("corpus.utts_per_speaker");
  spec.frames_per_utt = config.GetInt("corpus.frames_per_utt");
  spec.feat_dim = config.GetInt("corpus.feat_dim");
  spec.speaker_spread = config.GetDouble("corpus.speaker_spread");
  spec.frame_noise = config.GetDouble("corpus.frame_noise");
  spec.skew_factor = config.GetDouble("corpus.skew_factor");
  spec.seed = config.GetU64("corpus.seed");
  spec.Validate();
  return spec;
}

std::uint64_t SplitSeed(const RunConfig &config) {
  return Rng::Derive(config.GetU64("corpus.seed"), "split", 0).NextU64();
}

std::uint64_t TrialSeed(const RunConfig &config) {
  return Rng::Derive(config.GetU64("corpus.seed"), "trials", 0).NextU64();
}

SplitOptions SplitFromConfig(const RunConfig &config) {
  SplitOptions options;
  options.train_class_fraction = config.GetDouble("corpus.train_fraction");
  options.heldout_pool_fraction = config.GetDouble("corpus.heldout_pool_fraction");
  options.seed = SplitSeed(config);
  return options;
}

EmbedderConfig EmbedderFromConfig(const RunConfig &config, std::size_t feat_dim) {
  EmbedderConfig e;
  e.feat_dim = feat_dim;
  e.hidden.clear();
  for (int h : config.GetIntList("model.hidden")) {
    if (h <= 0) throw ValidationError("config key model.hidden: widths must be positive");
    e.hidden.push_back(static_cast<std::size_t>(h));
  }
  const int d = config.GetInt("model.embed_dim");
  if (d <= 0) throw ValidationError("config key model.embed_dim must be positive");
  e.embed_dim = static_cast<std::size_t>(d);
  e.leaky_slope = config.GetDouble("model.leaky_slope");
  e.std_floor = config.GetDouble("model.std_floor");
  e.Validate();
  return e;
}

TrainConfig TrainFromConfig(const RunConfig &config, int n_classes, bool adapt) {
  TrainConfig c;
  c.total_iterations = config.IsAuto("train.iterations") ? (adapt ? 500 : 2000)
                                                         : config.GetInt("train.iterations");
  c.batch_size = config.GetInt("train.batch_size");
  c.frames_per_example = config.GetInt("train.frames_per_example");
  // Adapt takes its rate from the source checkpoint; an explicit value is
  // still validated here and applied by the caller.
  c.lr = config.IsAuto("train.lr") ? 0.2 : config.GetDouble("train.lr");
  c.momentum = config.GetDouble("train.momentum");
  const std::string &halvings = config.Get("train.halvings");
  if (halvings == "auto") {
    if (!adapt) c.lr_halving_steps = TrainConfig::ScaledHalvings(c.total_iterations);
  } else if (halvings != "none") {
    c.lr_halving_steps = config.GetIntList("train.halvings");
  }
  c.loss = LossSpec::Defaults(ParseLossKind(config.Get("loss.kind")),
                              static_cast<std::size_t>(std::max(n_classes, 2)));
  if (!config.IsAuto("loss.scale")) c.loss.scale = config.GetDouble("loss.scale");
  if (!config.IsAuto("loss.margin")) c.loss.margin = config.GetDouble("loss.margin");
  c.adacos_reset_on_refresh = config.GetBool("train.adacos_reset_on_refresh");
  c.drop.mode = ParseDropMode(config.Get("drop.mode"));
  c.drop.period = config.GetInt("drop.P");
  c.drop.drop_count = config.GetInt("drop.D");
  c.drop.enrol_fraction = config.GetDouble("drop.enrol_fraction");
  c.seed = config.GetU64("train.seed");
  c.threads = config.GetInt("train.threads");
  c.Validate(n_classes);
  return c;
}

}  // namespace dropclass::cli
