// core/include/dropclass/corpus.h

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

// Parameters of the Gaussian-cluster generator that stands in for acoustic
// features. Frame t of utterance u of class i is
//   mean_i + offset_u + noise_t,
// with mean_i ~ N(0, speaker_spread^2 I), offset_u ~ N(0, (speaker_spread/4)^2 I)
// and noise_t ~ N(0, frame_noise^2 I). When skew_factor > 0 the first
// ceil(n_speakers / 2) class means are shifted by skew_factor * SkewDirection.
struct CorpusSpec {
  int n_speakers = 50;
  int utts_per_speaker = 20;
  int frames_per_utt = 50;
  int feat_dim = 20;
  double speaker_spread = 1.0;
  double frame_noise = 0.5;
  double skew_factor = 0.0;
  std::uint64_t seed = 0;

  // Throws ValidationError naming the offending field.
  void Validate() const;
};

// Unit-norm-times-three direction used for the skewed subpopulation:
// every component equals 3 * speaker_spread / sqrt(feat_dim).
std::vector<double> SkewDirection(const CorpusSpec &spec);

// T x F frames, row-major, 32-bit floats as stored on disk.
struct FeatureSequence {
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<float> values;

  std::span<const float> Frame(std::size_t t) const {
    return {values.data() + t * dim, dim};
  }
  bool operator==(const FeatureSequence &) const = default;
};

// Contiguous frame range of a FeatureSequence without copying.
struct FeatureView {
  const float *data = nullptr;
  std::size_t frames = 0;
  std::size_t dim = 0;

  FeatureView() = default;
  FeatureView(const FeatureSequence &seq)  // NOLINT: implicit by intent
      : data(seq.values.data()), frames(seq.frames), dim(seq.dim) {}
  FeatureView(const float *d, std::size_t t, std::size_t f)
      : data(d), frames(t), dim(f) {}

  std::span<const float> Frame(std::size_t t) const {
    return {data + t * dim, dim};
  }
};

struct Utterance {
  std::string id;
  int class_id = 0;
  FeatureSequence features;

  bool operator==(const Utterance &) const = default;
};

enum class SplitTag { kTrain, kEnrol, kTest };

const char *SplitTagName(SplitTag tag);
SplitTag ParseSplitTag(const std::string &name);

struct LabeledCorpus {
  std::vector<Utterance> utterances;
  int n_classes = 0;
  SplitTag split = SplitTag::kTrain;

  std::size_t feat_dim() const {
    return utterances.empty() ? 0 : utterances.front().features.dim;
  }
  // Sorted distinct class ids actually present.
  std::vector<int> ClassIds() const;
  // Number of utterances per class id, indexed 0..n_classes-1.
  std::vector<int> ClassCounts() const;
  // Null when absent.
  const Utterance *Find(const std::string &utt_id) const;
  // Checks the corpus invariants; throws ValidationError.
  void Validate() const;

  bool operator==(const LabeledCorpus &) const = default;
};

// Generator internals, exposed so tests can check the generative model.
struct CorpusLatents {
  Matrix class_means;        // n_speakers x F, skew shift included
  Matrix utterance_offsets;  // n_utts x F
};

LabeledCorpus GenerateCorpus(const CorpusSpec &spec,
                             CorpusLatents *latents = nullptr);

struct SplitOptions {
  double train_class_fraction = 0.8;
  // Held-out classes are drawn from the first ceil(fraction * M) class ids.
  // Values below 1 concentrate the held-out speakers in the skewed
  // subpopulation of a corpus generated with skew_factor > 0.
  double heldout_pool_fraction = 1.0;
  std::uint64_t seed = 0;
};

// Train classes are renumbered to [0, M_train) and held-out classes to
// [M_train, M) in ascending order of their original ids, so class ids never
// collide across splits. train.n_classes = M_train; enrol/test keep M.
struct CorpusSplit {
  LabeledCorpus train;
  LabeledCorpus enrol;
  LabeledCorpus test;
};

CorpusSplit SplitCorpus(const LabeledCorpus &corpus, const SplitOptions &options);

struct Trial {
  std::string utt_a;
  std::string utt_b;
  bool is_target = false;

  bool operator==(const Trial &) const = default;
};

struct TrialList {
  std::vector<Trial> trials;

  bool operator==(const TrialList &) const = default;
};

TrialList MakeTrials(const LabeledCorpus &test, int n_target, int n_nontarget,
                     std::uint64_t seed);

// Binary corpus file ("DCK1"). All integers little-endian u32, features
// little-endian IEEE-754 binary32, frames as rows.
void WriteCorpus(const LabeledCorpus &corpus, const std::string &path);
LabeledCorpus ReadCorpus(const std::string &path,
                         SplitTag split = SplitTag::kTrain);
// Parse from an in-memory image; used by ReadCorpus and by tests.
LabeledCorpus ParseCorpus(std::span<const std::uint8_t> bytes,
                          SplitTag split = SplitTag::kTrain);
std::vector<std::uint8_t> SerializeCorpus(const LabeledCorpus &corpus);

struct ManifestEntry {
  std::string utt_id;
  int class_id = 0;
  SplitTag split = SplitTag::kTrain;
};

// Text manifest, one `utt_id<TAB>class_id<TAB>split_tag` line per utterance.
void WriteManifest(const std::string &path,
                   std::span<const LabeledCorpus *const> corpora);
std::vector<ManifestEntry> ReadManifest(const std::string &path);

// Resolves every manifest line against `<manifest dir>/<split>.dck` and
// returns the listed utterances in manifest order. All lines must share one
// split tag.
LabeledCorpus LoadManifestCorpus(const std::string &manifest_path);

// Text trial list, `utt_a<TAB>utt_b<TAB>{1|0}` per line.
void WriteTrials(const std::string &path, const TrialList &trials);
TrialList ReadTrials(const std::string &path);

}  // namespace dropclass
