// core/src/corpus.cc

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

#include "dropclass/corpus.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "dropclass/error.h"
#include "dropclass/io.h"
#include "dropclass/rng.h"

namespace dropclass {

namespace {

constexpr char kCorpusMagic[] = "DCK1";

std::string UtteranceId(int speaker, int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "spk%04d-utt%03d", speaker, index);
  return buf;
}

}  // namespace

void CorpusSpec::Validate() const {
  auto fail = [](const std::string &field, const std::string &why) {
    throw ValidationError("invalid corpus spec: " + field + " " + why);
  };
  if (n_speakers < 1) fail("n_speakers", "must be >= 1");
  if (utts_per_speaker < 1) fail("utts_per_speaker", "must be >= 1");
  if (frames_per_utt < 1) fail("frames_per_utt", "must be >= 1");
  if (feat_dim < 1) fail("feat_dim", "must be >= 1");
  if (!(speaker_spread > 0.0) || !std::isfinite(speaker_spread))
    fail("speaker_spread", "must be > 0");
  if (!(frame_noise > 0.0) || !std::isfinite(frame_noise))
    fail("frame_noise", "must be > 0");
  if (!(skew_factor >= 0.0 && skew_factor <= 1.0))
    fail("skew_factor", "must be in [0, 1]");
}

std::vector<double> SkewDirection(const CorpusSpec &spec) {
  return std::vector<double>(spec.feat_dim,
                             3.0 * spec.speaker_spread / std::sqrt(spec.feat_dim));
}

const char *SplitTagName(SplitTag tag) {
  switch (tag) {
    case SplitTag::kTrain: return "train";
    case SplitTag::kEnrol: return "enrol";
    case SplitTag::kTest: return "test";
  }
  return "train";
}

SplitTag ParseSplitTag(const std::string &name) {
  if (name == "train") return SplitTag::kTrain;
  if (name == "enrol") return SplitTag::kEnrol;
  if (name == "test") return SplitTag::kTest;
  throw ValidationError("unknown split tag '" + name + "'");
}

std::vector<int> LabeledCorpus::ClassIds() const {
  std::vector<int> ids;
  for (const auto &u : utterances) ids.push_back(u.class_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<int> LabeledCorpus::ClassCounts() const {
  std::vector<int> counts(std::max(n_classes, 0), 0);
  for (const auto &u : utterances)
    if (u.class_id >= 0 && u.class_id < n_classes) ++counts[u.class_id];
  return counts;
}

const Utterance *LabeledCorpus::Find(const std::string &utt_id) const {
  for (const auto &u : utterances)
    if (u.id == utt_id) return &u;
  return nullptr;
}

void LabeledCorpus::Validate() const {
  if (n_classes < 1) throw ValidationError("corpus has n_classes < 1");
  const std::size_t dim = feat_dim();
  for (const auto &u : utterances) {
    if (u.class_id < 0 || u.class_id >= n_classes)
      throw ValidationError("utterance " + u.id + " has class id " +
                            std::to_string(u.class_id) + " outside [0, " +
                            std::to_string(n_classes) + ")");
    if (u.features.frames < 1)
      throw ValidationError("utterance " + u.id + " has no frames");
    if (u.features.dim != dim)
      throw ValidationError("utterance " + u.id + " has feature dim " +
                            std::to_string(u.features.dim) + ", expected " +
                            std::to_string(dim));
    if (u.features.values.size() != u.features.frames * u.features.dim)
      throw ValidationError("utterance " + u.id + " has inconsistent storage");
  }
}

LabeledCorpus GenerateCorpus(const CorpusSpec &spec, CorpusLatents *latents) {
  spec.Validate();
  const int n_classes = spec.n_speakers;
  const std::size_t dim = spec.feat_dim;
  const int n_skewed = (n_classes + 1) / 2;
  const std::vector<double> shift = SkewDirection(spec);

  Matrix means(n_classes, dim);
  for (int i = 0; i < n_classes; ++i) {
    Rng rng = Rng::Derive(spec.seed, "class-mean", i);
    for (std::size_t f = 0; f < dim; ++f) {
      means(i, f) = spec.speaker_spread * rng.Normal();
      if (spec.skew_factor > 0.0 && i < n_skewed)
        means(i, f) += spec.skew_factor * shift[f];
    }
  }

  const double offset_sd = spec.speaker_spread / 4.0;
  LabeledCorpus corpus;
  corpus.n_classes = n_classes;
  corpus.split = SplitTag::kTrain;
  corpus.utterances.reserve(static_cast<std::size_t>(n_classes) * spec.utts_per_speaker);
  Matrix offsets(static_cast<std::size_t>(n_classes) * spec.utts_per_speaker, dim);
  std::vector<double> offset(dim);

  for (int i = 0; i < n_classes; ++i) {
    for (int u = 0; u < spec.utts_per_speaker; ++u) {
      const std::size_t utt_index = corpus.utterances.size();
      Rng rng = Rng::Derive(spec.seed, "utterance", utt_index);
      for (std::size_t f = 0; f < dim; ++f) {
        offset[f] = offset_sd * rng.Normal();
        offsets(utt_index, f) = offset[f];
      }
      Utterance utt;
      utt.id = UtteranceId(i, u);
      utt.class_id = i;
      utt.features.frames = spec.frames_per_utt;
      utt.features.dim = dim;
      utt.features.values.resize(spec.frames_per_utt * dim);
      for (int t = 0; t < spec.frames_per_utt; ++t)
        for (std::size_t f = 0; f < dim; ++f)
          utt.features.values[t * dim + f] = static_cast<float>(
              means(i, f) + offset[f] + spec.frame_noise * rng.Normal());
      corpus.utterances.push_back(std::move(utt));
    }
  }
  if (latents) {
    latents->class_means = std::move(means);
    latents->utterance_offsets = std::move(offsets);
  }
  return corpus;
}

CorpusSplit SplitCorpus(const LabeledCorpus &corpus, const SplitOptions &options) {
  const int n_classes = corpus.n_classes;
  if (!(options.train_class_fraction > 0.0 && options.train_class_fraction < 1.0))
    throw ValidationError("split error: train_class_fraction must be in (0, 1)");
  if (!(options.heldout_pool_fraction > 0.0 && options.heldout_pool_fraction <= 1.0))
    throw ValidationError("split error: heldout_pool_fraction must be in (0, 1]");
  const int n_train = static_cast<int>(
      std::floor(options.train_class_fraction * n_classes + 1e-9));
  const int n_heldout = n_classes - n_train;
  if (n_train < 2)
    throw ValidationError("split error: fraction leaves " + std::to_string(n_train) +
                          " train classes, need >= 2");
  if (n_heldout < 2)
    throw ValidationError("split error: fraction leaves " + std::to_string(n_heldout) +
                          " held-out classes, need >= 2");
  const int pool = std::min(
      n_classes,
      static_cast<int>(std::ceil(options.heldout_pool_fraction * n_classes - 1e-9)));
  if (pool < n_heldout)
    throw ValidationError("split error: held-out pool of " + std::to_string(pool) +
                          " classes cannot supply " + std::to_string(n_heldout));

  Rng rng = Rng::Derive(options.seed, "split-classes");
  std::vector<int> candidates(pool);
  for (int i = 0; i < pool; ++i) candidates[i] = i;
  rng.Shuffle(&candidates);
  std::vector<bool> heldout(n_classes, false);
  for (int i = 0; i < n_heldout; ++i) heldout[candidates[i]] = true;

  std::vector<int> remap(n_classes);
  int next_train = 0, next_heldout = n_train;
  for (int c = 0; c < n_classes; ++c)
    remap[c] = heldout[c] ? next_heldout++ : next_train++;

  CorpusSplit out;
  out.train.n_classes = n_train;
  out.train.split = SplitTag::kTrain;
  out.enrol.n_classes = n_classes;
  out.enrol.split = SplitTag::kEnrol;
  out.test.n_classes = n_classes;
  out.test.split = SplitTag::kTest;

  // Per held-out class, a seeded shuffle decides which utterances enrol.
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < corpus.utterances.size(); ++i)
    by_class[corpus.utterances[i].class_id].push_back(i);
  std::vector<bool> is_enrol(corpus.utterances.size(), false);
  for (int c = 0; c < n_classes; ++c) {
    if (!heldout[c]) continue;
    std::vector<std::size_t> members = by_class[c];
    Rng class_rng = Rng::Derive(options.seed, "split-enrol", c);
    class_rng.Shuffle(&members);
    for (std::size_t k = 0; k < members.size() / 2; ++k) is_enrol[members[k]] = true;
  }

  for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
    Utterance utt = corpus.utterances[i];
    const int original = utt.class_id;
    utt.class_id = remap[original];
    if (!heldout[original])
      out.train.utterances.push_back(std::move(utt));
    else if (is_enrol[i])
      out.enrol.utterances.push_back(std::move(utt));
    else
      out.test.utterances.push_back(std::move(utt));
  }
  return out;
}

TrialList MakeTrials(const LabeledCorpus &test, int n_target, int n_nontarget,
                     std::uint64_t seed) {
  if (n_target < 1 || n_nontarget < 1)
    throw ValidationError("trial-construction error: need at least one target and "
                          "one nontarget trial");
  using Pair = std::pair<std::size_t, std::size_t>;
  std::vector<Pair> same, cross;
  const auto &utts = test.utterances;
  for (std::size_t i = 0; i < utts.size(); ++i)
    for (std::size_t j = i + 1; j < utts.size(); ++j)
      (utts[i].class_id == utts[j].class_id ? same : cross).emplace_back(i, j);
  if (same.empty())
    throw ValidationError("trial-construction error: no same-class pair exists");
  if (cross.empty())
    throw ValidationError("trial-construction error: no cross-class pair exists");

  auto draw = [](std::vector<Pair> pool, int n, Rng &rng) {
    rng.Shuffle(&pool);
    std::vector<Pair> out(pool.begin(),
                          pool.begin() + std::min<std::size_t>(n, pool.size()));
    while (out.size() < static_cast<std::size_t>(n))
      out.push_back(pool[rng.UniformInt(pool.size())]);
    return out;
  };
  Rng target_rng = Rng::Derive(seed, "trials-target");
  Rng nontarget_rng = Rng::Derive(seed, "trials-nontarget");
  TrialList list;
  for (const auto &[a, b] : draw(same, n_target, target_rng))
    list.trials.push_back({utts[a].id, utts[b].id, true});
  for (const auto &[a, b] : draw(cross, n_nontarget, nontarget_rng))
    list.trials.push_back({utts[a].id, utts[b].id, false});
  return list;
}

std::vector<std::uint8_t> SerializeCorpus(const LabeledCorpus &corpus) {
  corpus.Validate();
  ByteWriter w;
  w.Magic(kCorpusMagic);
  w.U32(static_cast<std::uint32_t>(corpus.n_classes));
  w.U32(static_cast<std::uint32_t>(corpus.utterances.size()));
  w.U32(static_cast<std::uint32_t>(corpus.feat_dim()));
  for (const auto &u : corpus.utterances) {
    w.U32(static_cast<std::uint32_t>(u.id.size()));
    w.Bytes(u.id);
    w.U32(static_cast<std::uint32_t>(u.class_id));
    w.U32(static_cast<std::uint32_t>(u.features.frames));
    for (float v : u.features.values) w.F32(v);
  }
  return w.Take();
}

LabeledCorpus ParseCorpus(std::span<const std::uint8_t> bytes, SplitTag split) {
  ByteReader r(bytes);
  r.ExpectMagic(kCorpusMagic);
  LabeledCorpus corpus;
  corpus.split = split;
  const std::uint64_t m_offset = r.offset();
  corpus.n_classes = static_cast<int>(r.U32("class count"));
  if (corpus.n_classes < 1) throw FormatError("class count is zero", m_offset);
  const std::uint32_t n_utts = r.U32("utterance count");
  const std::uint32_t dim = r.U32("feature dim");
  if (dim == 0 && n_utts > 0) throw FormatError("feature dim is zero", r.offset() - 4);
  for (std::uint32_t i = 0; i < n_utts; ++i) {
    Utterance u;
    const std::uint32_t id_len = r.U32("id length");
    if (id_len == 0) throw FormatError("empty utterance id", r.offset() - 4);
    u.id = r.String(id_len, "utterance id");
    const std::uint64_t class_offset = r.offset();
    const std::uint32_t class_id = r.U32("class id");
    if (class_id >= static_cast<std::uint32_t>(corpus.n_classes))
      throw FormatError("class id " + std::to_string(class_id) + " >= class count",
                        class_offset);
    u.class_id = static_cast<int>(class_id);
    const std::uint64_t frames_offset = r.offset();
    const std::uint32_t frames = r.U32("frame count");
    if (frames == 0) throw FormatError("utterance with zero frames", frames_offset);
    const std::uint64_t payload = std::uint64_t(frames) * dim * 4;
    if (payload > r.remaining())
      throw FormatError("truncated payload for " + u.id + ": need " +
                            std::to_string(payload) + " bytes, " +
                            std::to_string(r.remaining()) + " left",
                        r.offset());
    u.features.frames = frames;
    u.features.dim = dim;
    u.features.values.resize(std::size_t(frames) * dim);
    for (auto &v : u.features.values) v = r.F32("feature");
    corpus.utterances.push_back(std::move(u));
  }
  if (!r.done())
    throw FormatError(std::to_string(r.remaining()) + " trailing bytes after last utterance",
                      r.offset());
  return corpus;
}

void WriteCorpus(const LabeledCorpus &corpus, const std::string &path) {
  WriteFileAtomic(path, SerializeCorpus(corpus));
}

LabeledCorpus ReadCorpus(const std::string &path, SplitTag split) {
  return ParseCorpus(ReadFileBytes(path), split);
}

void WriteManifest(const std::string &path,
                   std::span<const LabeledCorpus *const> corpora) {
  std::ostringstream out;
  for (const LabeledCorpus *corpus : corpora)
    for (const auto &u : corpus->utterances)
      out << u.id << '\t' << u.class_id << '\t' << SplitTagName(corpus->split) << '\n';
  WriteFileAtomic(path, out.str());
}

std::vector<ManifestEntry> ReadManifest(const std::string &path) {
  const std::string text = ReadFileText(path);
  std::vector<ManifestEntry> entries;
  int line_no = 0;
  for (const auto &line : SplitString(text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = SplitString(line, '\t');
    if (fields.size() != 3)
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": expected 3 tab-separated fields");
    ManifestEntry e;
    e.utt_id = fields[0];
    try {
      e.class_id = std::stoi(fields[1]);
    } catch (const std::exception &) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": bad class id");
    }
    e.split = ParseSplitTag(fields[2]);
    entries.push_back(std::move(e));
  }
  return entries;
}

LabeledCorpus LoadManifestCorpus(const std::string &manifest_path) {
  const auto entries = ReadManifest(manifest_path);
  if (entries.empty()) throw EmptyDataError("manifest " + manifest_path + " is empty");
  const SplitTag split = entries.front().split;
  for (const auto &e : entries)
    if (e.split != split)
      throw ValidationError("manifest " + manifest_path + " mixes split tags");
  const auto dir = std::filesystem::path(manifest_path).parent_path();
  const std::string corpus_path =
      (dir / (std::string(SplitTagName(split)) + ".dck")).string();
  LabeledCorpus source = ReadCorpus(corpus_path, split);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < source.utterances.size(); ++i)
    index.emplace(source.utterances[i].id, i);

  LabeledCorpus out;
  out.n_classes = source.n_classes;
  out.split = split;
  for (const auto &e : entries) {
    auto it = index.find(e.utt_id);
    if (it == index.end())
      throw ValidationError("utterance " + e.utt_id + " not found in " + corpus_path);
    const Utterance &u = source.utterances[it->second];
    if (u.class_id != e.class_id)
      throw ValidationError("utterance " + e.utt_id + " has class " +
                            std::to_string(u.class_id) + " in " + corpus_path +
                            " but " + std::to_string(e.class_id) + " in manifest");
    out.utterances.push_back(u);
  }
  return out;
}

void WriteTrials(const std::string &path, const TrialList &trials) {
  std::ostringstream out;
  for (const auto &t : trials.trials)
    out << t.utt_a << '\t' << t.utt_b << '\t' << (t.is_target ? 1 : 0) << '\n';
  WriteFileAtomic(path, out.str());
}

TrialList ReadTrials(const std::string &path) {
  const std::string text = ReadFileText(path);
  TrialList list;
  int line_no = 0;
  for (const auto &line : SplitString(text, '\n')) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = SplitString(line, '\t');
    if (fields.size() != 3 || (fields[2] != "0" && fields[2] != "1"))
      throw ValidationError(path + ":" + std::to_string(line_no) +
                            ": expected utt_a<TAB>utt_b<TAB>{1|0}");
    list.trials.push_back({fields[0], fields[1], fields[2] == "1"});
  }
  return list;
}

}  // namespace dropclass
