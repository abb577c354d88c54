// tests/test_corpus.cc

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
#include <filesystem>
#include <set>

#include "doctest.h"
#include "dropclass/corpus.h"
#include "dropclass/error.h"
#include "dropclass/io.h"

using namespace dropclass;

namespace {

CorpusSpec SmallSpec() {
  CorpusSpec spec;
  spec.n_speakers = 3;
  spec.utts_per_speaker = 2;
  spec.frames_per_utt = 50;
  spec.feat_dim = 20;
  spec.seed = 7;
  return spec;
}

std::string TempPath(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / "dropclass_tests";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("generate_corpus counts follow the spec") {
  const LabeledCorpus c = GenerateCorpus(SmallSpec());
  CHECK(c.utterances.size() == 6);
  CHECK(c.n_classes == 3);
  for (const auto &u : c.utterances) {
    CHECK(u.features.frames == 50);
    CHECK(u.features.dim == 20);
    CHECK(u.features.values.size() == 1000);
  }
  std::set<std::string> ids;
  for (const auto &u : c.utterances) ids.insert(u.id);
  CHECK(ids.size() == 6);
}

TEST_CASE("generate_corpus is deterministic per seed") {
  CHECK(SerializeCorpus(GenerateCorpus(SmallSpec())) ==
        SerializeCorpus(GenerateCorpus(SmallSpec())));
  CorpusSpec other = SmallSpec();
  other.seed = 8;
  CHECK(SerializeCorpus(GenerateCorpus(SmallSpec())) != SerializeCorpus(GenerateCorpus(other)));
}

TEST_CASE("invalid spec names the offending field") {
  CorpusSpec spec = SmallSpec();
  spec.frame_noise = 0.0;
  try {
    GenerateCorpus(spec);
    FAIL("expected ValidationError");
  } catch (const ValidationError &e) {
    CHECK(std::string(e.what()).find("frame_noise") != std::string::npos);
  }
  spec = SmallSpec();
  spec.n_speakers = 0;
  CHECK_THROWS_AS(GenerateCorpus(spec), ValidationError);
  spec = SmallSpec();
  spec.skew_factor = 1.5;
  CHECK_THROWS_AS(GenerateCorpus(spec), ValidationError);
}

TEST_CASE("long utterance frame means match the generative model") {
  // Frame mean of utterance u deviates from mean_i + offset_u by
  // N(0, sigma_frame^2 / T); 3 sigma covers 99.7% of components.
  CorpusSpec spec;
  spec.n_speakers = 4;
  spec.utts_per_speaker = 3;
  spec.frames_per_utt = 5000;
  spec.frame_noise = 0.5;
  spec.seed = 11;
  CorpusLatents latents;
  const LabeledCorpus c = GenerateCorpus(spec, &latents);
  const double bound = 3.0 * spec.frame_noise / std::sqrt(5000.0);
  int inside = 0, total = 0;
  for (std::size_t u = 0; u < c.utterances.size(); ++u) {
    const auto &utt = c.utterances[u];
    for (std::size_t f = 0; f < utt.features.dim; ++f) {
      double mean = 0.0;
      for (std::size_t t = 0; t < utt.features.frames; ++t) mean += utt.features.Frame(t)[f];
      mean /= static_cast<double>(utt.features.frames);
      const double expected =
          latents.class_means(utt.class_id, f) + latents.utterance_offsets(u, f);
      inside += std::abs(mean - expected) <= bound;
      ++total;
    }
  }
  CHECK(static_cast<double>(inside) / total >= 0.99);
}

TEST_CASE("within-class covariance trace matches F (sigma_frame^2 + (sigma_spk/4)^2)") {
  CorpusSpec spec;
  spec.n_speakers = 3;
  spec.utts_per_speaker = 200;
  spec.frames_per_utt = 50;  // 10^4 frames per class
  spec.seed = 5;
  CorpusLatents latents;
  const LabeledCorpus c = GenerateCorpus(spec, &latents);
  const double expected =
      spec.feat_dim * (spec.frame_noise * spec.frame_noise +
                       std::pow(spec.speaker_spread / 4.0, 2));
  for (int cls = 0; cls < spec.n_speakers; ++cls) {
    double sq = 0.0;
    long n = 0;
    for (const auto &u : c.utterances) {
      if (u.class_id != cls) continue;
      for (std::size_t t = 0; t < u.features.frames; ++t) {
        auto frame = u.features.Frame(t);
        for (std::size_t f = 0; f < frame.size(); ++f) {
          const double d = frame[f] - latents.class_means(cls, f);
          sq += d * d;
        }
        ++n;
      }
    }
    const double trace = sq / n;
    CHECK(std::abs(trace - expected) / expected < 0.10);
  }
}

TEST_CASE("skew shifts the first half of the class means") {
  CorpusSpec a = SmallSpec();
  a.n_speakers = 5;
  CorpusSpec b = a;
  b.skew_factor = 0.5;
  CorpusLatents la, lb;
  GenerateCorpus(a, &la);
  GenerateCorpus(b, &lb);
  const auto dir = SkewDirection(b);
  for (int i = 0; i < 5; ++i)
    for (int f = 0; f < a.feat_dim; ++f) {
      const double shift = lb.class_means(i, f) - la.class_means(i, f);
      CHECK(shift == doctest::Approx(i < 3 ? 0.5 * dir[f] : 0.0));
    }
}

TEST_CASE("split_corpus partitions classes") {
  CorpusSpec spec;
  spec.n_speakers = 10;
  spec.utts_per_speaker = 4;
  spec.frames_per_utt = 5;
  spec.seed = 3;
  const LabeledCorpus c = GenerateCorpus(spec);
  SplitOptions opts;
  opts.train_class_fraction = 0.8;
  opts.seed = 9;
  const CorpusSplit s = SplitCorpus(c, opts);
  CHECK(s.train.ClassIds().size() == 8);
  CHECK(s.train.n_classes == 8);
  CHECK(s.enrol.ClassIds().size() == 2);
  CHECK(s.enrol.ClassIds() == s.test.ClassIds());
  for (int id : s.test.ClassIds()) CHECK(id >= 8);
  for (int id : s.train.ClassIds()) CHECK(id < 8);
  // 4 utterances per held-out class: 2 enrol, 2 test, no shared utterance.
  for (int n : s.enrol.ClassCounts()) CHECK((n == 0 || n == 2));
  for (int n : s.test.ClassCounts()) CHECK((n == 0 || n == 2));
  for (const auto &u : s.enrol.utterances) CHECK(s.test.Find(u.id) == nullptr);
  CHECK(s.train.utterances.size() + s.enrol.utterances.size() + s.test.utterances.size() ==
        c.utterances.size());
  CHECK(SerializeCorpus(SplitCorpus(c, opts).test) == SerializeCorpus(s.test));
}

TEST_CASE("odd held-out class rounds down for enrolment") {
  CorpusSpec spec;
  spec.n_speakers = 4;
  spec.utts_per_speaker = 5;
  spec.frames_per_utt = 2;
  const CorpusSplit s = SplitCorpus(GenerateCorpus(spec), {0.5, 1.0, 1});
  for (int id : s.enrol.ClassIds()) {
    CHECK(s.enrol.ClassCounts()[id] == 2);
    CHECK(s.test.ClassCounts()[id] == 3);
  }
}

TEST_CASE("held-out pool restricts held-out classes") {
  CorpusSpec spec;
  spec.n_speakers = 20;
  spec.utts_per_speaker = 2;
  spec.frames_per_utt = 2;
  const LabeledCorpus c = GenerateCorpus(spec);
  const CorpusSplit s = SplitCorpus(c, {0.75, 0.5, 4});
  for (const auto &u : s.test.utterances) {
    // ids encode the original speaker index
    CHECK(std::stoi(u.id.substr(3, 4)) < 10);
  }
}

TEST_CASE("split errors") {
  CorpusSpec spec;
  spec.n_speakers = 3;
  spec.utts_per_speaker = 2;
  spec.frames_per_utt = 2;
  const LabeledCorpus c = GenerateCorpus(spec);
  CHECK_THROWS_AS(SplitCorpus(c, {0.9, 1.0, 0}), ValidationError);  // 2 train, 1 held-out
  CHECK_THROWS_AS(SplitCorpus(c, {0.4, 1.0, 0}), ValidationError);  // 1 train
}

TEST_CASE("make_trials") {
  LabeledCorpus test;
  test.n_classes = 2;
  CorpusSpec spec;
  spec.n_speakers = 2;
  spec.utts_per_speaker = 2;
  spec.frames_per_utt = 3;
  test = GenerateCorpus(spec);
  const TrialList t = MakeTrials(test, 2, 2, 17);
  REQUIRE(t.trials.size() == 4);
  int targets = 0;
  for (const auto &tr : t.trials) {
    const bool same = test.Find(tr.utt_a)->class_id == test.Find(tr.utt_b)->class_id;
    CHECK(same == tr.is_target);
    targets += tr.is_target;
  }
  CHECK(targets == 2);
  CHECK(MakeTrials(test, 2, 2, 17) == t);
  CHECK_THROWS_AS(MakeTrials(test, 0, 2, 17), ValidationError);
  // more targets than distinct pairs: falls back to replacement
  CHECK(MakeTrials(test, 5, 1, 17).trials.size() == 6);

  spec.utts_per_speaker = 1;
  CHECK_THROWS_AS(MakeTrials(GenerateCorpus(spec), 1, 1, 0), ValidationError);
}

TEST_CASE("corpus file round trip and format errors") {
  CorpusSpec spec = SmallSpec();
  spec.frames_per_utt = 7;
  LabeledCorpus c = GenerateCorpus(spec);
  const std::string path = TempPath("roundtrip.dck");
  WriteCorpus(c, path);
  CHECK(ReadCorpus(path) == c);

  auto bytes = SerializeCorpus(c);
  CHECK(bytes[0] == 'D');
  CHECK(bytes[3] == '1');
  // little-endian M right after the magic
  CHECK(bytes[4] == 3);
  CHECK(bytes[5] == 0);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(ParseCorpus(bad_magic), FormatError);

  // Header says F=20 but the payload holds F=19 floats per frame.
  LabeledCorpus narrow = c;
  for (auto &u : narrow.utterances) {
    std::vector<float> v;
    for (std::size_t t = 0; t < u.features.frames; ++t)
      for (std::size_t f = 0; f < 19; ++f) v.push_back(u.features.Frame(t)[f]);
    u.features.values = v;
    u.features.dim = 19;
  }
  auto narrow_bytes = SerializeCorpus(narrow);
  narrow_bytes[12] = 20;  // patch the F field
  try {
    ParseCorpus(narrow_bytes);
    FAIL("expected FormatError");
  } catch (const FormatError &e) {
    CHECK(e.offset() > 16);
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }

  auto truncated = bytes;
  truncated.resize(truncated.size() - 3);
  CHECK_THROWS_AS(ParseCorpus(truncated), FormatError);
}

TEST_CASE("manifest and trial files") {
  CorpusSpec spec;
  spec.n_speakers = 6;
  spec.utts_per_speaker = 4;
  spec.frames_per_utt = 3;
  const CorpusSplit s = SplitCorpus(GenerateCorpus(spec), {0.5, 1.0, 2});
  auto dir = std::filesystem::temp_directory_path() / "dropclass_tests" / "manifest";
  std::filesystem::create_directories(dir);
  WriteCorpus(s.train, (dir / "train.dck").string());
  WriteCorpus(s.test, (dir / "test.dck").string());
  const LabeledCorpus *parts[] = {&s.test};
  WriteManifest((dir / "test.tsv").string(), parts);
  const auto entries = ReadManifest((dir / "test.tsv").string());
  REQUIRE(entries.size() == s.test.utterances.size());
  CHECK(entries[0].split == SplitTag::kTest);
  const LabeledCorpus loaded = LoadManifestCorpus((dir / "test.tsv").string());
  CHECK(loaded.utterances == s.test.utterances);

  const TrialList trials = MakeTrials(s.test, 3, 3, 1);
  WriteTrials((dir / "trials.tsv").string(), trials);
  CHECK(ReadTrials((dir / "trials.tsv").string()) == trials);
  const std::string text = ReadFileText((dir / "trials.tsv").string());
  CHECK(text.find("\t1\n") != std::string::npos);
}

}  // TEST_SUITE
