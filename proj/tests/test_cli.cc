// tests/test_cli.cc

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

#include <algorithm>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "cli.h"
#include "config.h"
#include "doctest.h"
#include "dropclass/eval.h"
#include "dropclass/io.h"
#include "dropclass/model.h"
#include "json.hpp"

using namespace dropclass;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome Run(std::vector<std::string> args) {
  args.insert(args.begin(), "dropclass");
  std::ostringstream out, err;
  const int code = cli::RunCli(args, out, err);
  return {code, out.str(), err.str()};
}

const char *kSmallConfig = R"(# small but complete
[corpus]
n_speakers = 10
utts_per_speaker = 6
frames_per_utt = 20
feat_dim = 8
seed = 3

[model]
hidden = 16,16
embed_dim = 8

[train]
iterations = 40
batch_size = 4
frames_per_example = 10

[eval]
n_target_trials = 20
n_nontarget_trials = 20
n_bootstrap = 20
)";

// A scratch directory holding a config and a generated corpus.
struct Workspace {
  fs::path root;
  std::string config;
  std::string data;

  explicit Workspace(const std::string &name)
      : root(fs::temp_directory_path() / "dropclass_cli" / name) {
    fs::remove_all(root);
    fs::create_directories(root);
    config = (root / "small.ini").string();
    WriteFileAtomic(config, std::string(kSmallConfig));
    data = (root / "data").string();
    const Outcome o = Run({"gen-data", "--config", config, "--out", data});
    REQUIRE_MESSAGE(o.code == 0, o.err);
  }
  std::string Path(const std::string &rel) const { return (root / rel).string(); }
};

nlohmann::json ReadJson(const std::string &path) {
  return nlohmann::json::parse(ReadFileText(path));
}

std::size_t LineCount(const std::string &path) {
  const std::string text = ReadFileText(path);
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help lists every key with its default") {
  const Outcome o = Run({"--help"});
  CHECK(o.code == 0);
  for (const auto &k : cli::Schema())
    CHECK_MESSAGE(o.out.find(std::string(k.name) + " = " + k.fallback) != std::string::npos,
                  k.name);
  const Outcome sub = Run({"train", "--help"});
  CHECK(sub.code == 0);
  CHECK(sub.out.find("drop.P = 1") != std::string::npos);
}

TEST_CASE("unknown keys exit 2 and suggest the nearest key") {
  const auto dir = fs::temp_directory_path() / "dropclass_cli" / "unknown";
  fs::create_directories(dir);
  Outcome o = Run({"gen-data", "--out", (dir / "d").string(), "--corpus.speaker_cont", "2"});
  CHECK(o.code == 2);
  CHECK(o.err.find("speaker_cont") != std::string::npos);
  CHECK(o.err.find("corpus.speaker_spread") != std::string::npos);

  const std::string path = (dir / "bad.ini").string();
  WriteFileAtomic(path, std::string("[corpus]\nspeaker_cont = 1\n"));
  o = Run({"gen-data", "--config", path, "--out", (dir / "d").string()});
  CHECK(o.code == 2);
  CHECK(o.err.find("bad.ini:2") != std::string::npos);
  CHECK(o.err.find("corpus.speaker_spread") != std::string::npos);

  CHECK(Run({"gen-data", "--out", (dir / "d").string(), "--corpus.n_speakers", "x"}).code == 2);
  CHECK(Run({"gen-data", "--out", (dir / "d").string(), "--corpus.n_speakers", "1"}).code == 2);
  CHECK(Run({"gen-data"}).code == 2);
  CHECK(Run({"no-such-command"}).code == 2);
}

TEST_CASE("gen-data writes corpus, manifests and trials reproducibly") {
  const Workspace ws("gen");
  for (const char *f : {"train.dck", "enrol.dck", "test.dck", "train.tsv", "enrol.tsv",
                        "test.tsv", "trials.tsv", "config.ini"})
    CHECK_MESSAGE(fs::is_regular_file(fs::path(ws.data) / f), f);
  CHECK(LineCount(ws.data + "/trials.tsv") == 40);
  CHECK(LineCount(ws.data + "/train.tsv") == 8 * 6);
  CHECK(ReadFileBytes(ws.data + "/train.dck").size() > 16);

  const std::string again = ws.Path("again");
  REQUIRE(Run({"gen-data", "--config", ws.config, "--out", again}).code == 0);
  for (const char *f : {"train.dck", "enrol.dck", "test.dck", "train.tsv", "trials.tsv"})
    CHECK(ReadFileBytes(ws.data + "/" + f) == ReadFileBytes(again + "/" + f));

  // The written config reproduces the corpus on its own.
  const std::string replay = ws.Path("replay");
  REQUIRE(Run({"gen-data", "--config", ws.data + "/config.ini", "--out", replay}).code == 0);
  CHECK(ReadFileBytes(ws.data + "/test.dck") == ReadFileBytes(replay + "/test.dck"));
}

TEST_CASE("train writes checkpoint, metrics and run manifest") {
  const Workspace ws("train");
  const std::string out = ws.Path("run");
  const Outcome o = Run({"train", "--config", ws.config, "--corpus", ws.data, "--out", out,
                         "--drop.mode", "dropclass", "--drop.P", "5", "--drop.D", "3"});
  REQUIRE_MESSAGE(o.code == 0, o.err);
  CHECK(LineCount(out + "/metrics.csv") == 40 + 1);
  CHECK(LineCount(out + "/refresh.log") == 8);
  const Model m = LoadModel(out + "/model.dckm");
  CHECK(m.n_classes == 8);
  CHECK(m.head.rows() == 8);
  const auto run = ReadJson(out + "/run.json");
  CHECK(run["command"] == "train");
  CHECK(run["config"]["drop.P"] == "5");
  CHECK(run["result"]["iterations"] == 40);

  const std::string again = ws.Path("run2");
  REQUIRE(Run({"train", "--config", ws.config, "--corpus", ws.data, "--out", again,
               "--drop.mode", "dropclass", "--drop.P", "5", "--drop.D", "3"})
              .code == 0);
  for (const char *f : {"model.dckm", "metrics.csv", "refresh.log"})
    CHECK(ReadFileBytes(out + "/" + f) == ReadFileBytes(again + "/" + f));
}

TEST_CASE("train rejects adaptation modes") {
  const Workspace ws("train_modes");
  for (const char *mode : {"dropadapt", "dropadapt_combine", "drop_random", "drop_only_data"}) {
    const Outcome o = Run({"train", "--config", ws.config, "--corpus", ws.data, "--out",
                           ws.Path("x"), "--drop.mode", mode});
    CHECK(o.code == 2);
    CHECK(o.err.find("use adapt") != std::string::npos);
  }
  CHECK(Run({"train", "--config", ws.config, "--corpus", ws.Path("missing"), "--out",
             ws.Path("x")})
            .code == 2);
}

TEST_CASE("numeric abort exits 4 and keeps a finite checkpoint") {
  const Workspace ws("abort");
  const std::string out = ws.Path("run");
  const Outcome o = Run({"train", "--config", ws.config, "--corpus", ws.data, "--out", out,
                         "--train.lr", "1e200", "--loss.kind", "softmax"});
  CHECK(o.code == 4);
  REQUIRE(fs::is_regular_file(out + "/model.dckm"));
  const Model m = LoadModel(out + "/model.dckm");
  CHECK(m.embedder.values().AllFinite());
}

TEST_CASE("adapt modes and lineage") {
  const Workspace ws("adapt");
  const std::string base = ws.Path("base");
  REQUIRE(Run({"train", "--config", ws.config, "--corpus", ws.data, "--out", base}).code == 0);
  const std::string ckpt = base + "/model.dckm";
  const std::string enrol = ws.data + "/enrol.tsv";
  const Model source = LoadModel(ckpt);

  auto adapt = [&](const std::string &mode, const std::string &name) {
    return Run({"adapt", "--config", ws.config, "--source", ckpt, "--enrol", enrol, "--out",
                ws.Path(name), "--drop.mode", mode, "--drop.P", "10", "--drop.D", "1",
                "--train.iterations", "30"});
  };

  Outcome o = adapt("none", "none");
  REQUIRE_MESSAGE(o.code == 0, o.err);
  auto run = ReadJson(ws.Path("none/run.json"));
  CHECK(run["lineage"]["source_checkpoint"] == ckpt);
  CHECK(run["lineage"]["source_final_lr"] == source.final_lr);
  CHECK(run["mode"] == "none");

  o = adapt("drop_only_data", "only_data");
  REQUIRE_MESSAGE(o.code == 0, o.err);
  run = ReadJson(ws.Path("only_data/run.json"));
  CHECK(run["head_rows_kept"] == true);
  CHECK(run["result"]["head_rows"] == 8);
  CHECK(LoadModel(ws.Path("only_data/model.dckm")).head.rows() == 8);

  o = adapt("dropadapt_combine", "combine");
  REQUIRE_MESSAGE(o.code == 0, o.err);
  // Three refreshes drop one class each; the merged row is added once.
  const Model combined = LoadModel(ws.Path("combine/model.dckm"));
  CHECK(combined.has_merged_row);
  CHECK(combined.head.rows() == 8 + 1);
  CHECK(combined.active_rows.size() == 8 - 3 + 1);
  CHECK(LineCount(ws.Path("combine/refresh.log")) == 3);

  o = Run({"adapt", "--config", ws.config, "--source", ckpt, "--train", ws.data + "/train.tsv",
           "--out", ws.Path("noenrol"), "--drop.mode", "dropadapt", "--drop.D", "1"});
  CHECK(o.code == 2);
  o = Run({"adapt", "--config", ws.config, "--source", ckpt, "--enrol", enrol, "--out",
           ws.Path("dc"), "--drop.mode", "dropclass"});
  CHECK(o.code == 2);
  o = Run({"adapt", "--config", ws.config, "--source", ws.Path("nope.dckm"), "--enrol", enrol,
           "--out", ws.Path("nope")});
  CHECK(o.code == 2);

  WriteFileAtomic(ws.Path("corrupt.dckm"), std::string("DCKX garbage"));
  o = Run({"adapt", "--config", ws.config, "--source", ws.Path("corrupt.dckm"), "--enrol",
           enrol, "--out", ws.Path("corrupt")});
  CHECK(o.code == 3);
}

TEST_CASE("evaluate writes scores and an EER that matches them") {
  const Workspace ws("evaluate");
  REQUIRE(Run({"train", "--config", ws.config, "--corpus", ws.data, "--out", ws.Path("base")})
              .code == 0);
  auto evaluate = [&](const std::string &name) {
    return Run({"evaluate", "--checkpoint", ws.Path("base/model.dckm"), "--data",
                ws.data + "/test.tsv", "--trials", ws.data + "/trials.tsv", "--out",
                ws.Path(name)});
  };
  REQUIRE(evaluate("e1").code == 0);
  REQUIRE(evaluate("e2").code == 0);
  CHECK(ReadFileBytes(ws.Path("e1/scores.tsv")) == ReadFileBytes(ws.Path("e2/scores.tsv")));
  CHECK(ReadFileBytes(ws.Path("e1/eer.json")) == ReadFileBytes(ws.Path("e2/eer.json")));

  const ScoredTrials scored = ParseScores(ReadFileText(ws.Path("e1/scores.tsv")));
  CHECK(scored.size() == 40);
  const auto j = ReadJson(ws.Path("e1/eer.json"));
  CHECK(j["eer"].get<double>() == ComputeEer(scored).eer);
  CHECK(j["n_target"] == 20);
  CHECK(j["n_nontarget"] == 20);

  CHECK(Run({"evaluate", "--checkpoint", ws.Path("base/model.dckm"), "--data",
             ws.data + "/test.tsv", "--trials", ws.Path("none.tsv"), "--out", ws.Path("e3")})
            .code == 2);
}

TEST_CASE("evaluate on a separable corpus gives EER 0") {
  const auto root = fs::temp_directory_path() / "dropclass_cli" / "separable";
  fs::remove_all(root);
  const std::string data = (root / "data").string();
  REQUIRE(Run({"gen-data", "--out", data, "--corpus.n_speakers", "8",
               "--corpus.utts_per_speaker", "4", "--corpus.frames_per_utt", "20",
               "--corpus.speaker_spread", "10", "--corpus.frame_noise", "0.01",
               "--corpus.train_fraction", "0.5", "--eval.n_target_trials", "10",
               "--eval.n_nontarget_trials", "10"})
              .code == 0);
  REQUIRE(Run({"train", "--corpus", data, "--out", (root / "m").string(),
               "--train.iterations", "20", "--train.batch_size", "4"})
              .code == 0);
  REQUIRE(Run({"evaluate", "--checkpoint", (root / "m/model.dckm").string(), "--data",
               data + "/test.tsv", "--trials", data + "/trials.tsv", "--out",
               (root / "e").string()})
              .code == 0);
  CHECK(ReadJson((root / "e/eer.json").string())["eer"].get<double>() == 0.0);
}

TEST_CASE("diagnose writes the ranked report and KL") {
  const Workspace ws("diagnose");
  REQUIRE(Run({"train", "--config", ws.config, "--corpus", ws.data, "--out", ws.Path("base")})
              .code == 0);
  Outcome o = Run({"diagnose", "--config", ws.config, "--checkpoint", ws.Path("base/model.dckm"),
                   "--data", ws.data + "/enrol.tsv", "--n-bootstrap", "1", "--out",
                   ws.Path("d1")});
  REQUIRE_MESSAGE(o.code == 0, o.err);
  const std::string csv = ReadFileText(ws.Path("d1/ranked.csv"));
  const auto lines = SplitString(csv, '\n');
  CHECK(lines[0] == "rank,p_median,p_low,p_high");
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto f = SplitString(lines[i], ',');
    REQUIRE(f.size() == 4);
    CHECK(f[1] == f[2]);
    CHECK(f[2] == f[3]);
  }
  const auto kl = ReadJson(ws.Path("d1/kl.json"));
  CHECK(kl["kl_to_uniform"].get<double>() >= 0.0);
  CHECK(kl["n_bootstrap"] == 1);

  o = Run({"diagnose", "--config", ws.config, "--checkpoint", ws.Path("base/model.dckm"),
           "--data", ws.data + "/enrol.tsv", "--out", ws.Path("d2")});
  REQUIRE(o.code == 0);
  CHECK(ReadJson(ws.Path("d2/kl.json"))["n_bootstrap"] == 20);
  o = Run({"diagnose", "--config", ws.config, "--checkpoint", ws.Path("base/model.dckm"),
           "--data", ws.data + "/enrol.tsv", "--out", ws.Path("d3")});
  CHECK(ReadFileBytes(ws.Path("d2/ranked.csv")) == ReadFileBytes(ws.Path("d3/ranked.csv")));
}

}  // TEST_SUITE
