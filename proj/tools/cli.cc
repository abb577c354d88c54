// tools/cli.cc

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

#include "cli.h"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "config.h"
#include "dropclass/corpus.h"
#include "dropclass/error.h"
#include "dropclass/eval.h"
#include "dropclass/io.h"
#include "dropclass/model.h"
#include "dropclass/trainer.h"
#include "json.hpp"

namespace dropclass::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

const char *const kSections[] = {"corpus", "model", "loss", "drop", "train", "eval"};

std::string Checksum(const std::string &path) {
  // FNV-1a, enough to pin lineage to exact bytes.
  std::uint64_t h = 1469598103934665603ULL;
  for (std::uint8_t b : ReadFileBytes(path)) {
    h ^= b;
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

void RequireFile(const std::string &path, const char *what) {
  if (!fs::is_regular_file(path))
    throw ValidationError(std::string(what) + " not found: " + path);
}

std::string Join(const fs::path &dir, const char *name) { return (dir / name).string(); }

void MakeOutDir(const std::string &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
}

ordered_json ConfigJson(const RunConfig &config) {
  ordered_json j = ordered_json::object();
  for (const auto &k : Schema()) j[k.name] = config.Get(k.name);
  return j;
}

void WriteJson(const std::string &path, const ordered_json &j) {
  WriteFileAtomic(path, j.dump(2) + "\n");
}

// The resolved settings as a config file that reproduces the run.
std::string ConfigText(const RunConfig &config) {
  std::ostringstream out;
  std::string section;
  for (const auto &k : Schema()) {
    const std::string name = k.name;
    const auto dot = name.find('.');
    if (name.substr(0, dot) != section) {
      section = name.substr(0, dot);
      out << (out.tellp() > 0 ? "\n" : "") << '[' << section << "]\n";
    }
    out << name.substr(dot + 1) << " = " << config.Get(name) << '\n';
  }
  return out.str();
}

void WriteRunArtifacts(const fs::path &out, const RunResult &result) {
  SaveModel(result.model, Join(out, "model.dckm"));
  WriteFileAtomic(Join(out, "metrics.csv"), result.log.ToCsv());
  if (!result.log.refreshes().empty())
    WriteFileAtomic(Join(out, "refresh.log"), result.log.RefreshLog());
  const std::string p_average = result.log.PAverageCsv();
  if (!p_average.empty()) WriteFileAtomic(Join(out, "p_average.csv"), p_average);
}

ordered_json RunSummary(const RunResult &result) {
  ordered_json j;
  j["iterations"] = result.log.rows().size();
  j["refreshes"] = result.log.refreshes().size();
  j["n_classes"] = result.model.n_classes;
  j["head_rows"] = result.model.head.rows();
  int lo = result.model.head.rows(), hi = 0;
  for (const auto &row : result.log.rows()) {
    lo = std::min(lo, row.head_rows);
    hi = std::max(hi, row.head_rows);
  }
  // Rows trained against, over the whole run.
  j["head_rows_trained_min"] = lo;
  j["head_rows_trained_max"] = hi;
  j["has_merged_row"] = result.model.has_merged_row;
  j["final_lr"] = result.model.final_lr;
  j["loss_scale"] = result.model.loss_scale;
  if (result.log.final_kl_full) j["final_kl_full"] = *result.log.final_kl_full;
  if (result.log.final_kl_active) j["final_kl_active"] = *result.log.final_kl_active;
  j["warnings"] = result.log.warnings;
  return j;
}

// --------------------------------------------------------------------------

int GenData(const RunConfig &config, const std::string &out_dir, std::ostream &out) {
  const CorpusSpec spec = CorpusFromConfig(config);
  const SplitOptions split_options = SplitFromConfig(config);
  const int n_target = config.GetInt("eval.n_target_trials");
  const int n_nontarget = config.GetInt("eval.n_nontarget_trials");

  const LabeledCorpus corpus = GenerateCorpus(spec);
  const CorpusSplit split = SplitCorpus(corpus, split_options);
  const TrialList trials = MakeTrials(split.test, n_target, n_nontarget, TrialSeed(config));

  MakeOutDir(out_dir);
  const fs::path dir(out_dir);
  for (const LabeledCorpus *part : {&split.train, &split.enrol, &split.test}) {
    const std::string name = SplitTagName(part->split);
    WriteCorpus(*part, (dir / (name + ".dck")).string());
    const LabeledCorpus *parts[] = {part};
    WriteManifest((dir / (name + ".tsv")).string(), parts);
  }
  WriteTrials(Join(dir, "trials.tsv"), trials);
  WriteFileAtomic(Join(dir, "config.ini"), ConfigText(config));
  out << "wrote " << split.train.utterances.size() << " train, "
      << split.enrol.utterances.size() << " enrol, " << split.test.utterances.size()
      << " test utterances and " << trials.trials.size() << " trials to " << out_dir
      << '\n';
  return kExitOk;
}

int TrainCmd(const RunConfig &config, const std::string &corpus_dir,
             const std::string &out_dir, std::ostream &out) {
  const DropMode mode = ParseDropMode(config.Get("drop.mode"));
  if (mode != DropMode::kNone && mode != DropMode::kDropClass)
    throw ValidationError(std::string("drop.mode ") + DropModeName(mode) +
                          " adapts a trained model; use adapt");
  const fs::path dir(corpus_dir);
  const std::string train_manifest = Join(dir, "train.tsv");
  RequireFile(train_manifest, "training manifest");
  const LabeledCorpus train = LoadManifestCorpus(train_manifest);
  const EmbedderConfig embedder = EmbedderFromConfig(config, train.feat_dim());
  const TrainConfig tc = TrainFromConfig(config, train.n_classes, false);

  // Validation EER is logged when the corpus directory has a test split.
  std::optional<LabeledCorpus> test;
  std::optional<TrialList> trials;
  if (fs::is_regular_file(dir / "test.tsv") && fs::is_regular_file(dir / "trials.tsv")) {
    test = LoadManifestCorpus(Join(dir, "test.tsv"));
    trials = ReadTrials(Join(dir, "trials.tsv"));
  }

  MakeOutDir(out_dir);
  const fs::path od(out_dir);
  RunInputs inputs;
  inputs.train = &train;
  if (test) inputs.validation = {&*test, &*trials};
  inputs.abort_checkpoint_path = Join(od, "model.dckm");
  const RunResult result = Train(tc, embedder, inputs);
  WriteRunArtifacts(od, result);

  ordered_json run;
  run["command"] = "train";
  run["config"] = ConfigJson(config);
  run["seed"] = tc.seed;
  run["inputs"] = {{"train_manifest", train_manifest},
                   {"train_checksum", Checksum(train_manifest)}};
  run["result"] = RunSummary(result);
  WriteJson(Join(od, "run.json"), run);
  for (const auto &w : result.log.warnings) out << "warning: " << w << '\n';
  out << "trained " << tc.total_iterations << " iterations, final loss "
      << FormatDouble(result.log.rows().back().loss) << "; wrote " << out_dir << '\n';
  return kExitOk;
}

int AdaptCmd(const RunConfig &config, const std::string &source_path,
             const std::string &enrol_manifest, std::string train_manifest,
             const std::string &out_dir, std::ostream &out) {
  const DropMode mode = ParseDropMode(config.Get("drop.mode"));
  if (mode == DropMode::kDropClass)
    throw ValidationError("drop.mode dropclass is a training mode; use train");
  RequireFile(source_path, "source checkpoint");
  if (train_manifest.empty())
    train_manifest = (fs::path(enrol_manifest).parent_path() / "train.tsv").string();
  RequireFile(train_manifest, "training manifest");
  const bool has_enrol = !enrol_manifest.empty();
  if (NeedsEnrolData(mode) && !has_enrol)
    throw ValidationError(std::string("drop.mode ") + DropModeName(mode) +
                          " needs enrolment data (--enrol)");
  if (has_enrol) RequireFile(enrol_manifest, "enrolment manifest");

  Model source = LoadModel(source_path);
  const LabeledCorpus train = LoadManifestCorpus(train_manifest);
  std::optional<LabeledCorpus> enrol;
  if (has_enrol) enrol = LoadManifestCorpus(enrol_manifest);
  const TrainConfig tc = TrainFromConfig(config, train.n_classes, true);
  if (!config.IsAuto("train.lr")) source.final_lr = tc.lr;

  MakeOutDir(out_dir);
  const fs::path od(out_dir);
  RunInputs inputs;
  inputs.train = &train;
  inputs.enrol = enrol ? &*enrol : nullptr;
  inputs.abort_checkpoint_path = Join(od, "model.dckm");
  const RunResult result = Adapt(tc, source, inputs);
  WriteRunArtifacts(od, result);

  ordered_json run;
  run["command"] = "adapt";
  run["config"] = ConfigJson(config);
  run["seed"] = tc.seed;
  run["mode"] = DropModeName(mode);
  run["lineage"] = {{"source_checkpoint", source_path},
                    {"source_checksum", Checksum(source_path)},
                    {"source_final_lr", source.final_lr}};
  run["inputs"] = {{"train_manifest", train_manifest},
                   {"enrol_manifest", has_enrol ? enrol_manifest : ""}};
  // drop_only_data keeps every head row and only filters the data.
  run["head_rows_kept"] = mode == DropMode::kDropOnlyData;
  run["result"] = RunSummary(result);
  WriteJson(Join(od, "run.json"), run);
  for (const auto &w : result.log.warnings) out << "warning: " << w << '\n';
  out << "adapted (" << DropModeName(mode) << ") for " << tc.total_iterations
      << " iterations, head rows " << result.model.head.rows() << "; wrote " << out_dir
      << '\n';
  return kExitOk;
}

int EvaluateCmd(const std::string &checkpoint, const std::string &manifest,
                const std::string &trials_path, const std::string &out_dir,
                std::ostream &out) {
  RequireFile(checkpoint, "checkpoint");
  RequireFile(manifest, "test manifest");
  RequireFile(trials_path, "trial list");
  const Model model = LoadModel(checkpoint);
  const LabeledCorpus data = LoadManifestCorpus(manifest);
  const TrialList trials = ReadTrials(trials_path);
  const ScoredTrials scored = ScoreTrials(ExtractAll(model.embedder, data), trials);
  const EerResult eer = ComputeEer(scored);

  MakeOutDir(out_dir);
  const fs::path od(out_dir);
  WriteFileAtomic(Join(od, "scores.tsv"), FormatScores(scored));
  WriteFileAtomic(Join(od, "eer.json"), FormatEerJson(eer));
  if (eer.degenerate) out << "warning: all scores identical, EER is not informative\n";
  out << "EER " << FormatDouble(eer.eer) << " over " << eer.n_target << " target and "
      << eer.n_nontarget << " non-target trials\n";
  return kExitOk;
}

int DiagnoseCmd(const RunConfig &config, const std::string &checkpoint,
                const std::string &manifest, std::optional<int> n_bootstrap,
                const std::string &out_dir, std::ostream &out) {
  RequireFile(checkpoint, "checkpoint");
  RequireFile(manifest, "data manifest");
  const int replicas = n_bootstrap.value_or(config.GetInt("eval.n_bootstrap"));
  const Model model = LoadModel(checkpoint);
  const LabeledCorpus data = LoadManifestCorpus(manifest);
  const RankedProbabilityReport report =
      BootstrapRankedProbabilities(model, data, replicas, config.GetU64("eval.seed"));
  const double kl = KlToUniform(PAverage(model, data));

  MakeOutDir(out_dir);
  const fs::path od(out_dir);
  WriteFileAtomic(Join(od, "ranked.csv"), FormatReportCsv(report));
  ordered_json j;
  j["kl_to_uniform"] = kl;
  j["n_classes"] = model.ClassRows().size();
  j["n_utterances"] = data.utterances.size();
  j["n_bootstrap"] = replicas;
  WriteJson(Join(od, "kl.json"), j);
  out << "KL to uniform " << FormatDouble(kl) << " nats over " << data.utterances.size()
      << " utterances\n";
  return kExitOk;
}

// Pulls `--section.key value` and `--section.key=value` out of argv.
std::vector<std::string> ExtractOverrides(const std::vector<std::string> &args,
                                          std::vector<std::pair<std::string, std::string>> *kv) {
  std::vector<std::string> rest;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string &a = args[i];
    bool is_override = false;
    if (i > 0 && a.rfind("--", 0) == 0) {
      const auto dot = a.find('.');
      const auto eq = a.find('=');
      if (dot != std::string::npos && (eq == std::string::npos || dot < eq)) {
        const std::string section = a.substr(2, dot - 2);
        for (const char *s : kSections) is_override |= section == s;
      }
    }
    if (!is_override) {
      rest.push_back(a);
      continue;
    }
    const auto eq = a.find('=');
    if (eq != std::string::npos) {
      kv->emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else {
      if (i + 1 >= args.size()) throw ValidationError("override " + a + " needs a value");
      kv->emplace_back(a.substr(2), args[++i]);
    }
  }
  return rest;
}

int Dispatch(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  std::vector<std::pair<std::string, std::string>> overrides;
  std::vector<std::string> argv = ExtractOverrides(args, &overrides);

  CLI::App app{"DropClass / DropAdapt speaker-embedding toolkit", "dropclass"};
  app.require_subcommand(1);
  app.footer(HelpTable());
  std::string config_path;
  std::string out_dir;

  auto add_common = [&](CLI::App *sub) {
    sub->add_option("--config", config_path, "sectioned key=value config file")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->footer(HelpTable());
  };

  auto *gen = app.add_subcommand("gen-data", "generate a synthetic corpus, splits and trials");
  add_common(gen);

  std::string corpus_dir;
  auto *train = app.add_subcommand("train", "train an embedder (drop.mode none|dropclass)");
  add_common(train);
  train->add_option("--corpus", corpus_dir, "directory written by gen-data")->required();

  std::string source, enrol, train_manifest;
  auto *adapt = app.add_subcommand("adapt", "fine-tune a trained model on enrolment data");
  add_common(adapt);
  adapt->add_option("--source", source, "trained checkpoint")->required();
  adapt->add_option("--enrol", enrol, "enrolment manifest");
  adapt->add_option("--train", train_manifest,
                    "training manifest (default: train.tsv next to the enrolment manifest)");

  std::string checkpoint, data, trials;
  auto *evaluate = app.add_subcommand("evaluate", "score a trial list and compute the EER");
  add_common(evaluate);
  evaluate->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  evaluate->add_option("--data", data, "test manifest")->required();
  evaluate->add_option("--trials", trials, "trial list")->required();

  std::optional<int> n_bootstrap;
  auto *diagnose =
      app.add_subcommand("diagnose", "ranked class-probability report and KL to uniform");
  add_common(diagnose);
  diagnose->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  diagnose->add_option("--data", data, "data manifest")->required();
  diagnose->add_option("--n-bootstrap", n_bootstrap, "bootstrap replicas (default eval.n_bootstrap)");

  std::vector<std::string> reversed(argv.rbegin(), argv.rend() - 1);
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  RunConfig config;
  if (!config_path.empty()) config.LoadFile(config_path);
  for (const auto &[name, value] : overrides) config.Set(name, value);

  if (*gen) return GenData(config, out_dir, out);
  if (*train) return TrainCmd(config, corpus_dir, out_dir, out);
  if (*adapt) return AdaptCmd(config, source, enrol, train_manifest, out_dir, out);
  if (*evaluate) return EvaluateCmd(checkpoint, data, trials, out_dir, out);
  return DiagnoseCmd(config, checkpoint, data, n_bootstrap, out_dir, out);
}

}  // namespace

int RunCli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
  try {
    return Dispatch(args, out, err);
  } catch (const Error &e) {
    err << "dropclass: " << e.what() << '\n';
    switch (e.category()) {
      case Error::Category::kValidation: return kExitValidation;
      case Error::Category::kIo: return kExitIo;
      case Error::Category::kNumeric: return kExitNumeric;
    }
  } catch (const std::exception &e) {
    err << "dropclass: internal error: " << e.what() << '\n';
  }
  return kExitInternal;
}

}  // namespace dropclass::cli
