/* Copyright 2026 The cappipe Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Command-line front end: corpus generation, feature extraction, training,
// decoding, evaluation, ablation and gradient checking.

#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cappipe/errors.h"
#include "cappipe/harness.h"

namespace {

namespace fs = std::filesystem;
using namespace cappipe;

// Options shared by the config-driven subcommands.
struct ConfigArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::string dataset;
  std::string output;
  std::vector<uint64_t> seeds;
  int epochs = 0;

  void Register(CLI::App* app) {
    app->add_option("-c,--config", config, "Config file (key = value with [sections])");
    app->add_option("--set", overrides, "Override, section.key=value (repeatable)");
    app->add_option("-d,--dataset", dataset, "Corpus directory");
    app->add_option("-o,--output", output, "Output directory");
    app->add_option("--seed", seeds, "Seed(s); CAPPIPE_SEED is the fallback")->delimiter(',');
    app->add_option("--epochs", epochs, "Training epochs");
  }

  RunConfig Resolve() const {
    RunConfig cfg;
    ConfigFile file;
    if (!config.empty()) file = ConfigFile::Load(config);
    for (const auto& o : overrides) file.Set(std::string_view(o));
    cfg.Apply(file);
    if (!dataset.empty()) cfg.dataset = dataset;
    if (!output.empty()) cfg.output_dir = output;
    if (epochs > 0) cfg.train.epochs = epochs;
    if (!seeds.empty()) {
      cfg.seeds = seeds;
    } else if (const char* env = std::getenv("CAPPIPE_SEED"); env && *env) {
      cfg.seeds = {SeedFromEnv(0)};
    }
    return cfg;
  }
};

void Log(const std::string& msg) { std::cerr << msg << '\n'; }

void WriteFile(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write " + p.string());
  f << text;
}

int Main(int argc, char** argv) {
  CLI::App app{"cappipe: audio captioning workbench"};
  app.require_subcommand(1);

  // synth-corpus
  SynthOptions synth;
  std::string synth_out;
  bool synth_seed_given = false;
  auto* synth_cmd = app.add_subcommand("synth-corpus", "Generate a synthetic corpus");
  synth_cmd->add_option("-o,--output", synth_out, "Output directory")->required();
  synth_cmd->add_option("--clips", synth.n_clips, "Number of clips");
  synth_cmd->add_option("--events", synth.n_event_types,
                        "Number of event types (max " +
                            std::to_string(MaxSynthEventTypes()) + ")");
  synth_cmd->add_option("--sample-rate", synth.sample_rate_hz, "Sample rate in Hz");
  synth_cmd->add_option("--duration", synth.duration_s, "Clip length in seconds");
  synth_cmd->add_option("--seed", synth.seed, "Seed")
      ->each([&](const std::string&) { synth_seed_given = true; });

  // features
  ConfigArgs feat_args;
  auto* feat_cmd = app.add_subcommand("features", "Compute feature files for a corpus");
  feat_args.Register(feat_cmd);

  // train
  ConfigArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train one model per seed");
  train_args.Register(train_cmd);

  // run
  ConfigArgs run_args;
  auto* run_cmd =
      app.add_subcommand("run", "Train, decode and evaluate for every seed");
  run_args.Register(run_cmd);

  // decode
  std::string ckpt, dec_dataset, dec_out;
  bool greedy = false, no_tta = false, estimated = false;
  int beam_size = 5, ngram_block = 2, tta_crops = 5;
  bool no_length_norm = false;
  uint64_t dec_seed = 0;
  bool dec_seed_given = false;
  auto* dec_cmd = app.add_subcommand("decode", "Caption every clip of a corpus");
  dec_cmd->add_option("--checkpoint", ckpt, "Checkpoint directory")->required();
  dec_cmd->add_option("-d,--dataset", dec_dataset, "Corpus directory")->required();
  dec_cmd->add_option("-o,--output", dec_out, "Candidates CSV")->required();
  dec_cmd->add_flag("--greedy", greedy, "Greedy decoding instead of beam search");
  dec_cmd->add_flag("--no-tta", no_tta, "Decode a single crop");
  dec_cmd->add_flag("--estimated-keywords", estimated,
                    "Feed the meta keyword head's own predictions to the encoder");
  dec_cmd->add_option("--beam-size", beam_size, "Beam size");
  dec_cmd->add_option("--ngram-block", ngram_block, "n-gram blocking size, 0 disables");
  dec_cmd->add_flag("--no-length-norm", no_length_norm, "Rank finished beams by raw log-prob");
  dec_cmd->add_option("--tta-crops", tta_crops, "Number of TTA crops");
  dec_cmd->add_option("--seed", dec_seed, "Crop seed")
      ->each([&](const std::string&) { dec_seed_given = true; });

  // evaluate
  std::string cand_path, eval_dataset, spice_path, meteor_path, eval_out;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score a candidates CSV");
  eval_cmd->add_option("--candidates", cand_path, "Candidates CSV")->required();
  eval_cmd->add_option("-d,--dataset", eval_dataset, "Corpus with references")->required();
  eval_cmd->add_option("--spice", spice_path, "External SPICE scores (file_name,score)");
  eval_cmd->add_option("--meteor", meteor_path, "External METEOR scores (file_name,score)");
  eval_cmd->add_option("-o,--output", eval_out, "Directory for report files");

  // ablate
  ConfigArgs abl_args;
  std::string plan_name;
  auto* abl_cmd = app.add_subcommand("ablate", "Element-wise or module-wise ablation");
  abl_cmd->add_option("plan", plan_name, "element-wise | module-wise")->required();
  abl_args.Register(abl_cmd);

  // gradcheck
  uint64_t gc_seed = 0;
  bool gc_seed_given = false;
  GradCheckOptions gc_opts;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Check gradients of the full loss");
  gc_cmd->add_option("--seed", gc_seed, "Seed")
      ->each([&](const std::string&) { gc_seed_given = true; });
  gc_cmd->add_option("--tolerance", gc_opts.tolerance, "Max relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (*synth_cmd) {
    if (!synth_seed_given) synth.seed = SeedFromEnv(synth.seed);
    SynthCorpus(synth, synth_out);
    std::cout << "wrote " << synth.n_clips << " clips to " << synth_out << '\n';
  } else if (*feat_cmd) {
    const RunConfig cfg = feat_args.Resolve();
    if (cfg.dataset.empty()) throw ValidationError("no dataset given");
    const int n = ExtractCorpusFeatures(cfg.dataset, cfg.features);
    std::cout << "wrote " << n << " feature files\n";
  } else if (*train_cmd) {
    const RunConfig cfg = train_args.Resolve();
    cfg.Validate();
    const SplitData split = LoadSplit(cfg);
    const CaptionResources res =
        BuildResources(split.train, LoadLemmas(cfg), cfg.features, cfg.resources);
    fs::create_directories(cfg.output_dir);
    WriteFile(cfg.output_dir / "config.ini", cfg.ToText());
    for (uint64_t seed : cfg.seeds) {
      const fs::path dir = cfg.output_dir / ("seed_" + std::to_string(seed));
      fs::create_directories(dir);
      TrainOptions topts = cfg.train;
      topts.seed = seed;
      std::ofstream log(dir / "train_log.csv", std::ios::binary);
      log << TrainLogHeader() << '\n';
      const TrainResult tr = Train(split.train, res, cfg.model, topts,
                                   [&](const TrainLogRow& r) {
                                     log << FormatTrainLogRow(r) << '\n';
                                   });
      SaveModelCheckpoint(dir / "checkpoint", tr.params, tr.config, res.ToJson());
      std::cout << "seed " << seed << ": final epoch loss " << tr.epoch_loss.back()
                << ", checkpoint " << (dir / "checkpoint").string() << '\n';
    }
  } else if (*run_cmd) {
    const RunSummary s = Run(run_args.Resolve(), Log);
    for (const auto& col : ReportColumns()) {
      const auto it = s.mean.find(col);
      std::cout << col << ' '
                << (it == s.mean.end() ? std::string("n/a")
                                       : std::to_string(RoundForTable(it->second)))
                << '\n';
    }
  } else if (*dec_cmd) {
    const LoadedModel lm = LoadModelCheckpoint(ckpt);
    const CaptionResources res = CaptionResources::FromJson(lm.extras_json);
    const CaptionModel model(lm.config);
    DecodeOptions opts;
    opts.beam = !greedy;
    opts.tta = !no_tta;
    opts.tta_crops = tta_crops;
    opts.beam_config.beam_size = beam_size;
    opts.beam_config.ngram_block = ngram_block;
    opts.beam_config.length_norm = !no_length_norm;
    opts.keyword_mode = estimated ? KeywordMode::kEstimated : KeywordMode::kMetadata;
    if (!dec_seed_given) dec_seed = SeedFromEnv(1);
    const Dataset ds = LoadDataset(dec_dataset);
    const auto captions = DecodeDataset(model, lm.params, res, ds, opts, dec_seed);
    std::vector<std::string> ids;
    for (const Clip& c : ds.clips()) ids.push_back(c.clip_id);
    WriteCandidates(dec_out, ids, captions);
    std::cout << "wrote " << captions.size() << " captions to " << dec_out << '\n';
  } else if (*eval_cmd) {
    std::optional<ExternalScores> spice, meteor;
    if (!spice_path.empty()) spice = ReadExternalScores(spice_path);
    if (!meteor_path.empty()) meteor = ReadExternalScores(meteor_path);
    const EvalReport rep =
        EvaluateCorpus(ReadCandidates(cand_path), LoadDataset(eval_dataset), spice, meteor);
    std::cout << rep.ToText();
    if (!eval_out.empty()) {
      fs::create_directories(eval_out);
      WriteFile(fs::path(eval_out) / "report.csv", rep.ToCsv());
      WriteFile(fs::path(eval_out) / "report.txt", rep.ToText());
      WriteFile(fs::path(eval_out) / "per_clip.csv", rep.PerClipCsv());
    }
  } else if (*abl_cmd) {
    const auto plan = ParseAblationPlan(plan_name);
    if (!plan)
      throw ValidationError("unknown plan '" + plan_name +
                            "', expected element-wise or module-wise");
    const AblationTable t = Ablate(*plan, abl_args.Resolve(), Log);
    std::cout << t.ToText();
  } else if (*gc_cmd) {
    if (!gc_seed_given) gc_seed = SeedFromEnv(1);
    const GradCheckReport r = CheckModelGradients(gc_seed, gc_opts);
    std::cout << "checked " << r.checked << " scalars, max relative error "
              << r.max_rel_error << '\n';
    for (const auto& f : r.failures)
      std::cout << "FAIL " << f.tensor << '[' << f.index << "] analytic " << f.analytic
                << " numeric " << f.numeric << " rel " << f.rel_error << '\n';
    return r.ok() ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return Main(argc, argv);
  } catch (const cappipe::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const cappipe::RuntimeFailure& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << '\n';
    return 2;
  }
}
