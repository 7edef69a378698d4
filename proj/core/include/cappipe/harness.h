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

#ifndef CAPPIPE_HARNESS_H_
#define CAPPIPE_HARNESS_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cappipe/audiofeat.h"
#include "cappipe/decode.h"
#include "cappipe/metrics.h"
#include "cappipe/model.h"
#include "cappipe/trainer.h"

namespace cappipe {

// Line-oriented `key = value` file with `[section]` headers. Keys are stored
// as "section.key"; '#' and ';' start comments.
class ConfigFile {
 public:
  static ConfigFile Parse(std::string_view text, const std::string& origin = "config");
  static ConfigFile Load(const std::filesystem::path& path);

  // Sets "section.key" from a "section.key=value" string.
  void Set(std::string_view assignment);
  void Set(const std::string& key, const std::string& value);

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct PostprocToggles {
  bool beam = true;
  bool tta = true;

  bool any() const { return beam || tta; }
};

struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path eval_dataset;  // empty: hold out the tail of `dataset`
  double eval_fraction = 0.2;
  std::filesystem::path lemma_table;  // empty: <dataset>/lemmas.tsv if present

  FeatureConfig features;
  ResourceOptions resources;
  ModelConfig model;  // holds the multi-task toggles
  TrainOptions train; // holds the augmentation toggles
  PostprocToggles post;
  BeamConfig beam;
  int tta_crops = 5;
  KeywordMode keyword_mode = KeywordMode::kMetadata;

  std::vector<uint64_t> seeds = {1, 2, 3};
  std::filesystem::path output_dir = "runs";

  // Applies every recognized key; unknown keys are an error.
  void Apply(const ConfigFile& file);
  void Validate() const;
  ConfigFile ToConfigFile() const;
  std::string ToText() const;
};

// Scores of one (config, seed) run.
struct SeedRun {
  uint64_t seed = 0;
  EvalReport report;
  std::vector<std::string> captions;  // decoded, one per evaluation clip
  std::vector<double> epoch_loss;
};

struct RunSummary {
  std::vector<SeedRun> seeds;
  std::map<std::string, double> mean;      // over seeds, table scale
  std::map<std::string, double> variance;  // population variance over seeds
};

using ProgressFn = std::function<void(const std::string&)>;

// Train, decode the evaluation split and score it for every seed; artifacts
// go to <output_dir>/seed_<s>/ and the seed means to <output_dir>/report.*.
RunSummary Run(const RunConfig& cfg, const ProgressFn& progress = {});

// Train/evaluation split as Run uses it.
struct SplitData {
  Dataset train;
  Dataset eval;
};
SplitData LoadSplit(const RunConfig& cfg);
LemmaTable LoadLemmas(const RunConfig& cfg);

// Decodes every clip of `eval` and returns the caption strings.
std::vector<std::string> DecodeDataset(const CaptionModel& model, const ParamSet& params,
                                       const CaptionResources& res, const Dataset& eval,
                                       const DecodeOptions& opts, uint64_t seed);
DecodeOptions DecodeOptionsOf(const RunConfig& cfg);

enum class AblationPlan { kElementWise, kModuleWise };
std::optional<AblationPlan> ParseAblationPlan(std::string_view name);

struct AblationRow {
  std::string name;
  RunConfig config;
};
// Row set of a plan applied to `base` (base with everything on).
std::vector<AblationRow> AblationRows(AblationPlan plan, const RunConfig& base);

struct AblationTable {
  std::vector<std::string> columns;  // implemented metrics in table order
  std::vector<std::string> rows;
  std::vector<std::vector<double>> mean;      // rows x columns
  std::vector<std::vector<double>> variance;  // rows x columns
  std::vector<uint64_t> seeds;

  std::string ToCsv() const;
  std::string ToText() const;
};

AblationTable Ablate(AblationPlan plan, const RunConfig& base,
                     const ProgressFn& progress = {});

// Synthetic Clotho-shaped corpus: `n_clips` 20 s clips, each mixing one to
// three event sounds, with five template captions, metadata and a lemma table.
struct SynthOptions {
  int n_clips = 10;
  int n_event_types = 6;
  uint64_t seed = 1;
  double sample_rate_hz = 16000.0;
  double duration_s = 20.0;
};
int MaxSynthEventTypes();
void SynthCorpus(const SynthOptions& opts, const std::filesystem::path& out_dir);
// Lemma table covering every word the generator emits.
std::string SynthLemmaTable();

// Writes features/<stem>.capf for every clip of the corpus that is read from
// audio. Returns the number of files written.
int ExtractCorpusFeatures(const std::filesystem::path& root, const FeatureConfig& cfg);

// Gradient check of the full multi-task loss (all four terms) on a random
// two-clip micro-batch with a tiny model.
GradCheckReport CheckModelGradients(uint64_t seed, const GradCheckOptions& opts = {});

// CAPPIPE_SEED when set (a malformed value is a ValidationError), otherwise
// `fallback`.
uint64_t SeedFromEnv(uint64_t fallback);

}  // namespace cappipe

#endif  // CAPPIPE_HARNESS_H_
