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

#ifndef CAPPIPE_TRAINER_H_
#define CAPPIPE_TRAINER_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "cappipe/audiofeat.h"
#include "cappipe/augment.h"
#include "cappipe/autodiff.h"
#include "cappipe/corpus.h"
#include "cappipe/model.h"

namespace cappipe {

struct AugmentToggles {
  bool mixup = true;
  bool tfidf_replace = true;
  bool idf_sampling = true;

  bool any() const { return mixup || tfidf_replace || idf_sampling; }
};

// Everything derived from the training corpus that decoding needs as well:
// vocabularies, keyword tables and the feature front end. Stored in the
// checkpoint.
struct CaptionResources {
  Vocabulary vocab;
  KeywordVocab meta_keywords;
  KeywordVocab caption_keywords;
  LemmaTable lemmas;
  FeatureConfig features;
  int n_frames = 0;

  std::vector<int> MetaKeywordsOf(const Clip& clip) const;
  std::vector<int> CaptionKeywordsOf(const Clip& clip) const;

  std::string ToJson() const;
  static CaptionResources FromJson(const std::string& json);
};

struct ResourceOptions {
  int vocab_min_count = 1;
  int meta_min_occurrences = 10;
  int caption_min_occurrences = 10;
  double crop_seconds = 20.0;
};

CaptionResources BuildResources(const Dataset& train, LemmaTable lemmas,
                                const FeatureConfig& features,
                                const ResourceOptions& opts);

// Fills in the corpus-dependent sizes of `cfg` (vocabulary, keyword counts,
// frame count and feature dimension). Multi-task heads whose keyword
// vocabulary came out empty are rejected.
ModelConfig ResolveModelConfig(ModelConfig cfg, const CaptionResources& res);

struct TrainOptions {
  AugmentToggles augment;
  double mixup_alpha = 0.2;
  double replace_rate = 0.1;
  int epochs = 20;
  int batch_size = 8;
  int steps_per_epoch = 0;  // 0: ceil(n_train / batch_size)
  uint64_t seed = 1;
  AdamConfig adam;
  // Train on caption 1 of every clip only (no caption sampling).
  bool fixed_caption = false;
  double val_fraction = 0.0;
};

struct TrainLogRow {
  int epoch = 0;
  int64_t step = 0;
  double loss = 0.0;
  double word = 0.0;
  double meta = 0.0;
  double caption = 0.0;
  double length = 0.0;
  double cooc = 0.0;
};

struct TrainResult {
  ParamSet params;
  ModelConfig config;
  std::vector<TrainLogRow> log;
  std::vector<double> epoch_loss;  // mean total loss per epoch
  std::vector<double> val_loss;    // per epoch, empty without a val split
};

// Per-clip features and keyword targets of a dataset, loaded once.
struct PreparedClip {
  FeatureMatrix features;  // full length, cropped per use
  std::vector<int> meta_keywords;
  std::vector<int> caption_keywords;
  std::array<std::vector<int>, 5> tokens;
};
std::vector<PreparedClip> PrepareClips(const Dataset& dataset,
                                       const CaptionResources& res);

using TrainLogSink = std::function<void(const TrainLogRow&)>;

// Trains a model from scratch. Throws RuntimeFailure naming the step when the
// loss becomes non-finite.
TrainResult Train(const Dataset& dataset, const CaptionResources& res,
                  const ModelConfig& cfg, const TrainOptions& opts,
                  const TrainLogSink& sink = {});

// Mean total loss over all five captions of every clip, no augmentation.
double EvaluateLoss(const CaptionModel& model, ParamSet& params,
                    std::span<const PreparedClip> clips,
                    const CaptionResources& res,
                    const CooccurrenceTable& cooc);

std::string TrainLogHeader();
std::string FormatTrainLogRow(const TrainLogRow& row);

}  // namespace cappipe

#endif  // CAPPIPE_TRAINER_H_
