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

#ifndef CAPPIPE_MODEL_H_
#define CAPPIPE_MODEL_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cappipe/autodiff.h"
#include "cappipe/corpus.h"
#include "cappipe/tensor.h"

namespace cappipe {

// Multi-task sub-blocks. Turning one off removes its head, its loss term and
// its contribution to the encoder/decoder inputs.
struct MultiTaskToggles {
  bool meta_keywords = true;
  bool caption_keywords = true;
  bool length = true;
  bool cooccurrence = true;

  bool any() const {
    return meta_keywords || caption_keywords || length || cooccurrence;
  }
};

struct ModelConfig {
  int feature_dim = 64;
  int n_frames = 1721;  // 20 s at 44.1 kHz, hop 512
  int audio_embed_dim = 128;
  int meta_proj_dim = 32;
  int encoder_hidden = 128;  // per direction
  int decoder_hidden = 256;
  int word_embed_dim = 128;
  int vocab_size = 0;
  int n_keywords_meta = 0;
  int n_keywords_caption = 0;
  int n_length_classes = 30;  // lengths 1..29 and 30+
  int length_embed_dim = 64;
  double lambda_kw = 0.5;
  double lambda_len = 0.1;
  double lambda_cooc = 0.1;
  int max_decode_len = 30;
  MultiTaskToggles tasks;

  void Validate() const;
  std::string ToJson() const;
  static ModelConfig FromJson(const std::string& json);
};

// Class index of a caption of `n_tokens` words: min(n, classes) - 1.
int LengthClass(size_t n_tokens, int n_length_classes);

// Words that co-occur with each meta keyword in the training captions.
class CooccurrenceTable {
 public:
  CooccurrenceTable() = default;
  // allowed(k) = union of caption tokens over clips whose keyword set holds k.
  static CooccurrenceTable Build(const Dataset& dataset,
                                 std::span<const std::vector<int>> clip_keywords,
                                 int n_keywords, const Vocabulary& vocab);

  int n_keywords() const { return static_cast<int>(allowed_.size()); }
  int vocab_size() const { return vocab_size_; }
  const std::set<int>& Allowed(int keyword) const { return allowed_.at(keyword); }

  // 1 for every non-reserved word outside the union of allowed(k) over the
  // active keywords. No active keywords means nothing is forbidden.
  std::vector<uint8_t> ForbiddenMask(std::span<const int> active_keywords) const;

 private:
  std::vector<std::set<int>> allowed_;
  int vocab_size_ = 0;
};

// One training sample as seen by the network.
struct CaptionExample {
  Tensor features;                    // n_frames x feature_dim
  std::vector<int> tokens;            // caption ids without BOS / EOS
  std::vector<int> meta_keywords;     // active meta keyword ids
  std::vector<int> caption_keywords;  // active caption keyword ids
};

struct MixupSpec {
  const CaptionExample* partner = nullptr;
  double lambda = 1.0;
};

// Graph nodes of one forward pass plus the (possibly mixed) targets.
struct ModelOutputs {
  Var word_logits;   // N x V
  Var word_probs;    // N x V
  Var meta_probs;    // 1 x K_meta, invalid when the head is off
  Var caption_probs; // 1 x K_cap, invalid when the head is off
  Var length_logits; // 1 x L, invalid when the head is off
  Var length_probs;

  Tensor word_targets;     // N x V
  Tensor meta_targets;     // 1 x K_meta
  Tensor caption_targets;  // 1 x K_cap
  Tensor length_targets;   // 1 x L
};

struct LossWeights {
  std::vector<double> meta;     // inverse keyword priors
  std::vector<double> caption;  // same for caption keywords
};

struct LossTerms {
  Var total;
  double word = 0.0;
  double meta = 0.0;
  double caption = 0.0;
  double length = 0.0;
  double cooc = 0.0;
};

// Tape-free decoder state for inference.
struct DecoderState {
  Tensor h;
  Tensor c;
};

struct EncodedInput {
  DecoderState initial;
  Tensor meta_probs;    // empty when the meta head is off
  Tensor length_probs;  // empty when the length head is off
  int length_class = -1;
};

// Keyword source for the encoder side input at inference time.
enum class KeywordMode { kMetadata, kEstimated };

class CaptionModel {
 public:
  explicit CaptionModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }

  // Expected parameter names and shapes.
  std::vector<std::pair<std::string, std::vector<size_t>>> ParamShapes() const;
  ParamSet InitParams(uint64_t seed) const;
  ParamSet ZeroParams() const;
  // Throws ValidationError naming the first missing or misshaped tensor.
  void CheckParams(const ParamSet& params) const;

  // Teacher-forced pass. With `mix`, features, embedded decoder inputs,
  // keyword side input, length embedding and all targets are mixed with the
  // partner using the same lambda.
  ModelOutputs Forward(Tape& tape, ParamSet& params, const CaptionExample& ex,
                       const MixupSpec* mix = nullptr) const;

  LossTerms Loss(const ModelOutputs& out, const LossWeights& weights,
                 std::span<const uint8_t> forbidden) const;

  // Inference path: same arithmetic as Forward, without a tape.
  EncodedInput Encode(const ParamSet& params, const Tensor& features,
                      std::span<const int> meta_keywords, KeywordMode mode,
                      std::optional<int> length_class = std::nullopt) const;
  // Feeds `token` and returns the new state and next-word distribution.
  DecoderState Step(const ParamSet& params, const DecoderState& state,
                    int token, std::vector<double>* probs) const;

 private:
  void CheckExample(const CaptionExample& ex) const;
  Tensor MultiHot(std::span<const int> ids, int n) const;

  ModelConfig cfg_;
};

// Checkpoint = parameter blobs + manifest with the model config and an
// arbitrary JSON object of extras (vocabularies etc.).
void SaveModelCheckpoint(const std::filesystem::path& dir, const ParamSet& params,
                         const ModelConfig& cfg,
                         const std::string& extras_json = "{}");

struct LoadedModel {
  ModelConfig config;
  ParamSet params;
  std::string extras_json;
};
LoadedModel LoadModelCheckpoint(const std::filesystem::path& dir);

}  // namespace cappipe

#endif  // CAPPIPE_MODEL_H_
