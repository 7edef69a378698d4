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

#ifndef CAPPIPE_DECODE_H_
#define CAPPIPE_DECODE_H_

#include <map>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "cappipe/audiofeat.h"
#include "cappipe/model.h"

namespace cappipe {

// Source of next-word distributions for a growing prefix. The prefix holds
// the generated tokens after the implicit BOS.
class DecoderSession {
 public:
  virtual ~DecoderSession() = default;
  virtual int vocab_size() const = 0;
  virtual int eos() const = 0;
  virtual std::vector<double> NextProbs(std::span<const int> prefix) = 0;
};

// Decoder of a trained model conditioned on one input. Prefix states are
// cached, so beam expansions never re-run a shared prefix.
class ModelDecoderSession : public DecoderSession {
 public:
  ModelDecoderSession(const CaptionModel& model, const ParamSet& params,
                      const Tensor& features, std::span<const int> meta_keywords,
                      KeywordMode mode);

  int vocab_size() const override { return model_.config().vocab_size; }
  int eos() const override { return Vocabulary::kEos; }
  std::vector<double> NextProbs(std::span<const int> prefix) override;

  const EncodedInput& encoded() const { return encoded_; }

 private:
  struct Entry {
    DecoderState state;
    std::vector<double> probs;
  };
  const Entry& Lookup(std::span<const int> prefix);

  const CaptionModel& model_;
  const ParamSet& params_;
  EncodedInput encoded_;
  std::map<std::vector<int>, Entry> cache_;
};

// Arithmetic mean of the member sessions' distributions, summed in member
// order.
class EnsembleSession : public DecoderSession {
 public:
  explicit EnsembleSession(std::vector<std::unique_ptr<DecoderSession>> members);

  int vocab_size() const override { return members_.front()->vocab_size(); }
  int eos() const override { return members_.front()->eos(); }
  std::vector<double> NextProbs(std::span<const int> prefix) override;

 private:
  std::vector<std::unique_ptr<DecoderSession>> members_;
};

struct Hypothesis {
  std::vector<int> tokens;  // without BOS; ends with EOS when finished
  double log_prob = 0.0;
  bool finished = false;
};

struct BeamConfig {
  int beam_size = 5;
  int ngram_block = 2;  // 0 disables blocking
  int max_len = 30;     // generated tokens, EOS included
  bool length_norm = true;

  void Validate() const;
};

struct BeamResult {
  Hypothesis best;
  std::vector<Hypothesis> finished;  // every hypothesis that emitted EOS
  std::vector<Hypothesis> final_beam;  // alive hypotheses at termination
};

// True when some n-gram occurs more than once in `tokens`.
bool HasRepeatedNgram(std::span<const int> tokens, int n);

// Argmax per step until EOS or max_len; ties go to the lowest id.
Hypothesis GreedyDecode(DecoderSession& session, int max_len);

BeamResult BeamSearch(DecoderSession& session, const BeamConfig& cfg);

// Strips the trailing EOS.
std::vector<int> CaptionIds(const Hypothesis& h, int eos);

struct DecodeOptions {
  bool beam = true;
  BeamConfig beam_config;
  bool tta = true;
  int tta_crops = 5;
  KeywordMode keyword_mode = KeywordMode::kMetadata;
};

// Full inference for one clip: crop (n crops with TTA, else one), decode.
std::vector<int> DecodeClip(const CaptionModel& model, const ParamSet& params,
                            const FeatureMatrix& features,
                            std::span<const int> meta_keywords,
                            const DecodeOptions& opts, std::mt19937_64& rng);

}  // namespace cappipe

#endif  // CAPPIPE_DECODE_H_
