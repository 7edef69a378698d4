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

#ifndef CAPPIPE_AUGMENT_H_
#define CAPPIPE_AUGMENT_H_

#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cappipe/audiofeat.h"
#include "cappipe/corpus.h"

namespace cappipe {

// Parameters of a categorical distribution over an indexed collection.
class CategoricalParams {
 public:
  CategoricalParams() = default;
  // Normalizes non-negative weights; an all-zero weight vector becomes
  // uniform.
  static CategoricalParams FromWeights(std::span<const double> weights);

  const std::vector<double>& probs() const { return probs_; }
  size_t size() const { return probs_.size(); }
  double operator[](size_t i) const { return probs_[i]; }
  size_t Sample(std::mt19937_64& rng) const;

 private:
  std::vector<double> probs_;
};

// One "sentence" per clip: its five captions concatenated.
std::vector<Tokens> ConcatenatedCaptions(const Dataset& dataset);

// Mean IDF of the tokens (occurrences, not types) of `tokens`.
double AverageIdf(std::span<const std::string> tokens, const IdfTable& idf);

// Clip i is drawn with probability proportional to the average IDF of its
// concatenated captions. `idf_global` must be computed over
// ConcatenatedCaptions(dataset).
CategoricalParams ClipSelectionDistribution(const Dataset& dataset,
                                            const IdfTable& idf_global);
// Same idea within one clip: IDF over its five captions as the documents.
CategoricalParams CaptionSelectionDistribution(const Clip& clip);

struct TrainingPair {
  size_t clip = 0;
  size_t caption = 0;
};

TrainingPair SampleTrainingPair(const Dataset& dataset,
                                const CategoricalParams& clip_dist,
                                std::mt19937_64& rng);

// Precomputes every caption distribution once; draws match
// SampleTrainingPair for the same rng state.
class TrainingPairSampler {
 public:
  TrainingPairSampler(const Dataset& dataset, CategoricalParams clip_dist);
  TrainingPair Sample(std::mt19937_64& rng) const;
  const CategoricalParams& clip_distribution() const { return clip_dist_; }

 private:
  CategoricalParams clip_dist_;
  std::vector<CategoricalParams> caption_dists_;
};

// Candidate pool for word replacement: tokens whose global IDF is at most the
// median IDF, weighted by unigram count.
class ReplacementPool {
 public:
  static ReplacementPool Build(const std::map<std::string, int64_t>& unigram_counts,
                               const IdfTable& idf);
  static ReplacementPool FromWeights(std::vector<std::string> tokens,
                                     std::vector<double> weights);

  const std::vector<std::string>& tokens() const { return tokens_; }
  const CategoricalParams& distribution() const { return dist_; }
  bool empty() const { return tokens_.empty(); }
  const std::string& Sample(std::mt19937_64& rng) const;

 private:
  std::vector<std::string> tokens_;
  CategoricalParams dist_;
};

// Per-position replacement probability replace_rate * (1 - z_i), z_i being the
// min-max normalized TF-IDF of the token at i (z = 1 everywhere when all
// TF-IDF values are equal).
std::vector<double> ReplacementProbabilities(std::span<const std::string> caption,
                                             const std::map<std::string, double>& tfidf,
                                             double replace_rate);

Tokens TfidfWordReplace(std::span<const std::string> caption,
                        const std::map<std::string, double>& tfidf,
                        const ReplacementPool& pool, std::mt19937_64& rng,
                        double replace_rate);

struct MixupDraw {
  double lambda = 1.0;
  size_t partner_index = 0;
};

// lambda ~ Beta(alpha, alpha) folded onto [0.5, 1]; partner uniform in batch.
std::vector<MixupDraw> SampleMixup(std::mt19937_64& rng, double alpha,
                                   size_t batch_size);

// lambda * a + (1 - lambda) * b elementwise.
Tensor MixTensors(const Tensor& a, const Tensor& b, double lambda);

std::vector<FeatureMatrix> TtaCrops(const FeatureMatrix& feat,
                                    size_t target_frames, int n_crops,
                                    std::mt19937_64& rng);

}  // namespace cappipe

#endif  // CAPPIPE_AUGMENT_H_
