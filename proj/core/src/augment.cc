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

#include "cappipe/augment.h"

#include <algorithm>
#include <cmath>

#include "cappipe/errors.h"

namespace cappipe {

CategoricalParams CategoricalParams::FromWeights(std::span<const double> weights) {
  if (weights.empty()) throw ValidationError("categorical: no items");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      throw ValidationError("categorical: weights must be finite and >= 0");
    sum += w;
  }
  CategoricalParams p;
  p.probs_.resize(weights.size());
  for (size_t i = 0; i < weights.size(); ++i)
    p.probs_[i] = sum > 0.0 ? weights[i] / sum
                            : 1.0 / static_cast<double>(weights.size());
  return p;
}

size_t CategoricalParams::Sample(std::mt19937_64& rng) const {
  std::discrete_distribution<size_t> dist(probs_.begin(), probs_.end());
  return dist(rng);
}

std::vector<Tokens> ConcatenatedCaptions(const Dataset& dataset) {
  std::vector<Tokens> docs;
  docs.reserve(dataset.size());
  for (const Clip& c : dataset.clips()) {
    Tokens all;
    for (const Tokens& cap : c.captions) all.insert(all.end(), cap.begin(), cap.end());
    docs.push_back(std::move(all));
  }
  return docs;
}

double AverageIdf(std::span<const std::string> tokens, const IdfTable& idf) {
  if (tokens.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& t : tokens) sum += idf.IdfOrUnseen(t);
  return sum / static_cast<double>(tokens.size());
}

CategoricalParams ClipSelectionDistribution(const Dataset& dataset,
                                            const IdfTable& idf_global) {
  if (dataset.empty()) throw ValidationError("clip selection: empty dataset");
  const auto docs = ConcatenatedCaptions(dataset);
  std::vector<double> avg;
  avg.reserve(docs.size());
  for (const Tokens& d : docs) avg.push_back(AverageIdf(d, idf_global));
  return CategoricalParams::FromWeights(avg);
}

CategoricalParams CaptionSelectionDistribution(const Clip& clip) {
  const IdfTable idf = IdfTable::Compute(clip.captions);
  std::vector<double> avg;
  for (const Tokens& cap : clip.captions) avg.push_back(AverageIdf(cap, idf));
  return CategoricalParams::FromWeights(avg);
}

TrainingPair SampleTrainingPair(const Dataset& dataset,
                                const CategoricalParams& clip_dist,
                                std::mt19937_64& rng) {
  if (clip_dist.size() != dataset.size())
    throw ValidationError("clip distribution does not match the dataset");
  TrainingPair p;
  p.clip = clip_dist.Sample(rng);
  p.caption = CaptionSelectionDistribution(dataset[p.clip]).Sample(rng);
  return p;
}

TrainingPairSampler::TrainingPairSampler(const Dataset& dataset,
                                         CategoricalParams clip_dist)
    : clip_dist_(std::move(clip_dist)) {
  if (clip_dist_.size() != dataset.size())
    throw ValidationError("clip distribution does not match the dataset");
  caption_dists_.reserve(dataset.size());
  for (const Clip& c : dataset.clips())
    caption_dists_.push_back(CaptionSelectionDistribution(c));
}

TrainingPair TrainingPairSampler::Sample(std::mt19937_64& rng) const {
  TrainingPair p;
  p.clip = clip_dist_.Sample(rng);
  p.caption = caption_dists_[p.clip].Sample(rng);
  return p;
}

ReplacementPool ReplacementPool::Build(
    const std::map<std::string, int64_t>& unigram_counts, const IdfTable& idf) {
  std::vector<double> values;
  for (const auto& [tok, count] : unigram_counts) {
    if (auto v = idf.Idf(tok); v && count > 0) values.push_back(*v);
  }
  if (values.empty()) return {};
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  const double median =
      n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  std::vector<std::string> tokens;
  std::vector<double> weights;
  for (const auto& [tok, count] : unigram_counts) {
    auto v = idf.Idf(tok);
    if (v && count > 0 && *v <= median) {
      tokens.push_back(tok);
      weights.push_back(static_cast<double>(count));
    }
  }
  return FromWeights(std::move(tokens), std::move(weights));
}

ReplacementPool ReplacementPool::FromWeights(std::vector<std::string> tokens,
                                             std::vector<double> weights) {
  if (tokens.size() != weights.size())
    throw ValidationError("replacement pool: token/weight count mismatch");
  ReplacementPool p;
  if (tokens.empty()) return p;
  p.dist_ = CategoricalParams::FromWeights(weights);
  p.tokens_ = std::move(tokens);
  return p;
}

const std::string& ReplacementPool::Sample(std::mt19937_64& rng) const {
  if (tokens_.empty()) throw ValidationError("replacement pool is empty");
  return tokens_[dist_.Sample(rng)];
}

std::vector<double> ReplacementProbabilities(
    std::span<const std::string> caption,
    const std::map<std::string, double>& tfidf, double replace_rate) {
  std::vector<double> scores;
  scores.reserve(caption.size());
  for (const auto& t : caption) {
    auto it = tfidf.find(t);
    scores.push_back(it == tfidf.end() ? 0.0 : it->second);
  }
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const double min = *lo, range = *hi - *lo;
  std::vector<double> probs(caption.size(), 0.0);
  if (range <= 0.0) return probs;
  for (size_t i = 0; i < caption.size(); ++i) {
    const double z = (scores[i] - min) / range;
    probs[i] = replace_rate * (1.0 - z);
  }
  return probs;
}

Tokens TfidfWordReplace(std::span<const std::string> caption,
                        const std::map<std::string, double>& tfidf,
                        const ReplacementPool& pool, std::mt19937_64& rng,
                        double replace_rate) {
  if (caption.empty()) throw ValidationError("word replacement: empty caption");
  if (!(replace_rate >= 0.0 && replace_rate <= 1.0))
    throw ValidationError("word replacement: replace_rate must be in [0, 1]");
  Tokens out(caption.begin(), caption.end());
  if (replace_rate == 0.0 || pool.empty()) return out;
  const auto probs = ReplacementProbabilities(caption, tfidf, replace_rate);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (size_t i = 0; i < out.size(); ++i) {
    if (probs[i] > 0.0 && unif(rng) < probs[i]) out[i] = pool.Sample(rng);
  }
  return out;
}

std::vector<MixupDraw> SampleMixup(std::mt19937_64& rng, double alpha,
                                   size_t batch_size) {
  if (!(alpha > 0.0)) throw ValidationError("mix-up alpha must be > 0");
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<MixupDraw> draws(batch_size);
  for (MixupDraw& d : draws) {
    const double x = gamma(rng);
    const double y = gamma(rng);
    // Both gammas can underflow to 0 for tiny alpha; the limit is lambda = 1.
    double lambda = x + y > 0.0 ? x / (x + y) : 1.0;
    d.lambda = std::max(lambda, 1.0 - lambda);
    if (batch_size > 0) {
      std::uniform_int_distribution<size_t> pick(0, batch_size - 1);
      d.partner_index = pick(rng);
    }
  }
  return draws;
}

Tensor MixTensors(const Tensor& a, const Tensor& b, double lambda) {
  if (!a.SameShape(b))
    throw ValidationError("mix: shape mismatch " + a.ShapeString() + " vs " +
                          b.ShapeString());
  if (lambda == 1.0) return a;
  Tensor out = a;
  const double mu = 1.0 - lambda;
  for (size_t i = 0; i < out.size(); ++i) out[i] = lambda * a[i] + mu * b[i];
  return out;
}

std::vector<FeatureMatrix> TtaCrops(const FeatureMatrix& feat,
                                    size_t target_frames, int n_crops,
                                    std::mt19937_64& rng) {
  if (n_crops < 1) throw ValidationError("tta: n_crops must be >= 1");
  std::vector<FeatureMatrix> crops;
  crops.reserve(static_cast<size_t>(n_crops));
  for (int i = 0; i < n_crops; ++i) crops.push_back(CropOrPad(feat, target_frames, rng));
  return crops;
}

}  // namespace cappipe
