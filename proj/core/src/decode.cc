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

#include "cappipe/decode.h"

#include <algorithm>
#include <cmath>

#include "cappipe/augment.h"
#include "cappipe/errors.h"

namespace cappipe {

ModelDecoderSession::ModelDecoderSession(const CaptionModel& model,
                                         const ParamSet& params,
                                         const Tensor& features,
                                         std::span<const int> meta_keywords,
                                         KeywordMode mode)
    : model_(model),
      params_(params),
      encoded_(model.Encode(params, features, meta_keywords, mode)) {}

const ModelDecoderSession::Entry& ModelDecoderSession::Lookup(
    std::span<const int> prefix) {
  std::vector<int> key(prefix.begin(), prefix.end());
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  Entry e;
  if (prefix.empty()) {
    e.state = model_.Step(params_, encoded_.initial, Vocabulary::kBos, &e.probs);
  } else {
    const Entry& parent = Lookup(prefix.first(prefix.size() - 1));
    e.state = model_.Step(params_, parent.state, prefix.back(), &e.probs);
  }
  return cache_.emplace(std::move(key), std::move(e)).first->second;
}

std::vector<double> ModelDecoderSession::NextProbs(std::span<const int> prefix) {
  return Lookup(prefix).probs;
}

EnsembleSession::EnsembleSession(std::vector<std::unique_ptr<DecoderSession>> members)
    : members_(std::move(members)) {
  if (members_.empty()) throw ValidationError("ensemble: no members");
  for (const auto& m : members_)
    if (m->vocab_size() != members_.front()->vocab_size())
      throw ValidationError("ensemble: vocabulary sizes differ");
}

std::vector<double> EnsembleSession::NextProbs(std::span<const int> prefix) {
  std::vector<double> sum = members_.front()->NextProbs(prefix);
  if (members_.size() == 1) return sum;
  for (size_t m = 1; m < members_.size(); ++m) {
    const std::vector<double> p = members_[m]->NextProbs(prefix);
    for (size_t i = 0; i < sum.size(); ++i) sum[i] += p[i];
  }
  const double n = static_cast<double>(members_.size());
  for (double& v : sum) v /= n;
  return sum;
}

void BeamConfig::Validate() const {
  if (beam_size < 1) throw ValidationError("beam_size must be >= 1");
  if (ngram_block < 0) throw ValidationError("ngram_block must be >= 0");
  if (max_len < 1) throw ValidationError("max_len must be >= 1");
}

bool HasRepeatedNgram(std::span<const int> tokens, int n) {
  if (n <= 0) return false;
  const size_t m = static_cast<size_t>(n);
  if (tokens.size() < m + 1) return false;
  for (size_t i = 0; i + m <= tokens.size(); ++i)
    for (size_t j = i + 1; j + m <= tokens.size(); ++j)
      if (std::equal(tokens.begin() + i, tokens.begin() + i + m, tokens.begin() + j))
        return true;
  return false;
}

namespace {

// Whether the trailing n-gram of `tokens` also occurs earlier. Enough for
// blocking because every shorter prefix was already checked.
bool TailRepeats(std::span<const int> tokens, int n) {
  if (n <= 0) return false;
  const size_t m = static_cast<size_t>(n);
  if (tokens.size() < m + 1) return false;
  const auto tail = tokens.last(m);
  for (size_t i = 0; i + m < tokens.size(); ++i)
    if (std::equal(tail.begin(), tail.end(), tokens.begin() + i)) return true;
  return false;
}

// Higher log-prob first, then lexicographically smaller tokens.
bool Better(double sa, const std::vector<int>& ta, double sb,
            const std::vector<int>& tb) {
  if (sa != sb) return sa > sb;
  return ta < tb;
}

double FinalScore(const Hypothesis& h, bool length_norm) {
  if (!length_norm || h.tokens.empty()) return h.log_prob;
  return h.log_prob / static_cast<double>(h.tokens.size());
}

const Hypothesis& BestOf(const std::vector<Hypothesis>& hs, bool length_norm) {
  const Hypothesis* best = &hs.front();
  for (const Hypothesis& h : hs)
    if (Better(FinalScore(h, length_norm), h.tokens, FinalScore(*best, length_norm),
               best->tokens))
      best = &h;
  return *best;
}

void CheckDistribution(const std::vector<double>& p, int vocab_size) {
  if (static_cast<int>(p.size()) != vocab_size)
    throw ValidationError("decoder returned " + std::to_string(p.size()) +
                          " probabilities for a vocabulary of " +
                          std::to_string(vocab_size));
}

}  // namespace

Hypothesis GreedyDecode(DecoderSession& session, int max_len) {
  if (max_len < 1) throw ValidationError("max_len must be >= 1");
  Hypothesis h;
  const int eos = session.eos();
  while (static_cast<int>(h.tokens.size()) < max_len) {
    const std::vector<double> p = session.NextProbs(h.tokens);
    CheckDistribution(p, session.vocab_size());
    int best = 0;
    double best_lp = h.log_prob + std::log(p[0]);
    for (int w = 1; w < static_cast<int>(p.size()); ++w) {
      const double lp = h.log_prob + std::log(p[w]);
      if (lp > best_lp) {
        best = w;
        best_lp = lp;
      }
    }
    h.tokens.push_back(best);
    h.log_prob = best_lp;
    if (best == eos) {
      h.finished = true;
      break;
    }
  }
  return h;
}

BeamResult BeamSearch(DecoderSession& session, const BeamConfig& cfg) {
  cfg.Validate();
  const int eos = session.eos();
  const size_t beam = static_cast<size_t>(cfg.beam_size);
  BeamResult result;
  std::vector<Hypothesis> alive(1);
  for (int len = 1; len <= cfg.max_len && !alive.empty(); ++len) {
    std::vector<Hypothesis> candidates;
    candidates.reserve(alive.size() * static_cast<size_t>(session.vocab_size()));
    for (const Hypothesis& h : alive) {
      const std::vector<double> p = session.NextProbs(h.tokens);
      CheckDistribution(p, session.vocab_size());
      for (int w = 0; w < static_cast<int>(p.size()); ++w) {
        Hypothesis c;
        c.tokens = h.tokens;
        c.tokens.push_back(w);
        if (TailRepeats(c.tokens, cfg.ngram_block)) continue;
        c.log_prob = h.log_prob + std::log(p[w]);
        c.finished = w == eos;
        candidates.push_back(std::move(c));
      }
    }
    const size_t keep = std::min(beam, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + keep, candidates.end(),
                      [](const Hypothesis& a, const Hypothesis& b) {
                        return Better(a.log_prob, a.tokens, b.log_prob, b.tokens);
                      });
    candidates.resize(keep);
    alive.clear();
    for (Hypothesis& c : candidates)
      (c.finished ? result.finished : alive).push_back(std::move(c));
  }
  result.final_beam = alive;
  if (!result.finished.empty()) {
    result.best = BestOf(result.finished, cfg.length_norm);
  } else if (!alive.empty()) {
    result.best = BestOf(alive, cfg.length_norm);
  } else {
    // Blocking pruned every continuation.
    result.best = Hypothesis{};
  }
  return result;
}

std::vector<int> CaptionIds(const Hypothesis& h, int eos) {
  std::vector<int> out = h.tokens;
  if (!out.empty() && out.back() == eos) out.pop_back();
  return out;
}

std::vector<int> DecodeClip(const CaptionModel& model, const ParamSet& params,
                            const FeatureMatrix& features,
                            std::span<const int> meta_keywords,
                            const DecodeOptions& opts, std::mt19937_64& rng) {
  const size_t frames = static_cast<size_t>(model.config().n_frames);
  std::vector<std::unique_ptr<DecoderSession>> sessions;
  if (opts.tta) {
    if (opts.tta_crops < 1) throw ValidationError("tta_crops must be >= 1");
    for (const FeatureMatrix& crop : TtaCrops(features, frames, opts.tta_crops, rng))
      sessions.push_back(std::make_unique<ModelDecoderSession>(
          model, params, crop.frames, meta_keywords, opts.keyword_mode));
  } else {
    const FeatureMatrix crop = CropOrPad(features, frames, rng);
    sessions.push_back(std::make_unique<ModelDecoderSession>(
        model, params, crop.frames, meta_keywords, opts.keyword_mode));
  }
  EnsembleSession session(std::move(sessions));
  BeamConfig bc = opts.beam_config;
  bc.max_len = model.config().max_decode_len;
  const Hypothesis h = opts.beam ? BeamSearch(session, bc).best
                                 : GreedyDecode(session, bc.max_len);
  return CaptionIds(h, Vocabulary::kEos);
}

}  // namespace cappipe
