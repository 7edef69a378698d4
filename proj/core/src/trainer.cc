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

#include "cappipe/trainer.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "cappipe/errors.h"
#include "json.hpp"

namespace cappipe {

namespace {

using nlohmann::json;

json KeywordVocabJson(const KeywordVocab& kv) {
  return {{"lemmas", kv.lemmas()}, {"priors", kv.priors()}};
}

KeywordVocab KeywordVocabFromJson(const json& j) {
  return KeywordVocab::FromParts(j.at("lemmas").get<std::vector<std::string>>(),
                                 j.at("priors").get<std::vector<double>>());
}

std::vector<uint8_t> Intersect(std::vector<uint8_t> a, const std::vector<uint8_t>& b) {
  for (size_t i = 0; i < a.size(); ++i) a[i] = a[i] && b[i];
  return a;
}

}  // namespace

std::vector<int> CaptionResources::MetaKeywordsOf(const Clip& clip) const {
  return ExtractMetaKeywords(clip, meta_keywords, lemmas);
}

std::vector<int> CaptionResources::CaptionKeywordsOf(const Clip& clip) const {
  Tokens all;
  for (const Tokens& cap : clip.captions) {
    const Tokens l = CaptionContentLemmas(cap, lemmas);
    all.insert(all.end(), l.begin(), l.end());
  }
  return caption_keywords.Lookup(all);
}

std::string CaptionResources::ToJson() const {
  json j = {{"vocab", vocab.NonReservedTokens()},
            {"meta_keywords", KeywordVocabJson(meta_keywords)},
            {"caption_keywords", KeywordVocabJson(caption_keywords)},
            {"lemmas", lemmas.Serialize()},
            {"features",
             {{"sample_rate_hz", features.sample_rate_hz},
              {"fft_size", features.fft_size},
              {"hop_size", features.hop_size},
              {"n_mels", features.n_mels},
              {"fmin_hz", features.fmin_hz},
              {"fmax_hz", features.fmax_hz},
              {"log_floor", features.log_floor}}},
            {"n_frames", n_frames}};
  return j.dump();
}

CaptionResources CaptionResources::FromJson(const std::string& text) {
  CaptionResources r;
  try {
    const json j = json::parse(text);
    const auto tokens = j.at("vocab").get<std::vector<std::string>>();
    r.vocab = Vocabulary::FromTokens(tokens);
    r.meta_keywords = KeywordVocabFromJson(j.at("meta_keywords"));
    r.caption_keywords = KeywordVocabFromJson(j.at("caption_keywords"));
    r.lemmas = LemmaTable::Parse(j.at("lemmas").get<std::string>());
    const json& f = j.at("features");
    r.features.sample_rate_hz = f.at("sample_rate_hz");
    r.features.fft_size = f.at("fft_size");
    r.features.hop_size = f.at("hop_size");
    r.features.n_mels = f.at("n_mels");
    r.features.fmin_hz = f.at("fmin_hz");
    r.features.fmax_hz = f.at("fmax_hz");
    r.features.log_floor = f.at("log_floor");
    r.n_frames = j.at("n_frames");
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint resources: ") + e.what());
  }
  return r;
}

CaptionResources BuildResources(const Dataset& train, LemmaTable lemmas,
                                const FeatureConfig& features,
                                const ResourceOptions& opts) {
  if (train.empty()) throw ValidationError("empty training set");
  features.Validate();
  if (!(opts.crop_seconds > 0.0)) throw ValidationError("crop_seconds must be > 0");
  CaptionResources r;
  std::vector<Tokens> captions;
  for (const Clip& c : train.clips())
    captions.insert(captions.end(), c.captions.begin(), c.captions.end());
  r.vocab = Vocabulary::Build(captions, opts.vocab_min_count);
  r.meta_keywords = BuildMetaKeywordVocab(train, lemmas, opts.meta_min_occurrences);
  r.caption_keywords =
      BuildCaptionKeywordVocab(train, lemmas, opts.caption_min_occurrences);
  r.lemmas = std::move(lemmas);
  r.features = features;
  r.n_frames = features.FramesForSeconds(opts.crop_seconds);
  return r;
}

ModelConfig ResolveModelConfig(ModelConfig cfg, const CaptionResources& res) {
  cfg.vocab_size = res.vocab.size();
  cfg.feature_dim = res.features.n_mels;
  cfg.n_frames = res.n_frames;
  cfg.n_keywords_meta = res.meta_keywords.size();
  cfg.n_keywords_caption = res.caption_keywords.size();
  if (cfg.tasks.meta_keywords && cfg.n_keywords_meta == 0)
    throw ValidationError(
        "no meta keyword passes the occurrence threshold; lower "
        "meta_min_occurrences or disable the meta keyword task");
  if (cfg.tasks.caption_keywords && cfg.n_keywords_caption == 0)
    throw ValidationError(
        "no caption keyword passes the occurrence threshold; lower "
        "caption_min_occurrences or disable the caption keyword task");
  cfg.Validate();
  return cfg;
}

std::vector<PreparedClip> PrepareClips(const Dataset& dataset,
                                       const CaptionResources& res) {
  std::vector<PreparedClip> out;
  out.reserve(dataset.size());
  for (const Clip& c : dataset.clips()) {
    PreparedClip p;
    p.features = LoadClipFeatures(c.feature_path, res.features);
    if (p.features.num_features() != static_cast<size_t>(res.features.n_mels))
      throw ValidationError("features of " + c.clip_id + " have " +
                            std::to_string(p.features.num_features()) +
                            " bins, expected " + std::to_string(res.features.n_mels));
    p.meta_keywords = res.MetaKeywordsOf(c);
    p.caption_keywords = res.CaptionKeywordsOf(c);
    for (size_t k = 0; k < 5; ++k) p.tokens[k] = res.vocab.Encode(c.captions[k]);
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

CooccurrenceTable BuildCooc(const Dataset& ds, std::span<const PreparedClip> clips,
                            const CaptionResources& res) {
  std::vector<std::vector<int>> kws;
  kws.reserve(clips.size());
  for (const PreparedClip& p : clips) kws.push_back(p.meta_keywords);
  return CooccurrenceTable::Build(ds, kws, res.meta_keywords.size(), res.vocab);
}

LossWeights WeightsOf(const CaptionResources& res) {
  return {res.meta_keywords.weights(), res.caption_keywords.weights()};
}

}  // namespace

double EvaluateLoss(const CaptionModel& model, ParamSet& params,
                    std::span<const PreparedClip> clips,
                    const CaptionResources& res, const CooccurrenceTable& cooc) {
  if (clips.empty()) throw ValidationError("loss evaluation: no clips");
  std::mt19937_64 rng(0);
  const LossWeights weights = WeightsOf(res);
  double sum = 0.0;
  size_t n = 0;
  for (const PreparedClip& p : clips) {
    CaptionExample ex;
    ex.features = CropOrPad(p.features, static_cast<size_t>(res.n_frames), rng).frames;
    ex.meta_keywords = p.meta_keywords;
    ex.caption_keywords = p.caption_keywords;
    const auto forbidden = cooc.ForbiddenMask(p.meta_keywords);
    for (const auto& tokens : p.tokens) {
      ex.tokens = tokens;
      Tape tape;
      const ModelOutputs out = model.Forward(tape, params, ex);
      sum += model.Loss(out, weights, forbidden).total.scalar();
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

TrainResult Train(const Dataset& dataset, const CaptionResources& res,
                  const ModelConfig& cfg_in, const TrainOptions& opts,
                  const TrainLogSink& sink) {
  if (dataset.empty()) throw ValidationError("empty training set");
  if (opts.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (opts.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (opts.steps_per_epoch < 0) throw ValidationError("steps_per_epoch must be >= 0");
  if (!(opts.val_fraction >= 0.0 && opts.val_fraction < 1.0))
    throw ValidationError("val_fraction must be in [0, 1)");
  if (!(opts.replace_rate >= 0.0 && opts.replace_rate <= 1.0))
    throw ValidationError("replace_rate must be in [0, 1]");
  if (opts.augment.mixup && !(opts.mixup_alpha > 0.0))
    throw ValidationError("mix-up alpha must be > 0");

  TrainResult result;
  result.config = ResolveModelConfig(cfg_in, res);
  const CaptionModel model(result.config);
  std::mt19937_64 rng(opts.seed);

  // Validation hold-out, drawn from the seed.
  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), size_t{0});
  size_t n_val = 0;
  if (opts.val_fraction > 0.0 && dataset.size() >= 2) {
    n_val = std::clamp<size_t>(
        static_cast<size_t>(std::lround(opts.val_fraction * dataset.size())), 1,
        dataset.size() - 1);
    std::mt19937_64 split_rng(opts.seed ^ 0x5eedULL);
    std::shuffle(order.begin(), order.end(), split_rng);
  }
  std::vector<size_t> train_idx(order.begin() + n_val, order.end());
  std::vector<size_t> val_idx(order.begin(), order.begin() + n_val);
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  const Dataset train = dataset.Subset(train_idx);
  const Dataset val = dataset.Subset(val_idx);

  const std::vector<PreparedClip> clips = PrepareClips(train, res);
  const std::vector<PreparedClip> val_clips =
      val.empty() ? std::vector<PreparedClip>{} : PrepareClips(val, res);
  const CooccurrenceTable cooc = BuildCooc(train, clips, res);
  const LossWeights weights = WeightsOf(res);

  const IdfTable idf_global = IdfTable::Compute(ConcatenatedCaptions(train));
  const TrainingPairSampler sampler(train, ClipSelectionDistribution(train, idf_global));
  ReplacementPool pool;
  std::vector<std::array<std::map<std::string, double>, 5>> tfidf;
  if (opts.augment.tfidf_replace) {
    pool = ReplacementPool::Build(res.vocab.counts(), idf_global);
    tfidf.resize(train.size());
    for (size_t i = 0; i < train.size(); ++i)
      for (size_t k = 0; k < 5; ++k)
        tfidf[i][k] = ComputeTfIdf(train[i].captions[k], idf_global);
  }

  result.params = model.InitParams(opts.seed);
  ParamSet& params = result.params;
  const size_t batch = static_cast<size_t>(opts.batch_size);
  const int steps_per_epoch =
      opts.steps_per_epoch > 0
          ? opts.steps_per_epoch
          : static_cast<int>((train.size() + batch - 1) / batch);
  const size_t frames = static_cast<size_t>(res.n_frames);
  std::uniform_int_distribution<size_t> uniform_clip(0, train.size() - 1);
  std::uniform_int_distribution<size_t> uniform_caption(0, 4);

  int64_t step = 0;
  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    double epoch_sum = 0.0;
    for (int s = 0; s < steps_per_epoch; ++s, ++step) {
      std::vector<CaptionExample> examples(batch);
      std::vector<std::vector<uint8_t>> forbidden(batch);
      for (size_t b = 0; b < batch; ++b) {
        TrainingPair pair;
        if (opts.augment.idf_sampling) {
          pair = sampler.Sample(rng);
        } else {
          pair.clip = uniform_clip(rng);
          pair.caption = uniform_caption(rng);
        }
        if (opts.fixed_caption) pair.caption = 0;
        const PreparedClip& pc = clips[pair.clip];
        CaptionExample& ex = examples[b];
        if (opts.augment.tfidf_replace && !pool.empty()) {
          const Tokens replaced =
              TfidfWordReplace(train[pair.clip].captions[pair.caption],
                               tfidf[pair.clip][pair.caption], pool, rng,
                               opts.replace_rate);
          ex.tokens = res.vocab.Encode(replaced);
        } else {
          ex.tokens = pc.tokens[pair.caption];
        }
        ex.features = CropOrPad(pc.features, frames, rng).frames;
        ex.meta_keywords = pc.meta_keywords;
        ex.caption_keywords = pc.caption_keywords;
        forbidden[b] = cooc.ForbiddenMask(pc.meta_keywords);
      }
      std::vector<MixupDraw> draws;
      if (opts.augment.mixup) draws = SampleMixup(rng, opts.mixup_alpha, batch);

      TrainLogRow row;
      row.epoch = epoch;
      row.step = step;
      const double inv_batch = 1.0 / static_cast<double>(batch);
      for (size_t b = 0; b < batch; ++b) {
        Tape tape;
        MixupSpec spec;
        const MixupSpec* mix = nullptr;
        std::vector<uint8_t> mask = forbidden[b];
        if (!draws.empty()) {
          spec.partner = &examples[draws[b].partner_index];
          spec.lambda = draws[b].lambda;
          mix = &spec;
          if (spec.lambda != 1.0)
            mask = Intersect(std::move(mask), forbidden[draws[b].partner_index]);
        }
        const ModelOutputs out = model.Forward(tape, params, examples[b], mix);
        const LossTerms lt = model.Loss(out, weights, mask);
        const double total = lt.total.scalar();
        if (!std::isfinite(total))
          throw RuntimeFailure("non-finite loss at step " + std::to_string(step));
        tape.Backward(ad::Scale(lt.total, inv_batch));
        row.loss += total * inv_batch;
        row.word += lt.word * inv_batch;
        row.meta += lt.meta * inv_batch;
        row.caption += lt.caption * inv_batch;
        row.length += lt.length * inv_batch;
        row.cooc += lt.cooc * inv_batch;
      }
      try {
        AdamStep(params, opts.adam);
      } catch (const RuntimeFailure& e) {
        throw RuntimeFailure(std::string(e.what()) + " at step " + std::to_string(step));
      }
      epoch_sum += row.loss;
      result.log.push_back(row);
      if (sink) sink(row);
    }
    result.epoch_loss.push_back(epoch_sum / steps_per_epoch);
    if (!val_clips.empty())
      result.val_loss.push_back(EvaluateLoss(model, params, val_clips, res, cooc));
  }
  return result;
}

std::string TrainLogHeader() {
  return "epoch,step,loss,loss_word,loss_meta,loss_cap,loss_len,loss_cooc";
}

std::string FormatTrainLogRow(const TrainLogRow& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.epoch << ',' << r.step << ',' << r.loss << ',' << r.word << ','
     << r.meta << ',' << r.caption << ',' << r.length << ',' << r.cooc;
  return os.str();
}

}  // namespace cappipe
