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

#include "cappipe/model.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "cappipe/augment.h"
#include "cappipe/errors.h"
#include "json.hpp"

namespace cappipe {

namespace {

using nlohmann::json;

void CheckDim(int v, const char* name) {
  if (v < 1) throw ValidationError(std::string("model config: ") + name + " must be >= 1");
}

Tensor OneHotRows(std::span<const int> ids, int width) {
  Tensor t(ids.size(), static_cast<size_t>(width));
  for (size_t i = 0; i < ids.size(); ++i) t(i, static_cast<size_t>(ids[i])) = 1.0;
  return t;
}

// Decoder inputs (BOS-prefixed) and targets (EOS-terminated) of a caption,
// padded with PAD / EOS or truncated to `steps` rows when given.
void TeacherSequences(std::span<const int> tokens, size_t steps,
                      std::vector<int>* inputs, std::vector<int>* targets) {
  inputs->assign(1, Vocabulary::kBos);
  inputs->insert(inputs->end(), tokens.begin(), tokens.end());
  targets->assign(tokens.begin(), tokens.end());
  targets->push_back(Vocabulary::kEos);
  inputs->resize(steps, Vocabulary::kPad);
  targets->resize(steps, Vocabulary::kEos);
}

std::string ShapeText(const std::vector<size_t>& shape) {
  std::string out = "[";
  for (size_t i = 0; i < shape.size(); ++i)
    out += (i ? "x" : "") + std::to_string(shape[i]);
  return out + "]";
}

}  // namespace

void ModelConfig::Validate() const {
  CheckDim(feature_dim, "feature_dim");
  CheckDim(n_frames, "n_frames");
  CheckDim(audio_embed_dim, "audio_embed_dim");
  CheckDim(encoder_hidden, "encoder_hidden");
  CheckDim(decoder_hidden, "decoder_hidden");
  CheckDim(word_embed_dim, "word_embed_dim");
  if (vocab_size <= Vocabulary::kNumReserved)
    throw ValidationError("model config: vocab_size must exceed the reserved ids");
  if (tasks.meta_keywords) {
    CheckDim(n_keywords_meta, "n_keywords_meta");
    CheckDim(meta_proj_dim, "meta_proj_dim");
  }
  if (tasks.caption_keywords) CheckDim(n_keywords_caption, "n_keywords_caption");
  if (tasks.length) {
    CheckDim(n_length_classes, "n_length_classes");
    CheckDim(length_embed_dim, "length_embed_dim");
  }
  CheckDim(max_decode_len, "max_decode_len");
  if (lambda_kw < 0 || lambda_len < 0 || lambda_cooc < 0)
    throw ValidationError("model config: loss weights must be >= 0");
}

std::string ModelConfig::ToJson() const {
  json j = {{"feature_dim", feature_dim},
            {"n_frames", n_frames},
            {"audio_embed_dim", audio_embed_dim},
            {"meta_proj_dim", meta_proj_dim},
            {"encoder_hidden", encoder_hidden},
            {"decoder_hidden", decoder_hidden},
            {"word_embed_dim", word_embed_dim},
            {"vocab_size", vocab_size},
            {"n_keywords_meta", n_keywords_meta},
            {"n_keywords_caption", n_keywords_caption},
            {"n_length_classes", n_length_classes},
            {"length_embed_dim", length_embed_dim},
            {"lambda_kw", lambda_kw},
            {"lambda_len", lambda_len},
            {"lambda_cooc", lambda_cooc},
            {"max_decode_len", max_decode_len},
            {"tasks",
             {{"meta_keywords", tasks.meta_keywords},
              {"caption_keywords", tasks.caption_keywords},
              {"length", tasks.length},
              {"cooccurrence", tasks.cooccurrence}}}};
  return j.dump();
}

ModelConfig ModelConfig::FromJson(const std::string& text) {
  ModelConfig c;
  try {
    const json j = json::parse(text);
    c.feature_dim = j.at("feature_dim");
    c.n_frames = j.at("n_frames");
    c.audio_embed_dim = j.at("audio_embed_dim");
    c.meta_proj_dim = j.at("meta_proj_dim");
    c.encoder_hidden = j.at("encoder_hidden");
    c.decoder_hidden = j.at("decoder_hidden");
    c.word_embed_dim = j.at("word_embed_dim");
    c.vocab_size = j.at("vocab_size");
    c.n_keywords_meta = j.at("n_keywords_meta");
    c.n_keywords_caption = j.at("n_keywords_caption");
    c.n_length_classes = j.at("n_length_classes");
    c.length_embed_dim = j.at("length_embed_dim");
    c.lambda_kw = j.at("lambda_kw");
    c.lambda_len = j.at("lambda_len");
    c.lambda_cooc = j.at("lambda_cooc");
    c.max_decode_len = j.at("max_decode_len");
    const json& t = j.at("tasks");
    c.tasks.meta_keywords = t.at("meta_keywords");
    c.tasks.caption_keywords = t.at("caption_keywords");
    c.tasks.length = t.at("length");
    c.tasks.cooccurrence = t.at("cooccurrence");
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model config: ") + e.what());
  }
  c.Validate();
  return c;
}

int LengthClass(size_t n_tokens, int n_length_classes) {
  if (n_tokens == 0) throw ValidationError("caption length must be >= 1");
  return static_cast<int>(std::min<size_t>(n_tokens, n_length_classes)) - 1;
}

// ------------------------------------------------------- CooccurrenceTable

CooccurrenceTable CooccurrenceTable::Build(
    const Dataset& dataset, std::span<const std::vector<int>> clip_keywords,
    int n_keywords, const Vocabulary& vocab) {
  if (dataset.empty()) throw ValidationError("co-occurrence: empty dataset");
  if (clip_keywords.size() != dataset.size())
    throw ValidationError("co-occurrence: one keyword set per clip required");
  CooccurrenceTable t;
  t.allowed_.resize(static_cast<size_t>(n_keywords));
  t.vocab_size_ = vocab.size();
  for (size_t i = 0; i < dataset.size(); ++i) {
    for (int k : clip_keywords[i]) {
      auto& allowed = t.allowed_.at(static_cast<size_t>(k));
      for (const Tokens& cap : dataset[i].captions)
        for (const auto& w : cap)
          if (int id = vocab.IdOf(w); id >= Vocabulary::kNumReserved) allowed.insert(id);
    }
  }
  return t;
}

std::vector<uint8_t> CooccurrenceTable::ForbiddenMask(
    std::span<const int> active_keywords) const {
  std::vector<uint8_t> mask(static_cast<size_t>(vocab_size_), 0);
  if (active_keywords.empty()) return mask;
  std::vector<uint8_t> allowed(mask.size(), 0);
  for (int k : active_keywords)
    for (int w : allowed_.at(static_cast<size_t>(k))) allowed[w] = 1;
  for (int w = Vocabulary::kNumReserved; w < vocab_size_; ++w)
    mask[w] = allowed[w] ? 0 : 1;
  return mask;
}

// ------------------------------------------------------------ CaptionModel

CaptionModel::CaptionModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.Validate();
}

std::vector<std::pair<std::string, std::vector<size_t>>>
CaptionModel::ParamShapes() const {
  const auto u = [](int v) { return static_cast<size_t>(v); };
  const size_t a = u(cfg_.audio_embed_dim), e = u(cfg_.encoder_hidden),
               d = u(cfg_.decoder_hidden);
  const size_t enc_in = a + (cfg_.tasks.meta_keywords ? u(cfg_.meta_proj_dim) : 0);
  const size_t summary = 4 * e;
  const size_t init_in = summary + (cfg_.tasks.length ? u(cfg_.length_embed_dim) : 0);
  std::vector<std::pair<std::string, std::vector<size_t>>> s = {
      {"audio.w1", {u(cfg_.feature_dim), a}},
      {"audio.b1", {1, a}},
      {"audio.w2", {a, a}},
      {"audio.b2", {1, a}},
  };
  if (cfg_.tasks.meta_keywords) {
    const size_t k = u(cfg_.n_keywords_meta), p = u(cfg_.meta_proj_dim);
    s.push_back({"meta.w", {a, k}});
    s.push_back({"meta.b", {1, k}});
    s.push_back({"meta_proj.w", {k, p}});
    s.push_back({"meta_proj.b", {1, p}});
  }
  if (cfg_.tasks.caption_keywords) {
    const size_t k = u(cfg_.n_keywords_caption);
    s.push_back({"caption.w", {a, k}});
    s.push_back({"caption.b", {1, k}});
  }
  for (const char* dir : {"enc.fwd", "enc.bwd"}) {
    s.push_back({std::string(dir) + ".wx", {enc_in, 4 * e}});
    s.push_back({std::string(dir) + ".wh", {e, 4 * e}});
    s.push_back({std::string(dir) + ".b", {1, 4 * e}});
  }
  if (cfg_.tasks.length) {
    const size_t l = u(cfg_.n_length_classes);
    s.push_back({"length.w", {summary, l}});
    s.push_back({"length.b", {1, l}});
    s.push_back({"length.emb", {l, u(cfg_.length_embed_dim)}});
  }
  s.push_back({"init.wh", {init_in, d}});
  s.push_back({"init.bh", {1, d}});
  s.push_back({"init.wc", {init_in, d}});
  s.push_back({"init.bc", {1, d}});
  s.push_back({"dec.emb", {u(cfg_.vocab_size), u(cfg_.word_embed_dim)}});
  s.push_back({"dec.wx", {u(cfg_.word_embed_dim), 4 * d}});
  s.push_back({"dec.wh", {d, 4 * d}});
  s.push_back({"dec.b", {1, 4 * d}});
  s.push_back({"out.w", {d, u(cfg_.vocab_size)}});
  s.push_back({"out.b", {1, u(cfg_.vocab_size)}});
  return s;
}

ParamSet CaptionModel::ZeroParams() const {
  ParamSet ps;
  for (const auto& [name, shape] : ParamShapes()) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    ps.Add(name, Tensor(shape, std::vector<double>(n, 0.0)));
  }
  return ps;
}

ParamSet CaptionModel::InitParams(uint64_t seed) const {
  std::mt19937_64 rng(seed);
  ParamSet ps;
  for (const auto& [name, shape] : ParamShapes()) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    std::vector<double> values(n, 0.0);
    const bool is_bias = name.ends_with(".b") || name.ends_with(".b1") ||
                         name.ends_with(".b2") || name.ends_with(".bh") ||
                         name.ends_with(".bc");
    if (!is_bias) {
      const double scale = name.ends_with(".emb")
                               ? 0.1
                               : 1.0 / std::sqrt(static_cast<double>(shape[0]));
      std::uniform_real_distribution<double> dist(-scale, scale);
      for (double& v : values) v = dist(rng);
    } else if (name == "enc.fwd.b" || name == "enc.bwd.b" || name == "dec.b") {
      // Forget-gate bias 1.
      const size_t h = shape[1] / 4;
      for (size_t j = h; j < 2 * h; ++j) values[j] = 1.0;
    }
    ps.Add(name, Tensor(shape, std::move(values)));
  }
  return ps;
}

void CaptionModel::CheckParams(const ParamSet& params) const {
  const auto shapes = ParamShapes();
  for (const auto& [name, shape] : shapes) {
    if (!params.Has(name)) throw ValidationError("checkpoint lacks tensor " + name);
    if (params.value(name).shape() != shape)
      throw ValidationError("tensor " + name + " has shape " +
                            params.value(name).ShapeString() +
                            ", model config expects " + ShapeText(shape));
  }
  if (params.size() != shapes.size())
    throw ValidationError("checkpoint has tensors the model config does not use");
}

Tensor CaptionModel::MultiHot(std::span<const int> ids, int n) const {
  Tensor t(1, static_cast<size_t>(n));
  for (int id : ids) {
    if (id < 0 || id >= n)
      throw ValidationError("keyword id " + std::to_string(id) + " out of range");
    t[static_cast<size_t>(id)] = 1.0;
  }
  return t;
}

void CaptionModel::CheckExample(const CaptionExample& ex) const {
  if (ex.features.rows() != static_cast<size_t>(cfg_.n_frames) ||
      ex.features.cols() != static_cast<size_t>(cfg_.feature_dim))
    throw ValidationError("features " + ex.features.ShapeString() +
                          " do not match the configured " +
                          std::to_string(cfg_.n_frames) + "x" +
                          std::to_string(cfg_.feature_dim));
  if (ex.tokens.empty()) throw ValidationError("empty teacher caption");
  for (int id : ex.tokens)
    if (id < 0 || id >= cfg_.vocab_size)
      throw ValidationError("token id " + std::to_string(id) +
                            " >= vocabulary size " + std::to_string(cfg_.vocab_size));
}

namespace {

Var Affine(Tape& tape, ParamSet& params, Var x, const std::string& w,
           const std::string& b) {
  return ad::AddBias(ad::MatMul(x, tape.Param(params, w)), tape.Param(params, b));
}

}  // namespace

ModelOutputs CaptionModel::Forward(Tape& tape, ParamSet& params,
                                   const CaptionExample& ex,
                                   const MixupSpec* mix) const {
  CheckExample(ex);
  const CaptionExample* partner = mix ? mix->partner : nullptr;
  const double lambda = mix ? mix->lambda : 1.0;
  if (partner) {
    CheckExample(*partner);
    if (!(lambda >= 0.0 && lambda <= 1.0))
      throw ValidationError("mix-up lambda outside [0, 1]");
  }
  auto mixed = [&](const Tensor& a, const Tensor& b) {
    return partner ? MixTensors(a, b, lambda) : a;
  };

  ModelOutputs out;
  const size_t frames = static_cast<size_t>(cfg_.n_frames);

  // Audio embedding.
  Var x = tape.Constant(mixed(ex.features, partner ? partner->features : ex.features));
  Var a1 = ad::Tanh(Affine(tape, params, x, "audio.w1", "audio.b1"));
  Var a2 = ad::Tanh(Affine(tape, params, a1, "audio.w2", "audio.b2"));
  Var pooled = ad::MeanPool(a2);

  Var encoder_in = a2;
  if (cfg_.tasks.meta_keywords) {
    out.meta_probs = ad::Sigmoid(Affine(tape, params, pooled, "meta.w", "meta.b"));
    const Tensor own = MultiHot(ex.meta_keywords, cfg_.n_keywords_meta);
    out.meta_targets =
        partner ? mixed(own, MultiHot(partner->meta_keywords, cfg_.n_keywords_meta))
                : own;
    Var side = Affine(tape, params, tape.Constant(out.meta_targets), "meta_proj.w",
                      "meta_proj.b");
    Var parts[] = {a2, ad::BroadcastRows(side, frames)};
    encoder_in = ad::ConcatCols(parts);
  }
  if (cfg_.tasks.caption_keywords) {
    out.caption_probs =
        ad::Sigmoid(Affine(tape, params, pooled, "caption.w", "caption.b"));
    const Tensor own = MultiHot(ex.caption_keywords, cfg_.n_keywords_caption);
    out.caption_targets =
        partner ? mixed(own, MultiHot(partner->caption_keywords,
                                      cfg_.n_keywords_caption))
                : own;
  }

  // Encoder.
  const ad::BlstmVars enc = ad::Blstm(
      encoder_in, tape.Param(params, "enc.fwd.wx"), tape.Param(params, "enc.fwd.wh"),
      tape.Param(params, "enc.fwd.b"), tape.Param(params, "enc.bwd.wx"),
      tape.Param(params, "enc.bwd.wh"), tape.Param(params, "enc.bwd.b"));
  Var summary_parts[] = {ad::MeanPool(enc.outputs), enc.final_c_fwd, enc.final_c_bwd};
  Var summary = ad::ConcatCols(summary_parts);

  Var init_in = summary;
  if (cfg_.tasks.length) {
    out.length_logits = Affine(tape, params, summary, "length.w", "length.b");
    out.length_probs = ad::Softmax(out.length_logits);
    const int own_class = LengthClass(ex.tokens.size(), cfg_.n_length_classes);
    const int own_ids[] = {own_class};
    Var table = tape.Param(params, "length.emb");
    Var emb = ad::EmbeddingLookup(table, own_ids);
    out.length_targets = OneHotRows(own_ids, cfg_.n_length_classes);
    if (partner) {
      const int other_ids[] = {LengthClass(partner->tokens.size(), cfg_.n_length_classes)};
      emb = ad::Lerp(emb, ad::EmbeddingLookup(table, other_ids), lambda);
      out.length_targets =
          mixed(out.length_targets, OneHotRows(other_ids, cfg_.n_length_classes));
    }
    Var parts[] = {summary, emb};
    init_in = ad::ConcatCols(parts);
  }
  Var h = ad::Tanh(Affine(tape, params, init_in, "init.wh", "init.bh"));
  Var c = Affine(tape, params, init_in, "init.wc", "init.bc");

  // Decoder with teacher forcing.
  const size_t steps = ex.tokens.size() + 1;
  std::vector<int> inputs, targets;
  TeacherSequences(ex.tokens, steps, &inputs, &targets);
  Var emb_table = tape.Param(params, "dec.emb");
  Var embedded = ad::EmbeddingLookup(emb_table, inputs);
  out.word_targets = OneHotRows(targets, cfg_.vocab_size);
  if (partner) {
    std::vector<int> p_inputs, p_targets;
    TeacherSequences(partner->tokens, steps, &p_inputs, &p_targets);
    embedded = ad::Lerp(embedded, ad::EmbeddingLookup(emb_table, p_inputs), lambda);
    out.word_targets = mixed(out.word_targets, OneHotRows(p_targets, cfg_.vocab_size));
  }
  Var wx = tape.Param(params, "dec.wx");
  Var wh = tape.Param(params, "dec.wh");
  Var b = tape.Param(params, "dec.b");
  const size_t dh = static_cast<size_t>(cfg_.decoder_hidden);
  std::vector<Var> hs(steps);
  for (size_t n = 0; n < steps; ++n) {
    Var hc = ad::LstmCell(ad::SliceRows(embedded, n, 1), h, c, wx, wh, b);
    h = ad::SliceCols(hc, 0, dh);
    c = ad::SliceCols(hc, dh, dh);
    hs[n] = h;
  }
  out.word_logits = Affine(tape, params, ad::ConcatRows(hs), "out.w", "out.b");
  out.word_probs = ad::Softmax(out.word_logits);
  return out;
}

LossTerms CaptionModel::Loss(const ModelOutputs& out, const LossWeights& weights,
                             std::span<const uint8_t> forbidden) const {
  std::vector<Var> terms;
  std::vector<double> coeffs;
  LossTerms lt;
  Var word = ad::SoftmaxCrossEntropy(out.word_logits, out.word_targets);
  lt.word = word.scalar();
  terms.push_back(word);
  coeffs.push_back(1.0);
  if (cfg_.tasks.meta_keywords) {
    Var v = ad::WeightedBinaryCrossEntropy(out.meta_probs, out.meta_targets,
                                           weights.meta);
    lt.meta = v.scalar();
    terms.push_back(v);
    coeffs.push_back(cfg_.lambda_kw);
  }
  if (cfg_.tasks.caption_keywords) {
    Var v = ad::WeightedBinaryCrossEntropy(out.caption_probs, out.caption_targets,
                                           weights.caption);
    lt.caption = v.scalar();
    terms.push_back(v);
    coeffs.push_back(cfg_.lambda_kw);
  }
  if (cfg_.tasks.length) {
    Var v = ad::SoftmaxCrossEntropy(out.length_logits, out.length_targets);
    lt.length = v.scalar();
    terms.push_back(v);
    coeffs.push_back(cfg_.lambda_len);
  }
  if (cfg_.tasks.cooccurrence) {
    Var v = ad::MaskedMass(out.word_probs, forbidden);
    lt.cooc = v.scalar();
    terms.push_back(v);
    coeffs.push_back(cfg_.lambda_cooc);
  }
  lt.total = ad::WeightedSum(terms, coeffs);
  return lt;
}

EncodedInput CaptionModel::Encode(const ParamSet& params, const Tensor& features,
                                  std::span<const int> meta_keywords,
                                  KeywordMode mode,
                                  std::optional<int> length_class) const {
  if (features.rows() != static_cast<size_t>(cfg_.n_frames) ||
      features.cols() != static_cast<size_t>(cfg_.feature_dim))
    throw ValidationError("features " + features.ShapeString() +
                          " do not match the configured " +
                          std::to_string(cfg_.n_frames) + "x" +
                          std::to_string(cfg_.feature_dim));
  using namespace kernels;
  auto affine = [&](const Tensor& x, const char* w, const char* b) {
    return AddBias(MatMul(x, params.value(w)), params.value(b));
  };
  EncodedInput enc;
  const Tensor a1 = Tanh(affine(features, "audio.w1", "audio.b1"));
  const Tensor a2 = Tanh(affine(a1, "audio.w2", "audio.b2"));
  const Tensor pooled = MeanRows(a2);

  Tensor encoder_in = a2;
  if (cfg_.tasks.meta_keywords) {
    enc.meta_probs = Sigmoid(affine(pooled, "meta.w", "meta.b"));
    Tensor k;
    if (mode == KeywordMode::kMetadata) {
      k = MultiHot(meta_keywords, cfg_.n_keywords_meta);
    } else {
      k = Tensor(1, enc.meta_probs.cols());
      for (size_t i = 0; i < k.size(); ++i) k[i] = enc.meta_probs[i] >= 0.5 ? 1.0 : 0.0;
    }
    const Tensor side = affine(k, "meta_proj.w", "meta_proj.b");
    Tensor tiled(a2.rows(), side.cols());
    for (size_t r = 0; r < tiled.rows(); ++r)
      std::copy(side.data().begin(), side.data().end(), tiled.row(r).begin());
    const Tensor* parts[] = {&a2, &tiled};
    encoder_in = ConcatCols(parts);
  }

  const size_t hidden = static_cast<size_t>(cfg_.encoder_hidden);
  const size_t steps = encoder_in.rows();
  Tensor outputs(steps, 2 * hidden);
  Tensor final_c[2];
  for (int pass = 0; pass < 2; ++pass) {
    const std::string prefix = pass == 0 ? "enc.fwd" : "enc.bwd";
    const Tensor& wx = params.value(prefix + ".wx");
    const Tensor& wh = params.value(prefix + ".wh");
    const Tensor& b = params.value(prefix + ".b");
    Tensor h(1, hidden), c(1, hidden);
    for (size_t k = 0; k < steps; ++k) {
      const size_t t = pass == 0 ? k : steps - 1 - k;
      Tensor x(1, encoder_in.cols());
      std::copy(encoder_in.row(t).begin(), encoder_in.row(t).end(), x.data().begin());
      LstmCellResult r = LstmCell(x, h, c, wx, wh, b);
      h = std::move(r.h);
      c = std::move(r.c);
      std::copy(h.data().begin(), h.data().end(),
                outputs.row(t).begin() + (pass == 0 ? 0 : hidden));
    }
    final_c[pass] = std::move(c);
  }
  const Tensor mean_out = MeanRows(outputs);
  const Tensor* summary_parts[] = {&mean_out, &final_c[0], &final_c[1]};
  const Tensor summary = ConcatCols(summary_parts);

  Tensor init_in = summary;
  if (cfg_.tasks.length) {
    enc.length_probs = SoftmaxRows(affine(summary, "length.w", "length.b"));
    if (length_class) {
      enc.length_class = *length_class;
    } else {
      const auto row = enc.length_probs.data();
      enc.length_class =
          static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    const int ids[] = {enc.length_class};
    const Tensor emb = GatherRows(params.value("length.emb"), ids);
    const Tensor* parts[] = {&summary, &emb};
    init_in = ConcatCols(parts);
  }
  enc.initial.h = Tanh(affine(init_in, "init.wh", "init.bh"));
  enc.initial.c = affine(init_in, "init.wc", "init.bc");
  return enc;
}

DecoderState CaptionModel::Step(const ParamSet& params, const DecoderState& state,
                                int token, std::vector<double>* probs) const {
  if (token < 0 || token >= cfg_.vocab_size)
    throw ValidationError("token id " + std::to_string(token) + " out of range");
  using namespace kernels;
  const int ids[] = {token};
  const Tensor x = GatherRows(params.value("dec.emb"), ids);
  LstmCellResult r = LstmCell(x, state.h, state.c, params.value("dec.wx"),
                              params.value("dec.wh"), params.value("dec.b"));
  if (probs) {
    const Tensor p = SoftmaxRows(
        AddBias(MatMul(r.h, params.value("out.w")), params.value("out.b")));
    probs->assign(p.data().begin(), p.data().end());
  }
  return {std::move(r.h), std::move(r.c)};
}

// -------------------------------------------------------------- checkpoint

void SaveModelCheckpoint(const std::filesystem::path& dir, const ParamSet& params,
                         const ModelConfig& cfg, const std::string& extras_json) {
  CaptionModel(cfg).CheckParams(params);
  json meta = {{"model", json::parse(cfg.ToJson())},
               {"extras", json::parse(extras_json)}};
  SaveParams(dir, params, meta.dump());
}

LoadedModel LoadModelCheckpoint(const std::filesystem::path& dir) {
  LoadedParams lp = LoadParams(dir);
  LoadedModel out;
  const json meta = json::parse(lp.metadata_json);
  if (!meta.contains("model"))
    throw ValidationError("checkpoint manifest lacks a model config");
  out.config = ModelConfig::FromJson(meta.at("model").dump());
  out.extras_json = meta.value("extras", json::object()).dump();
  CaptionModel(out.config).CheckParams(lp.params);
  out.params = std::move(lp.params);
  return out;
}

}  // namespace cappipe
