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

// Micro-benchmarks of the hot paths: feature extraction, one training step,
// beam decoding and CIDEr-D scoring.

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "cappipe/audiofeat.h"
#include "cappipe/decode.h"
#include "cappipe/metrics.h"
#include "cappipe/model.h"

namespace cappipe {
namespace {

Tensor Noise(size_t rows, size_t cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = n(rng);
  return t;
}

ModelConfig BenchModel(int frames) {
  ModelConfig cfg;
  cfg.n_frames = frames;
  cfg.vocab_size = 1000;
  cfg.n_keywords_meta = 200;
  cfg.n_keywords_caption = 300;
  return cfg;
}

void BM_LogMel(benchmark::State& state) {
  FeatureConfig cfg;
  const size_t n = static_cast<size_t>(state.range(0) * cfg.sample_rate_hz);
  std::vector<double> signal(n);
  for (size_t i = 0; i < n; ++i) signal[i] = std::sin(0.01 * static_cast<double>(i * (i % 7 + 1)));
  for (auto _ : state) benchmark::DoNotOptimize(LogMel(signal, cfg));
  state.SetLabel(std::to_string(state.range(0)) + " s");
}
BENCHMARK(BM_LogMel)->Arg(1)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  const ModelConfig cfg = BenchModel(static_cast<int>(state.range(0)));
  const CaptionModel model(cfg);
  ParamSet params = model.InitParams(1);
  CaptionExample ex;
  ex.features = Noise(static_cast<size_t>(cfg.n_frames), static_cast<size_t>(cfg.feature_dim), 2);
  for (int i = 0; i < 12; ++i) ex.tokens.push_back(Vocabulary::kNumReserved + 7 * i);
  ex.meta_keywords = {1, 5, 9};
  ex.caption_keywords = {2, 3, 40};
  const LossWeights weights{std::vector<double>(200, 1.0), std::vector<double>(300, 1.0)};
  const std::vector<uint8_t> forbidden(1000, 0);
  for (auto _ : state) {
    Tape tape;
    const ModelOutputs out = model.Forward(tape, params, ex);
    tape.Backward(model.Loss(out, weights, forbidden).total);
    params.ZeroGrad();
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(100)->Arg(431)->Unit(benchmark::kMillisecond);

void BM_BeamSearch(benchmark::State& state) {
  const ModelConfig cfg = BenchModel(431);
  const CaptionModel model(cfg);
  const ParamSet params = model.InitParams(3);
  const Tensor features = Noise(431, static_cast<size_t>(cfg.feature_dim), 4);
  const std::vector<int> meta = {1, 5, 9};
  BeamConfig beam;
  beam.beam_size = static_cast<int>(state.range(0));
  beam.max_len = 20;
  for (auto _ : state) {
    ModelDecoderSession session(model, params, features, meta, KeywordMode::kMetadata);
    benchmark::DoNotOptimize(BeamSearch(session, beam));
  }
}
BENCHMARK(BM_BeamSearch)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_CiderD(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> word(0, 300), len(6, 14);
  auto sentence = [&] {
    Tokens t;
    for (int i = len(rng); i > 0; --i) t.push_back("w" + std::to_string(word(rng)));
    return t;
  };
  const size_t clips = static_cast<size_t>(state.range(0));
  std::vector<Tokens> cands;
  std::vector<References> refs(clips);
  for (size_t i = 0; i < clips; ++i) {
    cands.push_back(sentence());
    for (int r = 0; r < 5; ++r) refs[i].push_back(sentence());
  }
  for (auto _ : state) benchmark::DoNotOptimize(CiderD(cands, refs));
}
BENCHMARK(BM_CiderD)->Arg(100)->Arg(1045)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace cappipe

BENCHMARK_MAIN();
