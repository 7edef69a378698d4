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

#ifndef CAPPIPE_AUDIOFEAT_H_
#define CAPPIPE_AUDIOFEAT_H_

#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cappipe/tensor.h"

namespace cappipe {

struct FeatureConfig {
  double sample_rate_hz = 44100.0;
  int fft_size = 1024;
  int hop_size = 512;
  int n_mels = 64;
  double fmin_hz = 0.0;
  double fmax_hz = 0.0;  // 0 means sample_rate / 2
  double log_floor = 1e-10;

  double EffectiveFmax() const;
  int NumBins() const { return fft_size / 2 + 1; }
  // Throws ValidationError on an inconsistent configuration.
  void Validate() const;
  // Frame count of a signal lasting `seconds`.
  int FramesForSeconds(double seconds) const;
  double FrameRateHz() const { return sample_rate_hz / hop_size; }
};

// T x F time-major log-mel (or synthetic) features.
struct FeatureMatrix {
  Tensor frames;
  double frame_rate_hz = 0.0;
  std::string source_id;

  size_t num_frames() const { return frames.rows(); }
  size_t num_features() const { return frames.cols(); }
};

enum class Window { kHann, kRectangular };

// Power spectrogram |FFT|^2 of hop-strided windowed frames:
// T = 1 + floor((len - fft) / hop) rows, fft/2 + 1 columns.
Tensor StftPower(std::span<const double> signal, const FeatureConfig& cfg,
                 Window window = Window::kHann);

// n_mels x (fft/2 + 1) triangular filters on m = 2595 log10(1 + f / 700).
Tensor MelFilterbank(const FeatureConfig& cfg);

// ln(max(mel * power, log_floor)), F = n_mels.
FeatureMatrix LogMel(std::span<const double> signal, const FeatureConfig& cfg);

// Longer inputs get a uniformly random contiguous window, shorter ones are
// zero-padded at the end, equal lengths pass through untouched.
FeatureMatrix CropOrPad(const FeatureMatrix& feat, size_t target_frames,
                        std::mt19937_64& rng);

// Feature file: "CAPF", u32 version (1), u32 T, u32 F, then T*F
// little-endian f32 row-major. Values are rounded to f32 on write.
void WriteFeatures(const std::filesystem::path& path, const FeatureMatrix& feat);
FeatureMatrix ReadFeatures(const std::filesystem::path& path);

struct WavAudio {
  int sample_rate = 0;
  std::vector<double> samples;  // mono, [-1, 1)
};

// RIFF PCM16 only; multichannel input is averaged to mono.
WavAudio ReadWav(const std::filesystem::path& path);
void WriteWav(const std::filesystem::path& path, std::span<const double> samples,
              int sample_rate);

// Rounds every entry to the nearest f32, i.e. what a feature file stores.
void QuantizeToFloat(FeatureMatrix& feat);

// Features of a clip file: .capf files are read directly, anything else is
// decoded as WAV and run through LogMel (the WAV rate overrides cfg's) and
// quantized like a feature file, so both sources give identical matrices.
FeatureMatrix LoadClipFeatures(const std::filesystem::path& path,
                               const FeatureConfig& cfg);

}  // namespace cappipe

#endif  // CAPPIPE_AUDIOFEAT_H_
