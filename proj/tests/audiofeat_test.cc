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

#include "cappipe/audiofeat.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <random>

#include "cappipe/errors.h"
#include "test_util.h"

namespace cappipe {
namespace {

std::vector<double> Noise(size_t n, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.3);
  std::vector<double> x(n);
  for (double& v : x) v = g(rng);
  return x;
}

FeatureConfig SmallConfig() {
  FeatureConfig cfg;
  cfg.sample_rate_hz = 16000;
  cfg.fft_size = 256;
  cfg.hop_size = 128;
  cfg.n_mels = 20;
  return cfg;
}

TEST(FeatureConfig, Validation) {
  FeatureConfig cfg;
  EXPECT_NO_THROW(cfg.Validate());
  EXPECT_EQ(cfg.EffectiveFmax(), 22050.0);
  cfg.hop_size = 2048;
  EXPECT_THROW(cfg.Validate(), ValidationError);
  cfg = FeatureConfig{};
  cfg.fmin_hz = 30000;
  EXPECT_THROW(cfg.Validate(), ValidationError);
  cfg = FeatureConfig{};
  cfg.log_floor = 0.0;
  EXPECT_THROW(cfg.Validate(), ValidationError);
}

TEST(Stft, ShapeAndZeroSignal) {
  const FeatureConfig cfg = SmallConfig();
  const std::vector<double> zero(1000, 0.0);
  const Tensor p = StftPower(zero, cfg);
  EXPECT_EQ(p.rows(), 1u + (1000 - 256) / 128);
  EXPECT_EQ(p.cols(), 129u);
  for (double v : p.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(StftPower(std::vector<double>(255, 0.0), cfg), ValidationError);
}

TEST(Stft, BinCenteredSinePeaksAtItsBin) {
  const FeatureConfig cfg = SmallConfig();
  for (int k : {1, 7, 40, 127}) {
    std::vector<double> x(1024);
    for (size_t n = 0; n < x.size(); ++n)
      x[n] = std::sin(2.0 * std::numbers::pi * k * static_cast<double>(n) / cfg.fft_size);
    const Tensor p = StftPower(x, cfg, Window::kRectangular);
    for (size_t t = 0; t < p.rows(); ++t) {
      size_t arg = 0;
      for (size_t b = 1; b < p.cols(); ++b)
        if (p(t, b) > p(t, arg)) arg = b;
      EXPECT_EQ(arg, static_cast<size_t>(k));
    }
  }
}

TEST(Stft, ParsevalOnNoiseFrames) {
  const FeatureConfig cfg = SmallConfig();
  const size_t n = cfg.fft_size;
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    const std::vector<double> x = Noise(2048, seed);
    const Tensor p = StftPower(x, cfg, Window::kRectangular);
    for (size_t t = 0; t < p.rows(); ++t) {
      double energy = 0.0;
      for (size_t i = 0; i < n; ++i) energy += x[t * cfg.hop_size + i] * x[t * cfg.hop_size + i];
      // One-sided spectrum: interior bins stand for two conjugate bins.
      double spectral = p(t, 0) + p(t, n / 2);
      for (size_t b = 1; b < n / 2; ++b) spectral += 2.0 * p(t, b);
      EXPECT_NEAR(spectral / static_cast<double>(n), energy, 1e-6 * energy);
    }
  }
}

TEST(MelFilterbank, ShapeAndConstruction) {
  FeatureConfig cfg;
  const Tensor m = MelFilterbank(cfg);
  EXPECT_EQ(m.shape(), (std::vector<size_t>{64, 513}));
  double prev_centroid = -1.0;
  for (size_t r = 0; r < m.rows(); ++r) {
    double sum = 0.0, moment = 0.0;
    for (size_t b = 0; b < m.cols(); ++b) {
      EXPECT_GE(m(r, b), 0.0);
      sum += m(r, b);
      moment += m(r, b) * static_cast<double>(b);
    }
    EXPECT_GT(sum, 0.0) << "filter " << r;
    const double centroid = moment / sum;
    EXPECT_GT(centroid, prev_centroid) << "filter " << r;
    prev_centroid = centroid;
  }
  FeatureConfig tiny = SmallConfig();
  tiny.fft_size = 32;
  tiny.hop_size = 16;
  tiny.n_mels = 128;
  EXPECT_THROW(MelFilterbank(tiny), ValidationError);
}

TEST(LogMel, ZeroSignalIsFloor) {
  const FeatureConfig cfg = SmallConfig();
  const FeatureMatrix f = LogMel(std::vector<double>(800, 0.0), cfg);
  EXPECT_EQ(f.num_features(), 20u);
  for (double v : f.frames.data()) EXPECT_EQ(v, std::log(cfg.log_floor));
}

TEST(LogMel, DoublingAmplitudeAddsLnFour) {
  const FeatureConfig cfg = SmallConfig();
  std::vector<double> x = Noise(3000, 4);
  const FeatureMatrix a = LogMel(x, cfg);
  for (double& v : x) v *= 2.0;
  const FeatureMatrix b = LogMel(x, cfg);
  const double floor = std::log(cfg.log_floor);
  for (size_t i = 0; i < a.frames.size(); ++i)
    if (a.frames[i] > floor) {
      EXPECT_NEAR(b.frames[i] - a.frames[i], std::log(4.0), 1e-12);
    }
}

TEST(LogMel, OneHopShiftShiftsInteriorFrames) {
  const FeatureConfig cfg = SmallConfig();
  const std::vector<double> x = Noise(4000, 5);
  std::vector<double> shifted(cfg.hop_size, 0.0);
  shifted.insert(shifted.end(), x.begin(), x.end());
  const FeatureMatrix a = LogMel(x, cfg), b = LogMel(shifted, cfg);
  ASSERT_EQ(b.num_frames(), a.num_frames() + 1);
  for (size_t t = 1; t + 1 < a.num_frames(); ++t)
    for (size_t j = 0; j < a.num_features(); ++j) EXPECT_EQ(b.frames(t + 1, j), a.frames(t, j));
}

FeatureMatrix Ramp(size_t rows, size_t cols) {
  FeatureMatrix f;
  f.frames = Tensor(rows, cols);
  for (size_t i = 0; i < f.frames.size(); ++i) f.frames[i] = static_cast<double>(i + 1);
  return f;
}

TEST(CropOrPad, PadCropIdentity) {
  std::mt19937_64 rng(1);
  const FeatureMatrix f = Ramp(100, 3);
  const FeatureMatrix padded = CropOrPad(f, 150, rng);
  ASSERT_EQ(padded.num_frames(), 150u);
  for (size_t t = 0; t < 150; ++t)
    for (size_t j = 0; j < 3; ++j) EXPECT_EQ(padded.frames(t, j), t < 100 ? f.frames(t, j) : 0.0);
  EXPECT_EQ(CropOrPad(f, 100, rng).frames, f.frames);
}

TEST(CropOrPad, CropStartIsUniform) {
  std::mt19937_64 rng(2);
  const FeatureMatrix f = Ramp(200, 1);
  std::vector<int> hist(51, 0);
  const int draws = 51000;
  for (int i = 0; i < draws; ++i) {
    const FeatureMatrix c = CropOrPad(f, 150, rng);
    ASSERT_EQ(c.num_frames(), 150u);
    const int start = static_cast<int>(c.frames(0, 0)) - 1;
    ASSERT_GE(start, 0);
    ASSERT_LE(start, 50);
    for (size_t t = 1; t < 150; ++t) ASSERT_EQ(c.frames(t, 0), c.frames(0, 0) + t);
    ++hist[start];
  }
  for (int h : hist) EXPECT_NEAR(h / static_cast<double>(draws), 1.0 / 51.0, 0.004);
}

TEST(CropOrPad, AlwaysTargetRows) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<size_t> len(1, 60);
  for (int i = 0; i < 300; ++i) {
    const size_t target = len(rng);
    EXPECT_EQ(CropOrPad(Ramp(len(rng), 2), target, rng).num_frames(), target);
  }
}

TEST(FeatureFile, RoundTripIsBitExact) {
  const auto dir = testing::TempDir("capf");
  FeatureMatrix f = LogMel(Noise(3000, 6), SmallConfig());
  QuantizeToFloat(f);
  WriteFeatures(dir / "a.capf", f);
  const FeatureMatrix g = ReadFeatures(dir / "a.capf");
  ASSERT_EQ(g.frames.shape(), f.frames.shape());
  for (size_t i = 0; i < f.frames.size(); ++i)
    EXPECT_EQ(std::bit_cast<uint64_t>(g.frames[i]), std::bit_cast<uint64_t>(f.frames[i]));
}

std::string ReadError(const std::filesystem::path& p) {
  try {
    ReadFeatures(p);
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

TEST(FeatureFile, DistinctErrors) {
  const auto dir = testing::TempDir("capf_bad");
  WriteFeatures(dir / "ok.capf", Ramp(4, 3));
  const std::string bytes = testing::ReadFile(dir / "ok.capf");
  ASSERT_EQ(bytes.size(), 16u + 4 * 3 * 4);

  testing::WriteFile(dir / "magic.capf", "XAPF" + bytes.substr(4));
  EXPECT_NE(ReadError(dir / "magic.capf").find("not a feature file"), std::string::npos);

  std::string v2 = bytes;
  v2[4] = 2;
  testing::WriteFile(dir / "version.capf", v2);
  const std::string ver = ReadError(dir / "version.capf");
  EXPECT_NE(ver.find("version"), std::string::npos) << ver;

  testing::WriteFile(dir / "trunc.capf", bytes.substr(0, bytes.size() - 5));
  EXPECT_NE(ReadError(dir / "trunc.capf").find("truncated"), std::string::npos);
  testing::WriteFile(dir / "header.capf", bytes.substr(0, 10));
  EXPECT_NE(ReadError(dir / "header.capf").find("truncated"), std::string::npos);
  EXPECT_NE(ReadError(dir / "none.capf"), "");
}

void PutU32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void PutU16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

TEST(Wav, RoundTripAndStereoAverage) {
  const auto dir = testing::TempDir("wav");
  std::vector<double> x = Noise(500, 7);
  for (double& v : x) v = std::clamp(v, -1.0, 0.99);
  WriteWav(dir / "m.wav", x, 8000);
  const WavAudio w = ReadWav(dir / "m.wav");
  EXPECT_EQ(w.sample_rate, 8000);
  ASSERT_EQ(w.samples.size(), x.size());
  for (size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(w.samples[i], x[i], 1.0 / 32768.0);

  // Hand-built stereo file: left 16384, right -8192 -> mean 4096 / 32768.
  std::string data;
  for (int i = 0; i < 4; ++i) {
    PutU16(data, 16384);
    PutU16(data, static_cast<uint16_t>(-8192));
  }
  std::string riff = "RIFF";
  PutU32(riff, 36 + static_cast<uint32_t>(data.size()));
  riff += "WAVEfmt ";
  PutU32(riff, 16);
  PutU16(riff, 1);
  PutU16(riff, 2);
  PutU32(riff, 8000);
  PutU32(riff, 8000 * 4);
  PutU16(riff, 4);
  PutU16(riff, 16);
  riff += "data";
  PutU32(riff, static_cast<uint32_t>(data.size()));
  testing::WriteFile(dir / "s.wav", riff + data);
  const WavAudio s = ReadWav(dir / "s.wav");
  ASSERT_EQ(s.samples.size(), 4u);
  for (double v : s.samples) EXPECT_EQ(v, 4096.0 / 32768.0);

  testing::WriteFile(dir / "junk.wav", "not a wav file at all");
  EXPECT_ANY_THROW(ReadWav(dir / "junk.wav"));
}

TEST(LoadClipFeatures, WavAndFeatureFileAgree) {
  const auto dir = testing::TempDir("clipfeat");
  WriteWav(dir / "c.wav", Noise(4000, 8), 16000);
  const FeatureConfig cfg = SmallConfig();
  const FeatureMatrix from_wav = LoadClipFeatures(dir / "c.wav", cfg);
  WriteFeatures(dir / "c.capf", from_wav);
  const FeatureMatrix from_capf = LoadClipFeatures(dir / "c.capf", cfg);
  EXPECT_EQ(from_wav.frames, from_capf.frames);
  EXPECT_EQ(from_wav.num_features(), 20u);
}

}  // namespace
}  // namespace cappipe
