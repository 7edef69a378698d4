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

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <numbers>

#include "cappipe/errors.h"

namespace cappipe {

namespace {

// The FFTW planner is not thread-safe; execution on distinct plans is.
std::mutex& PlannerMutex() {
  static std::mutex m;
  return m;
}

struct FftwDeleter {
  void operator()(void* p) const { fftw_free(p); }
};

class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    in_.reset(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
    out_.reset(static_cast<fftw_complex*>(
        fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1))));
    std::lock_guard<std::mutex> lock(PlannerMutex());
    plan_ = fftw_plan_dft_r2c_1d(n, in_.get(), out_.get(), FFTW_ESTIMATE);
    if (plan_ == nullptr) throw RuntimeFailure("fftw planning failed");
  }
  ~RealFft() {
    std::lock_guard<std::mutex> lock(PlannerMutex());
    fftw_destroy_plan(plan_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_.get(); }
  // Computes |X_k|^2 for k = 0..n/2 into `power`.
  void Power(std::span<double> power) {
    fftw_execute(plan_);
    for (int k = 0; k <= n_ / 2; ++k) {
      const double re = out_.get()[k][0];
      const double im = out_.get()[k][1];
      power[k] = re * re + im * im;
    }
  }

 private:
  int n_;
  std::unique_ptr<double, FftwDeleter> in_;
  std::unique_ptr<fftw_complex, FftwDeleter> out_;
  fftw_plan plan_ = nullptr;
};

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

constexpr char kMagic[4] = {'C', 'A', 'P', 'F'};
constexpr uint32_t kVersion = 1;

void PutU32(std::vector<unsigned char>& buf, uint32_t v) {
  for (int b = 0; b < 4; ++b) buf.push_back(static_cast<unsigned char>(v >> (8 * b)));
}

uint32_t GetU32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

uint16_t GetU16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

std::vector<unsigned char> ReadAll(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

double FeatureConfig::EffectiveFmax() const {
  return fmax_hz > 0.0 ? fmax_hz : sample_rate_hz / 2.0;
}

void FeatureConfig::Validate() const {
  if (!(sample_rate_hz > 0.0)) throw ValidationError("sample rate must be > 0");
  if (fft_size < 2) throw ValidationError("fft_size must be >= 2");
  if (hop_size < 1 || hop_size > fft_size)
    throw ValidationError("hop_size must be in [1, fft_size]");
  if (n_mels < 1) throw ValidationError("n_mels must be >= 1");
  if (!(fmin_hz >= 0.0 && fmin_hz < EffectiveFmax() &&
        EffectiveFmax() <= sample_rate_hz / 2.0))
    throw ValidationError("need 0 <= fmin < fmax <= sample_rate / 2");
  if (!(log_floor > 0.0)) throw ValidationError("log_floor must be > 0");
}

int FeatureConfig::FramesForSeconds(double seconds) const {
  const double samples = std::floor(seconds * sample_rate_hz);
  if (samples < fft_size) return 1;
  return 1 + static_cast<int>((samples - fft_size) / hop_size);
}

Tensor StftPower(std::span<const double> signal, const FeatureConfig& cfg,
                 Window window) {
  cfg.Validate();
  const size_t n = static_cast<size_t>(cfg.fft_size);
  if (signal.size() < n)
    throw ValidationError("stft: signal of " + std::to_string(signal.size()) +
                          " samples is shorter than fft_size " +
                          std::to_string(n));
  const size_t hop = static_cast<size_t>(cfg.hop_size);
  const size_t frames = 1 + (signal.size() - n) / hop;
  std::vector<double> win(n, 1.0);
  if (window == Window::kHann) {
    // Periodic Hann.
    for (size_t i = 0; i < n; ++i)
      win[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  }
  RealFft fft(cfg.fft_size);
  Tensor out(frames, n / 2 + 1);
  for (size_t t = 0; t < frames; ++t) {
    const double* src = signal.data() + t * hop;
    for (size_t i = 0; i < n; ++i) fft.input()[i] = src[i] * win[i];
    fft.Power(out.row(t));
  }
  return out;
}

Tensor MelFilterbank(const FeatureConfig& cfg) {
  cfg.Validate();
  const int bins = cfg.NumBins();
  const int m = cfg.n_mels;
  const double mel_lo = HzToMel(cfg.fmin_hz);
  const double mel_hi = HzToMel(cfg.EffectiveFmax());
  std::vector<double> edges(m + 2);
  for (int i = 0; i < m + 2; ++i)
    edges[i] = MelToHz(mel_lo + (mel_hi - mel_lo) * i / (m + 1));
  Tensor fb(m, bins);
  for (int f = 0; f < m; ++f) {
    const double lo = edges[f], mid = edges[f + 1], hi = edges[f + 2];
    bool any = false;
    for (int k = 0; k < bins; ++k) {
      const double hz = k * cfg.sample_rate_hz / cfg.fft_size;
      double w = 0.0;
      if (hz > lo && hz <= mid) {
        w = (hz - lo) / (mid - lo);
      } else if (hz > mid && hz < hi) {
        w = (hi - hz) / (hi - mid);
      }
      fb(f, k) = w;
      any = any || w > 0.0;
    }
    if (!any)
      throw ValidationError("n_mels=" + std::to_string(m) +
                            " is too large for fft_size=" +
                            std::to_string(cfg.fft_size) + ": filter " +
                            std::to_string(f) + " covers no FFT bin");
  }
  return fb;
}

FeatureMatrix LogMel(std::span<const double> signal, const FeatureConfig& cfg) {
  const Tensor power = StftPower(signal, cfg);
  const Tensor fb = MelFilterbank(cfg);
  FeatureMatrix out;
  out.frames = Tensor(power.rows(), fb.rows());
  out.frame_rate_hz = cfg.FrameRateHz();
  // Each triangle is nonzero on a short bin range only.
  std::vector<std::pair<size_t, size_t>> support(fb.rows(), {0, 0});
  for (size_t f = 0; f < fb.rows(); ++f) {
    size_t lo = fb.cols(), hi = 0;
    for (size_t k = 0; k < fb.cols(); ++k) {
      if (fb(f, k) != 0.0) {
        lo = std::min(lo, k);
        hi = k + 1;
      }
    }
    if (lo < hi) support[f] = {lo, hi};
  }
  for (size_t t = 0; t < power.rows(); ++t) {
    for (size_t f = 0; f < fb.rows(); ++f) {
      double e = 0.0;
      for (size_t k = support[f].first; k < support[f].second; ++k) e += fb(f, k) * power(t, k);
      out.frames(t, f) = std::log(std::max(e, cfg.log_floor));
    }
  }
  return out;
}

FeatureMatrix CropOrPad(const FeatureMatrix& feat, size_t target_frames,
                        std::mt19937_64& rng) {
  if (target_frames < 1) throw ValidationError("crop_or_pad: target must be >= 1");
  const size_t t = feat.num_frames();
  if (t == target_frames) return feat;
  FeatureMatrix out;
  out.frame_rate_hz = feat.frame_rate_hz;
  out.source_id = feat.source_id;
  out.frames = Tensor(target_frames, feat.num_features());
  size_t start = 0;
  size_t count = t;
  if (t > target_frames) {
    std::uniform_int_distribution<size_t> dist(0, t - target_frames);
    start = dist(rng);
    count = target_frames;
  }
  auto src = feat.frames.data().subspan(start * feat.num_features(),
                                        count * feat.num_features());
  std::copy(src.begin(), src.end(), out.frames.data().begin());
  return out;
}

void WriteFeatures(const std::filesystem::path& path, const FeatureMatrix& feat) {
  if (feat.frames.rank() != 2 || feat.num_frames() == 0 || feat.num_features() == 0)
    throw ValidationError("write_features: empty feature matrix");
  std::vector<unsigned char> buf(kMagic, kMagic + 4);
  PutU32(buf, kVersion);
  PutU32(buf, static_cast<uint32_t>(feat.num_frames()));
  PutU32(buf, static_cast<uint32_t>(feat.num_features()));
  for (double v : feat.frames.data()) PutU32(buf, std::bit_cast<uint32_t>(static_cast<float>(v)));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
  if (!os) throw RuntimeFailure("write failed: " + path.string());
}

FeatureMatrix ReadFeatures(const std::filesystem::path& path) {
  const auto buf = ReadAll(path);
  if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
    throw RuntimeFailure(path.string() + ": not a feature file");
  if (buf.size() < 16) throw RuntimeFailure(path.string() + ": truncated header");
  const uint32_t version = GetU32(buf.data() + 4);
  if (version != kVersion)
    throw RuntimeFailure(path.string() + ": unsupported feature file version " +
                         std::to_string(version));
  const uint64_t t = GetU32(buf.data() + 8);
  const uint64_t f = GetU32(buf.data() + 12);
  if (t == 0 || f == 0) throw RuntimeFailure(path.string() + ": empty feature matrix");
  if (buf.size() - 16 != t * f * 4)
    throw RuntimeFailure(path.string() + ": truncated payload (expected " +
                         std::to_string(t * f * 4) + " bytes, found " +
                         std::to_string(buf.size() - 16) + ")");
  FeatureMatrix out;
  out.frames = Tensor(t, f);
  for (size_t i = 0; i < t * f; ++i)
    out.frames[i] = std::bit_cast<float>(GetU32(buf.data() + 16 + 4 * i));
  out.source_id = path.filename().string();
  return out;
}

WavAudio ReadWav(const std::filesystem::path& path) {
  const auto buf = ReadAll(path);
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw ValidationError(path.string() + ": not a RIFF/WAVE file");
  int channels = 0, rate = 0, bits = 0, format = 0;
  const unsigned char* data = nullptr;
  size_t data_size = 0;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const unsigned char* chunk = buf.data() + pos;
    const uint32_t size = GetU32(chunk + 4);
    const size_t body = pos + 8;
    if (body + size > buf.size()) {
      if (std::memcmp(chunk, "data", 4) == 0) {
        throw ValidationError(path.string() + ": truncated data chunk");
      }
      break;
    }
    if (std::memcmp(chunk, "fmt ", 4) == 0 && size >= 16) {
      format = GetU16(buf.data() + body);
      channels = GetU16(buf.data() + body + 2);
      rate = static_cast<int>(GetU32(buf.data() + body + 4));
      bits = GetU16(buf.data() + body + 14);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = buf.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1);
  }
  if (format != 1 || bits != 16 || channels < 1)
    throw ValidationError(path.string() + ": only 16-bit PCM WAV is supported");
  if (data == nullptr) throw ValidationError(path.string() + ": no data chunk");
  const size_t frames = data_size / (2 * static_cast<size_t>(channels));
  WavAudio out;
  out.sample_rate = rate;
  out.samples.resize(frames);
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const auto s = static_cast<int16_t>(GetU16(data + 2 * (i * channels + c)));
      acc += s / 32768.0;
    }
    out.samples[i] = acc / channels;
  }
  return out;
}

void WriteWav(const std::filesystem::path& path, std::span<const double> samples,
              int sample_rate) {
  std::vector<unsigned char> buf;
  const uint32_t data_bytes = static_cast<uint32_t>(samples.size() * 2);
  auto put_tag = [&](const char* tag) { buf.insert(buf.end(), tag, tag + 4); };
  auto put_u16 = [&](uint16_t v) {
    buf.push_back(static_cast<unsigned char>(v & 0xff));
    buf.push_back(static_cast<unsigned char>(v >> 8));
  };
  put_tag("RIFF");
  PutU32(buf, 36 + data_bytes);
  put_tag("WAVE");
  put_tag("fmt ");
  PutU32(buf, 16);
  put_u16(1);
  put_u16(1);
  PutU32(buf, static_cast<uint32_t>(sample_rate));
  PutU32(buf, static_cast<uint32_t>(sample_rate * 2));
  put_u16(2);
  put_u16(16);
  put_tag("data");
  PutU32(buf, data_bytes);
  for (double s : samples) {
    const double clamped = std::clamp(s, -1.0, 32767.0 / 32768.0);
    const auto v = static_cast<int16_t>(std::lround(clamped * 32768.0));
    put_u16(static_cast<uint16_t>(v));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RuntimeFailure("cannot write " + path.string());
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
}

void QuantizeToFloat(FeatureMatrix& feat) {
  for (double& v : feat.frames.data()) v = static_cast<float>(v);
}

FeatureMatrix LoadClipFeatures(const std::filesystem::path& path,
                               const FeatureConfig& cfg) {
  if (path.extension() == ".capf") return ReadFeatures(path);
  const WavAudio wav = ReadWav(path);
  FeatureConfig local = cfg;
  local.sample_rate_hz = wav.sample_rate;
  FeatureMatrix feat = LogMel(wav.samples, local);
  feat.source_id = path.filename().string();
  QuantizeToFloat(feat);
  return feat;
}

}  // namespace cappipe
