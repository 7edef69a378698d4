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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "cappipe/csv.h"
#include "cappipe/errors.h"
#include "cappipe/harness.h"

namespace cappipe {

namespace fs = std::filesystem;

namespace {

enum class Primitive { kBursts, kChirps, kSweep, kBell, kNoise, kHum, kGusts, kSiren, kTicks, kBeeps };

struct EventType {
  const char* noun;
  const char* plural;
  const char* verb_s;    // "barks"
  const char* verb_ing;  // "barking"
  const char* lemma_verb;
  Primitive primitive;
  double freq_hz;  // characteristic frequency, scaled below Nyquist
};

constexpr EventType kEvents[] = {
    {"dog", "dogs", "barks", "barking", "bark", Primitive::kBursts, 600.0},
    {"bird", "birds", "sings", "singing", "sing", Primitive::kChirps, 2500.0},
    {"car", "cars", "passes", "passing", "pass", Primitive::kSweep, 180.0},
    {"bell", "bells", "rings", "ringing", "ring", Primitive::kBell, 880.0},
    {"stream", "streams", "flows", "flowing", "flow", Primitive::kNoise, 1200.0},
    {"engine", "engines", "hums", "humming", "hum", Primitive::kHum, 110.0},
    {"wind", "winds", "blows", "blowing", "blow", Primitive::kGusts, 400.0},
    {"siren", "sirens", "wails", "wailing", "wail", Primitive::kSiren, 1000.0},
    {"clock", "clocks", "ticks", "ticking", "tick", Primitive::kTicks, 3000.0},
    {"alarm", "alarms", "beeps", "beeping", "beep", Primitive::kBeeps, 1500.0},
};
constexpr int kNumEvents = static_cast<int>(std::size(kEvents));

constexpr const char* kPlaces[] = {"nearby", "outside", "in the distance"};
constexpr const char* kAdjectives[] = {"loud", "quiet", "distant"};

// Adds one event rendering into `out` over [start, start + len).
void Render(const EventType& e, double nyquist, size_t start, size_t len,
            double sr, double amp, std::mt19937_64& rng, std::vector<double>& out) {
  const double pi = std::numbers::pi;
  const double f0 = std::min(e.freq_hz, 0.8 * nyquist);
  std::normal_distribution<double> noise(0.0, 1.0);
  double phase = 0.0;
  double lp = 0.0;  // one-pole low-pass state for noise colouring
  const double alpha = std::clamp(f0 / nyquist, 0.02, 0.98);
  for (size_t k = 0; k < len && start + k < out.size(); ++k) {
    const double t = static_cast<double>(k) / sr;
    const double env = std::min({1.0, t / 0.02, (len - k) / (0.02 * sr)});
    double v = 0.0;
    switch (e.primitive) {
      case Primitive::kBursts: {  // noise bursts at 3 Hz
        const double gate = std::fmod(t * 3.0, 1.0) < 0.3 ? 1.0 : 0.0;
        lp += alpha * (noise(rng) - lp);
        v = gate * (lp * 2.0 + 0.5 * std::sin(2 * pi * f0 * t));
        break;
      }
      case Primitive::kChirps: {  // upward chirps every 0.25 s
        const double u = std::fmod(t, 0.25);
        phase += 2 * pi * f0 * (1.0 + 2.0 * u) / sr;
        v = u < 0.15 ? std::sin(phase) : 0.0;
        break;
      }
      case Primitive::kSweep: {  // slow rising then falling tone plus rumble
        const double x = t / (len / sr);
        phase += 2 * pi * f0 * (1.0 + 1.5 * std::sin(pi * x)) / sr;
        lp += 0.05 * (noise(rng) - lp);
        v = std::sin(phase) + 1.5 * lp;
        break;
      }
      case Primitive::kBell: {  // decaying partials every second
        const double u = std::fmod(t, 1.0);
        v = std::exp(-4.0 * u) * (std::sin(2 * pi * f0 * t) +
                                  0.5 * std::sin(2 * pi * std::min(2.76 * f0, 0.9 * nyquist) * t));
        break;
      }
      case Primitive::kNoise:
        lp += alpha * (noise(rng) - lp);
        v = 1.5 * lp;
        break;
      case Primitive::kHum:
        v = std::sin(2 * pi * f0 * t) + 0.5 * std::sin(4 * pi * f0 * t) +
            0.25 * std::sin(6 * pi * f0 * t);
        break;
      case Primitive::kGusts:  // noise with a 0.3 Hz swell
        lp += alpha * (noise(rng) - lp);
        v = (0.6 + 0.4 * std::sin(2 * pi * 0.3 * t)) * 2.0 * lp;
        break;
      case Primitive::kSiren:  // tone wobbling around f0
        phase += 2 * pi * f0 * (1.0 + 0.3 * std::sin(2 * pi * 0.5 * t)) / sr;
        v = std::sin(phase);
        break;
      case Primitive::kTicks: {  // 2 Hz clicks
        const double u = std::fmod(t, 0.5);
        v = u < 0.004 ? std::sin(2 * pi * f0 * u) * (1.0 - u / 0.004) * 3.0 : 0.0;
        break;
      }
      case Primitive::kBeeps: {  // 4 Hz on/off tone
        v = std::fmod(t * 4.0, 1.0) < 0.5 ? std::sin(2 * pi * f0 * t) : 0.0;
        break;
      }
    }
    out[start + k] += amp * env * v;
  }
}

std::string Sentence(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) s += (s.empty() ? "" : " ") + w;
  return s;
}

// Five paraphrases of the event list.
std::array<std::string, 5> Captions(const std::vector<int>& ev, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick3(0, 2);
  const auto& e0 = kEvents[ev[0]];
  std::array<std::string, 5> caps;
  std::vector<std::string> w;

  // 1: "a dog barks and a bird sings"
  for (size_t i = 0; i < ev.size(); ++i) {
    if (i) w.push_back("and");
    w.insert(w.end(), {"a", kEvents[ev[i]].noun, kEvents[ev[i]].verb_s});
  }
  caps[0] = Sentence(w);
  // 2: "dogs are barking while birds are singing"
  w.clear();
  for (size_t i = 0; i < ev.size(); ++i) {
    if (i) w.push_back("while");
    w.insert(w.end(), {kEvents[ev[i]].plural, "are", kEvents[ev[i]].verb_ing});
  }
  caps[1] = Sentence(w);
  // 3: "the sound of a dog barking and a bird singing"
  w = {"the", "sound", "of"};
  for (size_t i = 0; i < ev.size(); ++i) {
    if (i) w.push_back("and");
    w.insert(w.end(), {"a", kEvents[ev[i]].noun, kEvents[ev[i]].verb_ing});
  }
  caps[2] = Sentence(w);
  // 4: "a dog is barking nearby" (+ "and a bird sings")
  w = {"a", e0.noun, "is", e0.verb_ing, kPlaces[pick3(rng)]};
  for (size_t i = 1; i < ev.size(); ++i)
    w.insert(w.end(), {"and", "a", kEvents[ev[i]].noun, kEvents[ev[i]].verb_s});
  caps[3] = Sentence(w);
  // 5: "there is a loud dog barking" with the events in reverse order
  w = {"there", "is"};
  for (size_t i = ev.size(); i-- > 0;) {
    if (i + 1 != ev.size()) w.push_back("and");
    w.insert(w.end(), {"a", kAdjectives[pick3(rng)], kEvents[ev[i]].noun,
                       kEvents[ev[i]].verb_ing});
  }
  caps[4] = Sentence(w);
  return caps;
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write " + path.string());
  f << text;
  if (!f) throw RuntimeFailure("write failed: " + path.string());
}

}  // namespace

int MaxSynthEventTypes() { return kNumEvents; }

std::string SynthLemmaTable() {
  std::ostringstream os;
  os << "# word\tlemma\n";
  for (const EventType& e : kEvents) {
    os << e.noun << '\t' << e.noun << '\n';
    os << e.plural << '\t' << e.noun << '\n';
    os << e.lemma_verb << '\t' << e.lemma_verb << '\n';
    os << e.verb_s << '\t' << e.lemma_verb << '\n';
    os << e.verb_ing << '\t' << e.lemma_verb << '\n';
  }
  os << "is\tbe\nare\tbe\nbe\tbe\n";
  return os.str();
}

void SynthCorpus(const SynthOptions& opts, const fs::path& out_dir) {
  if (opts.n_clips < 2) throw ValidationError("synth-corpus: n_clips must be >= 2");
  if (opts.n_event_types < 1 || opts.n_event_types > kNumEvents)
    throw ValidationError("synth-corpus: n_event_types must be in 1.." +
                          std::to_string(kNumEvents));
  if (!(opts.sample_rate_hz >= 2000.0))
    throw ValidationError("synth-corpus: sample rate must be >= 2000 Hz");
  if (!(opts.duration_s > 0.0)) throw ValidationError("synth-corpus: duration must be > 0");

  // Distinct event combinations of size 1..3, in a seeded order.
  std::vector<std::vector<int>> combos;
  const int m = opts.n_event_types;
  for (int a = 0; a < m; ++a) {
    combos.push_back({a});
    for (int b = a + 1; b < m; ++b) {
      combos.push_back({a, b});
      for (int c = b + 1; c < m; ++c) combos.push_back({a, b, c});
    }
  }
  if (static_cast<size_t>(opts.n_clips) > combos.size())
    throw ValidationError("synth-corpus: " + std::to_string(opts.n_event_types) +
                          " event types allow at most " + std::to_string(combos.size()) +
                          " distinct clips");
  std::mt19937_64 rng(opts.seed);
  std::shuffle(combos.begin(), combos.end(), rng);
  combos.resize(static_cast<size_t>(opts.n_clips));

  fs::create_directories(out_dir / "audio");
  const double sr = opts.sample_rate_hz;
  const size_t n_samples = static_cast<size_t>(std::floor(opts.duration_s * sr));
  std::string captions_csv = "file_name,caption_1,caption_2,caption_3,caption_4,caption_5\n";
  std::string metadata_csv = "file_name,keywords\n";

  for (int i = 0; i < opts.n_clips; ++i) {
    std::vector<int> ev = combos[static_cast<size_t>(i)];
    std::shuffle(ev.begin(), ev.end(), rng);

    std::string stem;
    for (int e : ev) stem += std::string(kEvents[e].plural) + "_" + kEvents[e].verb_ing + "_";
    char num[16];
    std::snprintf(num, sizeof(num), "%04d", i + 1);
    const std::string file_name = stem + num + ".wav";

    std::vector<double> signal(n_samples, 0.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int e : ev) {
      // Two to three occurrences of 3-8 s each.
      const int reps = 2 + static_cast<int>(unit(rng) * 2.0);
      for (int r = 0; r < reps; ++r) {
        const double len_s = std::min(opts.duration_s, 3.0 + 5.0 * unit(rng));
        const double start_s = unit(rng) * std::max(0.0, opts.duration_s - len_s);
        Render(kEvents[e], sr / 2.0, static_cast<size_t>(start_s * sr),
               static_cast<size_t>(len_s * sr), sr, 0.15 + 0.1 * unit(rng), rng, signal);
      }
    }
    double peak = 0.0;
    for (double v : signal) peak = std::max(peak, std::abs(v));
    if (peak > 0.9)
      for (double& v : signal) v *= 0.9 / peak;
    WriteWav(out_dir / "audio" / file_name, signal, static_cast<int>(sr));

    const auto caps = Captions(ev, rng);
    csv::Row row = {file_name};
    row.insert(row.end(), caps.begin(), caps.end());
    captions_csv += csv::FormatRow(row) + "\n";

    std::string keywords;
    for (int e : ev) {
      keywords += (keywords.empty() ? "" : ";") + std::string(kEvents[e].noun) + ";" +
                  kEvents[e].verb_s;
    }
    metadata_csv += csv::FormatRow({file_name, keywords}) + "\n";
  }
  WriteText(out_dir / "captions.csv", captions_csv);
  WriteText(out_dir / "metadata.csv", metadata_csv);
  WriteText(out_dir / "lemmas.tsv", SynthLemmaTable());
}

int ExtractCorpusFeatures(const fs::path& root, const FeatureConfig& cfg) {
  const Dataset ds = LoadDataset(root);
  fs::create_directories(root / "features");
  int written = 0;
  for (const Clip& c : ds.clips()) {
    if (c.feature_path.extension() == ".capf") continue;
    FeatureMatrix f = LoadClipFeatures(c.feature_path, cfg);
    WriteFeatures(root / "features" / (c.feature_path.stem().string() + ".capf"), f);
    ++written;
  }
  return written;
}

}  // namespace cappipe
