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

#include "cappipe/harness.h"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cappipe/csv.h"
#include "cappipe/errors.h"

namespace cappipe {

namespace fs = std::filesystem;

// ------------------------------------------------------------- ConfigFile

namespace {

std::string Trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string ReadText(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("missing file: " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write " + path.string());
  f << text;
  if (!f) throw RuntimeFailure("write failed: " + path.string());
}

}  // namespace

ConfigFile ConfigFile::Parse(std::string_view text, const std::string& origin) {
  ConfigFile cf;
  std::string section;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t nl = std::min(text.find('\n', pos), text.size());
    std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (const auto c = line.find_first_of("#;"); c != std::string::npos) line.resize(c);
    line = Trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ValidationError(origin + ":" + std::to_string(line_no) +
                              ": unterminated section header");
      section = Trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(origin + ":" + std::to_string(line_no) +
                            ": expected key = value");
    const std::string key = Trim(std::string_view(line).substr(0, eq));
    if (key.empty())
      throw ValidationError(origin + ":" + std::to_string(line_no) + ": empty key");
    cf.values_[section.empty() ? key : section + "." + key] =
        Trim(std::string_view(line).substr(eq + 1));
  }
  return cf;
}

ConfigFile ConfigFile::Load(const fs::path& path) {
  return Parse(ReadText(path), path.string());
}

void ConfigFile::Set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ValidationError("override '" + std::string(assignment) +
                          "' is not of the form section.key=value");
  Set(Trim(assignment.substr(0, eq)), Trim(assignment.substr(eq + 1)));
}

void ConfigFile::Set(const std::string& key, const std::string& value) {
  values_[key] = value;
}

// -------------------------------------------------------------- RunConfig

namespace {

std::string KeywordModeName(KeywordMode m) {
  return m == KeywordMode::kMetadata ? "metadata" : "estimated";
}

// Calls v(key, field) for every configurable field of a RunConfig.
template <class Cfg, class Visitor>
void VisitFields(Cfg& c, Visitor&& v) {
  v("data.dataset", c.dataset);
  v("data.eval_dataset", c.eval_dataset);
  v("data.eval_fraction", c.eval_fraction);
  v("data.lemma_table", c.lemma_table);
  v("features.sample_rate", c.features.sample_rate_hz);
  v("features.fft_size", c.features.fft_size);
  v("features.hop_size", c.features.hop_size);
  v("features.n_mels", c.features.n_mels);
  v("features.fmin", c.features.fmin_hz);
  v("features.fmax", c.features.fmax_hz);
  v("features.log_floor", c.features.log_floor);
  v("features.crop_seconds", c.resources.crop_seconds);
  v("vocab.min_count", c.resources.vocab_min_count);
  v("vocab.meta_min_occurrences", c.resources.meta_min_occurrences);
  v("vocab.caption_min_occurrences", c.resources.caption_min_occurrences);
  v("model.audio_embed_dim", c.model.audio_embed_dim);
  v("model.meta_proj_dim", c.model.meta_proj_dim);
  v("model.encoder_hidden", c.model.encoder_hidden);
  v("model.decoder_hidden", c.model.decoder_hidden);
  v("model.word_embed_dim", c.model.word_embed_dim);
  v("model.n_length_classes", c.model.n_length_classes);
  v("model.length_embed_dim", c.model.length_embed_dim);
  v("model.lambda_kw", c.model.lambda_kw);
  v("model.lambda_len", c.model.lambda_len);
  v("model.lambda_cooc", c.model.lambda_cooc);
  v("model.max_decode_len", c.model.max_decode_len);
  v("multitask.meta_keywords", c.model.tasks.meta_keywords);
  v("multitask.caption_keywords", c.model.tasks.caption_keywords);
  v("multitask.length", c.model.tasks.length);
  v("multitask.cooccurrence", c.model.tasks.cooccurrence);
  v("augment.mixup", c.train.augment.mixup);
  v("augment.tfidf_replace", c.train.augment.tfidf_replace);
  v("augment.idf_sampling", c.train.augment.idf_sampling);
  v("augment.mixup_alpha", c.train.mixup_alpha);
  v("augment.replace_rate", c.train.replace_rate);
  v("train.epochs", c.train.epochs);
  v("train.batch_size", c.train.batch_size);
  v("train.steps_per_epoch", c.train.steps_per_epoch);
  v("train.lr", c.train.adam.lr);
  v("train.beta1", c.train.adam.beta1);
  v("train.beta2", c.train.adam.beta2);
  v("train.eps", c.train.adam.eps);
  v("train.clip_norm", c.train.adam.clip_norm);
  v("train.fixed_caption", c.train.fixed_caption);
  v("train.val_fraction", c.train.val_fraction);
  v("postproc.beam", c.post.beam);
  v("postproc.tta", c.post.tta);
  v("postproc.beam_size", c.beam.beam_size);
  v("postproc.ngram_block", c.beam.ngram_block);
  v("postproc.length_norm", c.beam.length_norm);
  v("postproc.tta_crops", c.tta_crops);
  v("postproc.keyword_mode", c.keyword_mode);
  v("run.seeds", c.seeds);
  v("run.output_dir", c.output_dir);
}

[[noreturn]] void BadValue(const std::string& key, const std::string& value,
                           const char* expected) {
  throw ValidationError("config key " + key + ": '" + value + "' is not " + expected);
}

struct Assigner {
  const std::string& key;
  const std::string& value;
  bool matched = false;

  void operator()(const char* k, std::string& f) { Take(k, [&] { f = value; }); }
  void operator()(const char* k, fs::path& f) { Take(k, [&] { f = value; }); }
  void operator()(const char* k, bool& f) {
    Take(k, [&] {
      std::string v = value;
      std::transform(v.begin(), v.end(), v.begin(),
                     [](unsigned char ch) { return std::tolower(ch); });
      if (v == "true" || v == "on" || v == "yes" || v == "1")
        f = true;
      else if (v == "false" || v == "off" || v == "no" || v == "0")
        f = false;
      else
        BadValue(key, value, "a boolean");
    });
  }
  void operator()(const char* k, int& f) {
    Take(k, [&] {
      try {
        size_t used = 0;
        f = std::stoi(value, &used);
        if (used != value.size()) BadValue(key, value, "an integer");
      } catch (const std::logic_error&) {
        BadValue(key, value, "an integer");
      }
    });
  }
  void operator()(const char* k, double& f) {
    Take(k, [&] {
      try {
        size_t used = 0;
        f = std::stod(value, &used);
        if (used != value.size()) BadValue(key, value, "a number");
      } catch (const std::logic_error&) {
        BadValue(key, value, "a number");
      }
    });
  }
  void operator()(const char* k, KeywordMode& f) {
    Take(k, [&] {
      if (value == "metadata")
        f = KeywordMode::kMetadata;
      else if (value == "estimated")
        f = KeywordMode::kEstimated;
      else
        BadValue(key, value, "metadata or estimated");
    });
  }
  void operator()(const char* k, std::vector<uint64_t>& f) {
    Take(k, [&] {
      std::vector<uint64_t> seeds;
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        item = Trim(item);
        if (item.empty() ||
            item.find_first_not_of("0123456789") != std::string::npos)
          BadValue(key, value, "a comma-separated list of seeds");
        seeds.push_back(std::stoull(item));
      }
      if (seeds.empty()) BadValue(key, value, "a comma-separated list of seeds");
      f = std::move(seeds);
    });
  }

  template <class F>
  void Take(const char* k, F&& assign) {
    if (key != k) return;
    assign();
    matched = true;
  }
};

struct Printer {
  ConfigFile& out;

  void operator()(const char* k, const std::string& f) { out.Set(k, f); }
  void operator()(const char* k, const fs::path& f) { out.Set(k, f.string()); }
  void operator()(const char* k, const bool& f) { out.Set(k, f ? "true" : "false"); }
  void operator()(const char* k, const int& f) { out.Set(k, std::to_string(f)); }
  void operator()(const char* k, const double& f) {
    std::ostringstream os;
    os.precision(17);
    os << f;
    out.Set(k, os.str());
  }
  void operator()(const char* k, const KeywordMode& f) { out.Set(k, KeywordModeName(f)); }
  void operator()(const char* k, const std::vector<uint64_t>& f) {
    std::string s;
    for (uint64_t v : f) s += (s.empty() ? "" : ",") + std::to_string(v);
    out.Set(k, s);
  }
};

}  // namespace

void RunConfig::Apply(const ConfigFile& file) {
  for (const auto& [key, value] : file.values()) {
    Assigner a{key, value};
    VisitFields(*this, a);
    if (!a.matched) throw ValidationError("unknown config key " + key);
  }
}

void RunConfig::Validate() const {
  if (dataset.empty()) throw ValidationError("no dataset given");
  if (eval_dataset.empty() && !(eval_fraction > 0.0 && eval_fraction < 1.0))
    throw ValidationError("eval_fraction must be in (0, 1)");
  features.Validate();
  if (seeds.empty()) throw ValidationError("at least one seed is required");
  if (tta_crops < 1) throw ValidationError("tta_crops must be >= 1");
  beam.Validate();
  if (train.epochs < 1) throw ValidationError("epochs must be >= 1");
  if (train.batch_size < 1) throw ValidationError("batch_size must be >= 1");
}

ConfigFile RunConfig::ToConfigFile() const {
  ConfigFile cf;
  Printer p{cf};
  VisitFields(*this, p);
  return cf;
}

std::string RunConfig::ToText() const {
  std::string out, section;
  const ConfigFile cf = ToConfigFile();
  for (const auto& [key, value] : cf.values()) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      out += (out.empty() ? "[" : "\n[") + s + "]\n";
      section = s;
    }
    out += key.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

// -------------------------------------------------------------------- run

SplitData LoadSplit(const RunConfig& cfg) {
  SplitData s;
  const Dataset all = LoadDataset(cfg.dataset);
  if (!cfg.eval_dataset.empty()) {
    s.train = all;
    s.eval = LoadDataset(cfg.eval_dataset);
    return s;
  }
  if (all.size() < 2)
    throw ValidationError("dataset too small to hold out an evaluation split");
  const size_t n_eval = std::clamp<size_t>(
      static_cast<size_t>(std::lround(cfg.eval_fraction * all.size())), 1,
      all.size() - 1);
  std::vector<size_t> train_idx, eval_idx;
  for (size_t i = 0; i < all.size(); ++i)
    (i < all.size() - n_eval ? train_idx : eval_idx).push_back(i);
  s.train = all.Subset(train_idx);
  s.eval = all.Subset(eval_idx);
  return s;
}

LemmaTable LoadLemmas(const RunConfig& cfg) {
  if (!cfg.lemma_table.empty()) return LemmaTable::Load(cfg.lemma_table);
  const fs::path local = cfg.dataset / "lemmas.tsv";
  if (fs::exists(local)) return LemmaTable::Load(local);
  return LemmaTable::Parse("");
}

DecodeOptions DecodeOptionsOf(const RunConfig& cfg) {
  DecodeOptions o;
  o.beam = cfg.post.beam;
  o.beam_config = cfg.beam;
  o.tta = cfg.post.tta;
  o.tta_crops = cfg.tta_crops;
  o.keyword_mode = cfg.keyword_mode;
  return o;
}

std::vector<std::string> DecodeDataset(const CaptionModel& model, const ParamSet& params,
                                       const CaptionResources& res, const Dataset& eval,
                                       const DecodeOptions& opts, uint64_t seed) {
  const std::vector<PreparedClip> clips = PrepareClips(eval, res);
  std::mt19937_64 rng(seed ^ 0xdec0de5eedULL);
  std::vector<std::string> out;
  out.reserve(clips.size());
  for (const PreparedClip& c : clips) {
    const std::vector<int> ids =
        DecodeClip(model, params, c.features, c.meta_keywords, opts, rng);
    out.push_back(JoinTokens(res.vocab.Decode(ids)));
  }
  return out;
}

namespace {

void WriteReport(const fs::path& dir, const EvalReport& rep) {
  WriteText(dir / "report.csv", rep.ToCsv());
  WriteText(dir / "report.txt", rep.ToText());
  WriteText(dir / "per_clip.csv", rep.PerClipCsv());
}

std::string Fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace

RunSummary Run(const RunConfig& cfg, const ProgressFn& progress) {
  cfg.Validate();
  const SplitData split = LoadSplit(cfg);
  const CaptionResources res =
      BuildResources(split.train, LoadLemmas(cfg), cfg.features, cfg.resources);
  fs::create_directories(cfg.output_dir);
  WriteText(cfg.output_dir / "config.ini", cfg.ToText());

  std::vector<std::string> eval_ids;
  for (const Clip& c : split.eval.clips()) eval_ids.push_back(c.clip_id);

  RunSummary summary;
  for (uint64_t seed : cfg.seeds) {
    const fs::path dir = cfg.output_dir / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    if (progress) progress("seed " + std::to_string(seed) + ": training");
    TrainOptions topts = cfg.train;
    topts.seed = seed;
    std::ofstream log(dir / "train_log.csv", std::ios::binary);
    log << TrainLogHeader() << '\n';
    TrainResult tr = Train(split.train, res, cfg.model, topts,
                           [&](const TrainLogRow& r) { log << FormatTrainLogRow(r) << '\n'; });
    log.close();
    if (!tr.val_loss.empty()) {
      std::ostringstream os;
      os.precision(17);
      os << "epoch,val_loss\n";
      for (size_t e = 0; e < tr.val_loss.size(); ++e)
        os << e + 1 << ',' << tr.val_loss[e] << '\n';
      WriteText(dir / "val_log.csv", os.str());
    }
    SaveModelCheckpoint(dir / "checkpoint", tr.params, tr.config, res.ToJson());

    if (progress) progress("seed " + std::to_string(seed) + ": decoding");
    const CaptionModel model(tr.config);
    SeedRun sr;
    sr.seed = seed;
    sr.captions = DecodeDataset(model, tr.params, res, split.eval,
                                DecodeOptionsOf(cfg), seed);
    sr.epoch_loss = tr.epoch_loss;
    WriteCandidates(dir / "candidates.csv", eval_ids, sr.captions);
    std::map<std::string, std::string> cands;
    for (size_t i = 0; i < eval_ids.size(); ++i) cands[eval_ids[i]] = sr.captions[i];
    sr.report = EvaluateCorpus(cands, split.eval);
    WriteReport(dir, sr.report);
    summary.seeds.push_back(std::move(sr));
  }

  // Seed means and population variances of every column all seeds report.
  for (const std::string& col : ReportColumns()) {
    std::vector<double> vals;
    for (const SeedRun& s : summary.seeds)
      if (const auto v = s.report.Get(col)) vals.push_back(*v);
    if (vals.size() != summary.seeds.size()) continue;
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    summary.mean[col] = mean;
    summary.variance[col] = var / static_cast<double>(vals.size());
  }
  std::string csv_header = "statistic", csv_mean = "mean", csv_var = "variance";
  for (const std::string& col : ReportColumns()) {
    csv_header += "," + col;
    const auto it = summary.mean.find(col);
    csv_mean += "," + (it == summary.mean.end() ? std::string("n/a") : Fixed(it->second, 1));
    csv_var += "," + (it == summary.mean.end()
                          ? std::string("n/a")
                          : Fixed(summary.variance.at(col), 3));
  }
  WriteText(cfg.output_dir / "report.csv", csv_header + "\n" + csv_mean + "\n" + csv_var + "\n");
  return summary;
}

// --------------------------------------------------------------- ablation

std::optional<AblationPlan> ParseAblationPlan(std::string_view name) {
  if (name == "element-wise") return AblationPlan::kElementWise;
  if (name == "module-wise") return AblationPlan::kModuleWise;
  return std::nullopt;
}

namespace {

RunConfig AllOn(RunConfig c) {
  c.train.augment = AugmentToggles{};
  c.model.tasks = MultiTaskToggles{};
  c.post = PostprocToggles{};
  return c;
}

std::string Slug(const std::string& name) {
  std::string out;
  for (char ch : name) {
    const unsigned char u = static_cast<unsigned char>(ch);
    if (std::isalnum(u))
      out.push_back(static_cast<char>(std::tolower(u)));
    else if (!out.empty() && out.back() != '_')
      out.push_back('_');
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

}  // namespace

std::vector<AblationRow> AblationRows(AblationPlan plan, const RunConfig& base) {
  const RunConfig on = AllOn(base);
  std::vector<AblationRow> rows;
  auto add = [&](std::string name, auto&& edit) {
    RunConfig c = on;
    edit(c);
    rows.push_back({std::move(name), std::move(c)});
  };
  if (plan == AblationPlan::kElementWise) {
    add("Proposed", [](RunConfig&) {});
    add("w/o (i) Data augmentation",
        [](RunConfig& c) { c.train.augment = {false, false, false}; });
    add("w/o (ii) Multi-task learning",
        [](RunConfig& c) { c.model.tasks = {false, false, false, false}; });
    add("w/o (iii) Post-processing", [](RunConfig& c) { c.post = {false, false}; });
    add("w/o all three elements", [](RunConfig& c) {
      c.train.augment = {false, false, false};
      c.model.tasks = {false, false, false, false};
      c.post = {false, false};
    });
  } else {
    add("(i) w/o (a) Mix-up", [](RunConfig& c) { c.train.augment.mixup = false; });
    add("(i) w/o (b) TF-IDF-based word placement",
        [](RunConfig& c) { c.train.augment.tfidf_replace = false; });
    add("(i) w/o (c) IDF-based sample selection",
        [](RunConfig& c) { c.train.augment.idf_sampling = false; });
    add("(iii) w/o (a) Beam search decoding", [](RunConfig& c) { c.post.beam = false; });
    add("(iii) w/o (b) TTA", [](RunConfig& c) { c.post.tta = false; });
  }
  for (AblationRow& r : rows) r.config.output_dir = base.output_dir / Slug(r.name);
  return rows;
}

AblationTable Ablate(AblationPlan plan, const RunConfig& base,
                     const ProgressFn& progress) {
  base.Validate();
  AblationTable t;
  t.columns = {"B-1", "B-2", "B-3", "B-4", "ROUGE-L", "CIDEr"};
  t.seeds = base.seeds;
  for (const AblationRow& row : AblationRows(plan, base)) {
    if (progress) progress("row: " + row.name);
    const RunSummary s = Run(row.config, [&](const std::string& m) {
      if (progress) progress("  " + m);
    });
    t.rows.push_back(row.name);
    std::vector<double> mean, var;
    for (const std::string& col : t.columns) {
      const auto it = s.mean.find(col);
      if (it == s.mean.end())
        throw RuntimeFailure("ablation row '" + row.name + "' lacks metric " + col);
      mean.push_back(it->second);
      var.push_back(s.variance.at(col));
    }
    t.mean.push_back(std::move(mean));
    t.variance.push_back(std::move(var));
  }
  fs::create_directories(base.output_dir);
  WriteText(base.output_dir / "ablation.csv", t.ToCsv());
  WriteText(base.output_dir / "ablation.txt", t.ToText());
  return t;
}

std::string AblationTable::ToCsv() const {
  std::ostringstream os;
  os << "model";
  for (const auto& c : columns) os << ',' << c;
  for (const auto& c : columns) os << ",var(" << c << ')';
  os << '\n';
  for (size_t r = 0; r < rows.size(); ++r) {
    os << csv::EscapeField(rows[r]);
    for (double v : mean[r]) os << ',' << Fixed(RoundForTable(v), 1);
    for (double v : variance[r]) os << ',' << Fixed(v, 3);
    os << '\n';
  }
  return os.str();
}

std::string AblationTable::ToText() const {
  size_t width = 5;
  for (const auto& r : rows) width = std::max(width, r.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(width)) << "Model" << std::right;
  for (const auto& c : columns) os << std::setw(9) << c;
  os << '\n';
  for (size_t r = 0; r < rows.size(); ++r) {
    os << std::left << std::setw(static_cast<int>(width)) << rows[r] << std::right;
    for (double v : mean[r]) os << std::setw(9) << Fixed(RoundForTable(v), 1);
    os << '\n';
  }
  os << "mean over seeds";
  for (size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : " ") << seeds[i];
  os << '\n';
  return os.str();
}

// -------------------------------------------------------------- gradcheck

GradCheckReport CheckModelGradients(uint64_t seed, const GradCheckOptions& opts) {
  ModelConfig cfg;
  cfg.feature_dim = 3;
  cfg.n_frames = 3;
  cfg.audio_embed_dim = 4;
  cfg.meta_proj_dim = 2;
  cfg.encoder_hidden = 3;
  cfg.decoder_hidden = 4;
  cfg.word_embed_dim = 3;
  cfg.vocab_size = 9;
  cfg.n_keywords_meta = 3;
  cfg.n_keywords_caption = 3;
  cfg.n_length_classes = 4;
  cfg.length_embed_dim = 2;
  const CaptionModel model(cfg);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamSet params = model.InitParams(seed);
  // Random biases too, so no gradient sits at an init-specific symmetry.
  for (auto& [name, e] : params.entries())
    for (double& v : e.value.data()) v += 0.1 * normal(rng);

  std::vector<CaptionExample> batch(2);
  batch[0].tokens = {4, 5, 6};
  batch[0].meta_keywords = {0, 2};
  batch[0].caption_keywords = {1};
  batch[1].tokens = {7, 8};
  batch[1].meta_keywords = {1};
  batch[1].caption_keywords = {0, 2};
  for (CaptionExample& ex : batch) {
    ex.features = Tensor(3, 3);
    for (double& v : ex.features.data()) v = normal(rng);
  }
  const LossWeights weights{{2.0, 1.5, 3.0}, {1.25, 4.0, 2.0}};
  const std::vector<uint8_t> forbidden = {0, 0, 0, 0, 0, 1, 0, 1, 1};

  const ScalarFunction loss = [&](Tape& tape, ParamSet& ps) {
    MixupSpec mix{&batch[0], 0.7};
    std::vector<Var> terms;
    terms.push_back(model.Loss(model.Forward(tape, ps, batch[0]), weights, forbidden).total);
    terms.push_back(
        model.Loss(model.Forward(tape, ps, batch[1], &mix), weights, forbidden).total);
    const double half[] = {0.5, 0.5};
    return ad::WeightedSum(terms, half);
  };
  return GradientCheck(loss, params, opts);
}

uint64_t SeedFromEnv(uint64_t fallback) {
  const char* env = std::getenv("CAPPIPE_SEED");
  if (env == nullptr || *env == '\0') return fallback;
  const std::string s(env);
  if (s.find_first_not_of("0123456789") != std::string::npos)
    throw ValidationError("CAPPIPE_SEED must be a non-negative integer, got '" + s + "'");
  return std::stoull(s);
}

}  // namespace cappipe
