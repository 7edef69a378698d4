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

#include "cappipe/metrics.h"

#include <algorithm>
#include <array>
#include <set>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "cappipe/csv.h"
#include "cappipe/errors.h"

namespace cappipe {

namespace {

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts CountNgrams(std::span<const std::string> tokens, size_t n) {
  NgramCounts counts;
  for (size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  return counts;
}

void CheckCorpus(std::span<const Tokens> candidates, std::span<const References> refs,
                 const char* metric) {
  if (candidates.empty())
    throw ValidationError(std::string(metric) + ": empty candidate set");
  if (candidates.size() != refs.size())
    throw ValidationError(std::string(metric) + ": " +
                          std::to_string(candidates.size()) + " candidates for " +
                          std::to_string(refs.size()) + " reference sets");
  for (const References& r : refs)
    if (r.empty()) throw ValidationError(std::string(metric) + ": clip without references");
}

size_t LcsLength(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    for (size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string FormatScore(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << RoundForTable(v);
  return os.str();
}

}  // namespace

double Bleu(std::span<const Tokens> candidates, std::span<const References> refs,
            int n) {
  CheckCorpus(candidates, refs, "bleu");
  if (n < 1 || n > 4) throw ValidationError("bleu: n must be in 1..4");
  std::vector<double> matched(n, 0.0), total(n, 0.0);
  double cand_len = 0.0, ref_len = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i) {
    const Tokens& c = candidates[i];
    for (int k = 1; k <= n; ++k) {
      const NgramCounts cc = CountNgrams(c, k);
      NgramCounts max_ref;
      for (const Tokens& r : refs[i])
        for (const auto& [g, cnt] : CountNgrams(r, k))
          max_ref[g] = std::max(max_ref[g], cnt);
      for (const auto& [g, cnt] : cc) {
        const auto it = max_ref.find(g);
        matched[k - 1] += std::min(cnt, it == max_ref.end() ? 0 : it->second);
        total[k - 1] += cnt;
      }
    }
    // Closest reference length, shorter one on ties.
    size_t best = refs[i].front().size();
    for (const Tokens& r : refs[i]) {
      const auto d = [&](size_t l) {
        return l > c.size() ? l - c.size() : c.size() - l;
      };
      if (d(r.size()) < d(best) || (d(r.size()) == d(best) && r.size() < best))
        best = r.size();
    }
    cand_len += static_cast<double>(c.size());
    ref_len += static_cast<double>(best);
  }
  if (cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int k = 0; k < n; ++k) {
    if (matched[k] == 0.0) return 0.0;
    log_sum += std::log(matched[k] / total[k]);
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return 100.0 * bp * std::exp(log_sum / n);
}

double RougeLSentence(std::span<const std::string> candidate, const References& refs,
                      double beta) {
  if (candidate.empty()) return 0.0;
  double best = 0.0;
  for (const Tokens& r : refs) {
    if (r.empty()) continue;
    const double lcs = static_cast<double>(LcsLength(candidate, r));
    if (lcs == 0.0) continue;
    const double p = lcs / static_cast<double>(candidate.size());
    const double rec = lcs / static_cast<double>(r.size());
    const double b2 = beta * beta;
    best = std::max(best, (1.0 + b2) * p * rec / (rec + b2 * p));
  }
  return best;
}

double RougeL(std::span<const Tokens> candidates, std::span<const References> refs,
              double beta) {
  CheckCorpus(candidates, refs, "rouge-l");
  double sum = 0.0;
  for (size_t i = 0; i < candidates.size(); ++i)
    sum += RougeLSentence(candidates[i], refs[i], beta);
  return 100.0 * sum / static_cast<double>(candidates.size());
}

CiderResult CiderD(std::span<const Tokens> candidates, std::span<const References> refs,
                   double sigma) {
  CheckCorpus(candidates, refs, "cider-d");
  if (candidates.size() < 2)
    throw ValidationError("cider-d: needs a corpus of at least 2 clips");
  constexpr int kMaxN = 4;
  const size_t n_clips = candidates.size();

  // Document frequency: number of clips whose references contain the n-gram.
  std::map<std::vector<std::string>, double> df;
  for (const References& rs : refs) {
    std::set<std::vector<std::string>> seen;
    for (const Tokens& r : rs)
      for (size_t k = 1; k <= kMaxN; ++k)
        for (const auto& [g, cnt] : CountNgrams(r, k)) seen.insert(g);
    for (const auto& g : seen) df[g] += 1.0;
  }
  const double log_n = std::log(static_cast<double>(n_clips));

  struct Vec {
    std::array<std::map<std::vector<std::string>, double>, kMaxN> w;
    std::array<double, kMaxN> norm{};
    double length = 0.0;
  };
  const auto to_vec = [&](std::span<const std::string> tokens) {
    Vec v;
    v.length = static_cast<double>(tokens.size());
    for (size_t k = 1; k <= kMaxN; ++k) {
      for (const auto& [g, cnt] : CountNgrams(tokens, k)) {
        const auto it = df.find(g);
        const double d = std::log(std::max(1.0, it == df.end() ? 0.0 : it->second));
        const double val = cnt * (log_n - d);
        v.w[k - 1][g] = val;
        v.norm[k - 1] += val * val;
      }
      v.norm[k - 1] = std::sqrt(v.norm[k - 1]);
    }
    return v;
  };

  CiderResult result;
  result.per_clip.reserve(n_clips);
  for (size_t i = 0; i < n_clips; ++i) {
    const Vec c = to_vec(candidates[i]);
    std::array<double, kMaxN> score{};
    for (const Tokens& rt : refs[i]) {
      const Vec r = to_vec(rt);
      const double delta = c.length - r.length;
      const double penalty = std::exp(-(delta * delta) / (2.0 * sigma * sigma));
      for (int k = 0; k < kMaxN; ++k) {
        double val = 0.0;
        for (const auto& [g, cv] : c.w[k]) {
          const auto it = r.w[k].find(g);
          if (it != r.w[k].end()) val += std::min(cv, it->second) * it->second;
        }
        if (c.norm[k] != 0.0 && r.norm[k] != 0.0) val /= c.norm[k] * r.norm[k];
        score[k] += val * penalty;
      }
    }
    const double mean_n = std::accumulate(score.begin(), score.end(), 0.0) / kMaxN;
    result.per_clip.push_back(10.0 * mean_n / static_cast<double>(refs[i].size()));
  }
  const double mean =
      std::accumulate(result.per_clip.begin(), result.per_clip.end(), 0.0) /
      static_cast<double>(n_clips);
  result.corpus = 100.0 * mean;
  return result;
}

std::optional<double> Spider(double cider, std::optional<double> spice) {
  if (!spice) return std::nullopt;
  return (cider + *spice) / 2.0;
}

double RoundForTable(double v) { return std::round(v * 10.0) / 10.0; }

ExternalScores ReadExternalScores(const std::filesystem::path& path) {
  const auto rows = csv::ReadFile(path);
  if (rows.empty()) throw ValidationError("score file " + path.string() + " is empty");
  ExternalScores out;
  std::optional<double> mean;
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (i == 0 && row.size() >= 2 && row[0] == "file_name") continue;
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 2)
      throw ValidationError("score file " + path.string() + " line " +
                            std::to_string(i + 1) + ": expected file_name,score");
    double v = 0.0;
    try {
      size_t used = 0;
      v = std::stod(row[1], &used);
      if (used != row[1].size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      throw ValidationError("score file " + path.string() + " line " +
                            std::to_string(i + 1) + ": bad score '" + row[1] + "'");
    }
    if (row[0] == "__mean__")
      mean = v;
    else
      out.per_clip[row[0]] = v;
  }
  if (mean) {
    out.mean = *mean;
  } else {
    if (out.per_clip.empty())
      throw ValidationError("score file " + path.string() + " has no scores");
    double s = 0.0;
    for (const auto& [k, v] : out.per_clip) s += v;
    out.mean = s / static_cast<double>(out.per_clip.size());
  }
  return out;
}

const std::vector<std::string>& ReportColumns() {
  static const std::vector<std::string> cols = {
      "B-1", "B-2", "B-3", "B-4", "METEOR", "ROUGE-L", "CIDEr", "SPICE", "SPIDEr"};
  return cols;
}

std::optional<double> EvalReport::Get(const std::string& column) const {
  const auto it = scores.find(column);
  if (it == scores.end()) return std::nullopt;
  return it->second;
}

std::string EvalReport::ToCsv() const {
  std::string header, values;
  for (const auto& c : ReportColumns()) {
    if (!header.empty()) {
      header += ',';
      values += ',';
    }
    header += c;
    const auto v = Get(c);
    values += v ? FormatScore(*v) : "n/a";
  }
  return header + "\n" + values + "\n";
}

std::string EvalReport::ToText() const {
  std::ostringstream os;
  for (const auto& c : ReportColumns()) os << std::setw(9) << c;
  os << '\n';
  for (const auto& c : ReportColumns()) {
    const auto v = Get(c);
    os << std::setw(9) << (v ? FormatScore(*v) : "n/a");
  }
  os << '\n';
  if (!Get("SPIDEr")) os << "SPIDEr unavailable (SPICE not computed)\n";
  return os.str();
}

std::string EvalReport::PerClipCsv() const {
  std::ostringstream os;
  os.precision(17);
  os << "file_name,rouge_l,cider\n";
  for (size_t i = 0; i < clip_ids.size(); ++i)
    os << csv::EscapeField(clip_ids[i]) << ',' << clip_rouge_l[i] << ','
       << clip_cider[i] << '\n';
  return os.str();
}

EvalReport EvaluateCaptions(std::span<const std::string> clip_ids,
                            std::span<const Tokens> candidates,
                            std::span<const References> refs,
                            const std::optional<ExternalScores>& spice,
                            const std::optional<ExternalScores>& meteor) {
  CheckCorpus(candidates, refs, "evaluation");
  if (clip_ids.size() != candidates.size())
    throw ValidationError("evaluation: clip id count mismatch");
  EvalReport rep;
  rep.n_clips = candidates.size();
  rep.clip_ids.assign(clip_ids.begin(), clip_ids.end());
  for (int n = 1; n <= 4; ++n)
    rep.scores["B-" + std::to_string(n)] = Bleu(candidates, refs, n);
  for (size_t i = 0; i < candidates.size(); ++i)
    rep.clip_rouge_l.push_back(100.0 * RougeLSentence(candidates[i], refs[i]));
  rep.scores["ROUGE-L"] =
      std::accumulate(rep.clip_rouge_l.begin(), rep.clip_rouge_l.end(), 0.0) /
      static_cast<double>(rep.n_clips);
  if (candidates.size() >= 2) {
    const CiderResult cider = CiderD(candidates, refs);
    rep.scores["CIDEr"] = cider.corpus;
    for (double v : cider.per_clip) rep.clip_cider.push_back(100.0 * v);
  } else {
    rep.clip_cider.assign(rep.n_clips, 0.0);
  }
  if (meteor) rep.scores["METEOR"] = 100.0 * meteor->mean;
  if (spice) {
    rep.scores["SPICE"] = 100.0 * spice->mean;
    if (const auto c = rep.Get("CIDEr"))
      rep.scores["SPIDEr"] = *Spider(*c, rep.scores["SPICE"]);
  }
  return rep;
}

std::map<std::string, std::string> ReadCandidates(const std::filesystem::path& path) {
  const auto rows = csv::ReadFile(path);
  std::map<std::string, std::string> out;
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    if (i == 0 && row.size() >= 1 && row[0] == "file_name") continue;
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != 2)
      throw ValidationError("candidates file " + path.string() + " line " +
                            std::to_string(i + 1) + ": expected file_name,caption");
    if (!out.emplace(row[0], row[1]).second)
      throw ValidationError("candidates file " + path.string() +
                            ": duplicate file_name " + row[0]);
  }
  return out;
}

void WriteCandidates(const std::filesystem::path& path,
                     std::span<const std::string> clip_ids,
                     std::span<const std::string> captions) {
  if (clip_ids.size() != captions.size())
    throw ValidationError("candidates: id/caption count mismatch");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw RuntimeFailure("cannot write " + path.string());
  f << "file_name,caption\n";
  for (size_t i = 0; i < clip_ids.size(); ++i)
    f << csv::FormatRow({clip_ids[i], captions[i]}) << '\n';
  if (!f) throw RuntimeFailure("write failed: " + path.string());
}

EvalReport EvaluateCorpus(const std::map<std::string, std::string>& candidates,
                          const Dataset& dataset,
                          const std::optional<ExternalScores>& spice,
                          const std::optional<ExternalScores>& meteor) {
  if (dataset.empty()) throw ValidationError("evaluation: empty dataset");
  std::vector<std::string> ids;
  std::vector<Tokens> cands;
  std::vector<References> refs;
  for (const Clip& c : dataset.clips()) {
    const auto it = candidates.find(c.clip_id);
    if (it == candidates.end())
      throw ValidationError("no candidate caption for clip " + c.clip_id);
    ids.push_back(c.clip_id);
    cands.push_back(Tokenize(it->second));
    refs.emplace_back(c.captions.begin(), c.captions.end());
  }
  return EvaluateCaptions(ids, cands, refs, spice, meteor);
}

}  // namespace cappipe
