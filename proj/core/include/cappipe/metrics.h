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

#ifndef CAPPIPE_METRICS_H_
#define CAPPIPE_METRICS_H_

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cappipe/corpus.h"

namespace cappipe {

// References of one clip (five for Clotho-shaped data, any number >= 1 here).
using References = std::vector<Tokens>;

// Corpus BLEU-n x100: clipped n-gram precisions pooled over the corpus,
// geometric mean over orders 1..n, brevity penalty against the closest
// reference length of each clip.
double Bleu(std::span<const Tokens> candidates, std::span<const References> refs,
            int n);

// ROUGE-L F-measure (beta 1.2) of one candidate, best over its references, in
// [0, 1].
double RougeLSentence(std::span<const std::string> candidate, const References& refs,
                      double beta = 1.2);
// Corpus mean x100.
double RougeL(std::span<const Tokens> candidates, std::span<const References> refs,
              double beta = 1.2);

struct CiderResult {
  double corpus = 0.0;             // table scale: mean of per_clip x100
  std::vector<double> per_clip;    // scorer scale (x10 of the mean similarity)
};
// CIDEr-D with document frequencies over the reference corpus (one document
// per clip), clipped tf-idf similarity and a Gaussian length penalty.
CiderResult CiderD(std::span<const Tokens> candidates, std::span<const References> refs,
                   double sigma = 6.0);

// (CIDEr + SPICE) / 2, or nothing when SPICE is unavailable.
std::optional<double> Spider(double cider, std::optional<double> spice);

// Rounds to one decimal, halves away from zero.
double RoundForTable(double v);

// Scores from an external tool: CSV `file_name,score`, fractions as the
// official tools print them. An optional `__mean__` row gives the corpus
// value; otherwise it is the mean of the rows.
struct ExternalScores {
  std::map<std::string, double> per_clip;
  double mean = 0.0;  // fraction
};
ExternalScores ReadExternalScores(const std::filesystem::path& path);

// Columns in table order: B-1 B-2 B-3 B-4 METEOR ROUGE-L CIDEr SPICE SPIDEr.
const std::vector<std::string>& ReportColumns();

struct EvalReport {
  size_t n_clips = 0;
  std::map<std::string, double> scores;  // table scale; absent = unavailable
  std::vector<std::string> clip_ids;
  std::vector<double> clip_rouge_l;  // x100
  std::vector<double> clip_cider;    // table scale

  std::optional<double> Get(const std::string& column) const;
  std::string ToCsv() const;
  std::string ToText() const;
  std::string PerClipCsv() const;
};

// Implemented metrics plus SPICE / METEOR / SPIDEr when external scores are
// given.
EvalReport EvaluateCaptions(std::span<const std::string> clip_ids,
                            std::span<const Tokens> candidates,
                            std::span<const References> refs,
                            const std::optional<ExternalScores>& spice = std::nullopt,
                            const std::optional<ExternalScores>& meteor = std::nullopt);

// Candidates CSV `file_name,caption`.
std::map<std::string, std::string> ReadCandidates(const std::filesystem::path& path);
void WriteCandidates(const std::filesystem::path& path,
                     std::span<const std::string> clip_ids,
                     std::span<const std::string> captions);

// Scores every clip of `dataset`; a clip without a candidate is an error.
EvalReport EvaluateCorpus(const std::map<std::string, std::string>& candidates,
                          const Dataset& dataset,
                          const std::optional<ExternalScores>& spice = std::nullopt,
                          const std::optional<ExternalScores>& meteor = std::nullopt);

}  // namespace cappipe

#endif  // CAPPIPE_METRICS_H_
