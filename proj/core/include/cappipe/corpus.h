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

#ifndef CAPPIPE_CORPUS_H_
#define CAPPIPE_CORPUS_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cappipe {

using Tokens = std::vector<std::string>;

inline constexpr int kCaptionsPerClip = 5;

// Lowercases ASCII, splits on Unicode whitespace and ASCII punctuation (so
// hyphenated words split) and drops the punctuation.
Tokens Tokenize(std::string_view text);

std::string JoinTokens(std::span<const std::string> tokens);

struct Clip {
  std::string clip_id;  // the captions CSV file_name
  std::filesystem::path feature_path;
  std::array<Tokens, kCaptionsPerClip> captions;
  std::string file_name_raw;
  std::string metadata_keywords_raw;
};

class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<Clip> clips,
                   std::filesystem::path root = {});

  const std::vector<Clip>& clips() const { return clips_; }
  size_t size() const { return clips_.size(); }
  bool empty() const { return clips_.empty(); }
  const Clip& operator[](size_t i) const { return clips_[i]; }
  const std::filesystem::path& root() const { return root_; }

  std::optional<size_t> IndexOf(std::string_view clip_id) const;
  // Subset in the given index order.
  Dataset Subset(std::span<const size_t> indices) const;

 private:
  std::vector<Clip> clips_;
  std::filesystem::path root_;
  std::unordered_map<std::string, size_t> index_;
};

// Reads <root>/captions.csv (header file_name,caption_1..caption_5),
// <root>/metadata.csv (file_name,keywords) and resolves each clip against
// <root>/features/<stem>.capf, falling back to <root>/audio/<file_name>.
// Clotho-style names (*captions*.csv, *metadata*.csv) are accepted too.
Dataset LoadDataset(const std::filesystem::path& root);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kNumReserved = 4;

  // Tokens reaching min_count get ids in order of first appearance.
  static Vocabulary Build(std::span<const Tokens> captions, int min_count = 1);
  // Rebuilds from the non-reserved tokens in id order (checkpoint restore).
  static Vocabulary FromTokens(std::span<const std::string> non_reserved);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int IdOf(std::string_view token) const;  // kUnk when absent
  bool Contains(std::string_view token) const;
  const std::string& TokenOf(int id) const;

  std::vector<int> Encode(std::span<const std::string> tokens) const;
  // Drops reserved ids.
  Tokens Decode(std::span<const int> ids) const;

  int64_t Count(std::string_view token) const;
  const std::map<std::string, int64_t>& counts() const { return counts_; }
  std::vector<std::string> NonReservedTokens() const;

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  std::map<std::string, int64_t> counts_;
};

// idf(t) = ln(N / df(t)) over documents treated as token sets.
class IdfTable {
 public:
  static IdfTable Compute(std::span<const Tokens> documents);

  size_t n_documents() const { return n_documents_; }
  std::optional<double> Idf(std::string_view token) const;
  // Unseen tokens get ln(N), as if they occurred in one document.
  double IdfOrUnseen(std::string_view token) const;
  int64_t DocumentFrequency(std::string_view token) const;
  const std::map<std::string, double, std::less<>>& idf() const { return idf_; }

 private:
  size_t n_documents_ = 0;
  std::map<std::string, int64_t, std::less<>> df_;
  std::map<std::string, double, std::less<>> idf_;
};

// tfidf(t) = count(t) / |document| * idf(t).
std::map<std::string, double> ComputeTfIdf(std::span<const std::string> document,
                                           const IdfTable& idf);

// Word -> lemma lookup. Words without an entry are their own lemma.
class LemmaTable {
 public:
  // Lines are `word<TAB>lemma`; '#' starts a comment; blank lines skipped.
  static LemmaTable Load(const std::filesystem::path& path);
  static LemmaTable Parse(std::string_view text);
  static LemmaTable FromPairs(
      std::span<const std::pair<std::string, std::string>> pairs);

  std::string Lemma(std::string_view word) const;
  size_t size() const { return table_.size(); }
  std::string Serialize() const;

 private:
  void CheckIdempotent() const;
  std::map<std::string, std::string, std::less<>> table_;
};

// Splits file names / metadata keyword fields at whitespace and punctuation,
// lowercased. A trailing file extension and purely numeric pieces are dropped.
Tokens SplitMetadataText(std::string_view text, bool strip_extension);

class KeywordVocab {
 public:
  // `samples` holds the lemmatized words of each training sample. Lemmas
  // counted more than `min_occurrences` times are kept; the prior of keyword
  // i is (# samples containing i) / (# samples) and its weight 1 / prior.
  static KeywordVocab Build(std::span<const Tokens> samples,
                            int min_occurrences);
  static KeywordVocab FromParts(std::vector<std::string> lemmas,
                                std::vector<double> priors);

  int size() const { return static_cast<int>(lemmas_.size()); }
  std::optional<int> IdOf(std::string_view lemma) const;
  const std::string& lemma(int id) const { return lemmas_[id]; }
  double prior(int id) const { return priors_[id]; }
  double weight(int id) const { return weights_[id]; }
  const std::vector<std::string>& lemmas() const { return lemmas_; }
  const std::vector<double>& priors() const { return priors_; }
  const std::vector<double>& weights() const { return weights_; }

  // Sorted unique keyword ids of the given lemmas.
  std::vector<int> Lookup(std::span<const std::string> lemmas) const;

 private:
  std::vector<std::string> lemmas_;
  std::vector<double> priors_;
  std::vector<double> weights_;
  std::map<std::string, int, std::less<>> ids_;
};

// Lemmatized metadata words of a clip: its file name (extension dropped) and
// its keyword field.
Tokens MetadataLemmas(const Clip& clip, const LemmaTable& lemmas);

KeywordVocab BuildMetaKeywordVocab(const Dataset& dataset,
                                   const LemmaTable& lemmas,
                                   int min_occurrences = 10);
std::vector<int> ExtractMetaKeywords(const Clip& clip, const KeywordVocab& kv,
                                     const LemmaTable& lemmas);

// Caption keywords: lemmas of caption content words (a fixed function-word
// list is excluded), one sample per clip over its five captions.
bool IsFunctionWord(std::string_view word);
Tokens CaptionContentLemmas(std::span<const std::string> caption,
                            const LemmaTable& lemmas);
KeywordVocab BuildCaptionKeywordVocab(const Dataset& dataset,
                                      const LemmaTable& lemmas,
                                      int min_occurrences = 10);

}  // namespace cappipe

#endif  // CAPPIPE_CORPUS_H_
