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

#include "cappipe/corpus.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "cappipe/csv.h"
#include "cappipe/errors.h"

namespace cappipe {

namespace {

// Byte length of a Unicode whitespace sequence starting at s[i], 0 if none.
size_t WhitespaceLength(std::string_view s, size_t i) {
  const auto u = [&](size_t k) {
    return i + k < s.size() ? static_cast<unsigned char>(s[i + k]) : 0u;
  };
  const unsigned char c = u(0);
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' ||
      c == '\f')
    return 1;
  if (c == 0xC2 && (u(1) == 0x85 || u(1) == 0xA0)) return 2;
  if (c == 0xE1 && u(1) == 0x9A && u(2) == 0x80) return 3;
  if (c == 0xE2 && u(1) == 0x80 &&
      ((u(2) >= 0x80 && u(2) <= 0x8A) || u(2) == 0xA8 || u(2) == 0xA9 ||
       u(2) == 0xAF))
    return 3;
  if (c == 0xE2 && u(1) == 0x81 && u(2) == 0x9F) return 3;
  if (c == 0xE3 && u(1) == 0x80 && u(2) == 0x80) return 3;
  return 0;
}

bool IsAsciiPunct(char c) {
  const auto uc = static_cast<unsigned char>(c);
  return uc < 0x80 && std::ispunct(uc);
}

// Splits on whitespace and ASCII punctuation, lowercasing ASCII letters.
Tokens SplitWords(std::string_view text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (size_t i = 0; i < text.size();) {
    if (size_t ws = WhitespaceLength(text, i); ws > 0) {
      flush();
      i += ws;
      continue;
    }
    const char c = text[i];
    if (IsAsciiPunct(c)) {
      flush();
    } else {
      const auto uc = static_cast<unsigned char>(c);
      cur.push_back(uc < 0x80 ? static_cast<char>(std::tolower(uc)) : c);
    }
    ++i;
  }
  flush();
  return out;
}

bool AllDigits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c));
  });
}

std::filesystem::path FindCsv(const std::filesystem::path& root,
                              const std::string& exact,
                              const std::string& fragment) {
  if (std::filesystem::exists(root / exact)) return root / exact;
  std::vector<std::filesystem::path> matches;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(root, ec)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.find(fragment) != std::string::npos &&
        entry.path().extension() == ".csv")
      matches.push_back(entry.path());
  }
  std::sort(matches.begin(), matches.end());
  if (matches.empty())
    throw ValidationError("missing file " + (root / exact).string());
  return matches.front();
}

size_t ColumnIndex(const csv::Row& header, const std::string& name,
                   const std::filesystem::path& path) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end())
    throw ValidationError(path.string() + ": missing column '" + name + "'");
  return static_cast<size_t>(it - header.begin());
}

const std::set<std::string, std::less<>>& FunctionWords() {
  static const std::set<std::string, std::less<>> words = {
      "a",    "an",   "the",  "and",  "or",   "but",   "of",    "in",
      "on",   "at",   "to",   "for",  "with", "from",  "by",    "as",
      "is",   "are",  "was",  "were", "be",   "been",  "being", "it",
      "its",  "this", "that", "these", "those", "there", "then", "while",
      "into", "onto", "over", "under", "some", "up",    "down",  "out",
      "off",  "very", "can",  "has",  "have",  "had",   "their",
      "they", "he",   "she",  "his",  "her",  "them",  "something"};
  return words;
}

}  // namespace

Tokens Tokenize(std::string_view text) { return SplitWords(text); }

std::string JoinTokens(std::span<const std::string> tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

// ----------------------------------------------------------------- Dataset

Dataset::Dataset(std::vector<Clip> clips, std::filesystem::path root)
    : clips_(std::move(clips)), root_(std::move(root)) {
  for (size_t i = 0; i < clips_.size(); ++i) {
    if (!index_.emplace(clips_[i].clip_id, i).second)
      throw ValidationError("duplicate clip id " + clips_[i].clip_id);
    for (const Tokens& c : clips_[i].captions) {
      if (c.empty())
        throw ValidationError("clip " + clips_[i].clip_id +
                              " has an empty caption");
    }
  }
}

std::optional<size_t> Dataset::IndexOf(std::string_view clip_id) const {
  auto it = index_.find(std::string(clip_id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Dataset Dataset::Subset(std::span<const size_t> indices) const {
  std::vector<Clip> out;
  out.reserve(indices.size());
  for (size_t i : indices) out.push_back(clips_.at(i));
  return Dataset(std::move(out), root_);
}

Dataset LoadDataset(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root))
    throw ValidationError("missing dataset directory " + root.string());
  const auto captions_path = FindCsv(root, "captions.csv", "captions");
  const auto metadata_path = FindCsv(root, "metadata.csv", "metadata");

  std::map<std::string, std::string> keywords;
  {
    const auto rows = csv::ReadFile(metadata_path);
    if (rows.empty())
      throw ValidationError(metadata_path.string() + ": missing header");
    const size_t fn = ColumnIndex(rows[0], "file_name", metadata_path);
    const size_t kw = ColumnIndex(rows[0], "keywords", metadata_path);
    for (size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() <= std::max(fn, kw))
        throw ValidationError(metadata_path.string() + ": row " +
                              std::to_string(r + 1) + " is short");
      keywords[rows[r][fn]] = rows[r][kw];
    }
  }

  const auto features_dir = root / "features";
  const auto audio_dir = root / "audio";
  const bool use_features = std::filesystem::is_directory(features_dir);
  if (!use_features && !std::filesystem::is_directory(audio_dir))
    throw ValidationError("missing features/ or audio/ directory under " +
                          root.string());

  const auto rows = csv::ReadFile(captions_path);
  if (rows.empty())
    throw ValidationError(captions_path.string() + ": missing header");
  const csv::Row& header = rows[0];
  const size_t fn = ColumnIndex(header, "file_name", captions_path);
  std::array<size_t, kCaptionsPerClip> cap_cols{};
  for (int k = 0; k < kCaptionsPerClip; ++k)
    cap_cols[k] =
        ColumnIndex(header, "caption_" + std::to_string(k + 1), captions_path);

  std::vector<Clip> clips;
  for (size_t r = 1; r < rows.size(); ++r) {
    const csv::Row& row = rows[r];
    const std::string where =
        captions_path.string() + ": row " + std::to_string(r + 1);
    if (row.size() <= fn || row[fn].empty())
      throw ValidationError(where + ": missing file_name");
    Clip clip;
    clip.clip_id = row[fn];
    clip.file_name_raw = row[fn];
    int present = 0;
    for (int k = 0; k < kCaptionsPerClip; ++k) {
      if (cap_cols[k] < row.size() && !Tokenize(row[cap_cols[k]]).empty()) {
        clip.captions[k] = Tokenize(row[cap_cols[k]]);
        ++present;
      }
    }
    if (present != kCaptionsPerClip)
      throw ValidationError(where + " (" + clip.clip_id +
                            "): expected 5 captions, found " +
                            std::to_string(present));
    if (auto it = keywords.find(clip.clip_id); it != keywords.end())
      clip.metadata_keywords_raw = it->second;

    if (use_features) {
      clip.feature_path =
          features_dir /
          std::filesystem::path(clip.clip_id).replace_extension(".capf");
    } else {
      clip.feature_path = audio_dir / clip.clip_id;
    }
    if (!std::filesystem::exists(clip.feature_path))
      throw ValidationError(where + ": caption references absent audio/features " +
                            clip.feature_path.string());
    clips.push_back(std::move(clip));
  }
  return Dataset(std::move(clips), root);
}

// -------------------------------------------------------------- Vocabulary

Vocabulary Vocabulary::Build(std::span<const Tokens> captions, int min_count) {
  if (min_count < 1) throw ValidationError("min_count must be >= 1");
  std::vector<std::string> order;
  std::map<std::string, int64_t> counts;
  for (const Tokens& cap : captions) {
    for (const std::string& t : cap) {
      if (counts[t]++ == 0) order.push_back(t);
    }
  }
  if (order.empty()) throw ValidationError("empty corpus");
  std::vector<std::string> kept;
  for (const std::string& t : order)
    if (counts[t] >= min_count) kept.push_back(t);
  Vocabulary v = FromTokens(kept);
  v.counts_ = std::move(counts);
  return v;
}

Vocabulary Vocabulary::FromTokens(std::span<const std::string> non_reserved) {
  Vocabulary v;
  v.id_to_token_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (int i = 0; i < kNumReserved; ++i) v.token_to_id_[v.id_to_token_[i]] = i;
  for (const std::string& t : non_reserved) {
    if (!v.token_to_id_.emplace(t, v.size()).second)
      throw ValidationError("duplicate vocabulary token " + t);
    v.id_to_token_.push_back(t);
  }
  return v;
}

int Vocabulary::IdOf(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::Contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) != 0;
}

const std::string& Vocabulary::TokenOf(int id) const {
  if (id < 0 || id >= size())
    throw ValidationError("token id " + std::to_string(id) + " out of range");
  return id_to_token_[id];
}

std::vector<int> Vocabulary::Encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(IdOf(t));
  return ids;
}

Tokens Vocabulary::Decode(std::span<const int> ids) const {
  Tokens out;
  for (int id : ids)
    if (id >= kNumReserved) out.push_back(TokenOf(id));
  return out;
}

int64_t Vocabulary::Count(std::string_view token) const {
  auto it = counts_.find(std::string(token));
  return it == counts_.end() ? 0 : it->second;
}

std::vector<std::string> Vocabulary::NonReservedTokens() const {
  return {id_to_token_.begin() + kNumReserved, id_to_token_.end()};
}

// ----------------------------------------------------------------- IdfTable

IdfTable IdfTable::Compute(std::span<const Tokens> documents) {
  if (documents.empty()) throw ValidationError("compute_idf: zero documents");
  IdfTable t;
  t.n_documents_ = documents.size();
  bool any = false;
  for (const Tokens& doc : documents) {
    std::set<std::string_view> uniq(doc.begin(), doc.end());
    any = any || !uniq.empty();
    for (std::string_view tok : uniq) ++t.df_[std::string(tok)];
  }
  if (!any) throw ValidationError("compute_idf: all documents are empty");
  const double n = static_cast<double>(t.n_documents_);
  for (const auto& [tok, df] : t.df_)
    t.idf_[tok] = std::log(n / static_cast<double>(df));
  return t;
}

std::optional<double> IdfTable::Idf(std::string_view token) const {
  auto it = idf_.find(token);
  if (it == idf_.end()) return std::nullopt;
  return it->second;
}

double IdfTable::IdfOrUnseen(std::string_view token) const {
  if (auto v = Idf(token)) return *v;
  return std::log(static_cast<double>(n_documents_));
}

int64_t IdfTable::DocumentFrequency(std::string_view token) const {
  auto it = df_.find(token);
  return it == df_.end() ? 0 : it->second;
}

std::map<std::string, double> ComputeTfIdf(std::span<const std::string> document,
                                           const IdfTable& idf) {
  if (document.empty()) throw ValidationError("compute_tfidf: empty document");
  std::map<std::string, int64_t> counts;
  for (const auto& t : document) ++counts[t];
  std::map<std::string, double> out;
  const double len = static_cast<double>(document.size());
  for (const auto& [tok, c] : counts)
    out[tok] = static_cast<double>(c) / len * idf.IdfOrUnseen(tok);
  return out;
}

// --------------------------------------------------------------- LemmaTable

LemmaTable LemmaTable::Load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open lemma table " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  try {
    return Parse(ss.str());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

LemmaTable LemmaTable::Parse(std::string_view text) {
  std::vector<std::pair<std::string, std::string>> pairs;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
      line.remove_suffix(1);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos)
      throw ValidationError("line " + std::to_string(line_no) +
                            ": expected word<TAB>lemma");
    pairs.emplace_back(std::string(line.substr(0, tab)),
                       std::string(line.substr(tab + 1)));
    if (pairs.back().first.empty() || pairs.back().second.empty())
      throw ValidationError("line " + std::to_string(line_no) +
                            ": empty word or lemma");
  }
  return FromPairs(pairs);
}

LemmaTable LemmaTable::FromPairs(
    std::span<const std::pair<std::string, std::string>> pairs) {
  LemmaTable t;
  for (const auto& [w, l] : pairs) t.table_[w] = l;
  t.CheckIdempotent();
  return t;
}

void LemmaTable::CheckIdempotent() const {
  for (const auto& [word, lemma] : table_) {
    if (Lemma(lemma) != lemma)
      throw ValidationError("lemma table not idempotent: " + word + " -> " +
                            lemma + " -> " + Lemma(lemma));
  }
}

std::string LemmaTable::Lemma(std::string_view word) const {
  auto it = table_.find(word);
  return it == table_.end() ? std::string(word) : it->second;
}

std::string LemmaTable::Serialize() const {
  std::string out = "# word\tlemma\n";
  for (const auto& [w, l] : table_) out += w + "\t" + l + "\n";
  return out;
}

// ------------------------------------------------------------- KeywordVocab

Tokens SplitMetadataText(std::string_view text, bool strip_extension) {
  if (strip_extension) {
    const auto dot = text.rfind('.');
    const auto slash = text.find_last_of("/\\");
    if (dot != std::string_view::npos && dot > 0 &&
        (slash == std::string_view::npos || dot > slash))
      text = text.substr(0, dot);
  }
  Tokens words = SplitWords(text);
  std::erase_if(words, [](const std::string& w) { return AllDigits(w); });
  return words;
}

KeywordVocab KeywordVocab::Build(std::span<const Tokens> samples,
                                 int min_occurrences) {
  if (samples.empty()) throw ValidationError("keyword vocabulary: empty dataset");
  if (min_occurrences < 1) throw ValidationError("min_occurrences must be >= 1");
  std::map<std::string, int64_t> occurrences;
  std::map<std::string, int64_t> containing;
  for (const Tokens& s : samples) {
    for (const auto& l : s) ++occurrences[l];
    for (const auto& l : std::set<std::string>(s.begin(), s.end()))
      ++containing[l];
  }
  std::vector<std::string> lemmas;
  std::vector<double> priors;
  const double n = static_cast<double>(samples.size());
  for (const auto& [lemma, count] : occurrences) {
    if (count > min_occurrences) {
      lemmas.push_back(lemma);
      priors.push_back(static_cast<double>(containing[lemma]) / n);
    }
  }
  return FromParts(std::move(lemmas), std::move(priors));
}

KeywordVocab KeywordVocab::FromParts(std::vector<std::string> lemmas,
                                     std::vector<double> priors) {
  if (lemmas.size() != priors.size())
    throw ValidationError("keyword vocabulary: lemma/prior count mismatch");
  KeywordVocab kv;
  kv.lemmas_ = std::move(lemmas);
  kv.priors_ = std::move(priors);
  for (size_t i = 0; i < kv.lemmas_.size(); ++i) {
    if (!(kv.priors_[i] > 0.0 && kv.priors_[i] <= 1.0))
      throw ValidationError("keyword " + kv.lemmas_[i] + ": prior outside (0,1]");
    kv.weights_.push_back(1.0 / kv.priors_[i]);
    if (!kv.ids_.emplace(kv.lemmas_[i], static_cast<int>(i)).second)
      throw ValidationError("duplicate keyword " + kv.lemmas_[i]);
  }
  return kv;
}

std::optional<int> KeywordVocab::IdOf(std::string_view lemma) const {
  auto it = ids_.find(lemma);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> KeywordVocab::Lookup(std::span<const std::string> lemmas) const {
  std::set<int> ids;
  for (const auto& l : lemmas)
    if (auto id = IdOf(l)) ids.insert(*id);
  return {ids.begin(), ids.end()};
}

Tokens MetadataLemmas(const Clip& clip, const LemmaTable& lemmas) {
  Tokens words = SplitMetadataText(clip.file_name_raw, /*strip_extension=*/true);
  for (auto& w : SplitMetadataText(clip.metadata_keywords_raw, false))
    words.push_back(std::move(w));
  for (auto& w : words) w = lemmas.Lemma(w);
  return words;
}

KeywordVocab BuildMetaKeywordVocab(const Dataset& dataset,
                                   const LemmaTable& lemmas,
                                   int min_occurrences) {
  if (dataset.empty()) throw ValidationError("keyword vocabulary: empty dataset");
  std::vector<Tokens> samples;
  for (const Clip& c : dataset.clips()) samples.push_back(MetadataLemmas(c, lemmas));
  return KeywordVocab::Build(samples, min_occurrences);
}

std::vector<int> ExtractMetaKeywords(const Clip& clip, const KeywordVocab& kv,
                                     const LemmaTable& lemmas) {
  return kv.Lookup(MetadataLemmas(clip, lemmas));
}

bool IsFunctionWord(std::string_view word) {
  return FunctionWords().count(word) != 0;
}

Tokens CaptionContentLemmas(std::span<const std::string> caption,
                            const LemmaTable& lemmas) {
  Tokens out;
  for (const auto& w : caption) {
    if (IsFunctionWord(w)) continue;
    std::string l = lemmas.Lemma(w);
    if (!IsFunctionWord(l)) out.push_back(std::move(l));
  }
  return out;
}

KeywordVocab BuildCaptionKeywordVocab(const Dataset& dataset,
                                      const LemmaTable& lemmas,
                                      int min_occurrences) {
  if (dataset.empty()) throw ValidationError("keyword vocabulary: empty dataset");
  std::vector<Tokens> samples;
  for (const Clip& c : dataset.clips()) {
    Tokens all;
    for (const Tokens& cap : c.captions)
      for (auto& l : CaptionContentLemmas(cap, lemmas)) all.push_back(std::move(l));
    samples.push_back(std::move(all));
  }
  return KeywordVocab::Build(samples, min_occurrences);
}

}  // namespace cappipe
