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

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cappipe/errors.h"
#include "test_util.h"

namespace cappipe {
namespace {

Tokens T(std::initializer_list<const char*> words) { return Tokens(words.begin(), words.end()); }

TEST(Tokenize, Examples) {
  EXPECT_EQ(Tokenize("A dog barks, loudly."), T({"a", "dog", "barks", "loudly"}));
  EXPECT_TRUE(Tokenize("").empty());
  EXPECT_EQ(Tokenize("Car-horn honks"), T({"car", "horn", "honks"}));
  EXPECT_EQ(Tokenize("  tabs\tand\nnewlines  "), T({"tabs", "and", "newlines"}));
}

TEST(Tokenize, IdempotentOnJoinedOutput) {
  std::mt19937_64 rng(7);
  const std::string alphabet = "abcXYZ  ,.-!?'\t09";
  std::uniform_int_distribution<size_t> pick(0, alphabet.size() - 1), len(0, 40);
  for (int trial = 0; trial < 500; ++trial) {
    std::string s(len(rng), ' ');
    for (char& c : s) c = alphabet[pick(rng)];
    const Tokens once = Tokenize(s);
    EXPECT_EQ(Tokenize(JoinTokens(once)), once) << s;
  }
}

TEST(Vocabulary, Examples) {
  const std::vector<Tokens> caps = {T({"a", "dog"}), T({"a", "cat"})};
  const Vocabulary v1 = Vocabulary::Build(caps, 1);
  EXPECT_EQ(v1.size(), 7);
  EXPECT_EQ(v1.NonReservedTokens(), T({"a", "dog", "cat"}));
  const Vocabulary v2 = Vocabulary::Build(caps, 2);
  EXPECT_EQ(v2.NonReservedTokens(), T({"a"}));
  EXPECT_EQ(v2.IdOf("dog"), Vocabulary::kUnk);
  EXPECT_THROW(Vocabulary::Build(std::vector<Tokens>{}, 1), ValidationError);
  EXPECT_THROW(Vocabulary::Build(caps, 0), ValidationError);
}

TEST(Vocabulary, ReservedIdsAndRoundTrip) {
  const std::vector<Tokens> caps = {T({"x", "y", "z", "x"}), T({"w"})};
  const Vocabulary v = Vocabulary::Build(caps, 1);
  EXPECT_EQ(v.IdOf(v.TokenOf(Vocabulary::kPad)), Vocabulary::kPad);
  EXPECT_EQ(v.IdOf(v.TokenOf(Vocabulary::kEos)), Vocabulary::kEos);
  for (int id = Vocabulary::kNumReserved; id < v.size(); ++id)
    EXPECT_EQ(v.IdOf(v.TokenOf(id)), id);
  EXPECT_EQ(v.Count("x"), 2);
  const Vocabulary back = Vocabulary::FromTokens(v.NonReservedTokens());
  for (int id = 0; id < v.size(); ++id) EXPECT_EQ(back.TokenOf(id), v.TokenOf(id));
  const std::vector<int> ids = {Vocabulary::kBos, v.IdOf("y"), Vocabulary::kEos};
  EXPECT_EQ(v.Decode(ids), T({"y"}));
}

TEST(Idf, Examples) {
  const IdfTable t = IdfTable::Compute(std::vector<Tokens>{T({"a", "cat"}), T({"a", "dog"})});
  EXPECT_EQ(*t.Idf("a"), 0.0);
  EXPECT_NEAR(*t.Idf("cat"), 0.693147180559945, 1e-12);
  EXPECT_FALSE(t.Idf("bird").has_value());
  const IdfTable one = IdfTable::Compute(std::vector<Tokens>{T({"p", "q", "p"})});
  EXPECT_EQ(*one.Idf("p"), 0.0);
  EXPECT_EQ(*one.Idf("q"), 0.0);
  const IdfTable xy = IdfTable::Compute(std::vector<Tokens>{T({"x"}), T({"x"}), T({"y"})});
  EXPECT_NEAR(*xy.Idf("x"), 0.405465108108164, 1e-12);
  EXPECT_NEAR(*xy.Idf("y"), 1.09861228866811, 1e-12);
  EXPECT_THROW(IdfTable::Compute(std::vector<Tokens>{}), ValidationError);
}

TEST(Idf, TokenInEveryDocumentIsExactlyZero) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> word(0, 9), n(1, 6), docs(1, 12);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Tokens> d(docs(rng));
    for (auto& doc : d) {
      doc.push_back("common");
      for (int i = n(rng); i > 0; --i) doc.push_back("w" + std::to_string(word(rng)));
    }
    const IdfTable t = IdfTable::Compute(d);
    EXPECT_EQ(*t.Idf("common"), 0.0);
    for (const auto& [tok, v] : t.idf()) {
      EXPECT_GE(v, 0.0);
      EXPECT_EQ(v, std::log(static_cast<double>(d.size()) /
                            static_cast<double>(t.DocumentFrequency(tok))));
    }
  }
}

TEST(TfIdf, Examples) {
  const IdfTable t = IdfTable::Compute(std::vector<Tokens>{T({"a", "cat"}), T({"a", "dog"})});
  const auto s = ComputeTfIdf(T({"a", "a", "cat"}), t);
  EXPECT_EQ(s.at("a"), 0.0);
  EXPECT_NEAR(s.at("cat"), 0.231049060186648, 1e-12);
  const auto unseen = ComputeTfIdf(T({"owl", "a"}), t);
  EXPECT_NEAR(unseen.at("owl"), 0.5 * std::log(2.0), 1e-15);
  EXPECT_THROW(ComputeTfIdf(Tokens{}, t), ValidationError);
}

TEST(LemmaTable, ParseAndIdempotence) {
  const LemmaTable lt = LemmaTable::Parse("# c\nbirds\tbird\n\nsinging\tsing\n");
  EXPECT_EQ(lt.Lemma("birds"), "bird");
  EXPECT_EQ(lt.Lemma("bird"), "bird");
  EXPECT_EQ(lt.Lemma("owl"), "owl");
  EXPECT_EQ(lt.size(), 2u);
  EXPECT_EQ(LemmaTable::Parse(lt.Serialize()).Lemma("singing"), "sing");
  // lemma(lemma(w)) must equal lemma(w).
  EXPECT_THROW(LemmaTable::Parse("dogs\tdog\ndog\tcanine\n"), ValidationError);
  EXPECT_THROW(LemmaTable::Parse("just-one-column\n"), ValidationError);
}

TEST(MetadataText, SplitsAndStrips) {
  EXPECT_EQ(SplitMetadataText("birds_singing_01.wav", true), T({"birds", "singing"}));
  EXPECT_EQ(SplitMetadataText("Rain;thunder storm", false), T({"rain", "thunder", "storm"}));
}

Clip MakeClip(const std::string& name, const std::string& keywords) {
  Clip c;
  c.clip_id = name;
  c.file_name_raw = name;
  c.metadata_keywords_raw = keywords;
  for (auto& cap : c.captions) cap = T({"a", "sound"});
  return c;
}

TEST(KeywordVocab, PriorAndWeightArithmetic) {
  std::vector<Tokens> samples(20, T({"every"}));
  for (int i = 0; i < 5; ++i) samples[i].push_back("owl");
  const KeywordVocab kv = KeywordVocab::Build(samples, 1);
  const int owl = *kv.IdOf("owl"), every = *kv.IdOf("every");
  EXPECT_EQ(kv.prior(owl), 0.25);
  EXPECT_EQ(kv.weight(owl), 4.0);
  EXPECT_EQ(kv.weight(every), 1.0);
  for (int i = 0; i < kv.size(); ++i) EXPECT_EQ(kv.prior(i) * kv.weight(i), 1.0);
}

TEST(KeywordVocab, StrictlyMoreThanMinOccurrences) {
  std::vector<Tokens> samples;
  for (int i = 0; i < 10; ++i) samples.push_back(T({"ten"}));
  for (int i = 0; i < 11; ++i) samples.push_back(T({"eleven"}));
  const KeywordVocab kv = KeywordVocab::Build(samples, 10);
  EXPECT_FALSE(kv.IdOf("ten").has_value());
  EXPECT_TRUE(kv.IdOf("eleven").has_value());
}

TEST(KeywordVocab, PriorTimesWeightIsOneOnRandomCorpora) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> word(0, 14), n(0, 5), count(1, 60);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Tokens> samples(count(rng));
    for (auto& s : samples)
      for (int i = n(rng); i > 0; --i) s.push_back("k" + std::to_string(word(rng)));
    const KeywordVocab kv = KeywordVocab::Build(samples, 1);
    for (int i = 0; i < kv.size(); ++i) {
      EXPECT_GT(kv.prior(i), 0.0);
      EXPECT_LE(kv.prior(i), 1.0);
      // weight = 1 / prior is correctly rounded, so the product is 1 to one ulp.
      EXPECT_LE(std::abs(kv.prior(i) * kv.weight(i) - 1.0), 0x1p-52) << kv.prior(i);
      EXPECT_EQ(kv.weight(i), 1.0 / kv.prior(i));
    }
  }
}

TEST(MetaKeywords, ExtractionExamples) {
  const LemmaTable lt = LemmaTable::Parse("birds\tbird\nsinging\tsing\nsings\tsing\n");
  std::vector<Clip> clips;
  for (int i = 0; i < 3; ++i) clips.push_back(MakeClip("birds_singing_0" + std::to_string(i) + ".wav", "bird;sings"));
  clips.push_back(MakeClip("engine_idle.wav", "motor"));
  const Dataset ds(clips);
  const KeywordVocab kv = BuildMetaKeywordVocab(ds, lt, 1);
  const std::vector<int> got = ExtractMetaKeywords(ds[0], kv, lt);
  // "bird" and "sing" each appear twice in the clip; the set holds them once.
  EXPECT_EQ(got.size(), 2u);
  EXPECT_EQ(got, kv.Lookup(T({"bird", "sing"})));
  EXPECT_TRUE(ExtractMetaKeywords(ds[3], kv, lt).empty());
  EXPECT_THROW(BuildMetaKeywordVocab(Dataset{}, lt, 1), ValidationError);
}

TEST(CaptionKeywords, FunctionWordsExcluded) {
  EXPECT_TRUE(IsFunctionWord("the"));
  EXPECT_FALSE(IsFunctionWord("dog"));
  const LemmaTable lt = LemmaTable::Parse("dogs\tdog\nbarking\tbark\n");
  EXPECT_EQ(CaptionContentLemmas(T({"the", "dogs", "are", "barking"}), lt), T({"dog", "bark"}));
}

std::array<std::string, 5> Five(const std::string& s) { return {s, s, s, s, s}; }

TEST(LoadDataset, WellFormedCorpus) {
  const auto root = testing::TempDir("corpus_ok");
  testing::WriteCorpus(root, {Five("A dog barks."), Five("Rain falls"), Five("Wind, howling")},
                       {"dog", "rain", "wind"}, 4, 3, 1);
  const Dataset ds = LoadDataset(root);
  ASSERT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds[0].clip_id, "clip_0.wav");
  EXPECT_EQ(ds[0].captions[2], T({"a", "dog", "barks"}));
  EXPECT_EQ(ds[2].metadata_keywords_raw, "wind");
  EXPECT_EQ(ds[1].feature_path.filename(), "clip_1.capf");
  EXPECT_EQ(ds.IndexOf("clip_2.wav"), 2u);
  EXPECT_FALSE(ds.IndexOf("nope").has_value());
}

std::string ErrorOf(const std::filesystem::path& root) {
  try {
    LoadDataset(root);
  } catch (const ValidationError& e) {
    return e.what();
  }
  return "";
}

TEST(LoadDataset, Errors) {
  const auto root = testing::TempDir("corpus_bad");
  testing::WriteCorpus(root, {Five("a"), Five("b")}, {"x", "y"}, 2, 2, 1);
  EXPECT_NE(ErrorOf(root / "absent").find("absent"), std::string::npos);

  testing::WriteFile(root / "captions.csv",
                     "file_name,caption_1,caption_2,caption_3,caption_4,caption_5\n"
                     "clip_0.wav,a,b,c,d,e\nclip_1.wav,a,b,c,d\n");
  const std::string four = ErrorOf(root);
  EXPECT_NE(four.find("expected 5 captions"), std::string::npos) << four;
  EXPECT_NE(four.find("clip_1.wav"), std::string::npos) << four;

  testing::WriteFile(root / "captions.csv",
                     "file_name,caption_1,caption_2,caption_3,caption_4,caption_5\n"
                     "clip_0.wav,a,b,c,d,e\nclip_9.wav,a,b,c,d,e\n");
  EXPECT_NE(ErrorOf(root).find("clip_9"), std::string::npos);

  testing::WriteFile(root / "captions.csv",
                     "file_name,caption_1,caption_2,caption_3,caption_4,caption_5\n"
                     "clip_0.wav,a,b,c,d,e\nclip_0.wav,a,b,c,d,e\n");
  EXPECT_NE(ErrorOf(root), "");

  testing::WriteFile(root / "captions.csv",
                     "file_name,caption_1,caption_2,caption_3,caption_4,caption_5\n"
                     "clip_0.wav,a,b,,d,e\n");
  EXPECT_NE(ErrorOf(root), "");
}

TEST(LoadDataset, QuotedFields) {
  const auto root = testing::TempDir("corpus_quoted");
  testing::WriteCorpus(root, {Five("x")}, {"k"}, 2, 2, 1);
  testing::WriteFile(root / "captions.csv",
                     "file_name,caption_1,caption_2,caption_3,caption_4,caption_5\n"
                     "clip_0.wav,\"A dog, then \"\"a cat\"\"\",b,c,d,e\n");
  const Dataset ds = LoadDataset(root);
  EXPECT_EQ(ds[0].captions[0], T({"a", "dog", "then", "a", "cat"}));
}

}  // namespace
}  // namespace cappipe
