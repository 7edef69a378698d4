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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "cappipe/errors.h"
#include "test_util.h"

namespace cappipe {
namespace {

Tokens T(const std::string& s) { return Tokenize(s); }
References R(std::initializer_list<const char*> refs) {
  References out;
  for (const char* r : refs) out.push_back(T(r));
  return out;
}
References Same(const char* r) { return References(5, T(r)); }

TEST(Bleu, IdenticalIsHundred) {
  const std::vector<Tokens> c = {T("a dog barks at the mailman"), T("rain falls on the roof")};
  const std::vector<References> r = {
      R({"a dog barks at the mailman", "a dog is barking", "dogs bark", "barking", "a dog"}),
      R({"rain falls on the roof", "heavy rain", "it rains", "rain on a roof", "rainfall"})};
  for (int n = 1; n <= 4; ++n) EXPECT_NEAR(Bleu(c, r, n), 100.0, 1e-9) << n;
}

TEST(Bleu, ClippedPrecision) {
  const std::vector<Tokens> c = {T("the the the")};
  const std::vector<References> r = {R({"the cat"})};
  EXPECT_NEAR(Bleu(c, r, 1), 100.0 / 3.0, 1e-6);
}

TEST(Bleu, BrevityPenaltyAndErrors) {
  const std::vector<Tokens> c = {T("a dog")};
  const std::vector<References> r = {R({"a dog barks", "a dog barks loudly"})};
  EXPECT_NEAR(Bleu(c, r, 1), 100.0 * std::exp(1.0 - 3.0 / 2.0), 1e-9);
  EXPECT_LT(Bleu(c, r, 1), 100.0);
  EXPECT_THROW(Bleu(std::vector<Tokens>{}, std::vector<References>{}, 1), ValidationError);
  EXPECT_THROW(Bleu(c, r, 5), ValidationError);
}

TEST(RougeL, Fixtures) {
  const std::vector<Tokens> c = {T("a b c d")};
  const std::vector<References> r = {R({"a c d"})};
  // LCS 3, P 0.75, R 1, beta 1.2.
  EXPECT_NEAR(RougeL(c, r), 100.0 * 183.0 / 208.0, 1e-6);
  EXPECT_NEAR(RougeL(c, r), 87.98, 0.005);
  EXPECT_NEAR(RougeLSentence(T("x y z"), R({"x y z"})), 1.0, 1e-15);
  EXPECT_EQ(RougeLSentence(T("x y"), R({"p q"})), 0.0);
  EXPECT_EQ(RougeLSentence(Tokens{}, R({"p q"})), 0.0);
  // Best reference wins.
  EXPECT_NEAR(RougeLSentence(T("a b c d"), R({"z", "a c d"})), 183.0 / 208.0, 1e-15);
}

// Frozen from tests/oracles/cider_oracle.py.
TEST(CiderD, TwoClipFixture) {
  const std::vector<Tokens> c = {T("a dog barks"), T("rain falls on the roof")};
  const std::vector<References> r = {
      Same("a dog barks"),
      R({"rain falls on a roof", "heavy rain falls", "rain is falling on the roof",
         "water drips on a roof", "a storm with rain"})};
  const CiderResult res = CiderD(c, r);
  ASSERT_EQ(res.per_clip.size(), 2u);
  EXPECT_NEAR(res.per_clip[0], 7.500000000000001, 1e-6);
  EXPECT_NEAR(res.per_clip[1], 2.349256398818127, 1e-6);
  EXPECT_NEAR(res.corpus, 492.46281994090634, 1e-6);
}

TEST(CiderD, DisjointIsZeroAndNeedsTwoClips) {
  const std::vector<Tokens> c = {T("owl hoots"), T("rain falls")};
  const std::vector<References> r = {Same("a dog barks"), Same("wind blows")};
  const CiderResult res = CiderD(c, r);
  EXPECT_EQ(res.per_clip[0], 0.0);
  EXPECT_EQ(res.corpus, 0.0);
  EXPECT_THROW(CiderD(std::vector<Tokens>{c[0]}, std::vector<References>{r[0]}),
               ValidationError);
}

TEST(CiderD, WiderSigmaNeverLowersScore) {
  const std::vector<Tokens> c = {T("a dog barks at night loudly"), T("rain")};
  const std::vector<References> r = {Same("a dog barks"), Same("rain falls on the roof")};
  for (double sigma : {0.5, 1.0, 3.0, 6.0}) {
    const CiderResult narrow = CiderD(c, r, sigma), wide = CiderD(c, r, 2 * sigma);
    for (size_t i = 0; i < 2; ++i) EXPECT_GE(wide.per_clip[i], narrow.per_clip[i]);
  }
}

// A candidate equal to all five references beats every other candidate of the
// same length, by enumeration over a three-word vocabulary.
TEST(CiderD, ReferenceIsMaximalByEnumeration) {
  const std::vector<std::string> words = {"x", "y", "z"};
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> w(0, 2), len(1, 3);
  for (int trial = 0; trial < 30; ++trial) {
    auto random_sentence = [&] {
      Tokens s;
      for (int i = len(rng); i > 0; --i) s.push_back(words[w(rng)]);
      return s;
    };
    const Tokens target = random_sentence();
    std::vector<References> refs = {References(5, target)};
    for (int k = 0; k < 2; ++k) {
      References other;
      for (int i = 0; i < 5; ++i) other.push_back(random_sentence());
      refs.push_back(other);
    }
    std::vector<Tokens> cands = {target, refs[1][0], refs[2][0]};
    const double best = CiderD(cands, refs).per_clip[0];
    const size_t l = target.size();
    for (int code = 0; code < static_cast<int>(std::pow(3, l)); ++code) {
      Tokens cand;
      for (int i = 0, v = code; i < static_cast<int>(l); ++i, v /= 3) cand.push_back(words[v % 3]);
      cands[0] = cand;
      EXPECT_LE(CiderD(cands, refs).per_clip[0], best + 1e-12);
    }
  }
}

std::pair<std::vector<Tokens>, std::vector<References>> RandomCorpus(std::mt19937_64& rng,
                                                                     size_t n) {
  std::uniform_int_distribution<int> w(0, 7), len(1, 8);
  auto sentence = [&] {
    Tokens s;
    for (int i = len(rng); i > 0; --i) s.push_back("w" + std::to_string(w(rng)));
    return s;
  };
  std::vector<Tokens> c;
  std::vector<References> r;
  for (size_t i = 0; i < n; ++i) {
    c.push_back(sentence());
    References refs;
    for (int k = 0; k < 5; ++k) refs.push_back(sentence());
    r.push_back(refs);
  }
  return {c, r};
}

TEST(Metrics, BleuNonIncreasingInOrder) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto [c, r] = RandomCorpus(rng, 6);
    double prev = Bleu(c, r, 1);
    for (int n = 2; n <= 4; ++n) {
      const double b = Bleu(c, r, n);
      EXPECT_LE(b, prev + 1e-9);
      prev = b;
    }
  }
}

TEST(Metrics, InvariantToClipOrder) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    auto [c, r] = RandomCorpus(rng, 7);
    std::vector<size_t> perm(7);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Tokens> pc;
    std::vector<References> pr;
    for (size_t i : perm) {
      pc.push_back(c[i]);
      pr.push_back(r[i]);
    }
    for (int n = 1; n <= 4; ++n) EXPECT_NEAR(Bleu(c, r, n), Bleu(pc, pr, n), 1e-9);
    EXPECT_NEAR(RougeL(c, r), RougeL(pc, pr), 1e-9);
    EXPECT_NEAR(CiderD(c, r).corpus, CiderD(pc, pr).corpus, 1e-9);
  }
}

TEST(Spider, Composition) {
  const auto s = Spider(29.0, 8.9);
  ASSERT_TRUE(s.has_value());
  EXPECT_NEAR(*s, 18.95, 1e-6);
  EXPECT_EQ(RoundForTable(*s), 19.0);
  EXPECT_FALSE(Spider(29.0, std::nullopt).has_value());
  EXPECT_EQ(*Spider(12.5, 12.5), 12.5);
  EXPECT_EQ(RoundForTable(17.44), 17.4);
}

TEST(Report, ColumnsInTableOrder) {
  EXPECT_EQ(ReportColumns(), (std::vector<std::string>{"B-1", "B-2", "B-3", "B-4", "METEOR",
                                                       "ROUGE-L", "CIDEr", "SPICE", "SPIDEr"}));
}

Dataset TwoClipCorpus(const std::filesystem::path& root) {
  testing::WriteCorpus(root,
                       {{"A dog barks.", "a dog is barking", "dogs bark", "barking dog", "a dog"},
                        {"Rain falls on the roof", "heavy rain", "it rains", "rain on a roof",
                         "rainfall"}},
                       {"dog", "rain"}, 2, 2, 1);
  return LoadDataset(root);
}

TEST(EvaluateCorpus, FirstReferenceAndUnavailableSpider) {
  const Dataset ds = TwoClipCorpus(testing::TempDir("eval_first"));
  const std::map<std::string, std::string> cands = {{"clip_0.wav", "a dog barks"},
                                                    {"clip_1.wav", "rain falls on the roof"}};
  const EvalReport rep = EvaluateCorpus(cands, ds);
  EXPECT_NEAR(*rep.Get("B-1"), 100.0, 1e-9);
  EXPECT_FALSE(rep.Get("SPICE").has_value());
  EXPECT_FALSE(rep.Get("SPIDEr").has_value());
  EXPECT_NE(rep.ToText().find("SPIDEr unavailable (SPICE not computed)"), std::string::npos);
  const std::string csv = rep.ToCsv();
  EXPECT_LT(csv.find("B-1"), csv.find("ROUGE-L"));
  EXPECT_LT(csv.find("ROUGE-L"), csv.find("CIDEr"));
  EXPECT_EQ(EvaluateCorpus(cands, ds).ToCsv(), csv);
  EXPECT_EQ(rep.clip_ids.size(), 2u);
}

TEST(EvaluateCorpus, MissingClipIsNamed) {
  const Dataset ds = TwoClipCorpus(testing::TempDir("eval_missing"));
  try {
    EvaluateCorpus({{"clip_0.wav", "a dog"}}, ds);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("clip_1.wav"), std::string::npos);
  }
}

TEST(EvaluateCorpus, ExternalSpiceCompletesSpider) {
  const auto dir = testing::TempDir("eval_spice");
  const Dataset ds = TwoClipCorpus(dir / "c");
  testing::WriteFile(dir / "spice.csv", "file_name,score\nclip_0.wav,0.1\nclip_1.wav,0.3\n");
  const ExternalScores spice = ReadExternalScores(dir / "spice.csv");
  EXPECT_NEAR(spice.mean, 0.2, 1e-15);
  testing::WriteFile(dir / "spice_mean.csv",
                     "file_name,score\nclip_0.wav,0.1\nclip_1.wav,0.3\n__mean__,0.089\n");
  const ExternalScores with_mean = ReadExternalScores(dir / "spice_mean.csv");
  EXPECT_EQ(with_mean.mean, 0.089);
  EXPECT_EQ(with_mean.per_clip.size(), 2u);
  const std::map<std::string, std::string> cands = {{"clip_0.wav", "a dog barks"},
                                                    {"clip_1.wav", "rain"}};
  const EvalReport rep = EvaluateCorpus(cands, ds, with_mean);
  EXPECT_NEAR(*rep.Get("SPICE"), 8.9, 1e-12);
  EXPECT_NEAR(*rep.Get("SPIDEr"), (*rep.Get("CIDEr") + 8.9) / 2.0, 1e-12);
}

TEST(Candidates, RoundTrip) {
  const auto dir = testing::TempDir("cands");
  const std::vector<std::string> ids = {"a.wav", "b,c.wav"};
  const std::vector<std::string> caps = {"a dog barks", "rain, \"heavy\""};
  WriteCandidates(dir / "c.csv", ids, caps);
  const auto back = ReadCandidates(dir / "c.csv");
  EXPECT_EQ(back.at("a.wav"), caps[0]);
  EXPECT_EQ(back.at("b,c.wav"), caps[1]);
}

}  // namespace
}  // namespace cappipe
