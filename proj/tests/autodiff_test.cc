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

#include "cappipe/autodiff.h"

#include <gtest/gtest.h>

#include "json.hpp"

#include <cmath>
#include <functional>
#include <bit>
#include <random>

#include "cappipe/errors.h"
#include "test_util.h"

namespace cappipe {
namespace {

using testing::RandomTensor;

// Reduces any tensor-valued Var to a scalar with a fixed random projection.
Var Reduce(Tape& tape, Var x, std::mt19937_64& rng) {
  return ad::MatMul(ad::MeanPool(x), tape.Constant(RandomTensor(x.value().cols(), 1, rng)));
}

TEST(Tensor, ShapeMismatchNamesOpAndShapes) {
  const Tensor a(2, 3), b(2, 3);
  try {
    kernels::MatMul(a, b);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
  }
  Tape tape;
  EXPECT_THROW(ad::Add(tape.Constant(Tensor(2, 3)), tape.Constant(Tensor(3, 2))),
               ValidationError);
}

TEST(CoreOps, ElementaryValues) {
  Tape tape;
  Var z = tape.Constant(Tensor(1, 1));
  EXPECT_EQ(ad::Sigmoid(z).scalar(), 0.5);
  EXPECT_EQ(ad::Tanh(z).scalar(), 0.0);
  const Var s = ad::Softmax(tape.Constant(Tensor(1, 4, 3.0)));
  for (double v : s.value().data()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(CoreOps, EmbeddingLookupMatchesOneHotMatmul) {
  std::mt19937_64 rng(3);
  const Tensor table = RandomTensor(7, 5, rng);
  const std::vector<int> ids = {3, 0, 6, 3};
  Tensor onehot(ids.size(), 7);
  for (size_t i = 0; i < ids.size(); ++i) onehot(i, ids[i]) = 1.0;
  Tape tape;
  const Var a = ad::EmbeddingLookup(tape.Constant(table), ids);
  const Var b = ad::MatMul(tape.Constant(onehot), tape.Constant(table));
  EXPECT_EQ(a.value(), b.value());
}

TEST(CoreOps, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = RandomTensor(4, 9, rng, 20.0);
    const Tensor p = kernels::SoftmaxRows(x);
    for (size_t r = 0; r < p.rows(); ++r) {
      double s = 0.0;
      for (double v : p.row(r)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(LstmCell, ZeroWeightsHandValues) {
  Tape tape;
  const Var x = tape.Constant(Tensor(1, 2));
  const Var h = tape.Constant(Tensor(1, 3));
  const Var wx = tape.Constant(Tensor(2, 12));
  const Var wh = tape.Constant(Tensor(3, 12));
  const Var b = tape.Constant(Tensor(1, 12));
  const Var out0 = ad::LstmCell(x, h, tape.Constant(Tensor(1, 3)), wx, wh, b);
  for (double v : out0.value().data()) EXPECT_EQ(v, 0.0);
  const Var out1 = ad::LstmCell(x, h, tape.Constant(Tensor(1, 3, 1.0)), wx, wh, b);
  for (size_t j = 0; j < 3; ++j) {
    EXPECT_DOUBLE_EQ(out1.value()(0, j), 0.5 * std::tanh(0.5));
    EXPECT_NEAR(out1.value()(0, j), 0.23106, 5e-6);
    EXPECT_DOUBLE_EQ(out1.value()(0, 3 + j), 0.5);
  }
}

TEST(LstmCell, BatchRowsMatchSingleRows) {
  std::mt19937_64 rng(11);
  const Tensor x = RandomTensor(3, 4, rng), h = RandomTensor(3, 2, rng),
               c = RandomTensor(3, 2, rng), wx = RandomTensor(4, 8, rng),
               wh = RandomTensor(2, 8, rng), b = RandomTensor(1, 8, rng);
  const auto batched = kernels::LstmCell(x, h, c, wx, wh, b);
  for (size_t r = 0; r < 3; ++r) {
    const int id[] = {static_cast<int>(r)};
    const auto single = kernels::LstmCell(kernels::GatherRows(x, id), kernels::GatherRows(h, id),
                                          kernels::GatherRows(c, id), wx, wh, b);
    for (size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(batched.h(r, j), single.h(0, j));
      EXPECT_EQ(batched.c(r, j), single.c(0, j));
    }
  }
}

struct BlstmWeights {
  Tensor wxf, whf, bf, wxb, whb, bb;
};

ad::BlstmVars RunBlstm(Tape& tape, const Tensor& input, const BlstmWeights& w) {
  return ad::Blstm(tape.Constant(input), tape.Constant(w.wxf), tape.Constant(w.whf),
                   tape.Constant(w.bf), tape.Constant(w.wxb), tape.Constant(w.whb),
                   tape.Constant(w.bb));
}

TEST(Blstm, ShapeAndSingleFrame) {
  std::mt19937_64 rng(2);
  const BlstmWeights w{RandomTensor(3, 8, rng), RandomTensor(2, 8, rng), RandomTensor(1, 8, rng),
                       RandomTensor(3, 8, rng), RandomTensor(2, 8, rng), RandomTensor(1, 8, rng)};
  Tape tape;
  EXPECT_EQ(RunBlstm(tape, RandomTensor(6, 3, rng), w).outputs.value().shape(),
            (std::vector<size_t>{6, 4}));
  // T = 1 with identical direction weights: both halves see the same frame.
  const BlstmWeights same{w.wxf, w.whf, w.bf, w.wxf, w.whf, w.bf};
  const auto one = RunBlstm(tape, RandomTensor(1, 3, rng), same);
  for (size_t j = 0; j < 2; ++j)
    EXPECT_EQ(one.outputs.value()(0, j), one.outputs.value()(0, 2 + j));
  EXPECT_EQ(one.final_c_fwd.value(), one.final_c_bwd.value());
  EXPECT_THROW(RunBlstm(tape, Tensor(std::vector<size_t>{0, 3}, {}), w), ValidationError);
}

TEST(Blstm, ReversalSwapsDirections) {
  std::mt19937_64 rng(4);
  const BlstmWeights w{RandomTensor(3, 8, rng), RandomTensor(2, 8, rng), RandomTensor(1, 8, rng),
                       RandomTensor(3, 8, rng), RandomTensor(2, 8, rng), RandomTensor(1, 8, rng)};
  const BlstmWeights swapped{w.wxb, w.whb, w.bb, w.wxf, w.whf, w.bf};
  const Tensor x = RandomTensor(5, 3, rng);
  Tensor rev(5, 3);
  for (size_t t = 0; t < 5; ++t)
    for (size_t j = 0; j < 3; ++j) rev(t, j) = x(4 - t, j);
  Tape tape;
  const auto a = RunBlstm(tape, x, w);
  const auto b = RunBlstm(tape, rev, swapped);
  for (size_t t = 0; t < 5; ++t)
    for (size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(a.outputs.value()(t, j), b.outputs.value()(4 - t, 2 + j));
      EXPECT_EQ(a.outputs.value()(t, 2 + j), b.outputs.value()(4 - t, j));
    }
  EXPECT_EQ(a.final_c_fwd.value(), b.final_c_bwd.value());
}

TEST(Losses, HandValues) {
  Tape tape;
  Tensor onehot(1, 4);
  onehot[2] = 1.0;
  EXPECT_NEAR(ad::SoftmaxCrossEntropy(tape.Constant(Tensor(1, 4)), onehot).scalar(),
              std::log(4.0), 1e-15);
  const double w[] = {4.0};
  EXPECT_NEAR(ad::WeightedBinaryCrossEntropy(tape.Constant(Tensor(1, 1, 0.5)),
                                             Tensor(1, 1, 1.0), w)
                  .scalar(),
              4.0 * std::log(2.0), 1e-15);
  // Mix-up soft target with lambda 0.5 over two classes.
  EXPECT_NEAR(ad::SoftmaxCrossEntropy(tape.Constant(Tensor(1, 2)), Tensor(1, 2, 0.5)).scalar(),
              std::log(2.0), 1e-15);
}

TEST(Adam, ZeroGradientLeavesParametersAndAdvancesStep) {
  ParamSet ps;
  ps.Add("w", Tensor::FromRows({{1.0, -2.0}}));
  AdamStep(ps, AdamConfig{});
  EXPECT_EQ(ps.value("w"), Tensor::FromRows({{1.0, -2.0}}));
  EXPECT_EQ(ps.step_count(), 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamSet ps;
  ps.Add("w", Tensor(1, 1, 0.3));
  ps.at("w").grad[0] = 1.0;
  AdamConfig cfg;
  AdamStep(ps, cfg);
  // m_hat = v_hat = 1 after bias correction.
  EXPECT_NEAR(ps.value("w")[0], 0.3 - cfg.lr / (1.0 + cfg.eps), 1e-15);
  EXPECT_EQ(ps.at("w").grad[0], 0.0);
}

TEST(Adam, ClippingBoundsGlobalNorm) {
  ParamSet ps;
  ps.Add("a", Tensor(1, 2));
  ps.Add("b", Tensor(1, 1));
  ps.at("a").grad = Tensor::FromRows({{6.0, 0.0}});
  ps.at("b").grad = Tensor::FromRows({{8.0}});
  EXPECT_DOUBLE_EQ(ClipGradientNorm(ps, 1.0), 10.0);
  EXPECT_NEAR(GlobalGradientNorm(ps), 1.0, 1e-12);
}

TEST(Adam, NonFiniteGradientNamesTensor) {
  ParamSet ps;
  ps.Add("decoder.w", Tensor(1, 2));
  ps.at("decoder.w").grad[1] = NAN;
  try {
    AdamStep(ps, AdamConfig{});
    FAIL();
  } catch (const RuntimeFailure& e) {
    EXPECT_NE(std::string(e.what()).find("decoder.w"), std::string::npos);
  }
}

TEST(GradientCheck, QuadraticIsExact) {
  ParamSet ps;
  std::mt19937_64 rng(1);
  ps.Add("x", RandomTensor(2, 3, rng));
  const Tensor a = RandomTensor(3, 3, rng);
  const GradCheckReport r = GradientCheck(
      [&](Tape& t, ParamSet& p) {
        Var x = t.Param(p, "x");
        Var y = ad::MatMul(x, t.Constant(a));
        const Tensor ones(1, 2, 1.0);
        Var sq = ad::Mul(y, y);
        return ad::MatMul(ad::MatMul(t.Constant(ones), sq), t.Constant(Tensor(3, 1, 1.0)));
      },
      ps);
  EXPECT_TRUE(r.ok());
  EXPECT_LT(r.max_rel_error, 1e-9);
  EXPECT_EQ(r.checked, 6u);
}

TEST(GradientCheck, WrongBackwardIsReported) {
  ParamSet ps;
  ps.Add("theta", Tensor::FromRows({{0.7, -0.2}}));
  const GradCheckReport r = GradientCheck(
      [](Tape& t, ParamSet& p) {
        Var x = t.Param(p, "theta");
        // x0^2 + x1^2 with a backward that forgets the factor 2.
        Tensor v(1, 1);
        v[0] = x.value()[0] * x.value()[0] + x.value()[1] * x.value()[1];
        const Var parents[] = {x};
        return t.Record(std::move(v), parents,
                        [x](Tape& tp, const Tensor&, const Tensor& g) {
                          Tensor& gx = tp.grad(x.id());
                          gx[0] += g[0] * x.value()[0];
                          gx[1] += g[0] * x.value()[1];
                        });
      },
      ps);
  ASSERT_EQ(r.failures.size(), 2u);
  EXPECT_EQ(r.failures[0].tensor, "theta");
  EXPECT_EQ(r.failures[0].index, 0u);
  EXPECT_EQ(r.failures[1].index, 1u);
  EXPECT_NEAR(r.failures[0].numeric, 1.4, 1e-8);
}

// Every backward rule against central differences: random shapes up to 8 per
// dimension, 20 seeds each.
using OpBuilder = std::function<Var(Tape&, ParamSet&, std::mt19937_64&)>;

struct OpCase {
  const char* name;
  std::function<void(ParamSet&, std::mt19937_64&)> make_params;
  OpBuilder build;
};

size_t Dim(std::mt19937_64& rng) { return std::uniform_int_distribution<size_t>(1, 8)(rng); }

std::vector<OpCase> OpCases() {
  // Shapes are drawn in make_params; build reads them back from the params.
  auto two = [](ParamSet& ps, std::mt19937_64& rng) {
    const size_t r = Dim(rng), c = Dim(rng);
    ps.Add("a", RandomTensor(r, c, rng));
    ps.Add("b", RandomTensor(r, c, rng));
  };
  auto one = [](ParamSet& ps, std::mt19937_64& rng) {
    ps.Add("a", RandomTensor(Dim(rng), Dim(rng), rng));
  };
  auto A = [](Tape& t, ParamSet& p) { return t.Param(p, "a"); };
  auto B = [](Tape& t, ParamSet& p) { return t.Param(p, "b"); };
  return {
      {"matmul",
       [](ParamSet& ps, std::mt19937_64& rng) {
         const size_t n = Dim(rng), k = Dim(rng), m = Dim(rng);
         ps.Add("a", RandomTensor(n, k, rng));
         ps.Add("b", RandomTensor(k, m, rng));
       },
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         return Reduce(t, ad::MatMul(A(t, p), B(t, p)), rng);
       }},
      {"add", two,
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         return Reduce(t, ad::Add(A(t, p), B(t, p)), rng);
       }},
      {"mul", two,
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         return Reduce(t, ad::Mul(A(t, p), B(t, p)), rng);
       }},
      {"lerp", two,
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         return Reduce(t, ad::Lerp(A(t, p), B(t, p), 0.3), rng);
       }},
      {"scale", one,
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         return Reduce(t, ad::Scale(A(t, p), -1.7), rng);
       }},
      {"add_bias",
       [](ParamSet& ps, std::mt19937_64& rng) {
         const size_t r = Dim(rng), c = Dim(rng);
         ps.Add("a", RandomTensor(r, c, rng));
         ps.Add("b", RandomTensor(1, c, rng));
       },
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         return Reduce(t, ad::AddBias(A(t, p), B(t, p)), rng);
       }},
      {"tanh", one,
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         return Reduce(t, ad::Tanh(A(t, p)), rng);
       }},
      {"sigmoid", one,
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         return Reduce(t, ad::Sigmoid(A(t, p)), rng);
       }},
      {"softmax", one,
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         return Reduce(t, ad::Softmax(A(t, p)), rng);
       }},
      {"concat_cols",
       [](ParamSet& ps, std::mt19937_64& rng) {
         const size_t r = Dim(rng);
         ps.Add("a", RandomTensor(r, Dim(rng), rng));
         ps.Add("b", RandomTensor(r, Dim(rng), rng));
       },
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         const Var parts[] = {A(t, p), B(t, p), A(t, p)};
         return Reduce(t, ad::ConcatCols(parts), rng);
       }},
      {"concat_rows",
       [](ParamSet& ps, std::mt19937_64& rng) {
         const size_t c = Dim(rng);
         ps.Add("a", RandomTensor(Dim(rng), c, rng));
         ps.Add("b", RandomTensor(Dim(rng), c, rng));
       },
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         const Var parts[] = {A(t, p), B(t, p)};
         return Reduce(t, ad::ConcatRows(parts), rng);
       }},
      {"slice_cols", one,
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         Var a = A(t, p);
         const size_t c = a.value().cols();
         const size_t begin = std::uniform_int_distribution<size_t>(0, c - 1)(rng);
         return Reduce(t, ad::SliceCols(a, begin, c - begin), rng);
       }},
      {"slice_rows", one,
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         Var a = A(t, p);
         const size_t r = a.value().rows();
         const size_t begin = std::uniform_int_distribution<size_t>(0, r - 1)(rng);
         return Reduce(t, ad::SliceRows(a, begin, r - begin), rng);
       }},
      {"mean_pool", one,
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         return Reduce(t, ad::MeanPool(A(t, p)), rng);
       }},
      {"broadcast_rows",
       [](ParamSet& ps, std::mt19937_64& rng) { ps.Add("a", RandomTensor(1, Dim(rng), rng)); },
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         return Reduce(t, ad::Tanh(ad::BroadcastRows(A(t, p), Dim(rng))), rng);
       }},
      {"embedding_lookup", one,
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         Var a = A(t, p);
         std::uniform_int_distribution<int> id(0, static_cast<int>(a.value().rows()) - 1);
         std::vector<int> ids(Dim(rng));
         for (int& v : ids) v = id(rng);
         return Reduce(t, ad::EmbeddingLookup(a, ids), rng);
       }},
      {"lstm_cell",
       [](ParamSet& ps, std::mt19937_64& rng) {
         const size_t b = Dim(rng), in = Dim(rng), h = Dim(rng);
         ps.Add("x", RandomTensor(b, in, rng));
         ps.Add("h", RandomTensor(b, h, rng));
         ps.Add("c", RandomTensor(b, h, rng));
         ps.Add("wx", RandomTensor(in, 4 * h, rng, 0.5));
         ps.Add("wh", RandomTensor(h, 4 * h, rng, 0.5));
         ps.Add("bias", RandomTensor(1, 4 * h, rng));
       },
       [](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         return Reduce(t,
                       ad::LstmCell(t.Param(p, "x"), t.Param(p, "h"), t.Param(p, "c"),
                                    t.Param(p, "wx"), t.Param(p, "wh"), t.Param(p, "bias")),
                       rng);
       }},
      {"blstm",
       [](ParamSet& ps, std::mt19937_64& rng) {
         const size_t steps = Dim(rng), in = Dim(rng), h = std::min<size_t>(Dim(rng), 4);
         ps.Add("x", RandomTensor(steps, in, rng));
         for (const char* d : {"f", "b"}) {
           ps.Add(std::string("wx") + d, RandomTensor(in, 4 * h, rng, 0.5));
           ps.Add(std::string("wh") + d, RandomTensor(h, 4 * h, rng, 0.5));
           ps.Add(std::string("bias") + d, RandomTensor(1, 4 * h, rng));
         }
       },
       [](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         const auto o = ad::Blstm(t.Param(p, "x"), t.Param(p, "wxf"), t.Param(p, "whf"),
                                  t.Param(p, "biasf"), t.Param(p, "wxb"), t.Param(p, "whb"),
                                  t.Param(p, "biasb"));
         const Var parts[] = {ad::MeanPool(o.outputs), o.final_c_fwd, o.final_c_bwd};
         return Reduce(t, ad::ConcatCols(parts), rng);
       }},
      {"softmax_cross_entropy", one,
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         Var a = A(t, p);
         Tensor target(a.value().rows(), a.value().cols());
         std::uniform_real_distribution<double> u(0.0, 1.0);
         for (size_t r = 0; r < target.rows(); ++r) {
           double s = 0.0;
           for (double& v : target.row(r)) s += (v = u(rng));
           for (double& v : target.row(r)) v /= s;
         }
         return ad::SoftmaxCrossEntropy(a, target);
       }},
      {"weighted_bce", one,
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         Var a = A(t, p);
         Tensor target(a.value().rows(), a.value().cols());
         std::bernoulli_distribution coin(0.5);
         for (double& v : target.data()) v = coin(rng) ? 1.0 : 0.0;
         std::vector<double> w(a.value().cols());
         std::uniform_real_distribution<double> u(0.5, 4.0);
         for (double& v : w) v = u(rng);
         return ad::WeightedBinaryCrossEntropy(ad::Sigmoid(a), target, w);
       }},
      {"masked_mass", one,
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         Var a = A(t, p);
         std::vector<uint8_t> mask(a.value().cols());
         std::bernoulli_distribution coin(0.5);
         for (auto& m : mask) m = coin(rng);
         return ad::MaskedMass(ad::Softmax(a), mask);
       }},
      {"weighted_sum", two,
       [=](Tape& t, ParamSet& p, std::mt19937_64& rng) {
         const Var parts[] = {Reduce(t, A(t, p), rng), Reduce(t, ad::Tanh(B(t, p)), rng)};
         const double w[] = {0.7, -1.3};
         return ad::WeightedSum(parts, w);
       }},
  };
}

class BackwardRule : public ::testing::TestWithParam<size_t> {};

TEST_P(BackwardRule, PassesGradientCheckOnRandomShapes) {
  const OpCase op = OpCases()[GetParam()];
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    std::mt19937_64 rng(seed);
    ParamSet ps;
    op.make_params(ps, rng);
    const uint64_t build_seed = rng();
    const GradCheckReport r = GradientCheck(
        [&](Tape& t, ParamSet& p) {
          std::mt19937_64 brng(build_seed);
          return op.build(t, p, brng);
        },
        ps);
    ASSERT_TRUE(r.ok()) << op.name << " seed " << seed << ": " << r.failures[0].tensor
                        << "[" << r.failures[0].index << "] rel " << r.failures[0].rel_error;
    EXPECT_LT(r.max_rel_error, 1e-6);
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, BackwardRule, ::testing::Range<size_t>(0, OpCases().size()),
                         [](const ::testing::TestParamInfo<size_t>& info) {
                           return std::string(OpCases()[info.param].name);
                         });

TEST(Determinism, RepeatedForwardIsBitIdentical) {
  std::mt19937_64 rng(9);
  const Tensor x = RandomTensor(5, 6, rng), w = RandomTensor(6, 4, rng);
  auto run = [&] {
    Tape t;
    return ad::Softmax(ad::Tanh(ad::MatMul(t.Constant(x), t.Constant(w)))).value();
  };
  EXPECT_EQ(run(), run());
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = testing::TempDir("ckpt_roundtrip");
  std::mt19937_64 rng(21);
  ParamSet ps;
  ps.Add("enc.w", RandomTensor(3, 4, rng));
  ps.Add("out.b", Tensor::FromRows({{1e-310, -0.0, 1.0 / 3.0}}));
  ps.set_step_count(17);
  SaveParams(dir / "c", ps, R"({"k":1})");
  const LoadedParams lp = LoadParams(dir / "c");
  EXPECT_EQ(lp.params.Names(), ps.Names());
  for (const auto& n : ps.Names()) {
    const auto a = ps.value(n).data(), b = lp.params.value(n).data();
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i)
      EXPECT_EQ(std::bit_cast<uint64_t>(a[i]), std::bit_cast<uint64_t>(b[i]));
  }
  EXPECT_EQ(lp.params.step_count(), 17);
  EXPECT_NE(lp.metadata_json.find("\"k\""), std::string::npos);
}

TEST(Checkpoint, MissingBlobNamesTensor) {
  const auto dir = testing::TempDir("ckpt_missing");
  ParamSet ps;
  ps.Add("dec.emb", Tensor(2, 2));
  SaveParams(dir / "c", ps);
  std::filesystem::remove(dir / "c" / "dec.emb.f64");
  try {
    LoadParams(dir / "c");
    FAIL();
  } catch (const RuntimeFailure& e) {
    EXPECT_NE(std::string(e.what()).find("dec.emb"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, WrongManifestShapeFails) {
  const auto dir = testing::TempDir("ckpt_shape");
  ParamSet ps;
  ps.Add("w", Tensor(2, 3));
  SaveParams(dir / "c", ps);
  auto m = nlohmann::json::parse(testing::ReadFile(dir / "c" / "manifest.json"));
  m["tensors"][0]["shape"] = {3, 3};
  testing::WriteFile(dir / "c" / "manifest.json", m.dump());
  EXPECT_THROW(LoadParams(dir / "c"), RuntimeFailure);
  EXPECT_THROW(LoadParams(dir / "nowhere"), RuntimeFailure);
}

}  // namespace
}  // namespace cappipe
