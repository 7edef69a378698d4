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

#ifndef CAPPIPE_AUTODIFF_H_
#define CAPPIPE_AUTODIFF_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cappipe/tensor.h"

namespace cappipe {

// Named trainable tensors with gradient accumulators and Adam moments.
class ParamSet {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
    Tensor m;
    Tensor v;
  };

  void Add(const std::string& name, Tensor init);
  bool Has(const std::string& name) const;
  Entry& at(const std::string& name);
  const Entry& at(const std::string& name) const;
  const Tensor& value(const std::string& name) const { return at(name).value; }

  std::vector<std::string> Names() const;  // sorted
  size_t size() const { return entries_.size(); }
  size_t ScalarCount() const;
  void ZeroGrad();

  int64_t step_count() const { return step_count_; }
  void set_step_count(int64_t s) { step_count_ = s; }

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
  int64_t step_count_ = 0;
};

class Tape;

// Handle to a node on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, size_t id) : tape_(tape), id_(id) {}
  const Tensor& value() const;
  Tape* tape() const { return tape_; }
  size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  // Scalar value of a 1x1 node.
  double scalar() const { return value()[0]; }

 private:
  Tape* tape_ = nullptr;
  size_t id_ = 0;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so creation order
// is a valid topological order for the backward sweep.
class Tape {
 public:
  // Receives the node's own output value and its accumulated gradient.
  using BackwardFn = std::function<void(Tape&, const Tensor& out_value,
                                        const Tensor& out_grad)>;

  Var Constant(Tensor value);
  // Leaf bound to a ParamSet entry; gradients flow into entry.grad on
  // Backward(). Repeated calls with the same name return the same node.
  Var Param(ParamSet& params, const std::string& name);

  Var Record(Tensor value, std::span<const Var> parents, BackwardFn backward);

  // Seeds d(root)/d(root) = 1 and accumulates parameter gradients.
  void Backward(Var root);

  const Tensor& value(size_t id) const { return nodes_[id].value; }
  bool requires_grad(size_t id) const { return nodes_[id].requires_grad; }
  // Accumulator for node `id`, allocated on first use.
  Tensor& grad(size_t id);
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    ParamSet::Entry* param = nullptr;
  };
  std::vector<Node> nodes_;
  std::map<std::string, size_t> param_nodes_;
};

namespace ad {

Var MatMul(Var a, Var b);
Var Add(Var a, Var b);
Var AddBias(Var x, Var bias);
Var Mul(Var a, Var b);
Var Scale(Var a, double s);
// lambda * a + (1 - lambda) * b
Var Lerp(Var a, Var b, double lambda);
Var Tanh(Var x);
Var Sigmoid(Var x);
Var Softmax(Var x);  // row-wise
Var ConcatCols(std::span<const Var> parts);
Var ConcatRows(std::span<const Var> parts);
Var SliceCols(Var x, size_t begin, size_t count);
Var SliceRows(Var x, size_t begin, size_t count);
Var MeanPool(Var x);  // mean over rows -> 1 x cols
Var BroadcastRows(Var row, size_t n);
Var EmbeddingLookup(Var table, std::span<const int> ids);

// Returns B x 2H holding [h' | c'].
Var LstmCell(Var x, Var h, Var c, Var wx, Var wh, Var b);

struct BlstmVars {
  Var outputs;      // T x 2H, [forward | backward] per step
  Var final_c_fwd;  // 1 x H, after the last frame
  Var final_c_bwd;  // 1 x H, after the first frame
};
// Bidirectional LSTM over the rows of `input` with zero initial states.
BlstmVars Blstm(Var input, Var wx_fwd, Var wh_fwd, Var b_fwd, Var wx_bwd,
                Var wh_bwd, Var b_bwd);

// -sum_k t_k ln softmax(logits)_k averaged over rows. Targets may be soft.
Var SoftmaxCrossEntropy(Var logits, const Tensor& targets);
// -sum_i w_i [t_i ln p_i + (1 - t_i) ln(1 - p_i)] averaged over rows, with p
// clamped to [eps, 1 - eps].
Var WeightedBinaryCrossEntropy(Var probs, const Tensor& targets,
                               std::span<const double> weights,
                               double eps = 1e-12);
// Mean over rows of sum_k mask_k * p_k.
Var MaskedMass(Var probs, std::span<const uint8_t> mask);
// sum_i weights_i * scalars_i for 1x1 inputs.
Var WeightedSum(std::span<const Var> scalars, std::span<const double> weights);

}  // namespace ad

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // <= 0 disables clipping
};

// Rescales all gradients so their global L2 norm is at most clip_norm.
// Returns the norm before clipping.
double ClipGradientNorm(ParamSet& params, double clip_norm);
double GlobalGradientNorm(const ParamSet& params);

// Global-norm clipping, one bias-corrected Adam update, then zeroes gradients.
// Throws RuntimeFailure naming the tensor on non-finite gradients.
void AdamStep(ParamSet& params, const AdamConfig& cfg);

struct GradCheckFailure {
  std::string tensor;
  size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  size_t checked = 0;
  std::vector<GradCheckFailure> failures;
  bool ok() const { return failures.empty(); }
};

struct GradCheckOptions {
  double tolerance = 1e-6;
  double step = 1e-5;
  // Entries with |analytic| and |numeric| both below this scale are compared
  // absolutely against it instead of relatively.
  double scale_floor = 1e-3;
  // 0 checks every scalar; otherwise at most this many per tensor, evenly
  // strided.
  size_t max_per_tensor = 0;
};

using ScalarFunction = std::function<Var(Tape&, ParamSet&)>;

// Central finite differences against reverse-mode gradients.
GradCheckReport GradientCheck(const ScalarFunction& f, ParamSet& params,
                              const GradCheckOptions& options = {});

// Checkpoint: <dir>/manifest.json lists names, shapes and blob files; each
// tensor is stored as little-endian f64 in its own file. `metadata_json` is
// embedded verbatim under "config".
void SaveParams(const std::filesystem::path& dir, const ParamSet& params,
                const std::string& metadata_json = "{}");

struct LoadedParams {
  ParamSet params;
  std::string metadata_json;
};
LoadedParams LoadParams(const std::filesystem::path& dir);

}  // namespace cappipe

#endif  // CAPPIPE_AUTODIFF_H_
