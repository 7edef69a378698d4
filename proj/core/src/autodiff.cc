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

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cappipe/errors.h"
#include "json.hpp"

namespace cappipe {

namespace {

[[noreturn]] void ShapeError(const char* op, const Tensor& a, const Tensor& b) {
  throw ValidationError(std::string(op) + ": shape mismatch " +
                        a.ShapeString() + " vs " + b.ShapeString());
}

void AddInto(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

// ---------------------------------------------------------------- ParamSet

void ParamSet::Add(const std::string& name, Tensor init) {
  if (entries_.count(name)) throw ValidationError("duplicate parameter " + name);
  Entry e;
  e.grad = Tensor(init.shape(), std::vector<double>(init.size(), 0.0));
  e.m = e.grad;
  e.v = e.grad;
  e.value = std::move(init);
  entries_.emplace(name, std::move(e));
}

bool ParamSet::Has(const std::string& name) const {
  return entries_.count(name) != 0;
}

ParamSet::Entry& ParamSet::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError("unknown parameter " + name);
  return it->second;
}

const ParamSet::Entry& ParamSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ValidationError("unknown parameter " + name);
  return it->second;
}

std::vector<std::string> ParamSet::Names() const {
  std::vector<std::string> names;
  for (const auto& [k, _] : entries_) names.push_back(k);
  return names;
}

size_t ParamSet::ScalarCount() const {
  size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.value.size();
  return n;
}

void ParamSet::ZeroGrad() {
  for (auto& [_, e] : entries_) e.grad.Fill(0.0);
}

// -------------------------------------------------------------------- Tape

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::Constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::Param(ParamSet& params, const std::string& name) {
  if (auto it = param_nodes_.find(name); it != param_nodes_.end())
    return Var(this, it->second);
  ParamSet::Entry& e = params.at(name);
  Node n;
  n.value = e.value;
  n.requires_grad = true;
  n.param = &e;
  nodes_.push_back(std::move(n));
  param_nodes_[name] = nodes_.size() - 1;
  return Var(this, nodes_.size() - 1);
}

Var Tape::Record(Tensor value, std::span<const Var> parents,
                 BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape() != this) throw ValidationError("Var belongs to another tape");
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty() && !n.value.empty()) {
    n.grad = Tensor(n.value.shape(), std::vector<double>(n.value.size(), 0.0));
  }
  return n.grad;
}

void Tape::Backward(Var root) {
  if (root.tape() != this) throw ValidationError("Backward: foreign Var");
  if (root.value().size() != 1)
    throw ValidationError("Backward: root must be scalar, got " +
                          root.value().ShapeString());
  grad(root.id())[0] = 1.0;
  for (size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      // The backward rule may touch other nodes' gradients but never this
      // node's, so a copy-free reference is safe.
      n.backward(*this, n.value, n.grad);
    } else if (n.param != nullptr) {
      AddInto(n.param->grad, n.grad);
    }
  }
}

// ---------------------------------------------------------------------- ops

namespace ad {

namespace {

Tape& TapeOf(Var v) {
  if (!v.valid()) throw ValidationError("uninitialized Var");
  return *v.tape();
}

}  // namespace

Var MatMul(Var a, Var b) {
  Tape& t = TapeOf(a);
  Tensor out = kernels::MatMul(a.value(), b.value());
  const size_t ia = a.id(), ib = b.id();
  Var parents[] = {a, b};
  return t.Record(std::move(out), parents,
                  [ia, ib](Tape& tp, const Tensor&, const Tensor& g) {
                    if (tp.requires_grad(ia))
                      kernels::AccumulateMatMulTransB(g, tp.value(ib),
                                                      tp.grad(ia));
                    if (tp.requires_grad(ib))
                      kernels::AccumulateMatMulTransA(tp.value(ia), g,
                                                      tp.grad(ib));
                  });
}

Var Add(Var a, Var b) {
  if (!a.value().SameShape(b.value())) ShapeError("add", a.value(), b.value());
  Tape& t = TapeOf(a);
  Tensor out = a.value();
  AddInto(out, b.value());
  const size_t ia = a.id(), ib = b.id();
  Var parents[] = {a, b};
  return t.Record(std::move(out), parents, [ia, ib](Tape& tp, const Tensor&, const Tensor& g) {
    if (tp.requires_grad(ia)) AddInto(tp.grad(ia), g);
    if (tp.requires_grad(ib)) AddInto(tp.grad(ib), g);
  });
}

Var AddBias(Var x, Var bias) {
  Tape& t = TapeOf(x);
  Tensor out = kernels::AddBias(x.value(), bias.value());
  const size_t ix = x.id(), ib = bias.id();
  Var parents[] = {x, bias};
  return t.Record(std::move(out), parents, [ix, ib](Tape& tp, const Tensor&, const Tensor& g) {
    if (tp.requires_grad(ix)) AddInto(tp.grad(ix), g);
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      for (size_t r = 0; r < g.rows(); ++r)
        for (size_t c = 0; c < g.cols(); ++c) gb[c] += g(r, c);
    }
  });
}

Var Mul(Var a, Var b) {
  if (!a.value().SameShape(b.value())) ShapeError("mul", a.value(), b.value());
  Tape& t = TapeOf(a);
  Tensor out = a.value();
  auto bv = b.value().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const size_t ia = a.id(), ib = b.id();
  Var parents[] = {a, b};
  return t.Record(std::move(out), parents, [ia, ib](Tape& tp, const Tensor&, const Tensor& g) {
    if (tp.requires_grad(ia)) {
      Tensor& ga = tp.grad(ia);
      const Tensor& bv = tp.value(ib);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(ib)) {
      Tensor& gb = tp.grad(ib);
      const Tensor& av = tp.value(ia);
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var Scale(Var a, double s) {
  Tape& t = TapeOf(a);
  Tensor out = a.value();
  for (double& v : out.data()) v *= s;
  const size_t ia = a.id();
  Var parents[] = {a};
  return t.Record(std::move(out), parents, [ia, s](Tape& tp, const Tensor&, const Tensor& g) {
    Tensor& ga = tp.grad(ia);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var Lerp(Var a, Var b, double lambda) {
  if (!a.value().SameShape(b.value())) ShapeError("lerp", a.value(), b.value());
  if (lambda == 1.0) return a;
  Tape& t = TapeOf(a);
  const double mu = 1.0 - lambda;
  Tensor out = a.value();
  auto bv = b.value().data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = lambda * out[i] + mu * bv[i];
  const size_t ia = a.id(), ib = b.id();
  Var parents[] = {a, b};
  return t.Record(std::move(out), parents,
                  [ia, ib, lambda, mu](Tape& tp, const Tensor&, const Tensor& g) {
                    if (tp.requires_grad(ia)) {
                      Tensor& ga = tp.grad(ia);
                      for (size_t i = 0; i < g.size(); ++i)
                        ga[i] += lambda * g[i];
                    }
                    if (tp.requires_grad(ib)) {
                      Tensor& gb = tp.grad(ib);
                      for (size_t i = 0; i < g.size(); ++i) gb[i] += mu * g[i];
                    }
                  });
}


Var Tanh(Var x) {
  Tape& t = TapeOf(x);
  const size_t ix = x.id();
  Var parents[] = {x};
  return t.Record(kernels::Tanh(x.value()), parents,
                  [ix](Tape& tp, const Tensor& y, const Tensor& g) {
                    Tensor& gx = tp.grad(ix);
                    for (size_t i = 0; i < g.size(); ++i)
                      gx[i] += g[i] * (1.0 - y[i] * y[i]);
                  });
}

Var Sigmoid(Var x) {
  Tape& t = TapeOf(x);
  const size_t ix = x.id();
  Var parents[] = {x};
  return t.Record(kernels::Sigmoid(x.value()), parents,
                  [ix](Tape& tp, const Tensor& y, const Tensor& g) {
                    Tensor& gx = tp.grad(ix);
                    for (size_t i = 0; i < g.size(); ++i)
                      gx[i] += g[i] * y[i] * (1.0 - y[i]);
                  });
}

Var Softmax(Var x) {
  Tape& t = TapeOf(x);
  const size_t ix = x.id();
  Var parents[] = {x};
  return t.Record(kernels::SoftmaxRows(x.value()), parents,
                  [ix](Tape& tp, const Tensor& y, const Tensor& g) {
                    Tensor& gx = tp.grad(ix);
                    for (size_t r = 0; r < y.rows(); ++r) {
                      double dot = 0.0;
                      for (size_t c = 0; c < y.cols(); ++c)
                        dot += g(r, c) * y(r, c);
                      for (size_t c = 0; c < y.cols(); ++c)
                        gx(r, c) += y(r, c) * (g(r, c) - dot);
                    }
                  });
}

Var ConcatCols(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("concat: no inputs");
  Tape& t = TapeOf(parts[0]);
  std::vector<const Tensor*> values;
  std::vector<size_t> ids;
  for (const Var& p : parts) {
    values.push_back(&p.value());
    ids.push_back(p.id());
  }
  Tensor out = kernels::ConcatCols(values);
  return t.Record(std::move(out), parts,
                  [ids](Tape& tp, const Tensor&, const Tensor& g) {
                    size_t off = 0;
                    for (size_t id : ids) {
                      const size_t w = tp.value(id).cols();
                      if (tp.requires_grad(id)) {
                        Tensor& gp = tp.grad(id);
                        for (size_t r = 0; r < g.rows(); ++r)
                          for (size_t c = 0; c < w; ++c)
                            gp(r, c) += g(r, off + c);
                      }
                      off += w;
                    }
                  });
}

Var ConcatRows(std::span<const Var> parts) {
  if (parts.empty()) throw ValidationError("concat_rows: no inputs");
  Tape& t = TapeOf(parts[0]);
  const size_t cols = parts[0].value().cols();
  size_t rows = 0;
  std::vector<size_t> ids;
  for (const Var& p : parts) {
    if (p.value().cols() != cols)
      ShapeError("concat_rows", parts[0].value(), p.value());
    rows += p.value().rows();
    ids.push_back(p.id());
  }
  Tensor out(rows, cols);
  size_t r0 = 0;
  for (const Var& p : parts) {
    auto src = p.value().data();
    std::copy(src.begin(), src.end(), out.data().begin() + r0 * cols);
    r0 += p.value().rows();
  }
  return t.Record(std::move(out), parts,
                  [ids](Tape& tp, const Tensor&, const Tensor& g) {
                    size_t off = 0;
                    for (size_t id : ids) {
                      const size_t n = tp.value(id).size();
                      if (tp.requires_grad(id)) {
                        Tensor& gp = tp.grad(id);
                        for (size_t i = 0; i < n; ++i) gp[i] += g[off + i];
                      }
                      off += n;
                    }
                  });
}

Var SliceCols(Var x, size_t begin, size_t count) {
  const Tensor& xv = x.value();
  if (begin + count > xv.cols())
    throw ValidationError("slice_cols: [" + std::to_string(begin) + ", " +
                          std::to_string(begin + count) + ") outside " +
                          xv.ShapeString());
  Tape& t = TapeOf(x);
  Tensor out(xv.rows(), count);
  for (size_t r = 0; r < xv.rows(); ++r)
    for (size_t c = 0; c < count; ++c) out(r, c) = xv(r, begin + c);
  const size_t ix = x.id();
  Var parents[] = {x};
  return t.Record(std::move(out), parents,
                  [ix, begin](Tape& tp, const Tensor&, const Tensor& g) {
                    Tensor& gx = tp.grad(ix);
                    for (size_t r = 0; r < g.rows(); ++r)
                      for (size_t c = 0; c < g.cols(); ++c)
                        gx(r, begin + c) += g(r, c);
                  });
}

Var SliceRows(Var x, size_t begin, size_t count) {
  const Tensor& xv = x.value();
  if (begin + count > xv.rows())
    throw ValidationError("slice_rows: [" + std::to_string(begin) + ", " +
                          std::to_string(begin + count) + ") outside " +
                          xv.ShapeString());
  Tape& t = TapeOf(x);
  const size_t cols = xv.cols();
  auto src = xv.data().subspan(begin * cols, count * cols);
  Tensor out(count, cols);
  std::copy(src.begin(), src.end(), out.data().begin());
  const size_t ix = x.id();
  Var parents[] = {x};
  return t.Record(std::move(out), parents,
                  [ix, begin, cols](Tape& tp, const Tensor&, const Tensor& g) {
                    Tensor& gx = tp.grad(ix);
                    for (size_t i = 0; i < g.size(); ++i)
                      gx[begin * cols + i] += g[i];
                  });
}

Var MeanPool(Var x) {
  Tape& t = TapeOf(x);
  const size_t ix = x.id();
  Var parents[] = {x};
  return t.Record(kernels::MeanRows(x.value()), parents,
                  [ix](Tape& tp, const Tensor&, const Tensor& g) {
                    Tensor& gx = tp.grad(ix);
                    const double inv = 1.0 / static_cast<double>(gx.rows());
                    for (size_t r = 0; r < gx.rows(); ++r)
                      for (size_t c = 0; c < gx.cols(); ++c)
                        gx(r, c) += g[c] * inv;
                  });
}

Var BroadcastRows(Var row, size_t n) {
  const Tensor& rv = row.value();
  if (rv.rows() != 1)
    throw ValidationError("broadcast_rows: expected a row, got " +
                          rv.ShapeString());
  Tape& t = TapeOf(row);
  Tensor out(n, rv.cols());
  for (size_t r = 0; r < n; ++r)
    std::copy(rv.data().begin(), rv.data().end(), out.row(r).begin());
  const size_t ir = row.id();
  Var parents[] = {row};
  return t.Record(std::move(out), parents,
                  [ir](Tape& tp, const Tensor&, const Tensor& g) {
                    Tensor& gr = tp.grad(ir);
                    for (size_t r = 0; r < g.rows(); ++r)
                      for (size_t c = 0; c < g.cols(); ++c) gr[c] += g(r, c);
                  });
}

Var EmbeddingLookup(Var table, std::span<const int> ids) {
  Tape& t = TapeOf(table);
  Tensor out = kernels::GatherRows(table.value(), ids);
  const size_t it = table.id();
  std::vector<int> idv(ids.begin(), ids.end());
  Var parents[] = {table};
  return t.Record(std::move(out), parents,
                  [it, idv](Tape& tp, const Tensor&, const Tensor& g) {
                    Tensor& gt = tp.grad(it);
                    for (size_t i = 0; i < idv.size(); ++i) {
                      auto dst = gt.row(static_cast<size_t>(idv[i]));
                      auto src = g.row(i);
                      for (size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                    }
                  });
}

Var LstmCell(Var x, Var h, Var c, Var wx, Var wh, Var b) {
  Tape& t = TapeOf(x);
  kernels::LstmCellResult res = kernels::LstmCell(
      x.value(), h.value(), c.value(), wx.value(), wh.value(), b.value());
  const Tensor* halves[] = {&res.h, &res.c};
  Tensor out = kernels::ConcatCols(halves);
  const size_t ix = x.id(), ih = h.id(), ic = c.id(), iwx = wx.id(),
               iwh = wh.id(), ib = b.id();
  Var parents[] = {x, h, c, wx, wh, b};
  return t.Record(
      std::move(out), parents,
      [ix, ih, ic, iwx, iwh, ib, gates = std::move(res.gates),
       tanh_c = std::move(res.tanh_c)](Tape& tp, const Tensor&,
                                       const Tensor& g) {
        const size_t batch = gates.rows();
        const size_t hidden = gates.cols() / 4;
        const Tensor& c_prev = tp.value(ic);
        Tensor dpre(batch, 4 * hidden);
        Tensor dc_prev(batch, hidden);
        for (size_t r = 0; r < batch; ++r) {
          for (size_t j = 0; j < hidden; ++j) {
            const double i = gates(r, j);
            const double f = gates(r, hidden + j);
            const double gg = gates(r, 2 * hidden + j);
            const double o = gates(r, 3 * hidden + j);
            const double tc = tanh_c(r, j);
            const double dh = g(r, j);
            const double dc = g(r, hidden + j) + dh * o * (1.0 - tc * tc);
            dpre(r, j) = dc * gg * i * (1.0 - i);
            dpre(r, hidden + j) = dc * c_prev(r, j) * f * (1.0 - f);
            dpre(r, 2 * hidden + j) = dc * i * (1.0 - gg * gg);
            dpre(r, 3 * hidden + j) = dh * tc * o * (1.0 - o);
            dc_prev(r, j) = dc * f;
          }
        }
        if (tp.requires_grad(ix))
          kernels::AccumulateMatMulTransB(dpre, tp.value(iwx), tp.grad(ix));
        if (tp.requires_grad(ih))
          kernels::AccumulateMatMulTransB(dpre, tp.value(iwh), tp.grad(ih));
        if (tp.requires_grad(ic)) AddInto(tp.grad(ic), dc_prev);
        if (tp.requires_grad(iwx))
          kernels::AccumulateMatMulTransA(tp.value(ix), dpre, tp.grad(iwx));
        if (tp.requires_grad(iwh))
          kernels::AccumulateMatMulTransA(tp.value(ih), dpre, tp.grad(iwh));
        if (tp.requires_grad(ib)) {
          Tensor& gb = tp.grad(ib);
          for (size_t r = 0; r < batch; ++r)
            for (size_t j = 0; j < 4 * hidden; ++j) gb[j] += dpre(r, j);
        }
      });
}

BlstmVars Blstm(Var input, Var wx_fwd, Var wh_fwd, Var b_fwd, Var wx_bwd,
                Var wh_bwd, Var b_bwd) {
  const size_t steps = input.value().rows();
  if (steps == 0) throw ValidationError("blstm: empty sequence");
  const size_t hidden = wh_fwd.value().rows();
  if (wh_bwd.value().rows() != hidden)
    throw ValidationError("blstm: direction sizes differ");
  Tape& tape = *input.tape();
  Var zero = tape.Constant(Tensor(1, hidden));
  std::vector<Var> fwd(steps), bwd(steps);
  BlstmVars out;
  for (int pass = 0; pass < 2; ++pass) {
    Var wx = pass == 0 ? wx_fwd : wx_bwd;
    Var wh = pass == 0 ? wh_fwd : wh_bwd;
    Var b = pass == 0 ? b_fwd : b_bwd;
    Var h = zero, c = zero;
    for (size_t k = 0; k < steps; ++k) {
      const size_t t = pass == 0 ? k : steps - 1 - k;
      Var hc = LstmCell(SliceRows(input, t, 1), h, c, wx, wh, b);
      h = SliceCols(hc, 0, hidden);
      c = SliceCols(hc, hidden, hidden);
      (pass == 0 ? fwd : bwd)[t] = h;
    }
    (pass == 0 ? out.final_c_fwd : out.final_c_bwd) = c;
  }
  std::vector<Var> rows(steps);
  for (size_t t = 0; t < steps; ++t) {
    const Var pair[] = {fwd[t], bwd[t]};
    rows[t] = ConcatCols(pair);
  }
  out.outputs = ConcatRows(rows);
  return out;
}

Var SoftmaxCrossEntropy(Var logits, const Tensor& targets) {
  const Tensor& z = logits.value();
  if (!z.SameShape(targets))
    ShapeError("softmax_cross_entropy", z, targets);
  Tape& t = TapeOf(logits);
  Tensor probs = kernels::SoftmaxRows(z);
  const double inv_rows = 1.0 / static_cast<double>(z.rows());
  double loss = 0.0;
  for (size_t r = 0; r < z.rows(); ++r) {
    double mx = z(r, 0);
    for (size_t c = 1; c < z.cols(); ++c) mx = std::max(mx, z(r, c));
    double sum = 0.0;
    for (size_t c = 0; c < z.cols(); ++c) sum += std::exp(z(r, c) - mx);
    const double lse = mx + std::log(sum);
    double row_loss = 0.0;
    for (size_t c = 0; c < z.cols(); ++c) {
      if (targets(r, c) != 0.0) row_loss -= targets(r, c) * (z(r, c) - lse);
    }
    loss += row_loss;
  }
  Tensor out(1, 1, loss * inv_rows);
  const size_t iz = logits.id();
  Var parents[] = {logits};
  return t.Record(
      std::move(out), parents,
      [iz, probs = std::move(probs), targets, inv_rows](
          Tape& tp, const Tensor&, const Tensor& g) {
        Tensor& gz = tp.grad(iz);
        const double scale = g[0] * inv_rows;
        for (size_t r = 0; r < probs.rows(); ++r) {
          double mass = 0.0;
          for (size_t c = 0; c < probs.cols(); ++c) mass += targets(r, c);
          for (size_t c = 0; c < probs.cols(); ++c)
            gz(r, c) += scale * (probs(r, c) * mass - targets(r, c));
        }
      });
}

Var WeightedBinaryCrossEntropy(Var probs, const Tensor& targets,
                               std::span<const double> weights, double eps) {
  const Tensor& p = probs.value();
  if (!p.SameShape(targets)) ShapeError("weighted_bce", p, targets);
  if (weights.size() != p.cols())
    throw ValidationError("weighted_bce: " + std::to_string(weights.size()) +
                          " weights for " + p.ShapeString());
  Tape& t = TapeOf(probs);
  const double inv_rows = 1.0 / static_cast<double>(p.rows());
  double loss = 0.0;
  for (size_t r = 0; r < p.rows(); ++r) {
    for (size_t c = 0; c < p.cols(); ++c) {
      const double pc = std::clamp(p(r, c), eps, 1.0 - eps);
      const double tv = targets(r, c);
      loss -= weights[c] * (tv * std::log(pc) + (1.0 - tv) * std::log(1.0 - pc));
    }
  }
  Tensor out(1, 1, loss * inv_rows);
  const size_t ip = probs.id();
  std::vector<double> w(weights.begin(), weights.end());
  Var parents[] = {probs};
  return t.Record(std::move(out), parents,
                  [ip, targets, w, eps, inv_rows](Tape& tp, const Tensor&,
                                                  const Tensor& g) {
                    const Tensor& pv = tp.value(ip);
                    Tensor& gp = tp.grad(ip);
                    for (size_t r = 0; r < pv.rows(); ++r) {
                      for (size_t c = 0; c < pv.cols(); ++c) {
                        const double x = pv(r, c);
                        if (x <= eps || x >= 1.0 - eps) continue;
                        const double tv = targets(r, c);
                        gp(r, c) -= g[0] * inv_rows * w[c] *
                                    (tv / x - (1.0 - tv) / (1.0 - x));
                      }
                    }
                  });
}

Var MaskedMass(Var probs, std::span<const uint8_t> mask) {
  const Tensor& p = probs.value();
  if (mask.size() != p.cols())
    throw ValidationError("masked_mass: mask of " +
                          std::to_string(mask.size()) + " for " +
                          p.ShapeString());
  Tape& t = TapeOf(probs);
  const double inv_rows = 1.0 / static_cast<double>(p.rows());
  double mass = 0.0;
  for (size_t r = 0; r < p.rows(); ++r)
    for (size_t c = 0; c < p.cols(); ++c)
      if (mask[c]) mass += p(r, c);
  Tensor out(1, 1, mass * inv_rows);
  const size_t ip = probs.id();
  std::vector<uint8_t> m(mask.begin(), mask.end());
  Var parents[] = {probs};
  return t.Record(std::move(out), parents,
                  [ip, m, inv_rows](Tape& tp, const Tensor&, const Tensor& g) {
                    Tensor& gp = tp.grad(ip);
                    for (size_t r = 0; r < gp.rows(); ++r)
                      for (size_t c = 0; c < gp.cols(); ++c)
                        if (m[c]) gp(r, c) += g[0] * inv_rows;
                  });
}

Var WeightedSum(std::span<const Var> scalars, std::span<const double> weights) {
  if (scalars.empty() || scalars.size() != weights.size())
    throw ValidationError("weighted_sum: need one weight per scalar");
  Tape& t = TapeOf(scalars[0]);
  double total = 0.0;
  std::vector<size_t> ids;
  for (size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].value().size() != 1)
      throw ValidationError("weighted_sum: non-scalar input " +
                            scalars[i].value().ShapeString());
    total += weights[i] * scalars[i].scalar();
    ids.push_back(scalars[i].id());
  }
  std::vector<double> w(weights.begin(), weights.end());
  return t.Record(Tensor(1, 1, total), scalars,
                  [ids, w](Tape& tp, const Tensor&, const Tensor& g) {
                    for (size_t i = 0; i < ids.size(); ++i)
                      if (tp.requires_grad(ids[i])) tp.grad(ids[i])[0] += w[i] * g[0];
                  });
}

}  // namespace ad

// ---------------------------------------------------------------- optimizer

double GlobalGradientNorm(const ParamSet& params) {
  double sq = 0.0;
  for (const auto& [_, e] : params.entries())
    for (double g : e.grad.data()) sq += g * g;
  return std::sqrt(sq);
}

double ClipGradientNorm(ParamSet& params, double clip_norm) {
  const double norm = GlobalGradientNorm(params);
  if (clip_norm > 0.0 && norm > clip_norm) {
    const double s = clip_norm / norm;
    for (auto& [_, e] : params.entries())
      for (double& g : e.grad.data()) g *= s;
  }
  return norm;
}

void AdamStep(ParamSet& params, const AdamConfig& cfg) {
  for (const auto& [name, e] : params.entries()) {
    if (!e.grad.AllFinite())
      throw RuntimeFailure("non-finite gradient in tensor " + name);
  }
  ClipGradientNorm(params, cfg.clip_norm);
  const int64_t step = params.step_count() + 1;
  params.set_step_count(step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (auto& [_, e] : params.entries()) {
    auto val = e.value.data();
    auto g = e.grad.data();
    auto m = e.m.data();
    auto v = e.v.data();
    for (size_t i = 0; i < val.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      g[i] = 0.0;
    }
  }
}

// ----------------------------------------------------------- gradient check

GradCheckReport GradientCheck(const ScalarFunction& f, ParamSet& params,
                              const GradCheckOptions& options) {
  params.ZeroGrad();
  {
    Tape tape;
    Var out = f(tape, params);
    tape.Backward(out);
  }
  auto evaluate = [&]() {
    Tape tape;
    return f(tape, params).scalar();
  };

  GradCheckReport report;
  for (auto& [name, e] : params.entries()) {
    const size_t n = e.value.size();
    size_t stride = 1;
    if (options.max_per_tensor > 0 && n > options.max_per_tensor)
      stride = (n + options.max_per_tensor - 1) / options.max_per_tensor;
    for (size_t i = 0; i < n; i += stride) {
      const double saved = e.value[i];
      e.value[i] = saved + options.step;
      const double up = evaluate();
      e.value[i] = saved - options.step;
      const double down = evaluate();
      e.value[i] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double analytic = e.grad[i];
      const double denom = std::max(
          {std::abs(analytic), std::abs(numeric), options.scale_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      report.max_rel_error = std::max(report.max_rel_error, rel);
      if (!(rel < options.tolerance)) {
        report.failures.push_back({name, i, analytic, numeric, rel});
      }
    }
  }
  params.ZeroGrad();
  return report;
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr const char* kManifestFormat = "cappipe-checkpoint";

void WriteLittleEndianF64(std::ostream& os, std::span<const double> values) {
  std::vector<unsigned char> buf(values.size() * 8);
  for (size_t i = 0; i < values.size(); ++i) {
    const uint64_t bits = std::bit_cast<uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b)
      buf[i * 8 + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
  }
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size()));
}

std::string BlobName(const std::string& tensor) { return tensor + ".f64"; }

}  // namespace

void SaveParams(const std::filesystem::path& dir, const ParamSet& params,
                const std::string& metadata_json) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw RuntimeFailure("cannot create " + dir.string() + ": " + ec.message());
  nlohmann::json manifest;
  manifest["format"] = kManifestFormat;
  manifest["version"] = 1;
  manifest["step_count"] = params.step_count();
  manifest["config"] = nlohmann::json::parse(metadata_json);
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& [name, e] : params.entries()) {
    manifest["tensors"].push_back(
        {{"name", name}, {"shape", e.value.shape()}, {"file", BlobName(name)}});
    std::ofstream os(dir / BlobName(name), std::ios::binary);
    if (!os) throw RuntimeFailure("cannot write " + (dir / BlobName(name)).string());
    WriteLittleEndianF64(os, e.value.data());
    if (!os) throw RuntimeFailure("write failed for tensor " + name);
  }
  std::ofstream ms(dir / "manifest.json");
  if (!ms) throw RuntimeFailure("cannot write " + (dir / "manifest.json").string());
  ms << manifest.dump(2) << '\n';
}

LoadedParams LoadParams(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream ms(manifest_path);
  if (!ms) throw RuntimeFailure("missing checkpoint manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    ms >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw RuntimeFailure("malformed manifest " + manifest_path.string() + ": " +
                         e.what());
  }
  if (manifest.value("format", "") != kManifestFormat ||
      manifest.value("version", 0) != 1)
    throw RuntimeFailure("not a cappipe checkpoint: " + manifest_path.string());

  LoadedParams out;
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name");
    const std::vector<size_t> shape = entry.at("shape");
    const auto blob = dir / entry.at("file").get<std::string>();
    std::ifstream is(blob, std::ios::binary);
    if (!is) throw RuntimeFailure("missing blob for tensor " + name + ": " + blob.string());
    size_t count = 1;
    for (size_t d : shape) count *= d;
    std::vector<unsigned char> buf(count * 8);
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
    if (static_cast<size_t>(is.gcount()) != buf.size() || is.peek() != EOF)
      throw RuntimeFailure("tensor " + name + ": blob size does not match shape");
    std::vector<double> values(count);
    for (size_t i = 0; i < count; ++i) {
      uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= static_cast<uint64_t>(buf[i * 8 + b]) << (8 * b);
      values[i] = std::bit_cast<double>(bits);
    }
    out.params.Add(name, Tensor(shape, std::move(values)));
  }
  out.params.set_step_count(manifest.value("step_count", int64_t{0}));
  out.metadata_json = manifest.value("config", nlohmann::json::object()).dump();
  return out;
}

}  // namespace cappipe
