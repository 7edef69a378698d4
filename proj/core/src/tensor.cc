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

#include "cappipe/tensor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cappipe/errors.h"

namespace cappipe {

namespace {

[[noreturn]] void ShapeMismatch(const char* op, const Tensor& a,
                                const Tensor& b) {
  throw ValidationError(std::string(op) + ": shape mismatch " +
                        a.ShapeString() + " vs " + b.ShapeString());
}

double StableSigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

}  // namespace

Tensor::Tensor(size_t rows, size_t cols, double fill)
    : shape_{rows, cols}, values_(rows * cols, fill) {}

Tensor::Tensor(std::vector<size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  const size_t expected = std::accumulate(shape_.begin(), shape_.end(),
                                          size_t{1}, std::multiplies<>());
  if (expected != values_.size()) {
    throw ValidationError("Tensor: shape " + ShapeString() + " needs " +
                          std::to_string(expected) + " values, got " +
                          std::to_string(values_.size()));
  }
}

Tensor Tensor::FromRows(
    std::initializer_list<std::initializer_list<double>> rows) {
  const size_t r = rows.size();
  const size_t c = r == 0 ? 0 : rows.begin()->size();
  Tensor t(r, c);
  size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw ValidationError("Tensor::FromRows: ragged rows");
    for (double v : row) t.values_[i++] = v;
  }
  return t;
}

Tensor Tensor::RowVector(std::span<const double> values) {
  Tensor t(1, values.size());
  std::copy(values.begin(), values.end(), t.values_.begin());
  return t;
}

size_t Tensor::rows() const {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? 1 : shape_[0];
}

size_t Tensor::cols() const {
  if (shape_.empty()) return 0;
  return shape_.size() == 1 ? shape_[0] : shape_[1];
}

bool Tensor::AllFinite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::Fill(double v) { std::fill(values_.begin(), values_.end(), v); }

std::string Tensor::ShapeString() const {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

namespace kernels {

Tensor MatMul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) ShapeMismatch("matmul", a, b);
  const size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out(n, m);
  for (size_t i = 0; i < n; ++i) {
    double* o = &out(i, 0);
    for (size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      const double* br = b.row(p).data();
      for (size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

void AccumulateMatMulTransA(const Tensor& a, const Tensor& b, Tensor& out) {
  // a: n x k, b: n x m, out: k x m
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols())
    ShapeMismatch("matmul_trans_a", a, b);
  const size_t n = a.rows(), k = a.cols(), m = b.cols();
  for (size_t i = 0; i < n; ++i) {
    const double* br = b.row(i).data();
    for (size_t p = 0; p < k; ++p) {
      const double av = a(i, p);
      if (av == 0.0) continue;
      double* o = &out(p, 0);
      for (size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

void AccumulateMatMulTransB(const Tensor& a, const Tensor& b, Tensor& out) {
  // a: n x m, b: k x m, out: n x k
  if (a.cols() != b.cols() || out.rows() != a.rows() || out.cols() != b.rows())
    ShapeMismatch("matmul_trans_b", a, b);
  const size_t n = a.rows(), k = b.rows(), m = a.cols();
  for (size_t i = 0; i < n; ++i) {
    const double* ar = a.row(i).data();
    for (size_t p = 0; p < k; ++p) {
      const double* br = b.row(p).data();
      double s = 0.0;
      for (size_t j = 0; j < m; ++j) s += ar[j] * br[j];
      out(i, p) += s;
    }
  }
}

Tensor AddBias(const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols())
    ShapeMismatch("add_bias", x, bias);
  Tensor out = x;
  for (size_t r = 0; r < x.rows(); ++r)
    for (size_t c = 0; c < x.cols(); ++c) out(r, c) += bias[c];
  return out;
}

Tensor Tanh(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = std::tanh(v);
  return out;
}

Tensor Sigmoid(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = StableSigmoid(v);
  return out;
}

Tensor SoftmaxRows(const Tensor& x) {
  Tensor out = x;
  for (size_t r = 0; r < x.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - mx);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
  return out;
}

Tensor ConcatCols(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw ValidationError("concat: no inputs");
  const size_t rows = parts[0]->rows();
  size_t cols = 0;
  for (const Tensor* p : parts) {
    if (p->rows() != rows) ShapeMismatch("concat", *parts[0], *p);
    cols += p->cols();
  }
  Tensor out(rows, cols);
  for (size_t r = 0; r < rows; ++r) {
    size_t off = 0;
    for (const Tensor* p : parts) {
      auto src = p->row(r);
      std::copy(src.begin(), src.end(), &out(r, off));
      off += p->cols();
    }
  }
  return out;
}

Tensor MeanRows(const Tensor& x) {
  if (x.rows() == 0) throw ValidationError("mean_pool: empty input");
  Tensor out(1, x.cols());
  for (size_t r = 0; r < x.rows(); ++r)
    for (size_t c = 0; c < x.cols(); ++c) out[c] += x(r, c);
  const double inv = 1.0 / static_cast<double>(x.rows());
  for (double& v : out.data()) v *= inv;
  return out;
}

Tensor GatherRows(const Tensor& table, std::span<const int> ids) {
  Tensor out(ids.size(), table.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<size_t>(ids[i]) >= table.rows()) {
      throw ValidationError("embedding_lookup: id " + std::to_string(ids[i]) +
                            " outside table " + table.ShapeString());
    }
    auto src = table.row(static_cast<size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

LstmCellResult LstmCell(const Tensor& x, const Tensor& h, const Tensor& c,
                        const Tensor& wx, const Tensor& wh, const Tensor& b) {
  const size_t hidden = h.cols();
  if (wx.rows() != x.cols() || wx.cols() != 4 * hidden)
    ShapeMismatch("lstm_cell(wx)", x, wx);
  if (wh.rows() != hidden || wh.cols() != 4 * hidden)
    ShapeMismatch("lstm_cell(wh)", h, wh);
  if (!c.SameShape(h) || x.rows() != h.rows()) ShapeMismatch("lstm_cell", h, c);
  if (b.rows() != 1 || b.cols() != 4 * hidden) ShapeMismatch("lstm_cell(b)", h, b);

  Tensor pre = MatMul(x, wx);
  Tensor rec = MatMul(h, wh);
  LstmCellResult res{Tensor(h.rows(), hidden), Tensor(h.rows(), hidden),
                     Tensor(h.rows(), 4 * hidden), Tensor(h.rows(), hidden)};
  for (size_t r = 0; r < h.rows(); ++r) {
    for (size_t j = 0; j < 4 * hidden; ++j) {
      const double a = pre(r, j) + rec(r, j) + b[j];
      const bool is_cell_gate = j >= 2 * hidden && j < 3 * hidden;
      res.gates(r, j) = is_cell_gate ? std::tanh(a) : StableSigmoid(a);
    }
    for (size_t j = 0; j < hidden; ++j) {
      const double i = res.gates(r, j);
      const double f = res.gates(r, hidden + j);
      const double g = res.gates(r, 2 * hidden + j);
      const double o = res.gates(r, 3 * hidden + j);
      const double cn = f * c(r, j) + i * g;
      res.c(r, j) = cn;
      res.tanh_c(r, j) = std::tanh(cn);
      res.h(r, j) = o * res.tanh_c(r, j);
    }
  }
  return res;
}

}  // namespace kernels

}  // namespace cappipe
