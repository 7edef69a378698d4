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

#ifndef CAPPIPE_TENSOR_H_
#define CAPPIPE_TENSOR_H_

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace cappipe {

// Dense row-major f64 tensor. Most of the code base only uses rank 2; vectors
// are 1 x n rows.
class Tensor {
 public:
  Tensor() = default;
  Tensor(size_t rows, size_t cols, double fill = 0.0);
  Tensor(std::vector<size_t> shape, std::vector<double> values);

  static Tensor FromRows(
      std::initializer_list<std::initializer_list<double>> rows);
  static Tensor RowVector(std::span<const double> values);

  const std::vector<size_t>& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  // Rank-2 view. Rank-1 tensors are treated as a single row.
  size_t rows() const;
  size_t cols() const;

  double& operator()(size_t r, size_t c) { return values_[r * cols() + c]; }
  double operator()(size_t r, size_t c) const {
    return values_[r * cols() + c];
  }
  double& operator[](size_t i) { return values_[i]; }
  double operator[](size_t i) const { return values_[i]; }

  std::span<double> data() { return values_; }
  std::span<const double> data() const { return values_; }
  std::span<double> row(size_t r) { return data().subspan(r * cols(), cols()); }
  std::span<const double> row(size_t r) const {
    return data().subspan(r * cols(), cols());
  }

  bool SameShape(const Tensor& other) const { return shape_ == other.shape_; }
  bool AllFinite() const;
  void Fill(double v);
  std::string ShapeString() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  std::vector<size_t> shape_;
  std::vector<double> values_;
};

// Plain kernels shared by the autodiff graph and the tape-free inference path,
// so both produce bit-identical values.
namespace kernels {

Tensor MatMul(const Tensor& a, const Tensor& b);
// out += a^T * b
void AccumulateMatMulTransA(const Tensor& a, const Tensor& b, Tensor& out);
// out += a * b^T
void AccumulateMatMulTransB(const Tensor& a, const Tensor& b, Tensor& out);
Tensor AddBias(const Tensor& x, const Tensor& bias);
Tensor Tanh(const Tensor& x);
Tensor Sigmoid(const Tensor& x);
Tensor SoftmaxRows(const Tensor& x);
Tensor ConcatCols(std::span<const Tensor* const> parts);
Tensor MeanRows(const Tensor& x);
Tensor GatherRows(const Tensor& table, std::span<const int> ids);

struct LstmCellResult {
  Tensor h;
  Tensor c;
  Tensor gates;  // B x 4H post-activation, order i f g o
  Tensor tanh_c;
};

// Gate order in the 4H axis is input, forget, cell, output.
LstmCellResult LstmCell(const Tensor& x, const Tensor& h, const Tensor& c,
                        const Tensor& wx, const Tensor& wh, const Tensor& b);

}  // namespace kernels

}  // namespace cappipe

#endif  // CAPPIPE_TENSOR_H_
