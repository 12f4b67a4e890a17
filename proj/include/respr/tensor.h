// respr/tensor.h

// Copyright 2026  The respr Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.
//
// Reverse-mode automatic differentiation over dense tensors of rank <= 3,
// sized for a time-convolutional LSTM and its losses. Design notes:
//  - every reduction accumulates in double regardless of the value type,
//    in a fixed sequential row-major order (no parallel reductions), so
//    forward passes are bit-reproducible;
//  - log inputs are floored at kLogEps and division denominators at
//    kDivEps in magnitude; any non-finite op output raises NumericError
//    instead of propagating;
//  - graphs are instantiated per value type: float for training, double
//    for gradient checking.

#ifndef RESPR_TENSOR_H_
#define RESPR_TENSOR_H_

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "respr/common.h"

namespace respr {

constexpr double kLogEps = 1e-12;
constexpr double kDivEps = 1e-30;

struct Shape {
  int rank = 0;
  std::array<int64_t, 3> d{1, 1, 1};  // unused trailing dims stay 1

  static Shape Vec(int64_t n) { return Shape{1, {n, 1, 1}}; }
  static Shape Mat(int64_t r, int64_t c) { return Shape{2, {r, c, 1}}; }
  static Shape Cube(int64_t a, int64_t b, int64_t c) { return Shape{3, {a, b, c}}; }

  int64_t numel() const { return d[0] * d[1] * d[2]; }
  bool operator==(const Shape& o) const { return rank == o.rank && d == o.d; }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string Str() const {
    std::string s = "(";
    for (int i = 0; i < rank; ++i) {
      if (i) s += ",";
      s += std::to_string(d[i]);
    }
    return s + ")";
  }
};

template <typename S>
struct TensorData {
  Shape shape;
  std::vector<S> val;
  std::vector<S> grad;  // sized lazily
  bool requires_grad = false;
  bool on_tape = false;
};

// Shared handle to a tensor; copies alias the same storage.
template <typename S>
class TensorT {
 public:
  TensorT() = default;
  explicit TensorT(std::shared_ptr<TensorData<S>> d) : d_(std::move(d)) {}

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::vector<S>& val() const { return d_->val; }
  std::vector<S>& grad() const { return d_->grad; }
  bool requires_grad() const { return d_->requires_grad; }
  bool on_tape() const { return d_->on_tape; }
  std::shared_ptr<TensorData<S>> data() const { return d_; }

  S item() const {
    if (d_->shape.numel() != 1)
      throw ShapeError("item() on non-scalar tensor " + d_->shape.Str());
    return d_->val[0];
  }

  void EnsureGrad() const {
    if (d_->grad.size() != static_cast<size_t>(d_->shape.numel()))
      d_->grad.assign(static_cast<size_t>(d_->shape.numel()), S(0));
  }
  void ZeroGrad() const {
    d_->grad.assign(static_cast<size_t>(d_->shape.numel()), S(0));
  }
  bool has_grad() const {
    return d_->grad.size() == static_cast<size_t>(d_->shape.numel());
  }

 private:
  std::shared_ptr<TensorData<S>> d_;
};

template <typename S>
using EigenMat =
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
class TapeT {
 public:
  using Tensor = TensorT<S>;

  // ---- tensor creation -------------------------------------------------

  static Tensor Leaf(const Shape& shape, std::vector<S> data,
                     bool requires_grad) {
    CheckSize(shape, data.size());
    auto d = std::make_shared<TensorData<S>>();
    d->shape = shape;
    d->val = std::move(data);
    d->requires_grad = requires_grad;
    return Tensor(std::move(d));
  }

  static Tensor Constant(const Shape& shape, std::vector<S> data) {
    return Leaf(shape, std::move(data), false);
  }

  static Tensor Scalar(S v) { return Constant(Shape::Vec(1), {v}); }

  static Tensor Zeros(const Shape& shape, bool requires_grad = false) {
    return Leaf(shape, std::vector<S>(shape.numel(), S(0)), requires_grad);
  }

  // ---- elementwise binary ops (with numpy-style broadcasting) ----------

  Tensor Add(const Tensor& a, const Tensor& b) {
    return BinaryOp("add", a, b, [](S x, S y) { return x + y; },
                    [](S, S, S g, S* ga, S* gb) {
                      *ga += g;
                      *gb += g;
                    });
  }

  Tensor Sub(const Tensor& a, const Tensor& b) {
    return BinaryOp("sub", a, b, [](S x, S y) { return x - y; },
                    [](S, S, S g, S* ga, S* gb) {
                      *ga += g;
                      *gb -= g;
                    });
  }

  Tensor Mul(const Tensor& a, const Tensor& b) {
    return BinaryOp("mul", a, b, [](S x, S y) { return x * y; },
                    [](S x, S y, S g, S* ga, S* gb) {
                      *ga += g * y;
                      *gb += g * x;
                    });
  }

  Tensor Div(const Tensor& a, const Tensor& b) {
    return BinaryOp("div", a, b,
                    [](S x, S y) { return x / GuardDenom(y); },
                    [](S x, S y, S g, S* ga, S* gb) {
                      const S yd = GuardDenom(y);
                      *ga += g / yd;
                      *gb -= g * x / (yd * yd);
                    });
  }

  // Broadcast to an explicit shape (multiplication by ones).
  Tensor BroadcastTo(const Tensor& a, const Shape& shape) {
    return Mul(a, Constant(shape, std::vector<S>(shape.numel(), S(1))));
  }

  // ---- scalar-constant ops ----------------------------------------------

  Tensor AddScalar(const Tensor& a, S c) {
    return UnaryOp("add_scalar", a, [c](S x) { return x + c; },
                   [](S, S o, S g) { (void)o; return g; });
  }

  Tensor MulScalar(const Tensor& a, S c) {
    return UnaryOp("mul_scalar", a, [c](S x) { return x * c; },
                   [c](S, S, S g) { return g * c; });
  }

  // ---- elementwise unary ops ---------------------------------------------

  // Overflow-free logistic, shared by the sigmoid op and the fused LSTM cell.
  static S Logistic(S x) {
    if (x >= S(0)) {
      const S e = std::exp(-x);
      return S(1) / (S(1) + e);
    }
    const S e = std::exp(x);
    return e / (S(1) + e);
  }

  Tensor Sigmoid(const Tensor& a) {
    return UnaryOp("sigmoid", a, [](S x) { return Logistic(x); },
                   [](S, S o, S g) { return g * o * (S(1) - o); });
  }

  Tensor Tanh(const Tensor& a) {
    return UnaryOp("tanh", a, [](S x) { return std::tanh(x); },
                   [](S, S o, S g) { return g * (S(1) - o * o); });
  }

  Tensor Relu(const Tensor& a) {
    return UnaryOp("relu", a, [](S x) { return x > S(0) ? x : S(0); },
                   [](S x, S, S g) { return x > S(0) ? g : S(0); });
  }

  Tensor Exp(const Tensor& a) {
    return UnaryOp("exp", a, [](S x) { return std::exp(x); },
                   [](S, S o, S g) { return g * o; });
  }

  Tensor Log(const Tensor& a) {
    return UnaryOp("log", a,
                   [](S x) { return std::log(std::max(x, S(kLogEps))); },
                   [](S x, S, S g) { return g / std::max(x, S(kLogEps)); });
  }

  // x^p for x >= 0 and constant p >= 0.
  Tensor PowConst(const Tensor& a, S p) {
    return UnaryOp("pow_const", a,
                   [p](S x) { return std::pow(std::max(x, S(0)), p); },
                   [p](S x, S, S g) {
                     if (p == S(0)) return S(0);
                     const S xc = std::max(x, S(0));
                     if (xc == S(0) && p < S(1)) return S(0);
                     return g * p * std::pow(xc, p - S(1));
                   });
  }

  // ---- matrix product -----------------------------------------------------

  Tensor MatMul(const Tensor& a, const Tensor& b) {
    if (a.shape().rank != 2 || b.shape().rank != 2 ||
        a.shape().d[1] != b.shape().d[0])
      throw ShapeError("matmul shape mismatch: " + a.shape().Str() + " x " +
                       b.shape().Str());
    const int64_t m = a.shape().d[0], k = a.shape().d[1], n = b.shape().d[1];
    Tensor out = MakeOutput(Shape::Mat(m, n), a, b);
    {
      Eigen::Map<const EigenMat<S>> A(a.val().data(), m, k);
      Eigen::Map<const EigenMat<S>> B(b.val().data(), k, n);
      Eigen::Map<EigenMat<S>> C(out.val().data(), m, n);
      C.noalias() = A * B;
    }
    FinishOp("matmul", out, [a, b, out, m, k, n]() {
      Eigen::Map<const EigenMat<S>> A(a.val().data(), m, k);
      Eigen::Map<const EigenMat<S>> B(b.val().data(), k, n);
      Eigen::Map<const EigenMat<S>> G(out.grad().data(), m, n);
      if (a.requires_grad()) {
        a.EnsureGrad();
        Eigen::Map<EigenMat<S>> GA(a.grad().data(), m, k);
        GA.noalias() += G * B.transpose();
      }
      if (b.requires_grad()) {
        b.EnsureGrad();
        Eigen::Map<EigenMat<S>> GB(b.grad().data(), k, n);
        GB.noalias() += A.transpose() * G;
      }
    });
    return out;
  }

  // ---- softmax / logsumexp over the last axis of a matrix -----------------

  Tensor SoftmaxRows(const Tensor& a) {
    RequireRank2("softmax", a);
    const int64_t m = a.shape().d[0], n = a.shape().d[1];
    Tensor out = MakeOutput(a.shape(), a);
    for (int64_t i = 0; i < m; ++i) {
      const S* x = a.val().data() + i * n;
      S* o = out.val().data() + i * n;
      S mx = x[0];
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
      double sum = 0.0;
      for (int64_t j = 0; j < n; ++j) {
        o[j] = std::exp(x[j] - mx);
        sum += static_cast<double>(o[j]);
      }
      const S inv = static_cast<S>(1.0 / sum);
      for (int64_t j = 0; j < n; ++j) o[j] *= inv;
    }
    FinishOp("softmax", out, [a, out, m, n]() {
      if (!a.requires_grad()) return;
      a.EnsureGrad();
      for (int64_t i = 0; i < m; ++i) {
        const S* o = out.val().data() + i * n;
        const S* g = out.grad().data() + i * n;
        S* ga = a.grad().data() + i * n;
        double dot = 0.0;
        for (int64_t j = 0; j < n; ++j)
          dot += static_cast<double>(g[j]) * static_cast<double>(o[j]);
        for (int64_t j = 0; j < n; ++j)
          ga[j] += o[j] * (g[j] - static_cast<S>(dot));
      }
    });
    return out;
  }

  Tensor LogSumExpRows(const Tensor& a) {
    RequireRank2("logsumexp", a);
    const int64_t m = a.shape().d[0], n = a.shape().d[1];
    Tensor out = MakeOutput(Shape::Mat(m, 1), a);
    for (int64_t i = 0; i < m; ++i) {
      const S* x = a.val().data() + i * n;
      S mx = x[0];
      for (int64_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
      double sum = 0.0;
      for (int64_t j = 0; j < n; ++j)
        sum += std::exp(static_cast<double>(x[j] - mx));
      out.val()[i] = mx + static_cast<S>(std::log(sum));
    }
    FinishOp("logsumexp", out, [a, out, m, n]() {
      if (!a.requires_grad()) return;
      a.EnsureGrad();
      for (int64_t i = 0; i < m; ++i) {
        const S* x = a.val().data() + i * n;
        const S lse = out.val()[i];
        const S g = out.grad()[i];
        S* ga = a.grad().data() + i * n;
        for (int64_t j = 0; j < n; ++j) ga[j] += g * std::exp(x[j] - lse);
      }
    });
    return out;
  }

  // ---- reductions ----------------------------------------------------------

  Tensor SumAll(const Tensor& a) { return Reduce("sum", a, false); }
  Tensor MeanAll(const Tensor& a) { return Reduce("mean", a, true); }

  // axis 0 -> (1, n); axis 1 -> (m, 1). Matrix input.
  Tensor SumAxis(const Tensor& a, int axis, bool mean = false) {
    RequireRank2("sum_axis", a);
    if (axis != 0 && axis != 1)
      throw ParameterError("sum_axis: axis must be 0 or 1");
    const int64_t m = a.shape().d[0], n = a.shape().d[1];
    const Shape os = axis == 0 ? Shape::Mat(1, n) : Shape::Mat(m, 1);
    const S scale = mean ? S(1) / static_cast<S>(axis == 0 ? m : n) : S(1);
    Tensor out = MakeOutput(os, a);
    if (axis == 0) {
      for (int64_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int64_t i = 0; i < m; ++i)
          acc += static_cast<double>(a.val()[i * n + j]);
        out.val()[j] = static_cast<S>(acc) * scale;
      }
    } else {
      for (int64_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int64_t j = 0; j < n; ++j)
          acc += static_cast<double>(a.val()[i * n + j]);
        out.val()[i] = static_cast<S>(acc) * scale;
      }
    }
    FinishOp("sum_axis", out, [a, out, m, n, axis, scale]() {
      if (!a.requires_grad()) return;
      a.EnsureGrad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j)
          a.grad()[i * n + j] += scale * out.grad()[axis == 0 ? j : i];
    });
    return out;
  }

  Tensor MeanAxis(const Tensor& a, int axis) { return SumAxis(a, axis, true); }

  // ---- shape ops -------------------------------------------------------------

  // Same elements reinterpreted under a new shape (buffer copy).
  Tensor Reshape(const Tensor& a, const Shape& shape) {
    if (shape.numel() != a.shape().numel())
      throw ShapeError("reshape element count mismatch: " + a.shape().Str() +
                       " -> " + shape.Str());
    auto d = std::make_shared<TensorData<S>>();
    d->shape = shape;
    d->val = a.val();  // copy of the flat buffer
    d->requires_grad = grad_enabled_ && a.requires_grad();
    Tensor out(std::move(d));
    FinishOp("reshape", out, [a, out]() {
      if (!a.requires_grad()) return;
      a.EnsureGrad();
      const int64_t n = a.shape().numel();
      for (int64_t i = 0; i < n; ++i) a.grad()[i] += out.grad()[i];
    });
    return out;
  }

  Tensor ConcatCols(const Tensor& a, const Tensor& b) {
    RequireRank2("concat", a);
    RequireRank2("concat", b);
    if (a.shape().d[0] != b.shape().d[0])
      throw ShapeError("concat row mismatch: " + a.shape().Str() + " vs " +
                       b.shape().Str());
    const int64_t m = a.shape().d[0], na = a.shape().d[1], nb = b.shape().d[1];
    Tensor out = MakeOutput(Shape::Mat(m, na + nb), a, b);
    for (int64_t i = 0; i < m; ++i) {
      for (int64_t j = 0; j < na; ++j)
        out.val()[i * (na + nb) + j] = a.val()[i * na + j];
      for (int64_t j = 0; j < nb; ++j)
        out.val()[i * (na + nb) + na + j] = b.val()[i * nb + j];
    }
    FinishOp("concat", out, [a, b, out, m, na, nb]() {
      for (int64_t i = 0; i < m; ++i) {
        if (a.requires_grad()) {
          a.EnsureGrad();
          for (int64_t j = 0; j < na; ++j)
            a.grad()[i * na + j] += out.grad()[i * (na + nb) + j];
        }
        if (b.requires_grad()) {
          b.EnsureGrad();
          for (int64_t j = 0; j < nb; ++j)
            b.grad()[i * nb + j] += out.grad()[i * (na + nb) + na + j];
        }
      }
    });
    return out;
  }

  Tensor ConcatRows(const Tensor& a, const Tensor& b) {
    RequireRank2("concat_rows", a);
    RequireRank2("concat_rows", b);
    if (a.shape().d[1] != b.shape().d[1])
      throw ShapeError("concat_rows column mismatch: " + a.shape().Str() +
                       " vs " + b.shape().Str());
    const int64_t ma = a.shape().d[0], mb = b.shape().d[0], n = a.shape().d[1];
    Tensor out = MakeOutput(Shape::Mat(ma + mb, n), a, b);
    std::copy(a.val().begin(), a.val().end(), out.val().begin());
    std::copy(b.val().begin(), b.val().end(), out.val().begin() + ma * n);
    FinishOp("concat_rows", out, [a, b, out, ma, mb, n]() {
      if (a.requires_grad()) {
        a.EnsureGrad();
        for (int64_t i = 0; i < ma * n; ++i) a.grad()[i] += out.grad()[i];
      }
      if (b.requires_grad()) {
        b.EnsureGrad();
        for (int64_t i = 0; i < mb * n; ++i)
          b.grad()[i] += out.grad()[ma * n + i];
      }
    });
    return out;
  }

  // Column slice [c0, c1) of a matrix.
  Tensor SliceCols(const Tensor& a, int64_t c0, int64_t c1) {
    RequireRank2("slice_cols", a);
    const int64_t m = a.shape().d[0], n = a.shape().d[1];
    if (c0 < 0 || c1 > n || c0 >= c1)
      throw ShapeError("slice_cols [" + std::to_string(c0) + "," +
                       std::to_string(c1) + ") out of range for " +
                       a.shape().Str());
    const int64_t w = c1 - c0;
    Tensor out = MakeOutput(Shape::Mat(m, w), a);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < w; ++j)
        out.val()[i * w + j] = a.val()[i * n + c0 + j];
    FinishOp("slice_cols", out, [a, out, m, n, c0, w]() {
      if (!a.requires_grad()) return;
      a.EnsureGrad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < w; ++j)
          a.grad()[i * n + c0 + j] += out.grad()[i * w + j];
    });
    return out;
  }

  // Row slice [r0, r1) of a matrix.
  Tensor SliceRows(const Tensor& a, int64_t r0, int64_t r1) {
    RequireRank2("slice_rows", a);
    const int64_t m = a.shape().d[0], n = a.shape().d[1];
    if (r0 < 0 || r1 > m || r0 >= r1)
      throw ShapeError("slice_rows [" + std::to_string(r0) + "," +
                       std::to_string(r1) + ") out of range for " +
                       a.shape().Str());
    const int64_t h = r1 - r0;
    Tensor out = MakeOutput(Shape::Mat(h, n), a);
    std::copy(a.val().begin() + r0 * n, a.val().begin() + r1 * n,
              out.val().begin());
    FinishOp("slice_rows", out, [a, out, r0, h, n]() {
      if (!a.requires_grad()) return;
      a.EnsureGrad();
      for (int64_t i = 0; i < h * n; ++i)
        a.grad()[r0 * n + i] += out.grad()[i];
    });
    return out;
  }

  // Time step t of a (B, T, D) tensor -> (B, D).
  Tensor SliceTime(const Tensor& a, int64_t t) {
    if (a.shape().rank != 3)
      throw ShapeError("slice_time expects rank-3 input, got " +
                       a.shape().Str());
    const int64_t B = a.shape().d[0], T = a.shape().d[1], D = a.shape().d[2];
    if (t < 0 || t >= T)
      throw ShapeError("slice_time index " + std::to_string(t) +
                       " out of range for " + a.shape().Str());
    Tensor out = MakeOutput(Shape::Mat(B, D), a);
    for (int64_t b = 0; b < B; ++b)
      std::copy(a.val().begin() + (b * T + t) * D,
                a.val().begin() + (b * T + t + 1) * D,
                out.val().begin() + b * D);
    FinishOp("slice_time", out, [a, out, B, T, D, t]() {
      if (!a.requires_grad()) return;
      a.EnsureGrad();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t j = 0; j < D; ++j)
          a.grad()[(b * T + t) * D + j] += out.grad()[b * D + j];
    });
    return out;
  }

  // Same-length 1-d convolution across time with zero padding.
  // x: (B, T, Din), w: (K, Din, Dout), bias: (Dout); K odd.
  Tensor Conv1dTime(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (x.shape().rank != 3 || w.shape().rank != 3 || bias.shape().rank != 1)
      throw ShapeError("conv1d_time expects x rank 3, w rank 3, bias rank 1; got " +
                       x.shape().Str() + ", " + w.shape().Str() + ", " +
                       bias.shape().Str());
    const int64_t B = x.shape().d[0], T = x.shape().d[1], Din = x.shape().d[2];
    const int64_t K = w.shape().d[0], Dout = w.shape().d[2];
    if (w.shape().d[1] != Din || bias.shape().d[0] != Dout)
      throw ShapeError("conv1d_time channel mismatch: x " + x.shape().Str() +
                       ", w " + w.shape().Str());
    if (K % 2 == 0) throw ParameterError("conv1d_time kernel must be odd");
    const int64_t half = K / 2;

    Tensor out = MakeOutput(Shape::Cube(B, T, Dout), x, w, bias);
    std::fill(out.val().begin(), out.val().end(), S(0));
    for (int64_t b = 0; b < B; ++b) {
      Eigen::Map<EigenMat<S>> O(out.val().data() + b * T * Dout, T, Dout);
      Eigen::Map<const EigenMat<S>> X(x.val().data() + b * T * Din, T, Din);
      for (int64_t k = 0; k < K; ++k) {
        const int64_t delta = k - half;
        const int64_t t0 = std::max<int64_t>(0, -delta);
        const int64_t t1 = std::min<int64_t>(T, T - delta);
        if (t0 >= t1) continue;
        Eigen::Map<const EigenMat<S>> Wk(w.val().data() + k * Din * Dout, Din,
                                         Dout);
        O.middleRows(t0, t1 - t0).noalias() +=
            X.middleRows(t0 + delta, t1 - t0) * Wk;
      }
      for (int64_t t = 0; t < T; ++t)
        for (int64_t o = 0; o < Dout; ++o)
          out.val()[(b * T + t) * Dout + o] += bias.val()[o];
    }
    FinishOp("conv1d_time", out, [x, w, bias, out, B, T, Din, K, Dout, half]() {
      for (int64_t b = 0; b < B; ++b) {
        Eigen::Map<const EigenMat<S>> G(out.grad().data() + b * T * Dout, T,
                                        Dout);
        Eigen::Map<const EigenMat<S>> X(x.val().data() + b * T * Din, T, Din);
        for (int64_t k = 0; k < K; ++k) {
          const int64_t delta = k - half;
          const int64_t t0 = std::max<int64_t>(0, -delta);
          const int64_t t1 = std::min<int64_t>(T, T - delta);
          if (t0 >= t1) continue;
          Eigen::Map<const EigenMat<S>> Wk(w.val().data() + k * Din * Dout,
                                           Din, Dout);
          if (x.requires_grad()) {
            x.EnsureGrad();
            Eigen::Map<EigenMat<S>> GX(x.grad().data() + b * T * Din, T, Din);
            GX.middleRows(t0 + delta, t1 - t0).noalias() +=
                G.middleRows(t0, t1 - t0) * Wk.transpose();
          }
          if (w.requires_grad()) {
            w.EnsureGrad();
            Eigen::Map<EigenMat<S>> GW(w.grad().data() + k * Din * Dout, Din,
                                       Dout);
            GW.noalias() += X.middleRows(t0 + delta, t1 - t0).transpose() *
                            G.middleRows(t0, t1 - t0);
          }
        }
      }
      if (bias.requires_grad()) {
        bias.EnsureGrad();
        for (int64_t o = 0; o < Dout; ++o) {
          double acc = 0.0;
          for (int64_t b = 0; b < B; ++b)
            for (int64_t t = 0; t < T; ++t)
              acc += static_cast<double>(out.grad()[(b * T + t) * Dout + o]);
          bias.grad()[o] += static_cast<S>(acc);
        }
      }
    });
    return out;
  }

  // ---- fused LSTM cell --------------------------------------------------

  // One recurrence step collapses ~20 elementwise nodes into two, which is
  // what makes thousand-frame sequences affordable. Gate pre-activations are
  // laid out (B, 4H) in block order i, f, g, o; m is a (B, 1) frame-validity
  // column and the state holds wherever it is zero:
  //   c' = c + m * (sigmoid(f) * c + sigmoid(i) * tanh(g) - c)
  Tensor LstmCellState(const Tensor& gates, const Tensor& c, const Tensor& m) {
    CheckLstmCell("lstm_cell_state", gates, c, m);
    const int64_t B = c.shape().d[0], H = c.shape().d[1];
    Tensor out = MakeOutput(Shape::Mat(B, H), gates, c, m);
    {
      S* o = out.val().data();
      const S* G = gates.val().data();
      const S* cv = c.val().data();
      const S* mv = m.val().data();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t j = 0; j < H; ++j) {
          const S* g = G + b * 4 * H;
          const S gi = Logistic(g[j]);
          const S gf = Logistic(g[H + j]);
          const S gg = std::tanh(g[2 * H + j]);
          const S cc = cv[b * H + j];
          const S base = gf * cc + gi * gg;
          o[b * H + j] = cc + mv[b] * (base - cc);
        }
    }
    FinishOp("lstm_cell_state", out, [gates, c, m, out, B, H]() {
      const S* G = gates.val().data();
      const S* cv = c.val().data();
      const S* mv = m.val().data();
      const S* og = out.grad().data();
      if (gates.requires_grad()) gates.EnsureGrad();
      if (c.requires_grad()) c.EnsureGrad();
      if (m.requires_grad()) m.EnsureGrad();
      for (int64_t b = 0; b < B; ++b) {
        const S* g = G + b * 4 * H;
        S* gg_out = gates.requires_grad() ? gates.grad().data() + b * 4 * H
                                          : nullptr;
        for (int64_t j = 0; j < H; ++j) {
          const S gi = Logistic(g[j]);
          const S gf = Logistic(g[H + j]);
          const S gg = std::tanh(g[2 * H + j]);
          const S cc = cv[b * H + j];
          const S dout = og[b * H + j];
          const S dbase = dout * mv[b];
          if (gg_out) {
            gg_out[j] += dbase * gg * gi * (S(1) - gi);
            gg_out[H + j] += dbase * cc * gf * (S(1) - gf);
            gg_out[2 * H + j] += dbase * gi * (S(1) - gg * gg);
          }
          if (c.requires_grad())
            c.grad()[b * H + j] += dout * (S(1) - mv[b]) + dbase * gf;
          if (m.requires_grad())
            m.grad()[b] += dout * (gf * cc + gi * gg - cc);
        }
      }
    });
    return out;
  }

  //   h' = h + m * (sigmoid(o) * tanh(c') - h)
  Tensor LstmCellOutput(const Tensor& gates, const Tensor& c_new,
                        const Tensor& h, const Tensor& m) {
    CheckLstmCell("lstm_cell_output", gates, c_new, m);
    if (h.shape() != c_new.shape())
      throw ShapeError("lstm_cell_output state shapes differ: " +
                       h.shape().Str() + " vs " + c_new.shape().Str());
    const int64_t B = h.shape().d[0], H = h.shape().d[1];
    Tensor out = MakeOutput(Shape::Mat(B, H), gates, c_new, h, m);
    {
      S* o = out.val().data();
      const S* G = gates.val().data();
      const S* cv = c_new.val().data();
      const S* hv = h.val().data();
      const S* mv = m.val().data();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t j = 0; j < H; ++j) {
          const S go = Logistic(G[b * 4 * H + 3 * H + j]);
          const S th = std::tanh(cv[b * H + j]);
          const S hh = hv[b * H + j];
          o[b * H + j] = hh + mv[b] * (go * th - hh);
        }
    }
    FinishOp("lstm_cell_output", out, [gates, c_new, h, m, out, B, H]() {
      const S* G = gates.val().data();
      const S* cv = c_new.val().data();
      const S* hv = h.val().data();
      const S* mv = m.val().data();
      const S* og = out.grad().data();
      if (gates.requires_grad()) gates.EnsureGrad();
      if (c_new.requires_grad()) c_new.EnsureGrad();
      if (h.requires_grad()) h.EnsureGrad();
      if (m.requires_grad()) m.EnsureGrad();
      for (int64_t b = 0; b < B; ++b)
        for (int64_t j = 0; j < H; ++j) {
          const S go = Logistic(G[b * 4 * H + 3 * H + j]);
          const S th = std::tanh(cv[b * H + j]);
          const S hh = hv[b * H + j];
          const S dout = og[b * H + j];
          const S dval = dout * mv[b];
          if (gates.requires_grad())
            gates.grad()[b * 4 * H + 3 * H + j] +=
                dval * th * go * (S(1) - go);
          if (c_new.requires_grad())
            c_new.grad()[b * H + j] += dval * go * (S(1) - th * th);
          if (h.requires_grad())
            h.grad()[b * H + j] += dout * (S(1) - mv[b]);
          if (m.requires_grad()) m.grad()[b] += dout * (go * th - hh);
        }
    });
    return out;
  }

  // ---- backward -------------------------------------------------------------

  // Populates dRoot/dLeaf for every requires_grad leaf reachable from root.
  // Leaf gradients accumulate across calls (callers zero them explicitly);
  // intermediate gradients are reset at the start of each call. With
  // release_graph the tape frees intermediate buffers as it consumes them,
  // after which the graph cannot be replayed.
  void Backward(const Tensor& root, bool release_graph = false) {
    if (root.shape().numel() != 1)
      throw ParameterError("backward root must be scalar, got shape " +
                           root.shape().Str());
    for (auto& node : nodes_)
      if (node.out.defined()) node.out.data()->grad.clear();
    root.EnsureGrad();
    root.grad()[0] = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->out.defined() || !it->out.has_grad()) continue;
      if (it->bwd) it->bwd();
      if (release_graph) {
        it->out.data()->grad.clear();
        it->out.data()->grad.shrink_to_fit();
        it->out.data()->val.clear();
        it->out.data()->val.shrink_to_fit();
        it->bwd = nullptr;
        it->out = Tensor();
      }
    }
  }

  size_t size() const { return nodes_.size(); }
  void Clear() { nodes_.clear(); }

  // When disabled, ops compute values but record nothing.
  void SetGradEnabled(bool enabled) { grad_enabled_ = enabled; }

 private:
  struct Node {
    Tensor out;
    std::function<void()> bwd;
  };

  static void CheckSize(const Shape& shape, size_t n) {
    if (static_cast<size_t>(shape.numel()) != n)
      throw ShapeError("data size " + std::to_string(n) +
                       " does not match shape " + shape.Str());
  }

  static S GuardDenom(S y) {
    if (std::abs(y) < S(kDivEps)) return y < S(0) ? -S(kDivEps) : S(kDivEps);
    return y;
  }

  static void RequireRank2(const char* op, const Tensor& a) {
    if (a.shape().rank != 2)
      throw ShapeError(std::string(op) + " expects a matrix, got " +
                       a.shape().Str());
  }

  static void CheckLstmCell(const char* op, const Tensor& gates,
                            const Tensor& state, const Tensor& m) {
    RequireRank2(op, gates);
    RequireRank2(op, state);
    RequireRank2(op, m);
    const int64_t B = state.shape().d[0], H = state.shape().d[1];
    if (gates.shape().d[0] != B || gates.shape().d[1] != 4 * H)
      throw ShapeError(std::string(op) + " expects gates (" +
                       std::to_string(B) + ", " + std::to_string(4 * H) +
                       "), got " + gates.shape().Str());
    if (m.shape().d[0] != B || m.shape().d[1] != 1)
      throw ShapeError(std::string(op) + " expects mask (" +
                       std::to_string(B) + ", 1), got " + m.shape().Str());
  }

  template <typename... Parents>
  Tensor MakeOutput(const Shape& shape, const Parents&... parents) {
    auto d = std::make_shared<TensorData<S>>();
    d->shape = shape;
    d->val.resize(static_cast<size_t>(shape.numel()));
    d->requires_grad = grad_enabled_ && (parents.requires_grad() || ...);
    return Tensor(std::move(d));
  }

  void FinishOp(const char* name, const Tensor& out,
                std::function<void()> bwd) {
    Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> v(
        out.val().data(), static_cast<Eigen::Index>(out.val().size()));
    if (!v.allFinite())
      throw NumericError(std::string("non-finite value produced by op '") +
                         name + "'");
    if (out.requires_grad()) {
      out.data()->on_tape = true;
      nodes_.push_back(Node{out, std::move(bwd)});
    }
  }

  template <typename FwdFn, typename BwdFn>
  Tensor UnaryOp(const char* name, const Tensor& a, FwdFn fwd, BwdFn bwd) {
    Tensor out = MakeOutput(a.shape(), a);
    const int64_t n = a.shape().numel();
    for (int64_t i = 0; i < n; ++i) out.val()[i] = fwd(a.val()[i]);
    FinishOp(name, out, [a, out, n, bwd]() {
      if (!a.requires_grad()) return;
      a.EnsureGrad();
      for (int64_t i = 0; i < n; ++i)
        a.grad()[i] += bwd(a.val()[i], out.val()[i], out.grad()[i]);
    });
    return out;
  }

  template <typename FwdFn, typename BwdFn>
  Tensor BinaryOp(const char* name, const Tensor& a, const Tensor& b,
                  FwdFn fwd, BwdFn bwd) {
    const Shape os = BroadcastShape(name, a.shape(), b.shape());
    Tensor out = MakeOutput(os, a, b);

    const auto sa = BroadcastStrides(a.shape(), os);
    const auto sb = BroadcastStrides(b.shape(), os);
    const int64_t n0 = os.rank > 0 ? os.d[0] : 1;
    const int64_t n1 = os.rank > 1 ? os.d[1] : 1;
    const int64_t n2 = os.rank > 2 ? os.d[2] : 1;

    {
      S* o = out.val().data();
      const S* av = a.val().data();
      const S* bv = b.val().data();
      int64_t idx = 0;
      for (int64_t i = 0; i < n0; ++i)
        for (int64_t j = 0; j < n1; ++j)
          for (int64_t k = 0; k < n2; ++k, ++idx)
            o[idx] = fwd(av[i * sa[0] + j * sa[1] + k * sa[2]],
                         bv[i * sb[0] + j * sb[1] + k * sb[2]]);
    }
    FinishOp(name, out, [a, b, out, sa, sb, n0, n1, n2, bwd]() {
      const bool ga = a.requires_grad(), gb = b.requires_grad();
      if (!ga && !gb) return;
      if (ga) a.EnsureGrad();
      if (gb) b.EnsureGrad();
      S dummy_a = S(0), dummy_b = S(0);
      const S* av = a.val().data();
      const S* bv = b.val().data();
      const S* og = out.grad().data();
      int64_t idx = 0;
      for (int64_t i = 0; i < n0; ++i)
        for (int64_t j = 0; j < n1; ++j)
          for (int64_t k = 0; k < n2; ++k, ++idx) {
            const int64_t ia = i * sa[0] + j * sa[1] + k * sa[2];
            const int64_t ib = i * sb[0] + j * sb[1] + k * sb[2];
            S* pa = ga ? a.grad().data() + ia : &dummy_a;
            S* pb = gb ? b.grad().data() + ib : &dummy_b;
            bwd(av[ia], bv[ib], og[idx], pa, pb);
          }
    });
    return out;
  }

  static Shape BroadcastShape(const char* op, const Shape& a, const Shape& b) {
    const int rank = std::max(a.rank, b.rank);
    Shape out;
    out.rank = rank;
    // Right-align dims, numpy style.
    for (int i = 0; i < rank; ++i) {
      const int ia = a.rank - rank + i;
      const int ib = b.rank - rank + i;
      const int64_t da = ia < 0 ? 1 : a.d[ia];
      const int64_t db = ib < 0 ? 1 : b.d[ib];
      if (da != db && da != 1 && db != 1)
        throw ShapeError(std::string(op) + " broadcast mismatch: " + a.Str() +
                         " vs " + b.Str());
      out.d[i] = std::max(da, db);
    }
    return out;
  }

  // Strides into the (right-aligned) input for each output dim; 0 where the
  // input dim is broadcast.
  static std::array<int64_t, 3> BroadcastStrides(const Shape& in,
                                                 const Shape& out) {
    std::array<int64_t, 3> dims{1, 1, 1};
    for (int i = 0; i < in.rank; ++i)
      dims[out.rank - in.rank + i] = in.d[i];
    std::array<int64_t, 3> strides{0, 0, 0};
    int64_t acc = 1;
    for (int i = out.rank - 1; i >= 0; --i) {
      strides[i] = (dims[i] == 1) ? 0 : acc;
      acc *= dims[i];
    }
    // Shift so that index math can always use [0],[1],[2].
    std::array<int64_t, 3> full{0, 0, 0};
    for (int i = 0; i < out.rank; ++i) full[i] = strides[i];
    return full;
  }

  Tensor Reduce(const char* name, const Tensor& a, bool mean) {
    const int64_t n = a.shape().numel();
    Tensor out = MakeOutput(Shape::Vec(1), a);
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += static_cast<double>(a.val()[i]);
    const S scale = mean ? S(1) / static_cast<S>(n) : S(1);
    out.val()[0] = static_cast<S>(acc) * scale;
    FinishOp(name, out, [a, out, n, scale]() {
      if (!a.requires_grad()) return;
      a.EnsureGrad();
      const S g = out.grad()[0] * scale;
      for (int64_t i = 0; i < n; ++i) a.grad()[i] += g;
    });
    return out;
  }

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;
using TensorD = TensorT<double>;
using TapeD = TapeT<double>;

}  // namespace respr

#endif  // RESPR_TENSOR_H_
