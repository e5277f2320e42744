/* Copyright 2026 The contextst Authors. All Rights Reserved.

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

#pragma once

// Matrix-level reverse-mode differentiation.
//
// A Tape records dense matrix operations in creation order; backward() walks
// the records in reverse and accumulates adjoints. Parameters are referenced,
// not copied, and may route their adjoints straight into an external sink so
// several tapes can share one parameter set.

#include "contextst/activation.hpp"
#include "contextst/common.hpp"

#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace contextst {

template <typename Scalar_>
class Tape {
 public:
  using Scalar = Scalar_;
  using Mat = Matrix<Scalar>;
  using BoolMat = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) noexcept = default;
  Tape& operator=(Tape&&) noexcept = default;

  // ---- leaves -------------------------------------------------------------

  Var constant(Mat value) { return push(std::move(value), false, "constant"); }

  // Differentiable leaf owning its value; its adjoint is read with grad().
  Var variable(Mat value) { return push(std::move(value), true, "variable"); }

  // Differentiable leaf that references `value` (which must outlive the
  // tape). When `sink` is set, adjoints are added to it directly.
  Var parameter(const Mat& value, Mat* sink = nullptr) {
    Node n;
    n.ref = &value;
    n.requires_grad = true;
    n.sink = sink;
    n.label = scope_ + "parameter";
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  // ---- access -------------------------------------------------------------

  const Mat& value(Var v) const { return node(v).value(); }
  Scalar scalar(Var v) const { return node(v).value()(0, 0); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Adjoint of a non-sink node; zeros if nothing reached it.
  Mat grad(Var v) const {
    const Node& n = node(v);
    if (n.has_grad) return n.grad;
    return Mat::Zero(n.value().rows(), n.value().cols());
  }

  // Prefix for node labels used in non-finite diagnostics.
  void set_scope(std::string scope) { scope_ = scope.empty() ? std::string() : scope + "/"; }
  void set_check_finite(bool on) { check_finite_ = on; }

  // ---- differentiation ----------------------------------------------------

  void seed(Var v, const Mat& adjoint) { accumulate(v.id, adjoint); }

  void backward(Var output) {
    const Mat& out = value(output);
    if (out.rows() != 1 || out.cols() != 1) throw ShapeError("backward() needs a 1x1 output");
    seed(output, Mat::Constant(1, 1, Scalar(1)));
    propagate();
  }

  void propagate() {
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.has_grad || !n.backward) continue;
      if (check_finite_ && !n.grad.allFinite()) {
        throw NumericError("non-finite gradient at " + n.label);
      }
      n.backward(*this, n.grad);
    }
  }

  // ---- operations ---------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Mat& A = value(a);
    const Mat& B = value(b);
    if (A.cols() != B.rows()) throw shape_error("matmul", A, B);
    return make(A * B, {a, b}, "matmul", [a, b](Tape& t, const Mat& g) {
      if (t.needs(a)) t.accumulate(a.id, g * t.value(b).transpose());
      if (t.needs(b)) t.accumulate(b.id, t.value(a).transpose() * g);
    });
  }

  Var add(Var a, Var b) {
    const Mat& A = value(a);
    const Mat& B = value(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) throw shape_error("add", A, B);
    return make(A + B, {a, b}, "add", [a, b](Tape& t, const Mat& g) {
      t.accumulate(a.id, g);
      t.accumulate(b.id, g);
    });
  }

  // Adds a 1 x cols row to every row of `a`.
  Var add_row(Var a, Var row) {
    const Mat& A = value(a);
    const Mat& R = value(row);
    if (R.rows() != 1 || R.cols() != A.cols()) throw shape_error("add_row", A, R);
    Mat out = A.rowwise() + R.row(0);
    return make(std::move(out), {a, row}, "add_row", [a, row](Tape& t, const Mat& g) {
      t.accumulate(a.id, g);
      if (t.needs(row)) t.accumulate(row.id, g.colwise().sum());
    });
  }

  Var affine(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

  Var scale(Var a, Scalar s) {
    return make(value(a) * s, {a}, "scale",
                [a, s](Tape& t, const Mat& g) { t.accumulate(a.id, g * s); });
  }

  Var hadamard(Var a, Var b) {
    const Mat& A = value(a);
    const Mat& B = value(b);
    if (A.rows() != B.rows() || A.cols() != B.cols()) throw shape_error("hadamard", A, B);
    return make(A.cwiseProduct(B), {a, b}, "hadamard", [a, b](Tape& t, const Mat& g) {
      if (t.needs(a)) t.accumulate(a.id, g.cwiseProduct(t.value(b)));
      if (t.needs(b)) t.accumulate(b.id, g.cwiseProduct(t.value(a)));
    });
  }

  Var sum(Var a) {
    const Mat& A = value(a);
    const Index r = A.rows(), c = A.cols();
    return make(Mat::Constant(1, 1, A.sum()), {a}, "sum", [a, r, c](Tape& t, const Mat& g) {
      t.accumulate(a.id, Mat::Constant(r, c, g(0, 0)));
    });
  }

  // Scalar sum of a ⊙ weights with constant weights.
  Var weighted_sum(Var a, Mat weights) {
    const Mat& A = value(a);
    if (A.rows() != weights.rows() || A.cols() != weights.cols()) {
      throw shape_error("weighted_sum", A, weights);
    }
    Mat out = Mat::Constant(1, 1, A.cwiseProduct(weights).sum());
    return make(std::move(out), {a}, "weighted_sum",
                [a, w = std::move(weights)](Tape& t, const Mat& g) { t.accumulate(a.id, w * g(0, 0)); });
  }

  Var activation(Var a, Activation act) {
    const Mat& A = value(a);
    Mat out = A.unaryExpr([act](Scalar x) { return activate(act, x); });
    return make(std::move(out), {a}, "activation", [a, act](Tape& t, const Mat& g) {
      const Mat& x = t.value(a);
      t.accumulate(a.id, g.cwiseProduct(x.unaryExpr([act](Scalar v) { return activate_derivative(act, v); })));
    });
  }

  // Row-wise layer normalization with population variance.
  Var layer_norm(Var a, Var gain, Var bias, Scalar eps) {
    const Mat& X = value(a);
    const Index n = X.rows(), d = X.cols();
    if (value(gain).cols() != d || value(bias).cols() != d) throw shape_error("layer_norm", X, value(gain));
    Mat xhat(n, d);
    Vector<Scalar> inv_sigma(n);
    for (Index i = 0; i < n; ++i) {
      const Scalar mu = X.row(i).mean();
      const Scalar var = (X.row(i).array() - mu).square().mean();
      inv_sigma(i) = Scalar(1) / std::sqrt(var + eps);
      xhat.row(i) = (X.row(i).array() - mu) * inv_sigma(i);
    }
    Mat out = (xhat.array().rowwise() * value(gain).row(0).array()).matrix();
    out.rowwise() += value(bias).row(0);
    return make(std::move(out), {a, gain, bias}, "layer_norm",
                [a, gain, bias, xhat = std::move(xhat), inv_sigma = std::move(inv_sigma)](Tape& t, const Mat& g) {
                  if (t.needs(gain)) t.accumulate(gain.id, g.cwiseProduct(xhat).colwise().sum());
                  if (t.needs(bias)) t.accumulate(bias.id, g.colwise().sum());
                  if (!t.needs(a)) return;
                  const Mat dxhat = (g.array().rowwise() * t.value(gain).row(0).array()).matrix();
                  Mat dx(dxhat.rows(), dxhat.cols());
                  for (Index i = 0; i < dxhat.rows(); ++i) {
                    const Scalar m1 = dxhat.row(i).mean();
                    const Scalar m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
                    dx.row(i) = (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2) * inv_sigma(i);
                  }
                  t.accumulate(a.id, dx);
                });
  }

  // Multi-head scaled dot-product attention applied independently to each
  // block of `group` consecutive rows. No causal mask. If `probabilities` is
  // set it receives one group x group matrix per (block, head).
  Var grouped_attention(Var q, Var k, Var v, Index group, Index heads,
                        std::vector<Mat>* probabilities = nullptr) {
    const Mat& Q = value(q);
    const Mat& K = value(k);
    const Mat& V = value(v);
    const Index n = Q.rows(), d = Q.cols();
    if (K.rows() != n || V.rows() != n || K.cols() != d || V.cols() != d) {
      throw shape_error("grouped_attention", Q, K);
    }
    if (group < 1 || n % group != 0 || heads < 1 || d % heads != 0) {
      throw ShapeError("grouped_attention: rows must split into groups and width into heads");
    }
    const Index groups = n / group;
    const Index dh = d / heads;
    const Scalar inv_sqrt = Scalar(1) / std::sqrt(static_cast<Scalar>(dh));
    std::vector<Mat> probs;
    probs.reserve(static_cast<std::size_t>(groups * heads));
    Mat out(n, d);
    for (Index gi = 0; gi < groups; ++gi) {
      for (Index h = 0; h < heads; ++h) {
        const auto qb = Q.block(gi * group, h * dh, group, dh);
        const auto kb = K.block(gi * group, h * dh, group, dh);
        const auto vb = V.block(gi * group, h * dh, group, dh);
        Mat s = (qb * kb.transpose()) * inv_sqrt;
        for (Index r = 0; r < group; ++r) {
          const Scalar mx = s.row(r).maxCoeff();
          s.row(r) = (s.row(r).array() - mx).exp();
          s.row(r) /= s.row(r).sum();
        }
        out.block(gi * group, h * dh, group, dh) = s * vb;
        probs.push_back(std::move(s));
      }
    }
    if (probabilities != nullptr) *probabilities = probs;
    return make(std::move(out), {q, k, v}, "attention",
                [q, k, v, group, heads, dh, inv_sqrt, probs = std::move(probs)](Tape& t, const Mat& g) {
                  const Mat& Q = t.value(q);
                  const Mat& K = t.value(k);
                  const Mat& V = t.value(v);
                  const Index n = Q.rows(), d = Q.cols();
                  Mat dq = Mat::Zero(n, d), dk = Mat::Zero(n, d), dv = Mat::Zero(n, d);
                  std::size_t idx = 0;
                  for (Index gi = 0; gi < n / group; ++gi) {
                    for (Index h = 0; h < heads; ++h, ++idx) {
                      const Mat& p = probs[idx];
                      const auto go = g.block(gi * group, h * dh, group, dh);
                      const auto qb = Q.block(gi * group, h * dh, group, dh);
                      const auto kb = K.block(gi * group, h * dh, group, dh);
                      const auto vb = V.block(gi * group, h * dh, group, dh);
                      dv.block(gi * group, h * dh, group, dh) = p.transpose() * go;
                      const Mat dp = go * vb.transpose();
                      Mat ds = p.cwiseProduct(dp);
                      const Vector<Scalar> row_dot = ds.rowwise().sum();
                      ds -= (p.array().colwise() * row_dot.array()).matrix();
                      ds *= inv_sqrt;
                      dq.block(gi * group, h * dh, group, dh) = ds * kb;
                      dk.block(gi * group, h * dh, group, dh) = ds.transpose() * qb;
                    }
                  }
                  if (t.needs(q)) t.accumulate(q.id, dq);
                  if (t.needs(k)) t.accumulate(k.id, dk);
                  if (t.needs(v)) t.accumulate(v.id, dv);
                });
  }

  // Multiplies every row of `a` elementwise by the 1 x cols row `row`.
  Var mul_row(Var a, Var row) {
    const Mat& A = value(a);
    const Mat& R = value(row);
    if (R.rows() != 1 || R.cols() != A.cols()) throw shape_error("mul_row", A, R);
    Mat out = (A.array().rowwise() * R.row(0).array()).matrix();
    return make(std::move(out), {a, row}, "mul_row", [a, row](Tape& t, const Mat& g) {
      if (t.needs(a)) t.accumulate(a.id, (g.array().rowwise() * t.value(row).row(0).array()).matrix());
      if (t.needs(row)) t.accumulate(row.id, g.cwiseProduct(t.value(a)).colwise().sum());
    });
  }

  // Row-wise softmax restricted to the entries where `mask` is true; other
  // entries are exactly zero. The mask itself is not differentiated.
  Var masked_softmax(Var logits, const BoolMat& mask) {
    const Mat& Z = value(logits);
    if (mask.rows() != Z.rows() || mask.cols() != Z.cols()) {
      throw ShapeError("masked_softmax: mask shape mismatch");
    }
    Mat out = Mat::Zero(Z.rows(), Z.cols());
    for (Index i = 0; i < Z.rows(); ++i) {
      Scalar mx = -std::numeric_limits<Scalar>::infinity();
      for (Index j = 0; j < Z.cols(); ++j) {
        if (mask(i, j)) mx = std::max(mx, Z(i, j));
      }
      Scalar total(0);
      for (Index j = 0; j < Z.cols(); ++j) {
        if (mask(i, j)) {
          out(i, j) = std::exp(Z(i, j) - mx);
          total += out(i, j);
        }
      }
      if (total > Scalar(0)) out.row(i) /= total;
    }
    const Var self{static_cast<int>(nodes_.size())};
    return make(std::move(out), {logits}, "masked_softmax", [logits, self](Tape& t, const Mat& g) {
      const Mat& y = t.value(self);
      const Vector<Scalar> dot = y.cwiseProduct(g).rowwise().sum();
      t.accumulate(logits.id, y.cwiseProduct(g - dot.replicate(1, g.cols())));
    });
  }

  Var column(Var a, Index c) {
    const Mat& A = value(a);
    if (c < 0 || c >= A.cols()) throw ShapeError("column index out of range");
    Mat out = A.col(c);
    return make(std::move(out), {a}, "column", [a, c](Tape& t, const Mat& g) {
      const Mat& A = t.value(a);
      Mat full = Mat::Zero(A.rows(), A.cols());
      full.col(c) = g.col(0);
      t.accumulate(a.id, full);
    });
  }

  Var gather_rows(Var a, std::vector<Index> rows) {
    const Mat& A = value(a);
    Mat out(static_cast<Index>(rows.size()), A.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = A.row(rows[i]);
    return make(std::move(out), {a}, "gather_rows", [a, rows = std::move(rows)](Tape& t, const Mat& g) {
      const Mat& A = t.value(a);
      Mat full = Mat::Zero(A.rows(), A.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) full.row(rows[i]) += g.row(static_cast<Index>(i));
      t.accumulate(a.id, full);
    });
  }

  // Places row i of `a` at row rows[i] of a zero matrix with `total` rows.
  Var scatter_rows(Var a, std::vector<Index> rows, Index total) {
    const Mat& A = value(a);
    if (static_cast<Index>(rows.size()) != A.rows()) throw ShapeError("scatter_rows: index count mismatch");
    Mat out = Mat::Zero(total, A.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(rows[i]) += A.row(static_cast<Index>(i));
    return make(std::move(out), {a}, "scatter_rows", [a, rows = std::move(rows)](Tape& t, const Mat& g) {
      Mat part(static_cast<Index>(rows.size()), g.cols());
      for (std::size_t i = 0; i < rows.size(); ++i) part.row(static_cast<Index>(i)) = g.row(rows[i]);
      t.accumulate(a.id, part);
    });
  }

  // Scales row i of `a` by weights(i, 0).
  Var mul_rows(Var a, Var weights) {
    const Mat& A = value(a);
    const Mat& W = value(weights);
    if (W.cols() != 1 || W.rows() != A.rows()) throw shape_error("mul_rows", A, W);
    Mat out = (A.array().colwise() * W.col(0).array()).matrix();
    return make(std::move(out), {a, weights}, "mul_rows", [a, weights](Tape& t, const Mat& g) {
      if (t.needs(a)) t.accumulate(a.id, (g.array().colwise() * t.value(weights).col(0).array()).matrix());
      if (t.needs(weights)) t.accumulate(weights.id, g.cwiseProduct(t.value(a)).rowwise().sum());
    });
  }

  // `tokens` holds `groups` blocks of equal height; `token` (1 x cols) is
  // appended to each block.
  Var append_token(Var tokens, Var token, Index groups) {
    const Mat& X = value(tokens);
    const Mat& c = value(token);
    if (groups < 1 || X.rows() % groups != 0 || c.rows() != 1 || c.cols() != X.cols()) {
      throw shape_error("append_token", X, c);
    }
    const Index per = X.rows() / groups;
    Mat out(groups * (per + 1), X.cols());
    for (Index gi = 0; gi < groups; ++gi) {
      out.block(gi * (per + 1), 0, per, X.cols()) = X.block(gi * per, 0, per, X.cols());
      out.row(gi * (per + 1) + per) = c.row(0);
    }
    return make(std::move(out), {tokens, token}, "append_token", [tokens, token, groups, per](Tape& t, const Mat& g) {
      if (t.needs(tokens)) {
        Mat dx(groups * per, g.cols());
        for (Index gi = 0; gi < groups; ++gi) dx.block(gi * per, 0, per, g.cols()) = g.block(gi * (per + 1), 0, per, g.cols());
        t.accumulate(tokens.id, dx);
      }
      if (t.needs(token)) {
        Mat dc = Mat::Zero(1, g.cols());
        for (Index gi = 0; gi < groups; ++gi) dc += g.row(gi * (per + 1) + per);
        t.accumulate(token.id, dc);
      }
    });
  }

  // Mean of `groups` equal-height row blocks.
  Var group_mean(Var a, Index groups) {
    const Mat& A = value(a);
    if (groups < 1 || A.rows() % groups != 0) throw ShapeError("group_mean: rows not divisible by groups");
    const Index per = A.rows() / groups;
    Mat out = Mat::Zero(per, A.cols());
    for (Index gi = 0; gi < groups; ++gi) out += A.block(gi * per, 0, per, A.cols());
    out /= static_cast<Scalar>(groups);
    return make(std::move(out), {a}, "group_mean", [a, groups](Tape& t, const Mat& g) {
      t.accumulate(a.id, g.replicate(groups, 1) / static_cast<Scalar>(groups));
    });
  }

  // Row-major flatten into a single row.
  Var flatten(Var a) {
    const Mat& A = value(a);
    const Index r = A.rows(), c = A.cols();
    Mat out(1, r * c);
    for (Index i = 0; i < r; ++i) out.block(0, i * c, 1, c) = A.row(i);
    return make(std::move(out), {a}, "flatten", [a, r, c](Tape& t, const Mat& g) {
      Mat d(r, c);
      for (Index i = 0; i < r; ++i) d.row(i) = g.block(0, i * c, 1, c);
      t.accumulate(a.id, d);
    });
  }

  // Mean Huber loss between `prediction` and a constant target of equal shape.
  Var huber_mean(Var prediction, const Mat& target, Scalar delta) {
    const Mat& Y = value(prediction);
    if (Y.rows() != target.rows() || Y.cols() != target.cols()) throw shape_error("huber_mean", Y, target);
    const Mat err = Y - target;
    const Scalar count = static_cast<Scalar>(err.size());
    Scalar total(0);
    for (Index i = 0; i < err.size(); ++i) {
      const Scalar e = std::abs(err(i));
      total += e <= delta ? Scalar(0.5) * e * e : delta * e - Scalar(0.5) * delta * delta;
    }
    return make(Mat::Constant(1, 1, total / count), {prediction}, "huber",
                [prediction, err, delta, count](Tape& t, const Mat& g) {
                  const Mat d = err.unaryExpr([delta](Scalar e) {
                    return std::abs(e) <= delta ? e : (e > Scalar(0) ? delta : -delta);
                  });
                  t.accumulate(prediction.id, d * (g(0, 0) / count));
                });
  }

 private:
  using Backward = std::function<void(Tape&, const Mat&)>;

  struct Node {
    Mat owned;
    const Mat* ref = nullptr;
    Mat grad;
    Mat* sink = nullptr;
    bool has_grad = false;
    bool requires_grad = false;
    Backward backward;
    std::string label;

    const Mat& value() const { return ref != nullptr ? *ref : owned; }
  };

  const Node& node(Var v) const {
    if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) throw ShapeError("invalid tape variable");
    return nodes_[static_cast<std::size_t>(v.id)];
  }

  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.sink != nullptr) {
      *n.sink += g;
      return;
    }
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }

  Var push(Mat value, bool requires_grad, const char* op) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = requires_grad;
    n.label = scope_ + op;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var make(Mat value, std::initializer_list<Var> inputs, const char* op, Backward backward) {
    if (check_finite_ && !value.allFinite()) {
      throw NumericError("non-finite value at " + scope_ + op);
    }
    bool any = false;
    for (const Var& in : inputs) any = any || needs(in);
    Node n;
    n.owned = std::move(value);
    n.requires_grad = any;
    n.label = scope_ + op;
    if (any) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  static ShapeError shape_error(const char* op, const Mat& a, const Mat& b) {
    return ShapeError(std::string(op) + ": incompatible shapes " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " and " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
  }

  std::vector<Node> nodes_;
  std::string scope_;
  bool check_finite_ = true;
};

}  // namespace contextst
