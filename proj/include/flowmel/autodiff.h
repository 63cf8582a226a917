// flowmel/autodiff.h

// Copyright 2026  Flowmel Authors

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

#ifndef FLOWMEL_AUTODIFF_H_
#define FLOWMEL_AUTODIFF_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

#include "flowmel/types.h"

// Reverse-mode automatic differentiation over dense Eigen matrices. A Tape
// records the forward computation in order; backward() replays it in reverse
// and pushes gradients into the leaves' external sinks. One tape per forward
// pass; values are immutable once recorded.

namespace flowmel::ad {

template <typename Scalar>
class Tape {
 public:
  using Mat = MatX<Scalar>;

  struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
  };

  const Mat& value(Var v) const { return node(v.id).value; }

  int rows(Var v) const { return static_cast<int>(value(v).rows()); }
  int cols(Var v) const { return static_cast<int>(value(v).cols()); }

  // Parameter leaf; gradients accumulate into *grad_sink (same shape).
  Var leaf(const Mat& val, Mat* grad_sink) {
    const Var v = push(val);
    node(v.id).external_grad = grad_sink;
    return v;
  }

  Var constant(const Mat& val) { return push(val); }

  Var matmul(Var a, Var b) {
    if (value(a).cols() != value(b).rows())
      throw std::invalid_argument("matmul: inner dimensions differ");
    const Var out = push(value(a) * value(b));
    record(out, [a, b, out](Tape& t) {
      const Mat& g = t.grad(out.id);
      t.grad(a.id).noalias() += g * t.value(b).transpose();
      t.grad(b.id).noalias() += t.value(a).transpose() * g;
    });
    return out;
  }

  Var transpose(Var a) {
    const Var out = push(value(a).transpose());
    record(out, [a, out](Tape& t) {
      t.grad(a.id) += t.grad(out.id).transpose();
    });
    return out;
  }

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    const Var out = push(value(a) + value(b));
    record(out, [a, b, out](Tape& t) {
      t.grad(a.id) += t.grad(out.id);
      t.grad(b.id) += t.grad(out.id);
    });
    return out;
  }

  // Adds a [1 x n] row to every row of a.
  Var add_row(Var a, Var row) {
    if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
      throw std::invalid_argument("add_row: bias must be [1 x cols]");
    Mat v = value(a);
    v.rowwise() += value(row).row(0);
    const Var out = push(std::move(v));
    record(out, [a, row, out](Tape& t) {
      t.grad(a.id) += t.grad(out.id);
      t.grad(row.id).row(0) += t.grad(out.id).colwise().sum();
    });
    return out;
  }

  // Multiplies by a learnable scalar held as a [1 x 1] Var.
  Var scale(Var a, Var s) {
    if (value(s).size() != 1)
      throw std::invalid_argument("scale: scalar must be [1 x 1]");
    const Var out = push(value(s)(0, 0) * value(a));
    record(out, [a, s, out](Tape& t) {
      const Mat& g = t.grad(out.id);
      t.grad(a.id) += t.value(s)(0, 0) * g;
      t.grad(s.id)(0, 0) += (g.array() * t.value(a).array()).sum();
    });
    return out;
  }

  Var scale_const(Var a, Scalar c) {
    const Var out = push(c * value(a));
    record(out, [a, c, out](Tape& t) { t.grad(a.id) += c * t.grad(out.id); });
    return out;
  }

  // Exact GELU, x * Phi(x).
  Var gelu(Var a) {
    const Mat& x = value(a);
    Mat y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const Scalar v = x(i);
      y(i) = v * phi(v);
    }
    const Var out = push(std::move(y));
    record(out, [a, out](Tape& t) {
      const Mat& x2 = t.value(a);
      const Mat& g = t.grad(out.id);
      Mat& ga = t.grad(a.id);
      for (Eigen::Index i = 0; i < x2.size(); ++i) {
        const Scalar v = x2(i);
        const Scalar pdf = std::exp(Scalar(-0.5) * v * v) *
                           Scalar(0.3989422804014326779);
        ga(i) += g(i) * (phi(v) + v * pdf);
      }
    });
    return out;
  }

  // Per-row layer normalization with learnable [1 x n] gamma and beta.
  Var layer_norm(Var x, Var gamma, Var beta, Scalar eps) {
    const Mat& v = value(x);
    const Eigen::Index n = v.cols();
    if (value(gamma).cols() != n || value(beta).cols() != n)
      throw std::invalid_argument("layer_norm: gamma/beta must be [1 x cols]");
    Mat normed(v.rows(), n);
    Mat inv_std(v.rows(), 1);
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      const Scalar mean = v.row(i).mean();
      const Scalar var = (v.row(i).array() - mean).square().mean();
      const Scalar istd = Scalar(1) / std::sqrt(var + eps);
      inv_std(i, 0) = istd;
      normed.row(i) = (v.row(i).array() - mean) * istd;
    }
    Mat y(v.rows(), n);
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      y.row(i) =
          normed.row(i).cwiseProduct(value(gamma).row(0)) + value(beta).row(0);
    const Var out = push(std::move(y));
    auto normed_store = std::make_shared<Mat>(std::move(normed));
    auto istd_store = std::make_shared<Mat>(std::move(inv_std));
    record(out, [x, gamma, beta, out, normed_store, istd_store](Tape& t) {
      const Mat& g = t.grad(out.id);
      const Mat& nm = *normed_store;
      const Eigen::Index n2 = nm.cols();
      t.grad(gamma.id).row(0) +=
          (g.array() * nm.array()).colwise().sum().matrix();
      t.grad(beta.id).row(0) += g.colwise().sum();
      Mat& gx = t.grad(x.id);
      const auto grow = t.value(gamma).row(0).array();
      for (Eigen::Index i = 0; i < nm.rows(); ++i) {
        const auto dnorm = (g.row(i).array() * grow).eval();
        const Scalar mean_d = dnorm.mean();
        const Scalar mean_dn = (dnorm * nm.row(i).array()).mean();
        gx.row(i) += ((dnorm - mean_d - nm.row(i).array() * mean_dn) *
                      (*istd_store)(i, 0))
                         .matrix();
      }
    });
    return out;
  }

  // Row-wise softmax of (scores + additive_bias); the bias takes no gradient.
  Var softmax_rows(Var scores, const Mat& additive_bias) {
    const Mat& s = value(scores);
    if (additive_bias.rows() != s.rows() || additive_bias.cols() != s.cols())
      throw std::invalid_argument("softmax_rows: bias shape mismatch");
    Mat a(s.rows(), s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const auto z = (s.row(i) + additive_bias.row(i)).eval();
      const Scalar m = z.maxCoeff();
      const auto e = (z.array() - m).exp().eval();
      a.row(i) = e / e.sum();
    }
    const Var out = push(std::move(a));
    record(out, [scores, out](Tape& t) {
      const Mat& a2 = t.value(out);
      const Mat& g = t.grad(out.id);
      Mat& gs = t.grad(scores.id);
      for (Eigen::Index i = 0; i < a2.rows(); ++i) {
        const Scalar dot = g.row(i).dot(a2.row(i));
        gs.row(i) +=
            (a2.row(i).array() * (g.row(i).array() - dot)).matrix();
      }
    });
    return out;
  }

  Var concat_rows(Var a, Var b) {
    if (value(a).cols() != value(b).cols())
      throw std::invalid_argument("concat_rows: column counts differ");
    Mat v(value(a).rows() + value(b).rows(), value(a).cols());
    v.topRows(value(a).rows()) = value(a);
    v.bottomRows(value(b).rows()) = value(b);
    const Var out = push(std::move(v));
    const int ra = static_cast<int>(value(a).rows());
    record(out, [a, b, out, ra](Tape& t) {
      const Mat& g = t.grad(out.id);
      t.grad(a.id) += g.topRows(ra);
      t.grad(b.id) += g.bottomRows(g.rows() - ra);
    });
    return out;
  }

  Var concat_cols(Var a, Var b) {
    if (value(a).rows() != value(b).rows())
      throw std::invalid_argument("concat_cols: row counts differ");
    Mat v(value(a).rows(), value(a).cols() + value(b).cols());
    v.leftCols(value(a).cols()) = value(a);
    v.rightCols(value(b).cols()) = value(b);
    const Var out = push(std::move(v));
    const int ca = static_cast<int>(value(a).cols());
    record(out, [a, b, out, ca](Tape& t) {
      const Mat& g = t.grad(out.id);
      t.grad(a.id) += g.leftCols(ca);
      t.grad(b.id) += g.rightCols(g.cols() - ca);
    });
    return out;
  }

  Var slice_rows(Var a, int start, int count) {
    const Var out = push(value(a).middleRows(start, count));
    record(out, [a, out, start, count](Tape& t) {
      t.grad(a.id).middleRows(start, count) += t.grad(out.id);
    });
    return out;
  }

  Var slice_cols(Var a, int start, int count) {
    const Var out = push(value(a).middleCols(start, count));
    record(out, [a, out, start, count](Tape& t) {
      t.grad(a.id).middleCols(start, count) += t.grad(out.id);
    });
    return out;
  }

  // Embedding lookup: out.row(i) = table.row(ids[i]).
  Var gather_rows(Var table, const std::vector<int>& ids) {
    const Mat& tb = value(table);
    Mat v(static_cast<Eigen::Index>(ids.size()), tb.cols());
    for (size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= tb.rows())
        throw std::invalid_argument("gather_rows: id out of range");
      v.row(static_cast<Eigen::Index>(i)) = tb.row(ids[i]);
    }
    const Var out = push(std::move(v));
    record(out, [table, out, ids](Tape& t) {
      const Mat& g = t.grad(out.id);
      Mat& gt = t.grad(table.id);
      for (size_t i = 0; i < ids.size(); ++i)
        gt.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
    });
    return out;
  }

  // Grouped 1-D convolution along the row (time) axis with same-padding.
  // kernel is [ksize*dg x d] where dg = d / groups; block k of dg rows holds
  // the tap-k weights, laid out so column c receives input only from the dg
  // channels of c's own group.
  Var grouped_conv1d(Var x, Var kernel, Var bias, int groups) {
    const Mat& v = value(x);
    const int d = static_cast<int>(v.cols());
    if (groups < 1 || d % groups != 0)
      throw std::invalid_argument("grouped_conv1d: groups must divide cols");
    const int dg = d / groups;
    const Mat& w = value(kernel);
    if (w.cols() != d || w.rows() % dg != 0)
      throw std::invalid_argument("grouped_conv1d: bad kernel shape");
    const int ksize = static_cast<int>(w.rows()) / dg;
    if (ksize % 2 == 0)
      throw std::invalid_argument("grouped_conv1d: kernel size must be odd");
    if (value(bias).rows() != 1 || value(bias).cols() != d)
      throw std::invalid_argument("grouped_conv1d: bias must be [1 x cols]");
    const int pad = ksize / 2;
    const int n = static_cast<int>(v.rows());

    Mat y = value(bias).replicate(n, 1);
    for (int k = 0; k < ksize; ++k) {
      const int offset = k - pad;
      const int r0 = std::max(0, -offset);
      const int r1 = std::min(n, n - offset);
      if (r0 >= r1) continue;
      for (int g = 0; g < groups; ++g) {
        y.block(r0, g * dg, r1 - r0, dg).noalias() +=
            v.block(r0 + offset, g * dg, r1 - r0, dg) *
            w.block(k * dg, g * dg, dg, dg);
      }
    }
    const Var out = push(std::move(y));
    record(out, [x, kernel, bias, out, groups, dg, ksize, pad](Tape& t) {
      const Mat& g_out = t.grad(out.id);
      const Mat& v2 = t.value(x);
      const Mat& w2 = t.value(kernel);
      const int n2 = static_cast<int>(v2.rows());
      t.grad(bias.id).row(0) += g_out.colwise().sum();
      Mat& gx = t.grad(x.id);
      Mat& gw = t.grad(kernel.id);
      for (int k = 0; k < ksize; ++k) {
        const int offset = k - pad;
        const int r0 = std::max(0, -offset);
        const int r1 = std::min(n2, n2 - offset);
        if (r0 >= r1) continue;
        for (int g = 0; g < groups; ++g) {
          gx.block(r0 + offset, g * dg, r1 - r0, dg).noalias() +=
              g_out.block(r0, g * dg, r1 - r0, dg) *
              w2.block(k * dg, g * dg, dg, dg).transpose();
          gw.block(k * dg, g * dg, dg, dg).noalias() +=
              v2.block(r0 + offset, g * dg, r1 - r0, dg).transpose() *
              g_out.block(r0, g * dg, r1 - r0, dg);
        }
      }
    });
    return out;
  }

  // Mean squared error against a constant target over the selected rows
  // (every column of a selected row contributes). Returns a [1 x 1] Var.
  Var mse_selected_rows(Var pred, const Mat& target,
                        const std::vector<uint8_t>& row_select) {
    const Mat& p = value(pred);
    if (p.rows() != target.rows() || p.cols() != target.cols())
      throw std::invalid_argument("mse_selected_rows: shape mismatch");
    if (static_cast<Eigen::Index>(row_select.size()) != p.rows())
      throw std::invalid_argument("mse_selected_rows: bad selection length");
    Scalar sum = 0;
    int n_sel = 0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      if (!row_select[static_cast<size_t>(i)]) continue;
      ++n_sel;
      sum += (p.row(i) - target.row(i)).squaredNorm();
    }
    if (n_sel == 0)
      throw std::invalid_argument("mse_selected_rows: empty selection");
    const Scalar denom = static_cast<Scalar>(n_sel) * p.cols();
    Mat v(1, 1);
    v(0, 0) = sum / denom;
    const Var out = push(std::move(v));
    auto target_store = std::make_shared<Mat>(target);
    record(out, [pred, out, target_store, row_select, denom](Tape& t) {
      const Scalar seed = t.grad(out.id)(0, 0);
      const Mat& p2 = t.value(pred);
      Mat& gp = t.grad(pred.id);
      for (Eigen::Index i = 0; i < p2.rows(); ++i) {
        if (!row_select[static_cast<size_t>(i)]) continue;
        gp.row(i) += seed * Scalar(2) / denom *
                     (p2.row(i) - target_store->row(i));
      }
    });
    return out;
  }

  // Accumulates seed * d(out)/d(leaf) into every leaf's external sink.
  // `out` must be [1 x 1].
  void backward(Var out, Scalar seed = Scalar(1)) {
    if (value(out).size() != 1)
      throw std::invalid_argument("backward: output must be scalar");
    grad(out.id)(0, 0) += seed;
    for (int id = out.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<size_t>(id)];
      if (n.grad.size() == 0) continue;  // never touched by any consumer
      if (n.pull) n.pull(*this);
      if (n.external_grad) *n.external_grad += n.grad;
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&)> pull;
    Mat* external_grad = nullptr;
  };

  Node& node(int id) { return nodes_.at(static_cast<size_t>(id)); }
  const Node& node(int id) const { return nodes_.at(static_cast<size_t>(id)); }

  Mat& grad(int id) {
    Node& n = node(id);
    if (n.grad.size() == 0)
      n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  Var push(Mat value) {
    Node n;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  void record(Var v, std::function<void(Tape&)> pull) {
    node(v.id).pull = std::move(pull);
  }

  void check_same(Var a, Var b, const char* where) const {
    if (value(a).rows() != value(b).rows() ||
        value(a).cols() != value(b).cols())
      throw std::invalid_argument(std::string(where) + ": shape mismatch");
  }

  static Scalar phi(Scalar v) {
    return Scalar(0.5) * (Scalar(1) + std::erf(v * Scalar(M_SQRT1_2)));
  }

  std::vector<Node> nodes_;
};

}  // namespace flowmel::ad

#endif  // FLOWMEL_AUTODIFF_H_
