// tests/autodiff_test.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <functional>
#include <vector>

#include "flowmel/autodiff.h"
#include "flowmel/rng.h"

using flowmel::Rng;
using Tape = flowmel::ad::Tape<double>;
using Mat = flowmel::MatX<double>;
using Var = Tape::Var;

namespace {

// Checks every entry of every input against a central finite difference of
// the scalar function built by `graph`.
void grad_check(std::vector<Mat> inputs,
                const std::function<Var(Tape&, const std::vector<Var>&)>& graph,
                double tol = 1e-7) {
  std::vector<Mat> grads;
  for (const Mat& m : inputs) grads.push_back(Mat::Zero(m.rows(), m.cols()));

  auto eval = [&](const std::vector<Mat>& vals, bool with_grad) {
    Tape tape;
    std::vector<Var> vars;
    for (size_t i = 0; i < vals.size(); ++i)
      vars.push_back(with_grad ? tape.leaf(vals[i], &grads[i])
                               : tape.constant(vals[i]));
    const Var out = graph(tape, vars);
    const double value = tape.value(out)(0, 0);
    if (with_grad) tape.backward(out);
    return value;
  };

  eval(inputs, true);
  const double h = 1e-6;
  for (size_t p = 0; p < inputs.size(); ++p) {
    for (Eigen::Index i = 0; i < inputs[p].size(); ++i) {
      std::vector<Mat> plus = inputs, minus = inputs;
      plus[p](i) += h;
      minus[p](i) -= h;
      const double fd = (eval(plus, false) - eval(minus, false)) / (2.0 * h);
      const double an = grads[p](i);
      const double scale = std::max({1.0, std::abs(fd), std::abs(an)});
      CHECK(std::abs(fd - an) / scale < tol);
    }
  }
}

// A scalar readout with a distinct offset per entry so transposition or
// index bugs cannot cancel: mean squared distance to a random target.
Var weighted_sum(Tape& t, Var a, uint64_t seed) {
  Rng rng(seed);
  Mat w = rng.gaussian_matrix<double>(t.value(a).rows(), t.value(a).cols());
  std::vector<uint8_t> all(static_cast<size_t>(t.value(a).rows()), 1);
  return t.mse_selected_rows(a, w, all);
}

}  // namespace

TEST_CASE("matmul gradient") {
  Rng rng(1);
  grad_check({rng.gaussian_matrix<double>(3, 4), rng.gaussian_matrix<double>(4, 2)},
             [](Tape& t, const std::vector<Var>& v) {
               return weighted_sum(t, t.matmul(v[0], v[1]), 9);
             });
}

TEST_CASE("transpose and add gradients") {
  Rng rng(2);
  grad_check({rng.gaussian_matrix<double>(3, 5), rng.gaussian_matrix<double>(5, 3)},
             [](Tape& t, const std::vector<Var>& v) {
               return weighted_sum(t, t.add(t.transpose(v[0]), v[1]), 10);
             });
}

TEST_CASE("add_row gradient") {
  Rng rng(3);
  grad_check({rng.gaussian_matrix<double>(4, 6), rng.gaussian_matrix<double>(1, 6)},
             [](Tape& t, const std::vector<Var>& v) {
               return weighted_sum(t, t.add_row(v[0], v[1]), 11);
             });
}

TEST_CASE("scale gradients") {
  Rng rng(4);
  grad_check({rng.gaussian_matrix<double>(3, 3), rng.gaussian_matrix<double>(1, 1)},
             [](Tape& t, const std::vector<Var>& v) {
               return weighted_sum(t, t.scale(v[0], v[1]), 12);
             });
  grad_check({rng.gaussian_matrix<double>(3, 3)},
             [](Tape& t, const std::vector<Var>& v) {
               return weighted_sum(t, t.scale_const(v[0], -1.7), 13);
             });
}

TEST_CASE("gelu gradient") {
  Rng rng(5);
  grad_check({rng.gaussian_matrix<double>(4, 4)},
             [](Tape& t, const std::vector<Var>& v) {
               return weighted_sum(t, t.gelu(v[0]), 14);
             },
             1e-6);
}

TEST_CASE("layer_norm gradient") {
  Rng rng(6);
  Mat gamma = rng.gaussian_matrix<double>(1, 5);
  gamma.array() += 1.5;
  grad_check({rng.gaussian_matrix<double>(4, 5), gamma,
              rng.gaussian_matrix<double>(1, 5)},
             [](Tape& t, const std::vector<Var>& v) {
               return weighted_sum(t, t.layer_norm(v[0], v[1], v[2], 1e-5), 15);
             },
             1e-5);
}

TEST_CASE("softmax_rows gradient with additive bias") {
  Rng rng(7);
  Mat bias = rng.gaussian_matrix<double>(4, 4);
  grad_check({rng.gaussian_matrix<double>(4, 4)},
             [bias](Tape& t, const std::vector<Var>& v) {
               return weighted_sum(t, t.softmax_rows(v[0], bias), 16);
             },
             1e-6);
}

TEST_CASE("softmax rows sum to one and respect the bias") {
  Tape t;
  Mat s(2, 3);
  s << 0.0, 0.0, 0.0, 1.0, 2.0, 3.0;
  Mat bias(2, 3);
  bias << 0.0, std::log(2.0), 0.0, 0.0, 0.0, 0.0;
  const Var out = t.softmax_rows(t.constant(s), bias);
  const Mat& a = t.value(out);
  CHECK(a.row(0).sum() == doctest::Approx(1.0));
  CHECK(a.row(1).sum() == doctest::Approx(1.0));
  // Row 0 is uniform except the biased middle entry which doubles its odds.
  CHECK(a(0, 1) == doctest::Approx(0.5));
  CHECK(a(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("concat and slice gradients") {
  Rng rng(8);
  grad_check({rng.gaussian_matrix<double>(2, 4), rng.gaussian_matrix<double>(3, 4)},
             [](Tape& t, const std::vector<Var>& v) {
               const Var c = t.concat_rows(v[0], v[1]);
               return weighted_sum(t, t.slice_rows(c, 1, 3), 17);
             });
  grad_check({rng.gaussian_matrix<double>(3, 2), rng.gaussian_matrix<double>(3, 5)},
             [](Tape& t, const std::vector<Var>& v) {
               const Var c = t.concat_cols(v[0], v[1]);
               return weighted_sum(t, t.slice_cols(c, 1, 4), 18);
             });
}

TEST_CASE("gather_rows gradient accumulates over repeated ids") {
  Rng rng(9);
  const std::vector<int> ids = {2, 0, 2, 1};
  grad_check({rng.gaussian_matrix<double>(3, 4)},
             [ids](Tape& t, const std::vector<Var>& v) {
               return weighted_sum(t, t.gather_rows(v[0], ids), 19);
             });
  Tape t;
  Mat table = rng.gaussian_matrix<double>(3, 2);
  CHECK_THROWS_AS(t.gather_rows(t.constant(table), {3}),
                  std::invalid_argument);
}

TEST_CASE("grouped_conv1d gradient") {
  Rng rng(10);
  const int n = 7, d = 4, groups = 2, ksize = 3;
  grad_check({rng.gaussian_matrix<double>(n, d),
              rng.gaussian_matrix<double>(ksize * d / groups, d),
              rng.gaussian_matrix<double>(1, d)},
             [groups](Tape& t, const std::vector<Var>& v) {
               return weighted_sum(t, t.grouped_conv1d(v[0], v[1], v[2], groups),
                                   20);
             });
}

TEST_CASE("grouped_conv1d respects group structure") {
  // Channel 0 of group 0 must not see channels of group 1.
  Tape t;
  const int n = 5, d = 4, groups = 2;
  Mat x = Mat::Zero(n, d);
  x(2, 3) = 1.0;  // impulse in group 1 territory
  Mat kernel = Mat::Ones(3 * d / groups, d);
  Mat bias = Mat::Zero(1, d);
  const Var out = t.grouped_conv1d(t.constant(x), t.constant(kernel),
                                   t.constant(bias), groups);
  const Mat& y = t.value(out);
  CHECK(y.col(0).cwiseAbs().maxCoeff() == 0.0);
  CHECK(y.col(1).cwiseAbs().maxCoeff() == 0.0);
  CHECK(y.col(2).cwiseAbs().maxCoeff() > 0.0);
  CHECK(y.col(3).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("mse_selected_rows value and gradient") {
  Rng rng(11);
  Mat target = rng.gaussian_matrix<double>(4, 3);
  std::vector<uint8_t> select = {1, 0, 1, 0};
  grad_check({rng.gaussian_matrix<double>(4, 3)},
             [target, select](Tape& t, const std::vector<Var>& v) {
               return t.mse_selected_rows(v[0], target, select);
             });

  Tape t;
  Mat pred = rng.gaussian_matrix<double>(4, 3);
  const Var loss =
      t.mse_selected_rows(t.constant(pred), target, select);
  double expected = ((pred.row(0) - target.row(0)).squaredNorm() +
                     (pred.row(2) - target.row(2)).squaredNorm()) /
                    6.0;
  CHECK(t.value(loss)(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("backward seeds scale linearly") {
  Rng rng(12);
  Mat x = rng.gaussian_matrix<double>(2, 2);
  Mat target = Mat::Zero(2, 2);
  std::vector<uint8_t> all = {1, 1};

  Mat g1 = Mat::Zero(2, 2), g2 = Mat::Zero(2, 2);
  {
    Tape t;
    const Var v = t.leaf(x, &g1);
    t.backward(t.mse_selected_rows(v, target, all), 1.0);
  }
  {
    Tape t;
    const Var v = t.leaf(x, &g2);
    t.backward(t.mse_selected_rows(v, target, all), 0.5);
  }
  CHECK((g2 - 0.5 * g1).cwiseAbs().maxCoeff() < 1e-14);
}
