// flowmel/flow.h

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

#ifndef FLOWMEL_FLOW_H_
#define FLOWMEL_FLOW_H_

#include <cstdint>
#include <sstream>
#include <vector>

#include "flowmel/rng.h"
#include "flowmel/types.h"

// Optimal-transport conditional probability path and the flow-matching
// regression targets/losses built on it.
//
// The path from a prior draw x0 to a data point x1 is linear in time:
//   x_t = (1 - (1 - sigma_min) * t) * x0 + t * x1
// so its time derivative, the regression target, is constant in t:
//   u   = x1 - (1 - sigma_min) * x0

namespace flowmel {

struct FlowPathConfig {
  double sigma_min = 1e-5;
};

inline void validate(const FlowPathConfig& cfg) {
  if (!(cfg.sigma_min > 0.0 && cfg.sigma_min < 1.0))
    throw ConfigError("FlowPathConfig: sigma_min must lie in (0, 1)");
}

namespace detail {

template <typename D0, typename D1>
void check_same_shape(const Eigen::MatrixBase<D0>& a,
                      const Eigen::MatrixBase<D1>& b, const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    std::ostringstream oss;
    oss << where << ": shape mismatch [" << a.rows() << "x" << a.cols()
        << "] vs [" << b.rows() << "x" << b.cols() << "]";
    throw std::invalid_argument(oss.str());
  }
}

}  // namespace detail

// One path sample with everything a training step needs.
template <typename Scalar>
struct FlowSample {
  Scalar t;
  MatX<Scalar> x0;
  MatX<Scalar> x1;
  MatX<Scalar> x_t;
  MatX<Scalar> u_target;
};

template <typename D0, typename D1>
auto path_point(const Eigen::MatrixBase<D0>& x0,
                const Eigen::MatrixBase<D1>& x1, double t,
                const FlowPathConfig& cfg = {}) {
  validate(cfg);
  detail::check_same_shape(x0, x1, "path_point");
  if (!(t >= 0.0 && t <= 1.0))
    throw std::invalid_argument("path_point: t must lie in [0, 1]");
  using Scalar = typename D0::Scalar;
  const Scalar sigma_t =
      static_cast<Scalar>(1.0 - (1.0 - cfg.sigma_min) * t);
  return (sigma_t * x0 + static_cast<Scalar>(t) * x1).eval();
}

template <typename D0, typename D1>
auto target_field(const Eigen::MatrixBase<D0>& x0,
                  const Eigen::MatrixBase<D1>& x1,
                  const FlowPathConfig& cfg = {}) {
  validate(cfg);
  detail::check_same_shape(x0, x1, "target_field");
  using Scalar = typename D0::Scalar;
  const Scalar shrink = static_cast<Scalar>(1.0 - cfg.sigma_min);
  return (x1 - shrink * x0).eval();
}

// Mean squared error over the selected frames only; all bins of a selected
// frame contribute. `frame_select` has one entry per row of `pred`.
template <typename Dp, typename Dt>
double selected_frame_mse(const Eigen::MatrixBase<Dp>& pred,
                          const Eigen::MatrixBase<Dt>& target,
                          const std::vector<uint8_t>& frame_select,
                          const char* where) {
  detail::check_same_shape(pred, target, where);
  if (static_cast<Eigen::Index>(frame_select.size()) != pred.rows())
    throw std::invalid_argument(std::string(where) +
                                ": selection length != frame count");
  double sum = 0.0;
  int n_selected = 0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    if (!frame_select[static_cast<size_t>(i)]) continue;
    ++n_selected;
    sum += (pred.row(i) - target.row(i))
               .template cast<double>()
               .squaredNorm();
  }
  if (n_selected == 0)
    throw std::invalid_argument(std::string(where) +
                                ": no frames selected for the loss");
  return sum / (static_cast<double>(n_selected) *
                static_cast<double>(pred.cols()));
}

template <typename Dp, typename Dt>
double cfm_pretrain_loss(const Eigen::MatrixBase<Dp>& pred_field,
                         const Eigen::MatrixBase<Dt>& u_target,
                         const std::vector<uint8_t>& mask) {
  return selected_frame_mse(pred_field, u_target, mask, "cfm_pretrain_loss");
}

template <typename Dp, typename Dt>
double cfm_finetune_loss(const Eigen::MatrixBase<Dp>& pred_field,
                         const Eigen::MatrixBase<Dt>& u_target,
                         const std::vector<uint8_t>& loss_region) {
  return selected_frame_mse(pred_field, u_target, loss_region,
                            "cfm_finetune_loss");
}

// i.i.d. standard normal prior draw.
template <typename Scalar = float>
MatX<Scalar> sample_prior(int rows, int cols, Rng& rng) {
  if (rows < 1 || cols < 1)
    throw std::invalid_argument("sample_prior: empty shape");
  return rng.gaussian_matrix<Scalar>(rows, cols);
}

template <typename Scalar>
FlowSample<Scalar> draw_flow_sample(const MatX<Scalar>& x1, Rng& rng,
                                    const FlowPathConfig& cfg = {}) {
  FlowSample<Scalar> s;
  s.t = static_cast<Scalar>(rng.uniform());
  s.x0 = sample_prior<Scalar>(static_cast<int>(x1.rows()),
                              static_cast<int>(x1.cols()), rng);
  s.x1 = x1;
  s.x_t = path_point(s.x0, x1, static_cast<double>(s.t), cfg);
  s.u_target = target_field(s.x0, x1, cfg);
  return s;
}

}  // namespace flowmel

#endif  // FLOWMEL_FLOW_H_
