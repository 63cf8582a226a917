// flowmel/masking.cc

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

#include "flowmel/masking.h"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace flowmel {

void validate(const MaskPolicy& policy) {
  if (!(policy.p_cond >= 0.0 && policy.p_cond <= 1.0))
    throw ConfigError("MaskPolicy: p_cond must lie in [0, 1]");
  if (!(policy.n_mask_lo >= 0.0 && policy.n_mask_lo <= policy.n_mask_hi &&
        policy.n_mask_hi <= 1.0))
    throw ConfigError("MaskPolicy: need 0 <= n_mask_lo <= n_mask_hi <= 1");
  if (policy.l_mask < 1) throw ConfigError("MaskPolicy: l_mask must be >= 1");
}

int MaskPlan::masked_count() const {
  return static_cast<int>(
      std::count(frame_mask.begin(), frame_mask.end(), uint8_t{1}));
}

MaskPlan full_mask_plan(int num_frames) {
  MaskPlan plan;
  plan.frame_mask.assign(static_cast<size_t>(num_frames), 1);
  plan.fully_masked = true;
  return plan;
}

MaskPlan empty_mask_plan(int num_frames) {
  MaskPlan plan;
  plan.frame_mask.assign(static_cast<size_t>(num_frames), 0);
  plan.fully_masked = false;
  return plan;
}

namespace {

bool window_free(const std::vector<uint8_t>& mask, int start, int len) {
  for (int i = start; i < start + len; ++i)
    if (mask[static_cast<size_t>(i)]) return false;
  return true;
}

void fill(std::vector<uint8_t>& mask, int start, int len) {
  std::fill(mask.begin() + start, mask.begin() + start + len, uint8_t{1});
}

// Grows existing runs frame by frame once no full span fits anymore. Every
// maximal run stays >= l_mask because growth only extends runs.
int extend_runs(std::vector<uint8_t>& mask, int need, Rng& rng) {
  const int num_frames = static_cast<int>(mask.size());
  int grown = 0;
  while (grown < need) {
    std::vector<int> edges;  // unmasked frames adjacent to a masked one
    for (int i = 0; i < num_frames; ++i) {
      if (mask[static_cast<size_t>(i)]) continue;
      const bool left = i > 0 && mask[static_cast<size_t>(i - 1)];
      const bool right =
          i + 1 < num_frames && mask[static_cast<size_t>(i + 1)];
      if (left || right) edges.push_back(i);
    }
    if (edges.empty()) break;
    const int take = std::min<int>(need - grown, static_cast<int>(edges.size()));
    for (int k = 0; k < take; ++k) {
      const int pick = rng.uniform_int(k, static_cast<int>(edges.size()));
      std::swap(edges[static_cast<size_t>(k)], edges[static_cast<size_t>(pick)]);
      mask[static_cast<size_t>(edges[static_cast<size_t>(k)])] = 1;
    }
    grown += take;
  }
  return grown;
}

}  // namespace

MaskPlan sample_mask_plan(int num_frames, const MaskPolicy& policy, Rng& rng) {
  validate(policy);
  if (num_frames < 1)
    throw std::invalid_argument("sample_mask_plan: num_frames must be >= 1");

  if (!rng.bernoulli(policy.p_cond)) return full_mask_plan(num_frames);

  MaskPlan plan = empty_mask_plan(num_frames);
  const double fraction = rng.uniform(policy.n_mask_lo, policy.n_mask_hi);
  const int target = static_cast<int>(std::llround(fraction * num_frames));
  if (target == 0) return plan;

  // Degenerate sequences shorter than one span get masked entirely.
  if (num_frames <= policy.l_mask) {
    std::fill(plan.frame_mask.begin(), plan.frame_mask.end(), uint8_t{1});
    return plan;
  }

  const int span = policy.l_mask;
  int masked = 0;
  int failures = 0;
  while (masked < target) {
    const int start = rng.uniform_int(0, num_frames - span + 1);
    if (window_free(plan.frame_mask, start, span)) {
      fill(plan.frame_mask, start, span);
      masked += span;
      failures = 0;
      continue;
    }
    if (++failures < 50) continue;

    // Too dense for random placement: enumerate the remaining free windows.
    failures = 0;
    std::vector<int> starts;
    int run = 0;
    for (int i = 0; i < num_frames; ++i) {
      run = plan.frame_mask[static_cast<size_t>(i)] ? 0 : run + 1;
      if (run >= span) starts.push_back(i - span + 1);
    }
    if (starts.empty()) {
      masked += extend_runs(plan.frame_mask, target - masked, rng);
      break;
    }
    const int start2 = starts[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int>(starts.size())))];
    fill(plan.frame_mask, start2, span);
    masked += span;
  }
  return plan;
}

Mat apply_mask(const Mat& x, const MaskPlan& plan) {
  if (static_cast<Eigen::Index>(plan.frame_mask.size()) != x.rows())
    throw std::invalid_argument("apply_mask: plan length != frame count");
  Mat out = x;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    if (plan.frame_mask[static_cast<size_t>(i)]) out.row(i).setZero();
  return out;
}

MelSpectrogram apply_mask(const MelSpectrogram& x, const MaskPlan& plan) {
  MelSpectrogram out = x;
  out.values = apply_mask(x.values, plan);
  return out;
}

}  // namespace flowmel
