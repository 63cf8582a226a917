// flowmel/masking.h

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

#ifndef FLOWMEL_MASKING_H_
#define FLOWMEL_MASKING_H_

#include <cstdint>
#include <vector>

#include "flowmel/rng.h"
#include "flowmel/types.h"

namespace flowmel {

// Pre-training masking policy. With probability 1 - p_cond the condition is
// fully masked; otherwise a fraction drawn from [n_mask_lo, n_mask_hi] of the
// frames is hidden, realized as non-overlapping spans of at least l_mask
// frames each.
struct MaskPolicy {
  double p_cond = 0.9;  // 1 - p_drop
  double n_mask_lo = 0.7;
  double n_mask_hi = 1.0;
  int l_mask = 10;
};

void validate(const MaskPolicy& policy);

struct MaskPlan {
  std::vector<uint8_t> frame_mask;  // true = masked/hidden
  bool fully_masked = false;

  int num_frames() const { return static_cast<int>(frame_mask.size()); }
  int masked_count() const;
};

MaskPlan full_mask_plan(int num_frames);
MaskPlan empty_mask_plan(int num_frames);

MaskPlan sample_mask_plan(int num_frames, const MaskPolicy& policy, Rng& rng);

// Zeroes masked frames across all bins; unmasked frames are copied verbatim.
Mat apply_mask(const Mat& x, const MaskPlan& plan);
MelSpectrogram apply_mask(const MelSpectrogram& x, const MaskPlan& plan);

}  // namespace flowmel

#endif  // FLOWMEL_MASKING_H_
