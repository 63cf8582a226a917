// flowmel/tasks.h

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

#ifndef FLOWMEL_TASKS_H_
#define FLOWMEL_TASKS_H_

#include <optional>
#include <vector>

#include "flowmel/masking.h"
#include "flowmel/synth.h"
#include "flowmel/types.h"

// Task-specific (target, condition) pairs. Targets are raw log-Mel; the
// training loop rescales into model space and realizes condition drops and
// mask zeroing there.

namespace flowmel {

enum class TaskTag { enhance, separate, synth };

struct PairedExample {
  MelSpectrogram target;            // x1; separation: K sources stacked in time
  Mat cond_frames;                  // y, same frame count as target
  std::vector<int> symbol_ids;      // aligned symbols (synthesis only)
  bool cond_dropped = false;        // whole condition dropped for this draw
  TaskTag task_tag = TaskTag::enhance;
  std::vector<uint8_t> loss_region;  // per target frame
  MaskPlan plan;                    // the mask behind cond (synthesis only)

  // References for evaluation.
  Waveform mixture_wave;            // condition-domain audio (phase source)
  Waveform ref_wave;                // clean reference (enhance/synth)
  std::vector<Waveform> ref_sources;  // separation references, target order
};

// Mixes clean + noise at the requested SNR (dB; +inf means no noise) and
// pairs Mel(mixture) with Mel(clean). The condition-drop coin is tossed here,
// once per call, so batch assembly re-draws it every epoch visit.
PairedExample build_enhance_example(const Waveform& clean,
                                    const Waveform& noise, double snr_db,
                                    double drop_prob, Rng& rng);

// K-source mixture (K in {2, 3}); the target stacks the sources along the
// time axis in onset order and the condition tiles Mel(mixture) K times.
PairedExample build_separation_example(const std::vector<Waveform>& sources,
                                       const Waveform* noise, Rng& rng);

// Masked-audio + aligned-symbol infilling; the loss covers the masked frames.
PairedExample build_synth_example(const SynthUtterance& utt,
                                  const MaskPolicy& mask_policy, Rng& rng);

// Same, with a caller-fixed plan (e.g. a visible prefix for continuation).
PairedExample build_synth_example_with_plan(const SynthUtterance& utt,
                                            const MaskPlan& plan);

// Mask plan exposing the first `visible_frames` frames and hiding the rest.
MaskPlan continuation_plan(int num_frames, int visible_frames);

// Infinite shuffled stream over several datasets, dataset i drawn with
// probability proportional to upsample_factor_i * size_i.
class MultitaskMixer {
 public:
  MultitaskMixer(std::vector<std::vector<PairedExample>> datasets,
                 std::vector<int> upsample_factors, uint64_t seed);

  const PairedExample& next();

  // Dataset index drawn for the k-th upcoming call; exposed for tests.
  int peek_dataset(Rng& probe) const;

 private:
  std::vector<std::vector<PairedExample>> datasets_;
  std::vector<double> cumulative_;
  Rng rng_;
};

}  // namespace flowmel

#endif  // FLOWMEL_TASKS_H_
