// flowmel/tasks.cc

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

#include "flowmel/tasks.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flowmel/dsp.h"

namespace flowmel {

namespace {

double energy(const Waveform& w) {
  return w.samples.cast<double>().squaredNorm();
}

// First sample index whose magnitude clears 5% of the peak.
int onset_sample(const Waveform& w) {
  const float threshold = 0.05f * w.samples.cwiseAbs().maxCoeff();
  for (int n = 0; n < w.num_samples(); ++n)
    if (std::abs(w.samples(n)) > threshold) return n;
  return w.num_samples();
}

Waveform crop(const Waveform& w, int num_samples) {
  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples = w.samples.head(num_samples);
  return out;
}

}  // namespace

PairedExample build_enhance_example(const Waveform& clean,
                                    const Waveform& noise, double snr_db,
                                    double drop_prob, Rng& rng) {
  if (clean.sample_rate != noise.sample_rate)
    throw std::invalid_argument("build_enhance_example: sample rate mismatch");
  if (std::isnan(snr_db))
    throw std::invalid_argument("build_enhance_example: NaN SNR");

  Waveform mixture = clean;
  if (!std::isinf(snr_db)) {
    if (noise.num_samples() < clean.num_samples())
      throw std::invalid_argument(
          "build_enhance_example: noise shorter than clean signal");
    const Waveform noise_cut = crop(noise, clean.num_samples());
    const double noise_energy = energy(noise_cut);
    if (noise_energy == 0.0)
      throw std::invalid_argument(
          "build_enhance_example: zero-energy noise with finite SNR");
    const double gain =
        std::sqrt(energy(clean) / (noise_energy * std::pow(10.0, snr_db / 10.0)));
    mixture.samples += static_cast<float>(gain) * noise_cut.samples;
  }

  PairedExample ex;
  ex.task_tag = TaskTag::enhance;
  ex.target = wave_to_logmel(clean);
  ex.cond_frames = wave_to_logmel(mixture).values;
  ex.cond_dropped = rng.bernoulli(drop_prob);
  ex.loss_region.assign(static_cast<size_t>(ex.target.num_frames()), 1);
  ex.mixture_wave = std::move(mixture);
  ex.ref_wave = clean;
  return ex;
}

PairedExample build_separation_example(const std::vector<Waveform>& sources,
                                       const Waveform* noise, Rng& rng) {
  const int k = static_cast<int>(sources.size());
  if (k < 2 || k > 3)
    throw std::invalid_argument(
        "build_separation_example: need 2 or 3 sources");
  int num_samples = std::numeric_limits<int>::max();
  for (const auto& s : sources)
    num_samples = std::min(num_samples, s.num_samples());
  if (num_samples < 1)
    throw std::invalid_argument("build_separation_example: empty source");

  // Deterministic output order: by onset time of the first active sample.
  std::vector<Waveform> ordered;
  for (const auto& s : sources) ordered.push_back(crop(s, num_samples));
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const Waveform& a, const Waveform& b) {
                     return onset_sample(a) < onset_sample(b);
                   });

  Waveform mixture;
  mixture.samples = Vec::Zero(num_samples);
  for (const auto& s : ordered) mixture.samples += s.samples;
  if (noise != nullptr) {
    if (noise->num_samples() < num_samples)
      throw std::invalid_argument("build_separation_example: noise too short");
    mixture.samples += noise->samples.head(num_samples);
  }

  const MelSpectrogram mix_mel = wave_to_logmel(mixture);
  const int frames = mix_mel.num_frames();

  PairedExample ex;
  ex.task_tag = TaskTag::separate;
  ex.target.n_mels = mix_mel.n_mels;
  ex.target.values.resize(static_cast<Eigen::Index>(k) * frames,
                          mix_mel.values.cols());
  ex.cond_frames.resize(static_cast<Eigen::Index>(k) * frames,
                        mix_mel.values.cols());
  for (int i = 0; i < k; ++i) {
    ex.target.values.middleRows(i * frames, frames) =
        wave_to_logmel(ordered[static_cast<size_t>(i)]).values;
    ex.cond_frames.middleRows(i * frames, frames) = mix_mel.values;
  }
  ex.loss_region.assign(static_cast<size_t>(k) * frames, 1);
  ex.mixture_wave = std::move(mixture);
  ex.ref_sources = std::move(ordered);
  (void)rng;
  return ex;
}

PairedExample build_synth_example(const SynthUtterance& utt,
                                  const MaskPolicy& mask_policy, Rng& rng) {
  const MelSpectrogram mel = wave_to_logmel(utt.wave);
  MaskPolicy always_partial = mask_policy;
  always_partial.p_cond = 1.0;  // infilling never drops the audio entirely
  const MaskPlan plan =
      sample_mask_plan(mel.num_frames(), always_partial, rng);
  PairedExample ex = build_synth_example_with_plan(utt, plan);
  return ex;
}

PairedExample build_synth_example_with_plan(const SynthUtterance& utt,
                                            const MaskPlan& plan) {
  const MelSpectrogram mel = wave_to_logmel(utt.wave);
  const int frames = mel.num_frames();
  if (plan.num_frames() != frames)
    throw std::invalid_argument("build_synth_example: plan length mismatch");

  PairedExample ex;
  ex.task_tag = TaskTag::synth;
  ex.target = mel;
  ex.cond_frames = apply_mask(mel.values, plan);
  ex.symbol_ids = expand_alignment(utt.alignment, frames);
  ex.plan = plan;
  ex.loss_region = plan.frame_mask;
  ex.ref_wave = utt.wave;
  ex.mixture_wave = utt.wave;  // phase source for reconstruction
  return ex;
}

MaskPlan continuation_plan(int num_frames, int visible_frames) {
  if (visible_frames < 0 || visible_frames > num_frames)
    throw std::invalid_argument("continuation_plan: bad visible range");
  MaskPlan plan = empty_mask_plan(num_frames);
  for (int f = visible_frames; f < num_frames; ++f)
    plan.frame_mask[static_cast<size_t>(f)] = 1;
  return plan;
}

MultitaskMixer::MultitaskMixer(std::vector<std::vector<PairedExample>> datasets,
                               std::vector<int> upsample_factors,
                               uint64_t seed)
    : datasets_(std::move(datasets)), rng_(seed) {
  if (datasets_.empty() || datasets_.size() != upsample_factors.size())
    throw ConfigError("MultitaskMixer: need one factor per dataset");
  double total = 0.0;
  for (size_t i = 0; i < datasets_.size(); ++i) {
    if (datasets_[i].empty())
      throw ConfigError("MultitaskMixer: empty dataset");
    if (upsample_factors[i] < 1)
      throw ConfigError("MultitaskMixer: factors must be positive");
    total += static_cast<double>(upsample_factors[i]) *
             static_cast<double>(datasets_[i].size());
    cumulative_.push_back(total);
  }
}

const PairedExample& MultitaskMixer::next() {
  const double u = rng_.uniform() * cumulative_.back();
  size_t pick = 0;
  while (pick + 1 < cumulative_.size() && u >= cumulative_[pick]) ++pick;
  const auto& ds = datasets_[pick];
  return ds[static_cast<size_t>(rng_.uniform_int(0, static_cast<int>(ds.size())))];
}

int MultitaskMixer::peek_dataset(Rng& probe) const {
  const double u = probe.uniform() * cumulative_.back();
  size_t pick = 0;
  while (pick + 1 < cumulative_.size() && u >= cumulative_[pick]) ++pick;
  probe.uniform_int(0, static_cast<int>(datasets_[pick].size()));
  return static_cast<int>(pick);
}

}  // namespace flowmel
