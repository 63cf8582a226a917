// flowmel/sampler.cc

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

#include "flowmel/sampler.h"

#include <cmath>
#include <sstream>

#include "flowmel/flow.h"

namespace flowmel {

namespace {

int step_count(double step_size) {
  const double steps = 1.0 / step_size;
  return static_cast<int>(std::llround(steps));
}

}  // namespace

void validate(const SamplerConfig& cfg) {
  if (!(cfg.step_size > 0.0 && cfg.step_size <= 1.0))
    throw ConfigError("SamplerConfig: step_size must lie in (0, 1]");
  const double steps = 1.0 / cfg.step_size;
  if (std::abs(steps - std::llround(steps)) > 1e-9)
    throw ConfigError("SamplerConfig: 1/step_size must be an integer");
  if (cfg.cfg_alpha < 0.0)
    throw ConfigError("SamplerConfig: cfg_alpha must be >= 0");
}

int expected_nfe(const SamplerConfig& cfg) {
  validate(cfg);
  const int evals_per_point = cfg.cfg_alpha > 0.0 ? 2 : 1;
  const int points_per_step = cfg.method == SolverMethod::midpoint ? 2 : 1;
  return step_count(cfg.step_size) * points_per_step * evals_per_point;
}

Mat guided_field(VectorField& field, const Mat& x, double t, double alpha,
                 CfgSign sign, int* nfe) {
  const Mat v_cond = field.eval(x, t, true);
  if (nfe) ++*nfe;
  if (alpha == 0.0) return v_cond;
  const Mat v_uncond = field.eval(x, t, false);
  if (nfe) ++*nfe;
  const float a = static_cast<float>(alpha);
  if (sign == CfgSign::standard_minus)
    return (1.0f + a) * v_cond - a * v_uncond;
  return (1.0f + a) * v_cond + a * v_uncond;
}

IntegrationResult integrate(VectorField& field, const Mat& x0,
                            const SamplerConfig& cfg) {
  validate(cfg);
  const int steps = step_count(cfg.step_size);
  const float h = static_cast<float>(cfg.step_size);

  IntegrationResult result;
  result.x1 = x0;
  for (int step = 0; step < steps; ++step) {
    const double t = static_cast<double>(step) * cfg.step_size;
    if (cfg.method == SolverMethod::euler) {
      const Mat v =
          guided_field(field, result.x1, t, cfg.cfg_alpha, cfg.cfg_sign,
                       &result.nfe);
      result.x1 += h * v;
    } else {
      const Mat v0 =
          guided_field(field, result.x1, t, cfg.cfg_alpha, cfg.cfg_sign,
                       &result.nfe);
      const Mat x_mid = result.x1 + 0.5f * h * v0;
      const Mat v_mid =
          guided_field(field, x_mid, t + 0.5 * cfg.step_size, cfg.cfg_alpha,
                       cfg.cfg_sign, &result.nfe);
      result.x1 += h * v_mid;
    }
    if (!result.x1.allFinite()) {
      std::ostringstream oss;
      oss << "integrate: non-finite state after step " << step << " (t="
          << t << ")";
      throw NumericalError(oss.str());
    }
  }
  return result;
}

MelSpectrogram sample_task(VectorField& field, int num_frames, int n_mels,
                           Rng& rng, const SamplerConfig& cfg,
                           const FeatureScaling& scaling) {
  const Mat x0 = sample_prior<float>(num_frames, n_mels, rng);
  const IntegrationResult result = integrate(field, x0, cfg);
  MelSpectrogram mel;
  mel.n_mels = n_mels;
  mel.values = (result.x1.array() * scaling.std + scaling.mean).matrix();
  return mel;
}

}  // namespace flowmel
