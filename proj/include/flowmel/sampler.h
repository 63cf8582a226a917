// flowmel/sampler.h

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

#ifndef FLOWMEL_SAMPLER_H_
#define FLOWMEL_SAMPLER_H_

#include <functional>

#include "flowmel/model.h"
#include "flowmel/rng.h"
#include "flowmel/types.h"

// Fixed-step explicit ODE integration of a learned vector field from prior
// noise (t=0) to data (t=1), with optional classifier-free guidance that
// mixes conditional and unconditional field evaluations.

namespace flowmel {

enum class SolverMethod { euler, midpoint };
enum class CfgSign {
  standard_minus,  // (1+a) v_cond - a v_uncond
  paper_plus,      // (1+a) v_cond + a v_uncond
};

struct SamplerConfig {
  SolverMethod method = SolverMethod::midpoint;
  double step_size = 0.0625;
  double cfg_alpha = 0.0;  // 0 disables the guidance arithmetic entirely
  CfgSign cfg_sign = CfgSign::standard_minus;
};

void validate(const SamplerConfig& cfg);

// Number of model evaluations integrate() will perform.
int expected_nfe(const SamplerConfig& cfg);

// A field evaluation source. `conditional` selects between the conditioned
// and the condition-dropped prediction.
class VectorField {
 public:
  virtual ~VectorField() = default;
  virtual Mat eval(const Mat& x, double t, bool conditional) = 0;
};

// Adapts a model plus a fixed condition bundle to the VectorField interface.
class ModelVectorField : public VectorField {
 public:
  ModelVectorField(VectorFieldModelF& model, ConditionBundle cond)
      : model_(model), cond_(std::move(cond)) {}

  Mat eval(const Mat& x, double t, bool conditional) override {
    return conditional ? model_.forward(x, t, cond_)
                       : model_.forward_unconditional(x, t);
  }

 private:
  VectorFieldModelF& model_;
  ConditionBundle cond_;
};

// Guided field at one point; counts evaluations into *nfe when given.
Mat guided_field(VectorField& field, const Mat& x, double t, double alpha,
                 CfgSign sign, int* nfe = nullptr);

struct IntegrationResult {
  Mat x1;
  int nfe = 0;
};

IntegrationResult integrate(VectorField& field, const Mat& x0,
                            const SamplerConfig& cfg);

// Linear feature scaling between model space and raw log-Mel space.
struct FeatureScaling {
  float mean = 0.0f;
  float std = 1.0f;
};

// Draws the prior, integrates, and rescales into a raw log-Mel spectrogram.
MelSpectrogram sample_task(VectorField& field, int num_frames, int n_mels,
                           Rng& rng, const SamplerConfig& cfg,
                           const FeatureScaling& scaling = {});

}  // namespace flowmel

#endif  // FLOWMEL_SAMPLER_H_
