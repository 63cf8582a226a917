// flowmel/types.h

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

#ifndef FLOWMEL_TYPES_H_
#define FLOWMEL_TYPES_H_

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>

namespace flowmel {

// Row convention throughout: rows are time frames, columns are feature bins.
using Mat = Eigen::MatrixXf;
using Vec = Eigen::VectorXf;
using CMat = Eigen::MatrixXcf;

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

constexpr int kSampleRate = 16000;
constexpr int kFrameRate = 100;
constexpr int kNumMels = 80;

// A user-visible configuration problem (bad config file, bad flag value).
// The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A non-finite value showed up where the pipeline requires finite numbers.
// The CLI maps this to exit code 3.
struct NumericalError : std::runtime_error {
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

struct Waveform {
  Vec samples;  // amplitudes in [-1, 1]
  int sample_rate = kSampleRate;

  int num_samples() const { return static_cast<int>(samples.size()); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

struct MelSpectrogram {
  Mat values;  // [L frames x n_mels] log-magnitude energies
  int frame_rate = kFrameRate;
  int n_mels = kNumMels;

  int num_frames() const { return static_cast<int>(values.rows()); }
};

struct ComplexSpectrogram {
  CMat values;  // [L frames x F bins], F == fft_size / 2 + 1
  int fft_size = 1024;
  int hop = 160;
  int window_length = 640;

  int num_frames() const { return static_cast<int>(values.rows()); }
  int num_bins() const { return static_cast<int>(values.cols()); }
};

}  // namespace flowmel

#endif  // FLOWMEL_TYPES_H_
