// flowmel/dsp.h

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

#ifndef FLOWMEL_DSP_H_
#define FLOWMEL_DSP_H_

#include "flowmel/types.h"

// Waveform <-> log-Mel feature conversion. Analysis is a center-padded Hann
// STFT (40 ms window, 10 ms hop); the approximate inversion recovers a linear
// magnitude spectrogram through the cached pseudo-inverse of the Mel filter
// bank and reuses the phase of a caller-supplied reference spectrogram.

namespace flowmel {

struct StftConfig {
  int fft_size = 1024;
  int hop = 160;            // 10 ms at 16 kHz -> 100 Hz frame rate
  int window_length = 640;  // 40 ms
};

struct MelConfig {
  StftConfig stft;
  int n_mels = kNumMels;
  float floor_eps = 1e-5f;  // floor on linear Mel energy before the log
};

// Frame count for a given sample count under center padding.
int stft_num_frames(int num_samples, const StftConfig& cfg = {});

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg = {});

// Weighted overlap-add inverse. When num_samples >= 0 the output is trimmed
// or zero-extended to exactly that many samples.
Waveform istft(const ComplexSpectrogram& spec, int num_samples = -1);

// Triangular Mel filter bank, rows [n_mels x fft_size/2+1].
Mat mel_filterbank(int n_mels, int fft_size, int sample_rate);

// Cached Moore-Penrose pseudo-inverse of mel_filterbank, [fft_size/2+1 x
// n_mels]. Thread-safe; entries are immutable once built.
const Mat& mel_filterbank_pinv(int n_mels, int fft_size, int sample_rate);

MelSpectrogram wave_to_logmel(const Waveform& w, const MelConfig& cfg = {});

// phase_source must provide at least as many frames as m; its phase is used
// verbatim, its magnitude discarded.
Waveform logmel_to_wave(const MelSpectrogram& m,
                        const ComplexSpectrogram& phase_source,
                        const MelConfig& cfg = {});

}  // namespace flowmel

#endif  // FLOWMEL_DSP_H_
