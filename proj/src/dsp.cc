// flowmel/dsp.cc

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

#include "flowmel/dsp.h"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <vector>

namespace flowmel {

namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

void validate(const StftConfig& cfg) {
  if (!is_power_of_two(cfg.fft_size))
    throw ConfigError("StftConfig: fft_size must be a power of two");
  if (cfg.window_length > cfg.fft_size)
    throw ConfigError("StftConfig: window longer than fft_size");
  if (cfg.hop < 1 || cfg.hop > cfg.window_length)
    throw ConfigError("StftConfig: hop must lie in [1, window_length]");
}

// Periodic Hann; COLA-compliant at hop = window/4.
Eigen::VectorXd hann_window(int length) {
  Eigen::VectorXd w(length);
  for (int n = 0; n < length; ++n)
    w(n) = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / length);
  return w;
}

}  // namespace

int stft_num_frames(int num_samples, const StftConfig& cfg) {
  validate(cfg);
  if (num_samples < 1) throw std::invalid_argument("stft: empty waveform");
  // Center padding by window/2 on both sides.
  return num_samples / cfg.hop + 1;
}

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  validate(cfg);
  if (w.num_samples() == 0) throw std::invalid_argument("stft: empty waveform");
  if (w.sample_rate != kSampleRate) {
    std::ostringstream oss;
    oss << "stft: expected " << kSampleRate << " Hz audio, got "
        << w.sample_rate;
    throw std::invalid_argument(oss.str());
  }
  if (!w.samples.allFinite())
    throw NumericalError("stft: waveform contains non-finite samples");

  const int pad = cfg.window_length / 2;
  const int num_frames = stft_num_frames(w.num_samples(), cfg);
  const int bins = cfg.fft_size / 2 + 1;
  const int lead = (cfg.fft_size - cfg.window_length) / 2;
  const Eigen::VectorXd window = hann_window(cfg.window_length);

  Eigen::FFT<double> fft;
  std::vector<double> buf(static_cast<size_t>(cfg.fft_size));
  std::vector<std::complex<double>> out(static_cast<size_t>(cfg.fft_size));

  ComplexSpectrogram spec;
  spec.fft_size = cfg.fft_size;
  spec.hop = cfg.hop;
  spec.window_length = cfg.window_length;
  spec.values.resize(num_frames, bins);

  for (int m = 0; m < num_frames; ++m) {
    std::fill(buf.begin(), buf.end(), 0.0);
    const int start = m * cfg.hop - pad;  // position in the unpadded signal
    for (int n = 0; n < cfg.window_length; ++n) {
      const int idx = start + n;
      if (idx < 0 || idx >= w.num_samples()) continue;
      buf[static_cast<size_t>(lead + n)] = w.samples(idx) * window(n);
    }
    fft.fwd(out, buf);
    for (int k = 0; k < bins; ++k)
      spec.values(m, k) = std::complex<float>(
          static_cast<float>(out[static_cast<size_t>(k)].real()),
          static_cast<float>(out[static_cast<size_t>(k)].imag()));
  }
  return spec;
}

Waveform istft(const ComplexSpectrogram& spec, int num_samples) {
  StftConfig cfg;
  cfg.fft_size = spec.fft_size;
  cfg.hop = spec.hop;
  cfg.window_length = spec.window_length;
  validate(cfg);
  if (spec.num_bins() != cfg.fft_size / 2 + 1)
    throw std::invalid_argument("istft: bin count != fft_size/2 + 1");
  if (spec.num_frames() < 1)
    throw std::invalid_argument("istft: no frames");

  const int pad = cfg.window_length / 2;
  const int lead = (cfg.fft_size - cfg.window_length) / 2;
  const int num_frames = spec.num_frames();
  const int padded_len = (num_frames - 1) * cfg.hop + cfg.window_length;
  const Eigen::VectorXd window = hann_window(cfg.window_length);

  Eigen::VectorXd acc = Eigen::VectorXd::Zero(padded_len);
  Eigen::VectorXd den = Eigen::VectorXd::Zero(padded_len);

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> full(static_cast<size_t>(cfg.fft_size));
  std::vector<double> frame(static_cast<size_t>(cfg.fft_size));

  for (int m = 0; m < num_frames; ++m) {
    // Rebuild the conjugate-symmetric spectrum from the half spectrum.
    for (int k = 0; k <= cfg.fft_size / 2; ++k)
      full[static_cast<size_t>(k)] =
          std::complex<double>(spec.values(m, k).real(),
                               spec.values(m, k).imag());
    for (int k = cfg.fft_size / 2 + 1; k < cfg.fft_size; ++k)
      full[static_cast<size_t>(k)] =
          std::conj(full[static_cast<size_t>(cfg.fft_size - k)]);
    fft.inv(frame, full);

    const int base = m * cfg.hop;  // position in the padded signal
    for (int n = 0; n < cfg.window_length; ++n) {
      acc(base + n) += frame[static_cast<size_t>(lead + n)] * window(n);
      den(base + n) += window(n) * window(n);
    }
  }

  const int out_len =
      num_samples >= 0 ? num_samples : (num_frames - 1) * cfg.hop;
  Waveform out;
  out.sample_rate = kSampleRate;
  out.samples = Vec::Zero(out_len);
  for (int i = 0; i < out_len; ++i) {
    const int j = i + pad;
    if (j < padded_len && den(j) > 1e-10)
      out.samples(i) = static_cast<float>(acc(j) / den(j));
  }
  return out;
}

Mat mel_filterbank(int n_mels, int fft_size, int sample_rate) {
  if (n_mels < 1) throw ConfigError("mel_filterbank: n_mels must be >= 1");
  if (!is_power_of_two(fft_size))
    throw ConfigError("mel_filterbank: fft_size must be a power of two");
  const int bins = fft_size / 2 + 1;
  if (n_mels > bins)
    throw ConfigError("mel_filterbank: n_mels exceeds the bin count");

  auto hz_to_mel = [](double f) { return 1127.0 * std::log1p(f / 700.0); };
  auto mel_to_hz = [](double m) { return 700.0 * std::expm1(m / 1127.0); };

  const double mel_max = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(static_cast<size_t>(n_mels) + 2);
  for (int i = 0; i < n_mels + 2; ++i)
    centers[static_cast<size_t>(i)] = mel_to_hz(mel_max * i / (n_mels + 1));

  Mat fb = Mat::Zero(n_mels, bins);
  for (int i = 0; i < n_mels; ++i) {
    const double lo = centers[static_cast<size_t>(i)];
    const double mid = centers[static_cast<size_t>(i) + 1];
    const double hi = centers[static_cast<size_t>(i) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      double weight = 0.0;
      if (f > lo && f < hi)
        weight = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      fb(i, k) = static_cast<float>(weight);
    }
  }
  return fb;
}

namespace {

struct FilterbankEntry {
  Mat forward;  // [n_mels x F]
  Mat pinv;     // [F x n_mels]
};

const FilterbankEntry& filterbank_entry(int n_mels, int fft_size,
                                        int sample_rate) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, int>,
                  std::unique_ptr<const FilterbankEntry>>
      cache;
  std::lock_guard<std::mutex> lock(mutex);
  const auto key = std::make_tuple(n_mels, fft_size, sample_rate);
  auto it = cache.find(key);
  if (it == cache.end()) {
    auto entry = std::make_unique<FilterbankEntry>();
    entry->forward = mel_filterbank(n_mels, fft_size, sample_rate);
    // pinv(A) = A^T (A A^T)^-1 for the full-row-rank filter bank.
    const Eigen::MatrixXd fb = entry->forward.cast<double>();
    const Eigen::MatrixXd gram = fb * fb.transpose();
    const Eigen::MatrixXd pinv = fb.transpose() * gram.ldlt().solve(
        Eigen::MatrixXd::Identity(n_mels, n_mels));
    entry->pinv = pinv.cast<float>();
    it = cache.emplace(key, std::move(entry)).first;
  }
  return *it->second;
}

}  // namespace

const Mat& mel_filterbank_pinv(int n_mels, int fft_size, int sample_rate) {
  return filterbank_entry(n_mels, fft_size, sample_rate).pinv;
}

MelSpectrogram wave_to_logmel(const Waveform& w, const MelConfig& cfg) {
  const ComplexSpectrogram spec = stft(w, cfg.stft);
  const auto& fb =
      filterbank_entry(cfg.n_mels, cfg.stft.fft_size, w.sample_rate).forward;
  MelSpectrogram mel;
  mel.n_mels = cfg.n_mels;
  mel.frame_rate = w.sample_rate / cfg.stft.hop;
  const Mat mag = spec.values.cwiseAbs();
  mel.values =
      (mag * fb.transpose()).cwiseMax(cfg.floor_eps).array().log().matrix();
  return mel;
}

Waveform logmel_to_wave(const MelSpectrogram& m,
                        const ComplexSpectrogram& phase_source,
                        const MelConfig& cfg) {
  const int frames = m.num_frames();
  if (frames < 1) throw std::invalid_argument("logmel_to_wave: empty input");
  if (m.n_mels != cfg.n_mels || m.values.cols() != cfg.n_mels)
    throw std::invalid_argument("logmel_to_wave: n_mels mismatch");
  if (phase_source.num_frames() < frames) {
    std::ostringstream oss;
    oss << "logmel_to_wave: phase source has " << phase_source.num_frames()
        << " frames, need at least " << frames;
    throw std::invalid_argument(oss.str());
  }
  if (phase_source.fft_size != cfg.stft.fft_size ||
      phase_source.hop != cfg.stft.hop)
    throw std::invalid_argument("logmel_to_wave: phase source config mismatch");

  const Mat& pinv =
      mel_filterbank_pinv(cfg.n_mels, cfg.stft.fft_size, kSampleRate);
  const Mat energy = m.values.array().exp().matrix();
  const Mat linear = (energy * pinv.transpose()).cwiseMax(0.0f);  // [L x F]

  ComplexSpectrogram spec;
  spec.fft_size = cfg.stft.fft_size;
  spec.hop = cfg.stft.hop;
  spec.window_length = cfg.stft.window_length;
  spec.values.resize(frames, linear.cols());
  for (int i = 0; i < frames; ++i) {
    for (int k = 0; k < linear.cols(); ++k) {
      const std::complex<float> ref = phase_source.values(i, k);
      const float mag = std::abs(ref);
      const std::complex<float> unit =
          mag > 0.0f ? ref / mag : std::complex<float>(1.0f, 0.0f);
      spec.values(i, k) = unit * linear(i, k);
    }
  }
  return istft(spec, (frames - 1) * cfg.stft.hop);
}

}  // namespace flowmel
