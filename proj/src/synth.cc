// flowmel/synth.cc

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

#include "flowmel/synth.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "flowmel/dsp.h"
#include "flowmel/wav_io.h"

namespace flowmel {

namespace {

constexpr int kHop = 160;

struct SpeakerProfile {
  double f0;
  double formants[3];
};

SpeakerProfile speaker_profile(int speaker, Rng& rng) {
  SpeakerProfile p;
  p.f0 = 100.0 + 45.0 * speaker + rng.uniform(-8.0, 8.0);
  p.formants[0] = 420.0 + 120.0 * ((speaker * 7) % 3) + rng.uniform(-30.0, 30.0);
  p.formants[1] = 1250.0 + 260.0 * ((speaker * 5) % 4) + rng.uniform(-60.0, 60.0);
  p.formants[2] = 2600.0 + 330.0 * ((speaker * 3) % 3) + rng.uniform(-80.0, 80.0);
  return p;
}

// Symbols deterministically pick an articulation: a formant shift pattern
// and whether the segment is voiced.
struct Articulation {
  bool voiced;
  double formant_scale[3];
  double level;
};

Articulation articulation(int symbol) {
  Articulation a;
  a.voiced = symbol % 4 != 3;
  a.formant_scale[0] = 0.8 + 0.1 * (symbol % 5);
  a.formant_scale[1] = 0.85 + 0.08 * ((symbol / 2) % 5);
  a.formant_scale[2] = 0.9 + 0.06 * ((symbol / 3) % 4);
  a.level = a.voiced ? 1.0 : 0.35;
  return a;
}

double formant_gain(double freq, const SpeakerProfile& sp,
                    const Articulation& art) {
  double gain = 0.04;
  for (int i = 0; i < 3; ++i) {
    const double center = sp.formants[i] * art.formant_scale[i];
    const double bw = 90.0 + 60.0 * i;
    const double d = (freq - center) / bw;
    gain += (1.0 / (1.0 + i)) * std::exp(-0.5 * d * d);
  }
  return gain;
}

}  // namespace

void validate(const SynthCorpusConfig& cfg) {
  if (cfg.n_utterances < 1 || cfg.n_speakers < 1 || cfg.symbol_vocab_size < 1)
    throw ConfigError("SynthCorpusConfig: counts must be positive");
  if (!(cfg.duration_lo_s > 0.0 && cfg.duration_lo_s <= cfg.duration_hi_s))
    throw ConfigError("SynthCorpusConfig: bad duration range");
  if (cfg.snr_lo_db > cfg.snr_hi_db)
    throw ConfigError("SynthCorpusConfig: bad SNR range");
}

int alignment_frames(const Waveform& w) { return w.num_samples() / kHop + 1; }

std::vector<SynthUtterance> make_synth_speech(const SynthCorpusConfig& cfg,
                                              Rng& rng) {
  validate(cfg);
  std::vector<SpeakerProfile> profiles;
  for (int s = 0; s < cfg.n_speakers; ++s)
    profiles.push_back(speaker_profile(s, rng));

  std::vector<SynthUtterance> corpus;
  corpus.reserve(static_cast<size_t>(cfg.n_utterances));
  for (int u = 0; u < cfg.n_utterances; ++u) {
    SynthUtterance utt;
    utt.speaker = rng.uniform_int(0, cfg.n_speakers);
    const SpeakerProfile& sp = profiles[static_cast<size_t>(utt.speaker)];
    const double duration = rng.uniform(cfg.duration_lo_s, cfg.duration_hi_s);
    const int num_samples = static_cast<int>(duration * kSampleRate);
    utt.wave.samples = Vec::Zero(num_samples);

    // Segment boundaries in samples; 50-300 ms per symbol.
    std::vector<int> bounds = {0};
    while (bounds.back() < num_samples) {
      const int seg = static_cast<int>(rng.uniform(0.05, 0.3) * kSampleRate);
      bounds.push_back(std::min(num_samples, bounds.back() + seg));
    }

    int harmonics_max = static_cast<int>(5500.0 / sp.f0);
    std::vector<double> phases(static_cast<size_t>(harmonics_max) + 1);
    for (auto& ph : phases) ph = rng.uniform(0.0, 2.0 * M_PI);

    const int total_frames = num_samples / kHop + 1;
    int frame_cursor = 0;
    for (size_t b = 0; b + 1 < bounds.size(); ++b) {
      const int s0 = bounds[b];
      const int s1 = bounds[b + 1];
      const int symbol = rng.uniform_int(0, cfg.symbol_vocab_size);
      const Articulation art = articulation(symbol);
      const double f0 = sp.f0 * rng.uniform(0.95, 1.08);
      const int ramp = std::min(80, (s1 - s0) / 4);  // 5 ms edge ramps

      for (int n = s0; n < s1; ++n) {
        double sample = 0.0;
        if (art.voiced) {
          for (int h = 1; h <= harmonics_max; ++h) {
            const double freq = f0 * h;
            if (freq > 5500.0) break;
            sample += formant_gain(freq, sp, art) / (1.0 + 0.15 * h) *
                      std::sin(2.0 * M_PI * freq * n / kSampleRate +
                               phases[static_cast<size_t>(h)]);
          }
        } else {
          // Fricative-ish: white noise shaped by a first difference.
          const double noise = rng.gaussian();
          sample = 0.25 * noise;
        }
        double env = art.level;
        if (n - s0 < ramp) env *= static_cast<double>(n - s0) / ramp;
        if (s1 - n <= ramp) env *= static_cast<double>(s1 - n) / ramp;
        utt.wave.samples(n) += static_cast<float>(sample * env);
      }

      // Frame span for this segment; the last segment absorbs the remainder.
      const bool last = b + 2 == bounds.size();
      const int end_frame =
          last ? total_frames
               : std::min(total_frames, (s1 + kHop / 2) / kHop);
      if (end_frame > frame_cursor) {
        utt.alignment.push_back({symbol, frame_cursor, end_frame});
        frame_cursor = end_frame;
      }
    }

    const float peak = utt.wave.samples.cwiseAbs().maxCoeff();
    if (peak > 0.0f) utt.wave.samples *= 0.5f / peak;
    corpus.push_back(std::move(utt));
  }
  return corpus;
}

std::vector<int> expand_alignment(const std::vector<AlignmentSegment>& segments,
                                  int num_frames) {
  std::vector<int> ids(static_cast<size_t>(num_frames), -1);
  int cursor = 0;
  for (const auto& seg : segments) {
    if (seg.start_frame != cursor || seg.end_frame <= seg.start_frame ||
        seg.end_frame > num_frames)
      throw std::invalid_argument("expand_alignment: segments must tile [0, L)");
    for (int f = seg.start_frame; f < seg.end_frame; ++f)
      ids[static_cast<size_t>(f)] = seg.symbol;
    cursor = seg.end_frame;
  }
  if (cursor != num_frames)
    throw std::invalid_argument("expand_alignment: alignment does not cover L");
  return ids;
}

Waveform make_noise(int num_samples, Rng& rng) {
  Waveform w;
  w.samples = Vec(num_samples);
  for (int n = 0; n < num_samples; ++n)
    w.samples(n) = static_cast<float>(rng.gaussian());
  const double rms =
      std::sqrt(w.samples.cast<double>().squaredNorm() / num_samples);
  w.samples /= static_cast<float>(rms);
  w.samples *= 0.05f;  // keep headroom; mixture scaling handles SNR
  return w;
}

void write_corpus(const std::string& dir,
                  const std::vector<SynthUtterance>& corpus) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw std::runtime_error("write_corpus: cannot open manifest");
  for (size_t i = 0; i < corpus.size(); ++i) {
    std::ostringstream base;
    base << "utt" << std::setw(4) << std::setfill('0') << i;
    const std::string wav_name = base.str() + ".wav";
    const std::string ali_name = base.str() + ".ali";
    write_wav((fs::path(dir) / wav_name).string(), corpus[i].wave);
    std::ofstream ali(fs::path(dir) / ali_name);
    for (const auto& seg : corpus[i].alignment)
      ali << seg.symbol << ' ' << seg.start_frame << ' ' << seg.end_frame
          << '\n';
    manifest << wav_name << ' ' << ali_name << ' ' << corpus[i].speaker
             << '\n';
  }
}

std::vector<SynthUtterance> read_corpus(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest)
    throw std::runtime_error("read_corpus: cannot open manifest in " + dir);
  std::vector<SynthUtterance> corpus;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream iss(line);
    std::string wav_name, ali_name;
    int speaker = 0;
    if (!(iss >> wav_name >> ali_name >> speaker))
      throw std::runtime_error("read_corpus: malformed manifest line: " + line);
    SynthUtterance utt;
    utt.speaker = speaker;
    utt.wave = read_wav((fs::path(dir) / wav_name).string());
    if (ali_name != "-") {
      std::ifstream ali(fs::path(dir) / ali_name);
      if (!ali)
        throw std::runtime_error("read_corpus: missing alignment " + ali_name);
      AlignmentSegment seg;
      while (ali >> seg.symbol >> seg.start_frame >> seg.end_frame)
        utt.alignment.push_back(seg);
    }
    corpus.push_back(std::move(utt));
  }
  return corpus;
}

}  // namespace flowmel
