// flowmel/synth.h

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

#ifndef FLOWMEL_SYNTH_H_
#define FLOWMEL_SYNTH_H_

#include <string>
#include <vector>

#include "flowmel/rng.h"
#include "flowmel/types.h"

// Desk-scale synthetic speech: harmonic source + formant filter utterances
// segmented into symbol-labelled spans, each symbol mapping to a fixed
// articulation. The frame-exact symbol alignment doubles as an oracle for
// aligned-symbol synthesis.

namespace flowmel {

struct SynthCorpusConfig {
  int n_utterances = 60;
  double duration_lo_s = 0.7;
  double duration_hi_s = 1.2;
  int n_speakers = 4;
  double snr_lo_db = 0.0;
  double snr_hi_db = 10.0;
  int symbol_vocab_size = 12;
  uint64_t seed = 7;
};

void validate(const SynthCorpusConfig& cfg);

struct AlignmentSegment {
  int symbol;
  int start_frame;  // inclusive
  int end_frame;    // exclusive
};

struct SynthUtterance {
  Waveform wave;
  std::vector<AlignmentSegment> alignment;  // covers [0, L) without gaps
  int speaker;
};

// Number of Mel frames the default analysis assigns to this waveform.
int alignment_frames(const Waveform& w);

std::vector<SynthUtterance> make_synth_speech(const SynthCorpusConfig& cfg,
                                              Rng& rng);

// Per-frame symbol ids expanded from the segment list; throws when the
// alignment does not cover exactly [0, num_frames).
std::vector<int> expand_alignment(const std::vector<AlignmentSegment>& segments,
                                  int num_frames);

// White noise at unit RMS, for mixture construction.
Waveform make_noise(int num_samples, Rng& rng);

// Corpus directory layout: WAVs plus one manifest line per utterance
// "<wav> <alignment-or-dash> <speaker>"; alignment files hold one
// "symbol start_frame end_frame" line per segment.
void write_corpus(const std::string& dir,
                  const std::vector<SynthUtterance>& corpus);
std::vector<SynthUtterance> read_corpus(const std::string& dir);

}  // namespace flowmel

#endif  // FLOWMEL_SYNTH_H_
