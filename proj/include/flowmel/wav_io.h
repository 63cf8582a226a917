// flowmel/wav_io.h

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

#ifndef FLOWMEL_WAV_IO_H_
#define FLOWMEL_WAV_IO_H_

#include <string>

#include "flowmel/types.h"

namespace flowmel {

// 16-bit PCM, mono, 16 kHz, little-endian. Anything else is rejected.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

// Feature dump container: magic "MELS", u32 version, u32 L, u32 d, then
// row-major 32-bit floats (little-endian).
void write_mel(const std::string& path, const MelSpectrogram& m);
MelSpectrogram read_mel(const std::string& path);

}  // namespace flowmel

#endif  // FLOWMEL_WAV_IO_H_
