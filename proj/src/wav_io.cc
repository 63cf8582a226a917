// flowmel/wav_io.cc

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

#include "flowmel/wav_io.h"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace flowmel {

namespace {

// This code assumes a little-endian host, as does the rest of the pipeline.

template <typename T>
void write_le(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  return is;
}

}  // namespace

void write_wav(const std::string& path, const Waveform& w) {
  if (w.sample_rate != kSampleRate)
    throw std::invalid_argument("write_wav: expected 16 kHz audio");
  auto os = open_out(path);
  const uint32_t n = static_cast<uint32_t>(w.num_samples());
  const uint32_t data_bytes = n * 2;

  os.write("RIFF", 4);
  write_le<uint32_t>(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_le<uint32_t>(os, 16);
  write_le<uint16_t>(os, 1);  // PCM
  write_le<uint16_t>(os, 1);  // mono
  write_le<uint32_t>(os, static_cast<uint32_t>(w.sample_rate));
  write_le<uint32_t>(os, static_cast<uint32_t>(w.sample_rate) * 2);
  write_le<uint16_t>(os, 2);   // block align
  write_le<uint16_t>(os, 16);  // bits per sample
  os.write("data", 4);
  write_le<uint32_t>(os, data_bytes);
  for (uint32_t i = 0; i < n; ++i) {
    const float clamped = std::clamp(w.samples(static_cast<int>(i)), -1.0f, 1.0f);
    write_le<int16_t>(os, static_cast<int16_t>(std::lrintf(clamped * 32767.0f)));
  }
  if (!os) throw std::runtime_error("write_wav: write failed: " + path);
}

Waveform read_wav(const std::string& path) {
  auto is = open_in(path);
  char tag[5] = {0};
  is.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0)
    throw std::runtime_error("read_wav: not a RIFF file: " + path);
  read_le<uint32_t>(is);
  is.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0)
    throw std::runtime_error("read_wav: not a WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<int16_t> pcm;
  bool have_fmt = false, have_data = false;
  while (is.read(tag, 4)) {
    const uint32_t size = read_le<uint32_t>(is);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      format = read_le<uint16_t>(is);
      channels = read_le<uint16_t>(is);
      rate = read_le<uint32_t>(is);
      read_le<uint32_t>(is);
      read_le<uint16_t>(is);
      bits = read_le<uint16_t>(is);
      if (size > 16) is.seekg(size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      pcm.resize(size / 2);
      is.read(reinterpret_cast<char*>(pcm.data()), size);
      have_data = true;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!have_fmt || !have_data)
    throw std::runtime_error("read_wav: missing fmt or data chunk: " + path);
  if (format != 1 || channels != 1 || bits != 16 || rate != kSampleRate)
    throw std::runtime_error(
        "read_wav: only 16-bit PCM mono 16 kHz is supported: " + path);

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples = Vec(static_cast<int>(pcm.size()));
  for (size_t i = 0; i < pcm.size(); ++i)
    w.samples(static_cast<int>(i)) = static_cast<float>(pcm[i]) / 32768.0f;
  return w;
}

void write_mel(const std::string& path, const MelSpectrogram& m) {
  auto os = open_out(path);
  os.write("MELS", 4);
  write_le<uint32_t>(os, 1);  // version
  write_le<uint32_t>(os, static_cast<uint32_t>(m.values.rows()));
  write_le<uint32_t>(os, static_cast<uint32_t>(m.values.cols()));
  for (Eigen::Index i = 0; i < m.values.rows(); ++i)
    for (Eigen::Index j = 0; j < m.values.cols(); ++j)
      write_le<float>(os, m.values(i, j));
  if (!os) throw std::runtime_error("write_mel: write failed: " + path);
}

MelSpectrogram read_mel(const std::string& path) {
  auto is = open_in(path);
  char magic[5] = {0};
  is.read(magic, 4);
  if (std::strncmp(magic, "MELS", 4) != 0)
    throw std::runtime_error("read_mel: bad magic in " + path);
  const uint32_t version = read_le<uint32_t>(is);
  if (version != 1)
    throw std::runtime_error("read_mel: unsupported version in " + path);
  const uint32_t rows = read_le<uint32_t>(is);
  const uint32_t cols = read_le<uint32_t>(is);
  MelSpectrogram m;
  m.n_mels = static_cast<int>(cols);
  m.values.resize(rows, cols);
  for (uint32_t i = 0; i < rows; ++i)
    for (uint32_t j = 0; j < cols; ++j)
      m.values(static_cast<int>(i), static_cast<int>(j)) = read_le<float>(is);
  if (!is) throw std::runtime_error("read_mel: truncated file " + path);
  return m;
}

}  // namespace flowmel
