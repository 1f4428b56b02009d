// wav.cc

// Copyright 2026  dprtf authors

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

#include "dprtf/wav.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace dprtf {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xfffe;

template <typename T>
T ReadLe(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!in) throw std::runtime_error("wav: truncated file");
  uint64_t v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  T out;
  std::memcpy(&out, &v, sizeof(T));
  return out;
}

template <typename T>
void WriteLe(std::ostream& out, T value) {
  uint64_t v = 0;
  std::memcpy(&v, &value, sizeof(T));
  unsigned char buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

std::string ReadTag(std::istream& in) {
  char tag[4];
  in.read(tag, 4);
  if (!in) throw std::runtime_error("wav: truncated file");
  return std::string(tag, 4);
}

}  // namespace

WavData ReadWav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path);

  if (ReadTag(in) != "RIFF") throw std::runtime_error("wav: missing RIFF header in " + path);
  ReadLe<uint32_t>(in);
  if (ReadTag(in) != "WAVE") throw std::runtime_error("wav: missing WAVE header in " + path);

  uint16_t format_code = 0;
  uint16_t channels = 0;
  uint32_t sample_rate = 0;
  uint16_t bits_per_sample = 0;
  bool have_fmt = false;
  std::vector<char> payload;

  while (in.peek() != EOF) {
    std::string tag = ReadTag(in);
    uint32_t chunk_size = ReadLe<uint32_t>(in);
    if (tag == "fmt ") {
      format_code = ReadLe<uint16_t>(in);
      channels = ReadLe<uint16_t>(in);
      sample_rate = ReadLe<uint32_t>(in);
      ReadLe<uint32_t>(in);
      ReadLe<uint16_t>(in);
      bits_per_sample = ReadLe<uint16_t>(in);
      uint32_t consumed = 16;
      if (format_code == kFormatExtensible && chunk_size >= 40) {
        ReadLe<uint16_t>(in);
        ReadLe<uint16_t>(in);
        ReadLe<uint32_t>(in);
        format_code = ReadLe<uint16_t>(in);
        in.seekg(14, std::ios::cur);
        consumed = 40;
      }
      if (chunk_size > consumed) in.seekg(chunk_size - consumed, std::ios::cur);
      have_fmt = true;
    } else if (tag == "data") {
      payload.resize(chunk_size);
      in.read(payload.data(), chunk_size);
      if (!in) throw std::runtime_error("wav: truncated data chunk in " + path);
      if (chunk_size % 2 == 1) in.seekg(1, std::ios::cur);
    } else {
      in.seekg(chunk_size + (chunk_size % 2), std::ios::cur);
    }
  }

  if (!have_fmt) throw std::runtime_error("wav: missing fmt chunk in " + path);
  if (channels == 0) throw std::runtime_error("wav: zero channels in " + path);
  if (format_code != kFormatPcm && format_code != kFormatFloat) {
    throw std::runtime_error("wav: unsupported format code " +
                             std::to_string(format_code) + " in " + path +
                             " (expected 16-bit PCM or 32-bit float)");
  }
  if (format_code == kFormatPcm && bits_per_sample != 16) {
    throw std::runtime_error("wav: unsupported PCM depth " +
                             std::to_string(bits_per_sample) + " in " + path);
  }
  if (format_code == kFormatFloat && bits_per_sample != 32) {
    throw std::runtime_error("wav: unsupported float depth " +
                             std::to_string(bits_per_sample) + " in " + path);
  }

  const size_t bytes_per_sample = bits_per_sample / 8;
  const size_t frame_bytes = bytes_per_sample * channels;
  const size_t num_frames = payload.size() / frame_bytes;

  WavData data;
  data.sample_rate = static_cast<int>(sample_rate);
  data.samples.resize(num_frames, channels);

  const unsigned char* p = reinterpret_cast<const unsigned char*>(payload.data());
  for (size_t n = 0; n < num_frames; ++n) {
    for (size_t c = 0; c < channels; ++c) {
      const unsigned char* s = p + n * frame_bytes + c * bytes_per_sample;
      if (format_code == kFormatPcm) {
        int16_t v = static_cast<int16_t>(s[0] | (s[1] << 8));
        data.samples(n, c) = static_cast<double>(v) / 32768.0;
      } else {
        uint32_t bits = s[0] | (s[1] << 8) | (s[2] << 16) |
                        (static_cast<uint32_t>(s[3]) << 24);
        float v;
        std::memcpy(&v, &bits, 4);
        data.samples(n, c) = static_cast<double>(v);
      }
    }
  }
  return data;
}

void WriteWav(const std::string& path, const WavData& data, WavFormat format) {
  if (data.sample_rate <= 0) throw std::runtime_error("wav: invalid sample rate");
  if (data.num_channels() == 0) throw std::runtime_error("wav: no channels");

  const uint16_t channels = static_cast<uint16_t>(data.num_channels());
  const uint16_t bits = (format == WavFormat::kPcm16) ? 16 : 32;
  const uint16_t frame_bytes = channels * bits / 8;
  const uint32_t data_bytes =
      static_cast<uint32_t>(data.num_samples()) * frame_bytes;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("wav: cannot write " + path);

  out.write("RIFF", 4);
  WriteLe<uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  WriteLe<uint32_t>(out, 16);
  WriteLe<uint16_t>(out, format == WavFormat::kPcm16 ? kFormatPcm : kFormatFloat);
  WriteLe<uint16_t>(out, channels);
  WriteLe<uint32_t>(out, static_cast<uint32_t>(data.sample_rate));
  WriteLe<uint32_t>(out, static_cast<uint32_t>(data.sample_rate) * frame_bytes);
  WriteLe<uint16_t>(out, frame_bytes);
  WriteLe<uint16_t>(out, bits);
  out.write("data", 4);
  WriteLe<uint32_t>(out, data_bytes);

  for (Eigen::Index n = 0; n < data.num_samples(); ++n) {
    for (Eigen::Index c = 0; c < channels; ++c) {
      double v = data.samples(n, c);
      if (format == WavFormat::kPcm16) {
        v = std::clamp(v, -1.0, 1.0);
        int32_t q = static_cast<int32_t>(std::lrint(v * 32767.0));
        q = std::clamp(q, -32768, 32767);
        WriteLe<int16_t>(out, static_cast<int16_t>(q));
      } else {
        WriteLe<float>(out, static_cast<float>(v));
      }
    }
  }
  if (!out) throw std::runtime_error("wav: write failed for " + path);
}

}  // namespace dprtf
