// dprtf/wav.hpp

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

#ifndef DPRTF_WAV_HPP_
#define DPRTF_WAV_HPP_

#include <string>

#include <Eigen/Dense>

namespace dprtf {

enum class WavFormat {
  kPcm16,
  kFloat32,
};

struct WavData {
  int sample_rate = 0;
  // One column per channel, one row per sample.
  Eigen::MatrixXd samples;

  Eigen::Index num_samples() const { return samples.rows(); }
  Eigen::Index num_channels() const { return samples.cols(); }
};

// Reads a RIFF/WAVE file.  Supported encodings: 16-bit PCM and 32-bit IEEE
// float, any channel count.  Other encodings raise std::runtime_error.
WavData ReadWav(const std::string& path);

// Writes a RIFF/WAVE file.  PCM samples are clipped to [-1, 1] before
// quantization.
void WriteWav(const std::string& path, const WavData& data,
              WavFormat format = WavFormat::kFloat32);

}  // namespace dprtf

#endif  // DPRTF_WAV_HPP_
