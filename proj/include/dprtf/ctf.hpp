// dprtf/ctf.hpp

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

#ifndef DPRTF_CTF_HPP_
#define DPRTF_CTF_HPP_

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dprtf/stft.hpp"

namespace dprtf {

// Magnitude floor below which a direct-path transfer value is treated as
// unusable and the corresponding ratio is flagged invalid.
constexpr double kAtfEpsilon = 1e-12;

// Convolutive transfer function of a room impulse response: per-bin FIR
// filters acting frame-to-frame on a spectrogram.  coeffs(q, k) is the tap at
// frame lag q for bin k.
struct CtfFilter {
  Eigen::MatrixXcd coeffs;
  StftConfig cfg;
  bool truncated = false;

  Eigen::Index num_taps() const { return coeffs.rows(); }
  Eigen::Index num_bins() const { return coeffs.cols(); }
};

// Number of frame taps needed to capture an impulse response of the given
// length without truncation: ceil((len + frame_len - 1) / hop).
int LosslessCtfTaps(Eigen::Index rir_len, const StftConfig& cfg);

// Cross-band-free subband decomposition of an impulse response:
//   coeffs(q, k) = sum_t rir(t) zeta_k(q * hop - t).
// If num_taps < LosslessCtfTaps the trailing taps are dropped and the result
// is marked truncated.
CtfFilter CtfFromRir(const Eigen::VectorXd& rir, const StftConfig& cfg,
                     int num_taps);

// Zero-lag transfer value per bin:
//   a0(k) = sum_t rir(t) nu(t) exp(-j 2 pi k t / frame_len),
// summing over t in [0, frame_len).  Equals the zero tap of CtfFromRir.
Eigen::VectorXcd DirectPathAtf(const Eigen::VectorXd& rir, const StftConfig& cfg);

// Applies the per-bin FIR filters along the frame axis:
//   out(p, k) = sum_q src(p - q, k) coeffs(q, k),
// with zero initial state.  Throws if the configs differ.
Spectrogram CtfConvolve(const Spectrogram& src, const CtfFilter& filter);

// Relative direct-path transfer function between two channels, from their
// impulse responses.  valid[k] is 0 where |a0_x(k)| <= kAtfEpsilon.
struct DirectPathTruth {
  Eigen::VectorXcd atf_x;
  Eigen::VectorXcd atf_y;
  Eigen::VectorXcd ratio;
  std::vector<uint8_t> valid;
};

DirectPathTruth GroundTruthDpRtf(const Eigen::VectorXd& rir_x,
                                 const Eigen::VectorXd& rir_y,
                                 const StftConfig& cfg);

// Impulse-response file I/O: a one-line JSON header (sample rate, length,
// channel count) followed by raw little-endian float64 samples, channels
// interleaved.
void SaveRir(const std::string& path, const std::vector<Eigen::VectorXd>& channels,
             double sample_rate);
struct RirFile {
  double sample_rate = 0.0;
  std::vector<Eigen::VectorXd> channels;
};
RirFile LoadRir(const std::string& path);

}  // namespace dprtf

#endif  // DPRTF_CTF_HPP_
