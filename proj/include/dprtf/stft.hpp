// dprtf/stft.hpp

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

#ifndef DPRTF_STFT_HPP_
#define DPRTF_STFT_HPP_

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dprtf {

// Short-time analysis configuration.  frame_len is the DFT size N, hop the
// frame shift L.  The analysis window multiplies each frame before the DFT;
// the synthesis window weights each inverse-DFT frame during overlap-add.
struct StftConfig {
  double sample_rate = 16000.0;
  int frame_len = 256;
  int hop = 128;
  Eigen::VectorXd analysis_window;
  Eigen::VectorXd synthesis_window;

  int num_bins() const { return frame_len / 2 + 1; }
};

// Periodic Hamming window, w(n) = 0.54 - 0.46 cos(2 pi n / N).
Eigen::VectorXd HammingWindow(int n);

Eigen::VectorXd RectWindow(int n);

// Builds a config with a periodic Hamming analysis window and the
// minimum-norm synthesis window dual to it at the given hop, so that
// overlap-add reconstruction is exact on the interior of the signal.
StftConfig MakeStftConfig(double sample_rate, int frame_len, int hop);

// Minimum-norm dual of `analysis` at hop `hop`:
//   w(n) = wa(n) / sum_q wa(n - q hop)^2.
// Requires the squared overlap sum to be strictly positive everywhere.
Eigen::VectorXd DualSynthesisWindow(const Eigen::VectorXd& analysis, int hop);

// Maximum relative deviation of sum_q wa(n - q hop) ws(n - q hop) from its
// mean over one hop period.  Zero means exact constant overlap-add.
double ColaDeviation(const StftConfig& cfg);

// One-sided short-time spectrum: data(p, k) for frame p and bin k in
// [0, frame_len/2].  Frame p covers samples [p*hop, p*hop + frame_len).
struct Spectrogram {
  Eigen::MatrixXcd data;
  StftConfig cfg;
  std::string channel_id;

  Eigen::Index num_frames() const { return data.rows(); }
  Eigen::Index num_bins() const { return data.cols(); }
};

// Number of complete frames for a signal of the given length:
// floor((len - frame_len) / hop) + 1.  Zero if the signal is shorter than
// one frame.
int NumFrames(Eigen::Index signal_len, const StftConfig& cfg);

// Forward transform.  Throws std::invalid_argument if the signal is shorter
// than one frame.
Spectrogram Stft(const Eigen::VectorXd& signal, const StftConfig& cfg,
                 const std::string& channel_id = "");

// Weighted overlap-add inverse.  Output length is
// (P - 1) * hop + frame_len.  Samples with full window overlap (indices in
// [frame_len - hop, (P - 1) * hop + hop)) reconstruct the input exactly for
// any window pair with constant overlap-add.
Eigen::VectorXd Istft(const Spectrogram& spec);

// Band-to-band subband filter kernel for bin k,
//   zeta_k(n) = exp(j 2 pi k n / N) * sum_m wa(m) ws(n + m),
// supported on n in [1 - N, N - 1].
struct ZetaWindow {
  std::vector<std::complex<double>> values;
  int n_min = 0;

  std::complex<double> at(int n) const {
    const int idx = n - n_min;
    if (idx < 0 || idx >= static_cast<int>(values.size())) return {0.0, 0.0};
    return values[static_cast<size_t>(idx)];
  }
  int n_max() const { return n_min + static_cast<int>(values.size()) - 1; }
};

ZetaWindow ComputeZetaWindow(const StftConfig& cfg, int k);

// Window cross-correlation nu(t) = sum_m wa(m) ws(m - t) for t in
// [0, frame_len - 1].  zeta_k(n) = exp(j 2 pi k n / N) nu(-n).
Eigen::VectorXd NuWindow(const StftConfig& cfg);

// True when the two configs have identical geometry and windows (within
// 1e-12 elementwise).
bool SameConfig(const StftConfig& a, const StftConfig& b);

}  // namespace dprtf

#endif  // DPRTF_STFT_HPP_
