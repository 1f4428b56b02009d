// dprtf/psd.hpp

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

#ifndef DPRTF_PSD_HPP_
#define DPRTF_PSD_HPP_

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dprtf/stft.hpp"

namespace dprtf {

// Moving-average power statistics at one (frame, bin) cell: the averaged
// power of channel y and the averaged cross terms between the stacked lag
// vector z and y.  z stacks num_taps lags of channel x followed by
// num_taps - 1 strictly past lags of channel y:
//   z = [x_p, ..., x_{p-Q+1}, y_{p-1}, ..., y_{p-Q+1}],
//   phi_zy[i] = (1/D) sum_{d=0}^{D-1} z_i(p - d) conj(y(p - d)).
struct PsdBlock {
  double phi_yy = 0.0;
  Eigen::VectorXcd phi_zy;
  int frame = 0;
  int bin = 0;
  int num_taps = 0;
  int avg_frames = 0;
};

// Reference single-cell estimator.  Requires p >= avg_frames - 1 + num_taps - 1
// so every lag product exists.
PsdBlock EstimatePsdBlock(const Spectrogram& spec_x, const Spectrogram& spec_y,
                          int frame, int bin, int num_taps, int avg_frames);

// Moving-average power of one channel at one bin for every frame:
// out[p] = (1/D) sum_{d<D} |spec(p-d, k)|^2 for p >= D - 1, NaN before that.
Eigen::VectorXd PowerSeries(const Spectrogram& spec, int bin, int avg_frames);

// Stationary noise statistics, averaged over all frames of a noise-only
// recording: per-bin powers of both channels and the cross terms between the
// lag vector of channel x and channel y.
struct NoiseProfile {
  Eigen::VectorXd phi_vv;   // power of noise in channel y, per bin
  Eigen::VectorXd phi_uu;   // power of noise in channel x, per bin
  Eigen::MatrixXcd phi_wv;  // (2 num_taps - 1) x bins cross statistics
  int num_taps = 0;
  double sample_rate = 0.0;
  int frame_len = 0;
  int hop = 0;
};

// Builds a stationary profile from a noise-only recording pair.  Requires at
// least one second of audio; shorter input raises std::invalid_argument
// stating the required minimum.
NoiseProfile EstimateNoiseProfile(const Spectrogram& noise_x,
                                  const Spectrogram& noise_y, int num_taps);

// Subtracts the stationary noise statistics from a mixture block:
// phi_yy - phi_vv[k] and phi_zy - phi_wv(:, k).
PsdBlock SpectralSubtract(const PsdBlock& block, const NoiseProfile& profile);

// Frames whose moving-average power exceeds gamma times the noise power:
// { p >= min_frame : power[p] > gamma * noise_power }.  Non-finite entries
// of `power` never pass.
std::vector<int> SelectFrames(const Eigen::VectorXd& power, double noise_power,
                              double gamma, int min_frame);

// Profile I/O: JSON metadata plus a raw little-endian float64 sidecar named
// "<json path>.bin".
void SaveNoiseProfile(const std::string& json_path, const NoiseProfile& profile);
NoiseProfile LoadNoiseProfile(const std::string& json_path);

}  // namespace dprtf

#endif  // DPRTF_PSD_HPP_
