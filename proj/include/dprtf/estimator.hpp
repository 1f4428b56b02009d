// dprtf/estimator.hpp

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

#ifndef DPRTF_ESTIMATOR_HPP_
#define DPRTF_ESTIMATOR_HPP_

#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dprtf/psd.hpp"
#include "dprtf/stft.hpp"

namespace dprtf {

struct EstimatorParams {
  int bin_lo = 5;
  int bin_hi = 63;
  int num_taps = 0;       // subband filter length Q; <= 0 derives from t60
  double t60 = 0.5;       // used only when num_taps <= 0
  double taps_t60_factor = 0.25;
  int avg_frames = 25;    // moving-average length D
  double gamma = 1.8;     // speech-presence power ratio threshold
  bool ridge = false;     // diagonal loading for ill-conditioned systems
  double ridge_eps = 1e-6;
};

// Filter length in frames covering the first taps_t60_factor * t60 seconds:
// ceil(factor * t60 * fs / hop), at least 1.
int TapsFromT60(double t60, double factor, const StftConfig& cfg);

enum class SolveStatus {
  kOk,
  kEmpty,            // no frames selected
  kUnderdetermined,  // fewer selected frames than unknowns
  kRankDeficient,    // selected frames do not span the unknowns
};

// Stacked per-frame statistics for one bin: phi[r] = phi_yy of selected frame
// r, psi.row(r) = phi_zy of that frame.  Unknown vector g solves
// phi = psi * g in the least-squares sense; g[0] is the normalized relative
// direct-path transfer value before magnitude compression.
struct LinearSystem {
  Eigen::VectorXcd phi;
  Eigen::MatrixXcd psi;
  int bin = 0;
};

LinearSystem BuildSystem(const std::vector<PsdBlock>& blocks);

struct LsSolution {
  Eigen::VectorXcd g;
  SolveStatus status = SolveStatus::kEmpty;
  int rank = 0;
};

// Column-pivoted QR least squares.  With ridge enabled the system is solved
// with diagonal loading eps * trace(psi^H psi) / cols instead.
LsSolution SolveLs(const LinearSystem& system, bool ridge = false,
                   double ridge_eps = 1e-6);

// Magnitude-compressed feature value c = g / sqrt(|g|^2 + 1), mapping the
// complex plane into the open unit disk.
std::complex<double> NormalizeDpRtf(std::complex<double> g0);

struct PairBinEstimate {
  std::complex<double> value{0.0, 0.0};  // compressed feature c
  std::complex<double> raw{0.0, 0.0};    // uncompressed ratio estimate g0
  bool valid = false;
  SolveStatus status = SolveStatus::kEmpty;
  int frames_used = 0;
};

// Full estimation pipeline for one channel pair: per-bin frame selection,
// moving-average statistics, optional noise subtraction, least squares,
// normalization.  Returns one estimate per bin in [bin_lo, bin_hi].
// `profile` may be null for noise-free input.
std::vector<PairBinEstimate> EstimatePairDpRtf(const Spectrogram& spec_x,
                                               const Spectrogram& spec_y,
                                               const NoiseProfile* profile,
                                               const EstimatorParams& params);

// Feature vector over all pairs and bins, pair-major per bin:
// entry index = (bin - bin_lo) * num_pairs + pair.  mask[i] == 0 marks
// unavailable entries (value forced to zero).
struct DpRtfFeature {
  Eigen::VectorXcd values;
  std::vector<uint8_t> mask;
  int bin_lo = 0;
  int bin_hi = 0;
  int num_pairs = 0;

  Eigen::Index size() const { return values.size(); }
};

DpRtfFeature AssembleFeature(const std::vector<std::vector<PairBinEstimate>>& per_pair,
                             int bin_lo, int bin_hi);

// One JSON record per entry: {"pair":, "bin":, "re":, "im":, "mask":}.
std::string FeatureToJson(const DpRtfFeature& feature);
DpRtfFeature FeatureFromJson(const std::string& text);
void SaveFeature(const std::string& path, const DpRtfFeature& feature);
DpRtfFeature LoadFeature(const std::string& path);

}  // namespace dprtf

#endif  // DPRTF_ESTIMATOR_HPP_
