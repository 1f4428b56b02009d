// dprtf/baselines.hpp

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

#ifndef DPRTF_BASELINES_HPP_
#define DPRTF_BASELINES_HPP_

#include <complex>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dprtf/direction.hpp"
#include "dprtf/estimator.hpp"
#include "dprtf/psd.hpp"
#include "dprtf/stft.hpp"

namespace dprtf {

// Multiplicative-transfer-function estimate: per bin, the ratio of
// noise-subtracted cross power E{y conj(x)} to auto power E{|x|^2}, both
// averaged over frames passing the same power-ratio selection as the
// subband-filter estimator, then magnitude-compressed.  This treats the room
// response as a single per-bin gain (no frame memory).
std::vector<PairBinEstimate> RtfMtf(const Spectrogram& spec_x,
                                    const Spectrogram& spec_y,
                                    const NoiseProfile* profile,
                                    const EstimatorParams& params);

struct CoherenceConfig {
  int block_frames = 15;           // covariance block length in frames
  double threshold_factor = 0.9;   // fraction of per-bin maximum kept
};

// Block coherence (lambda1 - lambda2) / (lambda1 + lambda2) of the 2x2
// covariance over trailing blocks.  Rank-one blocks score 1.  Entries before
// the first complete block are NaN.
Eigen::MatrixXd PairCoherence(const Spectrogram& spec_x, const Spectrogram& spec_y,
                              const CoherenceConfig& cfg);

struct CoherenceSelection {
  Eigen::MatrixXd coherence;                // frames x bins, NaN where undefined
  std::vector<std::vector<int>> frames;     // per bin: frames passing threshold
};

// Keeps, per bin, the frames whose coherence reaches threshold_factor times
// the per-bin maximum over frames.
CoherenceSelection CoherenceTest(const Spectrogram& spec_x, const Spectrogram& spec_y,
                                 const CoherenceConfig& cfg);

// Coherence-test estimate: like RtfMtf but frames are selected by block
// coherence instead of the power ratio.  Band limits and averaging come from
// `params`; selection from `cfg`.
std::vector<PairBinEstimate> RtfCt(const Spectrogram& spec_x,
                                   const Spectrogram& spec_y,
                                   const NoiseProfile* profile,
                                   const CoherenceConfig& cfg,
                                   const EstimatorParams& params);

// Steered-response grid: per pair, unit-magnitude expected cross-spectrum
// phases for every candidate direction.  steering[pair](d, k) has unit
// magnitude within the band and is zero outside it.
struct SteeringGrid {
  std::vector<Direction> directions;
  std::vector<Eigen::MatrixXcd> steering;
  int bin_lo = 0;
  int bin_hi = 0;
};

struct SrpResult {
  int best_index = -1;
  Direction direction;
  Eigen::VectorXd power;
  Eigen::Index terms = 0;  // number of (pair, bin, frame) products summed
};

// Steered response power with phase-transform weighting: for each direction,
// sum over pairs, bins in the band, and active frames of
// Re{ (x conj(y) / |x conj(y)|) conj(steering) }.  active[pair][bin - bin_lo]
// lists the frames to use for that pair and bin; zero-magnitude products are
// skipped.
SrpResult SrpPhat(
    const std::vector<std::pair<const Spectrogram*, const Spectrogram*>>& pairs,
    const SteeringGrid& grid,
    const std::vector<std::vector<std::vector<int>>>& active);

}  // namespace dprtf

#endif  // DPRTF_BASELINES_HPP_
