// dprtf/sim.hpp

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

#ifndef DPRTF_SIM_HPP_
#define DPRTF_SIM_HPP_

#include <array>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dprtf/baselines.hpp"
#include "dprtf/ctf.hpp"
#include "dprtf/direction.hpp"
#include "dprtf/estimator.hpp"
#include "dprtf/stft.hpp"

namespace dprtf {

// Microphone pairs used for relative transfer features: (front, back) along
// each horizontal axis of the four-capsule head layout below.
constexpr std::array<std::pair<int, int>, 2> kMicPairs = {{{0, 2}, {1, 3}}};

// Four capsules in a near-coplanar cross: two on the x axis raised by
// plane_offset, two on the y axis lowered by it.  Members of each pair share
// their height, so mirroring the azimuth swaps the y-axis pair exactly.
std::vector<Eigen::Vector3d> HeadMicPositions(const Eigen::Vector3d& center,
                                              double radius = 0.05,
                                              double plane_offset = 0.003);

// Shoebox room with an image-source reverberation model.  Reflection delays
// (never the direct path) receive +-0.5 sample uniform jitter so that late
// taps decorrelate the way irregular rooms do.
struct RoomScene {
  Eigen::Vector3d room_dims{6.0, 5.0, 3.0};
  double t60 = 0.5;          // target reverberation time, seconds
  double absorption = -1.0;  // in (0, 1] overrides t60; 1 = anechoic
  Eigen::Vector3d source_pos{1.0, 2.5, 1.5};
  std::vector<Eigen::Vector3d> mic_positions;
  double speed_of_sound = 343.0;
  double sample_rate = 16000.0;
  uint64_t jitter_seed = 1;
  int max_rir_samples = 0;   // 0 derives the length from t60
};

// Throws std::invalid_argument for sources or microphones outside the room,
// coincident microphones, or non-positive dimensions.
void ValidateScene(const RoomScene& scene);

std::string SceneToJsonString(const RoomScene& scene);
RoomScene SceneFromJsonString(const std::string& text);

struct RirMetadata {
  double direct_delay_samples = -1.0;
  double first_reflection_delay_samples = -1.0;  // -1 when purely anechoic
  int first_contaminated_sample = -1;  // first sample with reflected energy
  double itdg_samples = -1.0;          // initial time delay gap
  double drr_db = 0.0;                 // direct-to-reverberant ratio
};

struct RirResult {
  Eigen::VectorXd rir;
  RirMetadata meta;
};

// Uniform wall absorption that yields the target reverberation time by the
// Eyring relation alpha = 1 - exp(-0.161 V / (S t60)).  Throws when the
// target would require alpha > 0.95, listing the feasible range.
double EyringAbsorption(const Eigen::Vector3d& room_dims, double t60);

RirResult SimulateRir(const RoomScene& scene, int mic_index);

// Zeroes everything from the first reflected-energy sample on, keeping the
// direct-path lobe.  Purely anechoic responses pass through unchanged.
// Throws when the metadata does not identify the truncation point.
Eigen::VectorXd TruncateAnechoic(const Eigen::VectorXd& rir, const RirMetadata& meta);

// Reverberation time from the backward-integrated energy decay, fitted
// between -5 dB and -25 dB and extrapolated to 60 dB.
double MeasureT60(const Eigen::VectorXd& rir, double sample_rate);

// Free-field impulse: windowed-sinc fractional-delay kernel at the given
// delay with the given amplitude.  Matches the direct path laid down by
// SimulateRir.
Eigen::VectorXd AnechoicKernel(double delay_samples, double gain, int min_len = 0);

// Unit-variance white Gaussian noise.
Eigen::VectorXd WhiteNoiseSignal(Eigen::Index n, uint64_t seed);

// Nonstationary speech-like probe: low-pass resonant spectral shape with
// syllabic on/off gating and per-burst level variation.
Eigen::VectorXd SpeechShapedProbe(Eigen::Index n, double sample_rate, uint64_t seed);

struct NoiseSpec {
  enum class Kind { kWhite, kFan };
  Kind kind = Kind::kFan;
  double snr_db = 11.0;      // +inf renders noise-free
  bool correlated = true;    // spatially correlated across microphones
  double coherence = 0.7;    // correlated power fraction when correlated
  Eigen::Vector3d source_pos{0.5, 0.5, 0.5};  // noise origin for correlation
};

struct RenderBundle {
  Eigen::MatrixXd mics;          // mixture, samples x channels
  Eigen::MatrixXd speech_image;  // reverberant speech component
  Eigen::MatrixXd noise_image;   // scaled noise component
  Eigen::MatrixXd noise_only;    // independent noise realization, same stats
  std::vector<RirResult> rirs;
  std::vector<Eigen::VectorXd> rirs_anechoic;
  std::vector<DirectPathTruth> dp_truth;  // one per entry of `pairs`
  std::vector<std::pair<int, int>> pairs;
  double noise_gain = 0.0;
  double snr_measured_db = 0.0;
};

struct RenderOptions {
  Eigen::Index noise_only_len = 0;  // 0 skips the noise-only realization
  const std::vector<RirResult>* rirs = nullptr;  // reuse precomputed responses
  std::vector<std::pair<int, int>> pairs = {kMicPairs.begin(), kMicPairs.end()};
  const StftConfig* truth_cfg = nullptr;  // enables direct-path ground truth
};

// Renders source audio into the room, adds noise at the requested
// signal-to-noise ratio (measured on channel 0), and returns all components
// separately along with ground-truth direct-path data.
RenderBundle RenderRecording(const RoomScene& scene, const Eigen::VectorXd& source,
                             const NoiseSpec& noise, uint64_t seed,
                             const RenderOptions& options = {});

// Expected cross-spectrum phases for every candidate direction at the given
// range from the array centroid, built from free-field direct-path responses.
SteeringGrid BuildSteeringGrid(const std::vector<Eigen::Vector3d>& mics,
                               const std::vector<std::pair<int, int>>& pairs,
                               const std::vector<Direction>& directions,
                               double distance, const StftConfig& cfg,
                               int bin_lo, int bin_hi, double speed_of_sound);

struct TrainingSet {
  Eigen::MatrixXcd features;                // examples x (bins * pairs)
  std::vector<std::vector<uint8_t>> masks;  // one mask per example
  Eigen::MatrixXd labels;                   // examples x 2 (azimuth, elevation)
  std::vector<Direction> directions;
  int bin_lo = 0;
  int bin_hi = 0;
  int num_pairs = 0;
};

// One feature vector per grid direction: free-field responses at the given
// range, a white-noise probe, and the subband-filter estimator, noise-free.
TrainingSet BuildTrainingSet(const std::vector<Eigen::Vector3d>& mics,
                             const std::vector<std::pair<int, int>>& pairs,
                             const std::vector<Direction>& directions,
                             double distance, const StftConfig& cfg,
                             const EstimatorParams& params, double probe_seconds,
                             double speed_of_sound, uint64_t seed);

}  // namespace dprtf

#endif  // DPRTF_SIM_HPP_
