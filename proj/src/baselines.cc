// baselines.cc

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

#include "dprtf/baselines.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dprtf {

namespace {

void CheckPair(const Spectrogram& spec_x, const Spectrogram& spec_y, const char* who) {
  if (!SameConfig(spec_x.cfg, spec_y.cfg)) {
    throw std::invalid_argument(std::string(who) + ": channel configs differ");
  }
  if (spec_x.num_frames() != spec_y.num_frames() ||
      spec_x.num_bins() != spec_y.num_bins()) {
    throw std::invalid_argument(std::string(who) + ": channel shapes differ");
  }
}

// Moving average of y(p) conj(x(p)) over avg trailing frames, NaN-free;
// defined for p >= avg - 1, zero before.
Eigen::VectorXcd CrossSeries(const Spectrogram& spec_x, const Spectrogram& spec_y,
                             int bin, int avg) {
  const Eigen::Index num_frames = spec_x.num_frames();
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(num_frames);
  std::complex<double> acc(0.0, 0.0);
  for (Eigen::Index p = 0; p < num_frames; ++p) {
    acc += spec_y.data(p, bin) * std::conj(spec_x.data(p, bin));
    if (p >= avg) acc -= spec_y.data(p - avg, bin) * std::conj(spec_x.data(p - avg, bin));
    if (p >= avg - 1) out[p] = acc / static_cast<double>(avg);
  }
  return out;
}

// Averages noise-subtracted cross and auto statistics over the given frames
// and forms the compressed ratio estimate.
PairBinEstimate RatioFromFrames(const Spectrogram& spec_x, const Spectrogram& spec_y,
                                const NoiseProfile* profile, int bin, int avg,
                                const std::vector<int>& frames) {
  PairBinEstimate est;
  est.frames_used = static_cast<int>(frames.size());
  if (frames.empty()) {
    est.status = SolveStatus::kEmpty;
    return est;
  }
  const Eigen::VectorXcd cross = CrossSeries(spec_x, spec_y, bin, avg);
  const Eigen::VectorXd auto_x = PowerSeries(spec_x, bin, avg);
  const std::complex<double> noise_cross =
      profile != nullptr ? std::conj(profile->phi_wv(0, bin)) : std::complex<double>(0.0, 0.0);
  const double noise_auto = profile != nullptr ? profile->phi_uu[bin] : 0.0;

  std::complex<double> num(0.0, 0.0);
  double den = 0.0;
  for (int p : frames) {
    num += cross[p] - noise_cross;
    den += auto_x[p] - noise_auto;
  }
  if (den == 0.0) {
    est.status = SolveStatus::kRankDeficient;
    return est;
  }
  est.raw = num / den;
  est.value = NormalizeDpRtf(est.raw);
  est.valid = std::isfinite(est.value.real()) && std::isfinite(est.value.imag());
  if (!est.valid) {
    est.value = {0.0, 0.0};
    est.status = SolveStatus::kRankDeficient;
  } else {
    est.status = SolveStatus::kOk;
  }
  return est;
}

}  // namespace

std::vector<PairBinEstimate> RtfMtf(const Spectrogram& spec_x,
                                    const Spectrogram& spec_y,
                                    const NoiseProfile* profile,
                                    const EstimatorParams& params) {
  CheckPair(spec_x, spec_y, "RtfMtf");
  if (params.bin_lo < 0 || params.bin_hi >= spec_y.num_bins() ||
      params.bin_lo > params.bin_hi) {
    throw std::invalid_argument("RtfMtf: bin band out of range");
  }
  const int avg = params.avg_frames;
  const int min_frame = avg - 1;

  std::vector<PairBinEstimate> out(static_cast<size_t>(params.bin_hi - params.bin_lo + 1));
  for (int k = params.bin_lo; k <= params.bin_hi; ++k) {
    const Eigen::VectorXd power = PowerSeries(spec_y, k, avg);
    const double noise_power = profile != nullptr ? profile->phi_vv[k] : 0.0;
    const std::vector<int> selected =
        SelectFrames(power, noise_power, params.gamma, min_frame);
    out[static_cast<size_t>(k - params.bin_lo)] =
        RatioFromFrames(spec_x, spec_y, profile, k, avg, selected);
  }
  return out;
}

Eigen::MatrixXd PairCoherence(const Spectrogram& spec_x, const Spectrogram& spec_y,
                              const CoherenceConfig& cfg) {
  CheckPair(spec_x, spec_y, "PairCoherence");
  if (cfg.block_frames <= 0) {
    throw std::invalid_argument("PairCoherence: block_frames must be positive");
  }
  const Eigen::Index num_frames = spec_x.num_frames();
  const Eigen::Index num_bins = spec_x.num_bins();
  const int block = cfg.block_frames;
  Eigen::MatrixXd coh = Eigen::MatrixXd::Constant(
      num_frames, num_bins, std::numeric_limits<double>::quiet_NaN());

  for (Eigen::Index k = 0; k < num_bins; ++k) {
    double acc_xx = 0.0, acc_yy = 0.0;
    std::complex<double> acc_xy(0.0, 0.0);
    for (Eigen::Index p = 0; p < num_frames; ++p) {
      acc_xx += std::norm(spec_x.data(p, k));
      acc_yy += std::norm(spec_y.data(p, k));
      acc_xy += spec_x.data(p, k) * std::conj(spec_y.data(p, k));
      if (p >= block) {
        acc_xx -= std::norm(spec_x.data(p - block, k));
        acc_yy -= std::norm(spec_y.data(p - block, k));
        acc_xy -= spec_x.data(p - block, k) * std::conj(spec_y.data(p - block, k));
      }
      if (p < block - 1) continue;
      const double trace = acc_xx + acc_yy;
      if (trace <= 0.0) continue;
      // Eigenvalue gap of the 2x2 Hermitian covariance:
      // (l1 - l2) / (l1 + l2) = sqrt((rxx - ryy)^2 + 4 |rxy|^2) / (rxx + ryy).
      const double gap =
          std::sqrt((acc_xx - acc_yy) * (acc_xx - acc_yy) + 4.0 * std::norm(acc_xy));
      coh(p, k) = gap / trace;
    }
  }
  return coh;
}

CoherenceSelection CoherenceTest(const Spectrogram& spec_x, const Spectrogram& spec_y,
                                 const CoherenceConfig& cfg) {
  CoherenceSelection sel;
  sel.coherence = PairCoherence(spec_x, spec_y, cfg);
  const Eigen::Index num_frames = sel.coherence.rows();
  const Eigen::Index num_bins = sel.coherence.cols();
  sel.frames.resize(static_cast<size_t>(num_bins));
  for (Eigen::Index k = 0; k < num_bins; ++k) {
    double best = -1.0;
    for (Eigen::Index p = 0; p < num_frames; ++p) {
      const double c = sel.coherence(p, k);
      if (std::isfinite(c) && c > best) best = c;
    }
    if (best < 0.0) continue;
    const double threshold = cfg.threshold_factor * best;
    for (Eigen::Index p = 0; p < num_frames; ++p) {
      const double c = sel.coherence(p, k);
      if (std::isfinite(c) && c >= threshold) {
        sel.frames[static_cast<size_t>(k)].push_back(static_cast<int>(p));
      }
    }
  }
  return sel;
}

std::vector<PairBinEstimate> RtfCt(const Spectrogram& spec_x,
                                   const Spectrogram& spec_y,
                                   const NoiseProfile* profile,
                                   const CoherenceConfig& cfg,
                                   const EstimatorParams& params) {
  CheckPair(spec_x, spec_y, "RtfCt");
  if (params.bin_lo < 0 || params.bin_hi >= spec_y.num_bins() ||
      params.bin_lo > params.bin_hi) {
    throw std::invalid_argument("RtfCt: bin band out of range");
  }
  const int avg = params.avg_frames;
  const CoherenceSelection sel = CoherenceTest(spec_x, spec_y, cfg);

  std::vector<PairBinEstimate> out(static_cast<size_t>(params.bin_hi - params.bin_lo + 1));
  for (int k = params.bin_lo; k <= params.bin_hi; ++k) {
    std::vector<int> frames;
    for (int p : sel.frames[static_cast<size_t>(k)]) {
      if (p >= avg - 1) frames.push_back(p);
    }
    out[static_cast<size_t>(k - params.bin_lo)] =
        RatioFromFrames(spec_x, spec_y, profile, k, avg, frames);
  }
  return out;
}

SrpResult SrpPhat(
    const std::vector<std::pair<const Spectrogram*, const Spectrogram*>>& pairs,
    const SteeringGrid& grid,
    const std::vector<std::vector<std::vector<int>>>& active) {
  if (pairs.empty()) throw std::invalid_argument("SrpPhat: no channel pairs");
  if (grid.steering.size() != pairs.size() || active.size() != pairs.size()) {
    throw std::invalid_argument("SrpPhat: pair count mismatch");
  }
  if (grid.directions.empty()) throw std::invalid_argument("SrpPhat: empty grid");
  const int num_bins_band = grid.bin_hi - grid.bin_lo + 1;
  const Eigen::Index num_dirs = static_cast<Eigen::Index>(grid.directions.size());

  SrpResult result;
  result.power = Eigen::VectorXd::Zero(num_dirs);

  for (size_t m = 0; m < pairs.size(); ++m) {
    CheckPair(*pairs[m].first, *pairs[m].second, "SrpPhat");
    const Spectrogram& sx = *pairs[m].first;
    const Spectrogram& sy = *pairs[m].second;
    if (grid.bin_hi >= sx.num_bins()) {
      throw std::invalid_argument("SrpPhat: grid band exceeds spectrogram bins");
    }
    if (static_cast<int>(active[m].size()) != num_bins_band) {
      throw std::invalid_argument("SrpPhat: active frame lists do not match band");
    }
    if (grid.steering[m].rows() != num_dirs ||
        grid.steering[m].cols() != sx.num_bins()) {
      throw std::invalid_argument("SrpPhat: steering matrix shape mismatch");
    }

    // Sum the PHAT-weighted cross spectrum over active frames once per bin,
    // then project onto every steering direction.
    Eigen::VectorXcd summed = Eigen::VectorXcd::Zero(sx.num_bins());
    for (int k = grid.bin_lo; k <= grid.bin_hi; ++k) {
      std::complex<double> acc(0.0, 0.0);
      for (int p : active[static_cast<size_t>(m)][static_cast<size_t>(k - grid.bin_lo)]) {
        const std::complex<double> u = sx.data(p, k) * std::conj(sy.data(p, k));
        const double mag = std::abs(u);
        if (mag <= 0.0) continue;
        acc += u / mag;
        ++result.terms;
      }
      summed[k] = acc;
    }
    result.power += (grid.steering[m].conjugate() * summed).real();
  }

  Eigen::Index best = 0;
  result.power.maxCoeff(&best);
  result.best_index = static_cast<int>(best);
  result.direction = grid.directions[static_cast<size_t>(best)];
  return result;
}

}  // namespace dprtf
