// estimator.cc

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

#include "dprtf/estimator.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dprtf {

int TapsFromT60(double t60, double factor, const StftConfig& cfg) {
  if (t60 <= 0.0) return 1;
  const double frames = factor * t60 * cfg.sample_rate / cfg.hop;
  return std::max(1, static_cast<int>(std::ceil(frames)));
}

LinearSystem BuildSystem(const std::vector<PsdBlock>& blocks) {
  LinearSystem system;
  if (blocks.empty()) return system;
  const int num_taps = blocks.front().num_taps;
  const int bin = blocks.front().bin;
  const Eigen::Index cols = 2 * num_taps - 1;
  system.bin = bin;
  system.phi.resize(blocks.size());
  system.psi.resize(blocks.size(), cols);
  for (size_t r = 0; r < blocks.size(); ++r) {
    const PsdBlock& b = blocks[r];
    if (b.num_taps != num_taps || b.bin != bin) {
      throw std::invalid_argument("BuildSystem: inconsistent blocks");
    }
    system.phi[static_cast<Eigen::Index>(r)] = b.phi_yy;
    system.psi.row(static_cast<Eigen::Index>(r)) = b.phi_zy.transpose();
  }
  return system;
}

LsSolution SolveLs(const LinearSystem& system, bool ridge, double ridge_eps) {
  LsSolution sol;
  const Eigen::Index rows = system.phi.size();
  const Eigen::Index cols = system.psi.cols();
  if (rows == 0) {
    sol.status = SolveStatus::kEmpty;
    return sol;
  }
  if (rows < cols) {
    sol.status = SolveStatus::kUnderdetermined;
    sol.g.setZero(cols);
    return sol;
  }
  if (ridge) {
    const double lambda =
        ridge_eps * system.psi.squaredNorm() / static_cast<double>(cols);
    Eigen::MatrixXcd gram = system.psi.adjoint() * system.psi;
    gram.diagonal().array() += lambda;
    sol.g = gram.ldlt().solve(system.psi.adjoint() * system.phi);
    sol.rank = static_cast<int>(cols);
    sol.status = SolveStatus::kOk;
    return sol;
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXcd> qr(system.psi);
  sol.rank = static_cast<int>(qr.rank());
  sol.g = qr.solve(system.phi);
  sol.status = (sol.rank < cols) ? SolveStatus::kRankDeficient : SolveStatus::kOk;
  return sol;
}

std::complex<double> NormalizeDpRtf(std::complex<double> g0) {
  return g0 / std::sqrt(std::norm(g0) + 1.0);
}

std::vector<PairBinEstimate> EstimatePairDpRtf(const Spectrogram& spec_x,
                                               const Spectrogram& spec_y,
                                               const NoiseProfile* profile,
                                               const EstimatorParams& params) {
  if (!SameConfig(spec_x.cfg, spec_y.cfg)) {
    throw std::invalid_argument("EstimatePairDpRtf: channel configs differ");
  }
  if (spec_x.num_frames() != spec_y.num_frames()) {
    throw std::invalid_argument("EstimatePairDpRtf: channel frame counts differ");
  }
  const int num_taps = params.num_taps > 0
                           ? params.num_taps
                           : TapsFromT60(params.t60, params.taps_t60_factor, spec_x.cfg);
  const int avg = params.avg_frames;
  if (avg <= 0) throw std::invalid_argument("EstimatePairDpRtf: avg_frames must be positive");
  if (params.bin_lo < 0 || params.bin_hi >= spec_y.num_bins() ||
      params.bin_lo > params.bin_hi) {
    throw std::invalid_argument("EstimatePairDpRtf: bin band out of range");
  }
  if (profile != nullptr && profile->num_taps != num_taps) {
    throw std::invalid_argument("EstimatePairDpRtf: profile tap count mismatch");
  }

  const Eigen::Index num_frames = spec_y.num_frames();
  const int cols = 2 * num_taps - 1;
  const int min_frame = (avg - 1) + (num_taps - 1);

  std::vector<PairBinEstimate> out(static_cast<size_t>(params.bin_hi - params.bin_lo + 1));

  // Running sums of lag products; column c holds
  //   c in [0, Q):      x(p - c) conj(y(p))
  //   c in [Q, 2Q - 1): y(p - (c - Q + 1)) conj(y(p))
  // cumulated over p, with one leading zero row.
  Eigen::MatrixXcd cum(num_frames + 1, cols);

  for (int k = params.bin_lo; k <= params.bin_hi; ++k) {
    PairBinEstimate& est = out[static_cast<size_t>(k - params.bin_lo)];

    const Eigen::VectorXd power = PowerSeries(spec_y, k, avg);
    const double noise_power = profile != nullptr ? profile->phi_vv[k] : 0.0;
    const std::vector<int> selected =
        SelectFrames(power, noise_power, params.gamma, min_frame);
    est.frames_used = static_cast<int>(selected.size());
    if (selected.empty()) {
      est.status = SolveStatus::kEmpty;
      continue;
    }

    cum.row(0).setZero();
    for (Eigen::Index p = 0; p < num_frames; ++p) {
      const std::complex<double> y_conj = std::conj(spec_y.data(p, k));
      for (int i = 0; i < num_taps; ++i) {
        cum(p + 1, i) = cum(p, i) +
                        (p >= i ? spec_x.data(p - i, k) * y_conj
                                : std::complex<double>(0.0, 0.0));
      }
      for (int j = 1; j < num_taps; ++j) {
        const int c = num_taps - 1 + j;
        cum(p + 1, c) = cum(p, c) +
                        (p >= j ? spec_y.data(p - j, k) * y_conj
                                : std::complex<double>(0.0, 0.0));
      }
    }

    LinearSystem system;
    system.bin = k;
    system.phi.resize(static_cast<Eigen::Index>(selected.size()));
    system.psi.resize(static_cast<Eigen::Index>(selected.size()), cols);
    for (size_t r = 0; r < selected.size(); ++r) {
      const int p = selected[r];
      system.phi[static_cast<Eigen::Index>(r)] = power[p] - noise_power;
      for (int c = 0; c < cols; ++c) {
        std::complex<double> zy = (cum(p + 1, c) - cum(p + 1 - avg, c)) /
                                  static_cast<double>(avg);
        if (profile != nullptr) zy -= profile->phi_wv(c, k);
        system.psi(static_cast<Eigen::Index>(r), c) = zy;
      }
    }

    const LsSolution sol = SolveLs(system, params.ridge, params.ridge_eps);
    est.status = sol.status;
    if (sol.status != SolveStatus::kOk) continue;
    est.raw = sol.g[0];
    est.value = NormalizeDpRtf(est.raw);
    est.valid = std::isfinite(est.value.real()) && std::isfinite(est.value.imag());
    if (!est.valid) est.value = {0.0, 0.0};
  }
  return out;
}

DpRtfFeature AssembleFeature(const std::vector<std::vector<PairBinEstimate>>& per_pair,
                             int bin_lo, int bin_hi) {
  if (per_pair.empty()) throw std::invalid_argument("AssembleFeature: no pairs");
  const int num_bins = bin_hi - bin_lo + 1;
  if (num_bins <= 0) throw std::invalid_argument("AssembleFeature: empty band");
  for (const auto& p : per_pair) {
    if (static_cast<int>(p.size()) != num_bins) {
      throw std::invalid_argument("AssembleFeature: estimate count does not match band");
    }
  }
  const int num_pairs = static_cast<int>(per_pair.size());

  DpRtfFeature feature;
  feature.bin_lo = bin_lo;
  feature.bin_hi = bin_hi;
  feature.num_pairs = num_pairs;
  feature.values.setZero(static_cast<Eigen::Index>(num_bins) * num_pairs);
  feature.mask.assign(static_cast<size_t>(num_bins) * num_pairs, 0);
  for (int b = 0; b < num_bins; ++b) {
    for (int m = 0; m < num_pairs; ++m) {
      const Eigen::Index idx = static_cast<Eigen::Index>(b) * num_pairs + m;
      const PairBinEstimate& est = per_pair[static_cast<size_t>(m)][static_cast<size_t>(b)];
      if (est.valid) {
        feature.values[idx] = est.value;
        feature.mask[static_cast<size_t>(idx)] = 1;
      }
    }
  }
  return feature;
}

std::string FeatureToJson(const DpRtfFeature& feature) {
  nlohmann::json records = nlohmann::json::array();
  const int num_pairs = feature.num_pairs;
  for (Eigen::Index i = 0; i < feature.size(); ++i) {
    const int bin = feature.bin_lo + static_cast<int>(i) / num_pairs;
    const int pair = static_cast<int>(i) % num_pairs;
    records.push_back({{"pair", pair},
                       {"bin", bin},
                       {"re", feature.values[i].real()},
                       {"im", feature.values[i].imag()},
                       {"mask", static_cast<int>(feature.mask[static_cast<size_t>(i)])}});
  }
  return records.dump(2);
}

DpRtfFeature FeatureFromJson(const std::string& text) {
  nlohmann::json records;
  try {
    records = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(std::string("FeatureFromJson: bad JSON: ") + e.what());
  }
  if (!records.is_array() || records.empty()) {
    throw std::runtime_error("FeatureFromJson: expected a non-empty array");
  }
  int bin_lo = records.front().at("bin").get<int>();
  int bin_hi = bin_lo;
  int num_pairs = 0;
  for (const auto& r : records) {
    bin_lo = std::min(bin_lo, r.at("bin").get<int>());
    bin_hi = std::max(bin_hi, r.at("bin").get<int>());
    num_pairs = std::max(num_pairs, r.at("pair").get<int>() + 1);
  }
  DpRtfFeature feature;
  feature.bin_lo = bin_lo;
  feature.bin_hi = bin_hi;
  feature.num_pairs = num_pairs;
  const Eigen::Index total = static_cast<Eigen::Index>(bin_hi - bin_lo + 1) * num_pairs;
  if (static_cast<Eigen::Index>(records.size()) != total) {
    throw std::runtime_error("FeatureFromJson: incomplete record set");
  }
  feature.values.setZero(total);
  feature.mask.assign(static_cast<size_t>(total), 0);
  for (const auto& r : records) {
    const Eigen::Index idx =
        static_cast<Eigen::Index>(r.at("bin").get<int>() - bin_lo) * num_pairs +
        r.at("pair").get<int>();
    feature.values[idx] = {r.at("re").get<double>(), r.at("im").get<double>()};
    feature.mask[static_cast<size_t>(idx)] =
        static_cast<uint8_t>(r.at("mask").get<int>() != 0);
  }
  return feature;
}

void SaveFeature(const std::string& path, const DpRtfFeature& feature) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("SaveFeature: cannot write " + path);
  out << FeatureToJson(feature) << "\n";
  if (!out) throw std::runtime_error("SaveFeature: write failed for " + path);
}

DpRtfFeature LoadFeature(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("LoadFeature: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return FeatureFromJson(text);
}

}  // namespace dprtf
