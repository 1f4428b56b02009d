// psd.cc

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

#include "dprtf/psd.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

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

}  // namespace

PsdBlock EstimatePsdBlock(const Spectrogram& spec_x, const Spectrogram& spec_y,
                          int frame, int bin, int num_taps, int avg_frames) {
  CheckPair(spec_x, spec_y, "EstimatePsdBlock");
  if (num_taps <= 0) throw std::invalid_argument("EstimatePsdBlock: num_taps must be positive");
  if (avg_frames <= 0) throw std::invalid_argument("EstimatePsdBlock: avg_frames must be positive");
  if (bin < 0 || bin >= spec_y.num_bins()) {
    throw std::invalid_argument("EstimatePsdBlock: bin out of range");
  }
  const int min_frame = avg_frames - 1 + num_taps - 1;
  if (frame < min_frame || frame >= spec_y.num_frames()) {
    throw std::invalid_argument(
        "EstimatePsdBlock: frame must be in [" + std::to_string(min_frame) +
        ", " + std::to_string(spec_y.num_frames()) + ")");
  }

  PsdBlock block;
  block.frame = frame;
  block.bin = bin;
  block.num_taps = num_taps;
  block.avg_frames = avg_frames;
  block.phi_zy.setZero(2 * num_taps - 1);

  double acc_yy = 0.0;
  for (int d = 0; d < avg_frames; ++d) {
    const int p = frame - d;
    const std::complex<double> y_conj = std::conj(spec_y.data(p, bin));
    acc_yy += std::norm(spec_y.data(p, bin));
    for (int i = 0; i < num_taps; ++i) {
      block.phi_zy[i] += spec_x.data(p - i, bin) * y_conj;
    }
    for (int j = 1; j < num_taps; ++j) {
      block.phi_zy[num_taps - 1 + j] += spec_y.data(p - j, bin) * y_conj;
    }
  }
  block.phi_yy = acc_yy / avg_frames;
  block.phi_zy /= static_cast<double>(avg_frames);
  return block;
}

Eigen::VectorXd PowerSeries(const Spectrogram& spec, int bin, int avg_frames) {
  if (avg_frames <= 0) throw std::invalid_argument("PowerSeries: avg_frames must be positive");
  if (bin < 0 || bin >= spec.num_bins()) {
    throw std::invalid_argument("PowerSeries: bin out of range");
  }
  const Eigen::Index num_frames = spec.num_frames();
  Eigen::VectorXd out =
      Eigen::VectorXd::Constant(num_frames, std::numeric_limits<double>::quiet_NaN());
  if (num_frames < avg_frames) return out;

  double acc = 0.0;
  for (Eigen::Index p = 0; p < num_frames; ++p) {
    acc += std::norm(spec.data(p, bin));
    if (p >= avg_frames) acc -= std::norm(spec.data(p - avg_frames, bin));
    if (p >= avg_frames - 1) out[p] = acc / avg_frames;
  }
  return out;
}

NoiseProfile EstimateNoiseProfile(const Spectrogram& noise_x,
                                  const Spectrogram& noise_y, int num_taps) {
  CheckPair(noise_x, noise_y, "EstimateNoiseProfile");
  if (num_taps <= 0) {
    throw std::invalid_argument("EstimateNoiseProfile: num_taps must be positive");
  }
  const StftConfig& cfg = noise_x.cfg;
  const Eigen::Index num_frames = noise_x.num_frames();
  const Eigen::Index min_len = static_cast<Eigen::Index>(cfg.sample_rate);
  const Eigen::Index have_len =
      (num_frames - 1) * cfg.hop + cfg.frame_len;
  if (have_len < min_len) {
    throw std::invalid_argument(
        "EstimateNoiseProfile: noise recording too short; need at least " +
        std::to_string(min_len) + " samples (1 s), got " + std::to_string(have_len));
  }
  if (num_frames < num_taps) {
    throw std::invalid_argument(
        "EstimateNoiseProfile: fewer frames than lag taps");
  }

  const Eigen::Index k_full = noise_x.num_bins();
  NoiseProfile profile;
  profile.num_taps = num_taps;
  profile.sample_rate = cfg.sample_rate;
  profile.frame_len = cfg.frame_len;
  profile.hop = cfg.hop;
  profile.phi_vv.setZero(k_full);
  profile.phi_uu.setZero(k_full);
  profile.phi_wv.setZero(2 * num_taps - 1, k_full);

  const Eigen::Index p0 = num_taps - 1;
  const double count = static_cast<double>(num_frames - p0);
  for (Eigen::Index k = 0; k < k_full; ++k) {
    for (Eigen::Index p = p0; p < num_frames; ++p) {
      const std::complex<double> v_conj = std::conj(noise_y.data(p, k));
      profile.phi_vv[k] += std::norm(noise_y.data(p, k));
      profile.phi_uu[k] += std::norm(noise_x.data(p, k));
      for (int i = 0; i < num_taps; ++i) {
        profile.phi_wv(i, k) += noise_x.data(p - i, k) * v_conj;
      }
      for (int j = 1; j < num_taps; ++j) {
        profile.phi_wv(num_taps - 1 + j, k) += noise_y.data(p - j, k) * v_conj;
      }
    }
    profile.phi_vv[k] /= count;
    profile.phi_uu[k] /= count;
    profile.phi_wv.col(k) /= count;
  }
  return profile;
}

PsdBlock SpectralSubtract(const PsdBlock& block, const NoiseProfile& profile) {
  if (block.num_taps != profile.num_taps) {
    throw std::invalid_argument("SpectralSubtract: tap count mismatch");
  }
  if (block.bin < 0 || block.bin >= profile.phi_vv.size()) {
    throw std::invalid_argument("SpectralSubtract: bin out of range for profile");
  }
  PsdBlock out = block;
  out.phi_yy -= profile.phi_vv[block.bin];
  out.phi_zy -= profile.phi_wv.col(block.bin);
  return out;
}

std::vector<int> SelectFrames(const Eigen::VectorXd& power, double noise_power,
                              double gamma, int min_frame) {
  std::vector<int> selected;
  const double threshold = gamma * noise_power;
  for (Eigen::Index p = std::max(0, min_frame); p < power.size(); ++p) {
    if (std::isfinite(power[p]) && power[p] > threshold) {
      selected.push_back(static_cast<int>(p));
    }
  }
  return selected;
}

void SaveNoiseProfile(const std::string& json_path, const NoiseProfile& profile) {
  const std::string bin_path = json_path + ".bin";
  const std::string bin_name = bin_path.substr(bin_path.find_last_of('/') + 1);
  nlohmann::json meta = {
      {"format", "noise-profile"},
      {"version", 1},
      {"num_taps", profile.num_taps},
      {"num_bins", profile.phi_vv.size()},
      {"sample_rate", profile.sample_rate},
      {"frame_len", profile.frame_len},
      {"hop", profile.hop},
      {"data_file", bin_name},
      {"layout", "phi_vv[k] f64, phi_uu[k] f64, phi_wv[lag][k] (re, im) f64"},
  };
  std::ofstream meta_out(json_path);
  if (!meta_out) throw std::runtime_error("SaveNoiseProfile: cannot write " + json_path);
  meta_out << meta.dump(2) << "\n";

  std::ofstream out(bin_path, std::ios::binary);
  if (!out) throw std::runtime_error("SaveNoiseProfile: cannot write " + bin_path);
  auto write_d = [&out](double v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(double));
  };
  for (Eigen::Index k = 0; k < profile.phi_vv.size(); ++k) write_d(profile.phi_vv[k]);
  for (Eigen::Index k = 0; k < profile.phi_uu.size(); ++k) write_d(profile.phi_uu[k]);
  for (Eigen::Index i = 0; i < profile.phi_wv.rows(); ++i) {
    for (Eigen::Index k = 0; k < profile.phi_wv.cols(); ++k) {
      write_d(profile.phi_wv(i, k).real());
      write_d(profile.phi_wv(i, k).imag());
    }
  }
  if (!out) throw std::runtime_error("SaveNoiseProfile: write failed for " + bin_path);
}

NoiseProfile LoadNoiseProfile(const std::string& json_path) {
  std::ifstream meta_in(json_path);
  if (!meta_in) throw std::runtime_error("LoadNoiseProfile: cannot open " + json_path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("LoadNoiseProfile: bad JSON in " + json_path + ": " + e.what());
  }
  if (meta.value("format", "") != "noise-profile") {
    throw std::runtime_error("LoadNoiseProfile: unexpected format tag in " + json_path);
  }

  NoiseProfile profile;
  profile.num_taps = meta.at("num_taps").get<int>();
  profile.sample_rate = meta.at("sample_rate").get<double>();
  profile.frame_len = meta.at("frame_len").get<int>();
  profile.hop = meta.at("hop").get<int>();
  const Eigen::Index k_full = meta.at("num_bins").get<Eigen::Index>();
  if (profile.num_taps <= 0 || k_full <= 0) {
    throw std::runtime_error("LoadNoiseProfile: invalid dimensions in " + json_path);
  }

  const std::string bin_path = json_path + ".bin";
  std::ifstream in(bin_path, std::ios::binary);
  if (!in) throw std::runtime_error("LoadNoiseProfile: cannot open " + bin_path);
  auto read_d = [&in, &bin_path]() {
    double v = 0.0;
    in.read(reinterpret_cast<char*>(&v), sizeof(double));
    if (!in) throw std::runtime_error("LoadNoiseProfile: truncated payload in " + bin_path);
    return v;
  };
  profile.phi_vv.resize(k_full);
  profile.phi_uu.resize(k_full);
  profile.phi_wv.resize(2 * profile.num_taps - 1, k_full);
  for (Eigen::Index k = 0; k < k_full; ++k) profile.phi_vv[k] = read_d();
  for (Eigen::Index k = 0; k < k_full; ++k) profile.phi_uu[k] = read_d();
  for (Eigen::Index i = 0; i < profile.phi_wv.rows(); ++i) {
    for (Eigen::Index k = 0; k < k_full; ++k) {
      const double re = read_d();
      const double im = read_d();
      profile.phi_wv(i, k) = {re, im};
    }
  }
  return profile;
}

}  // namespace dprtf
