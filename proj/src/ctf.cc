// ctf.cc

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

#include "dprtf/ctf.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dprtf {

namespace {

// Window cross-correlation extended to negative lags:
//   nu_ext(d) = sum_m wa(m) ws(m - d), d in [1 - N, N - 1].
// Stored with offset N - 1.
Eigen::VectorXd ExtendedNu(const StftConfig& cfg) {
  const int n = cfg.frame_len;
  Eigen::VectorXd nu = Eigen::VectorXd::Zero(2 * n - 1);
  for (int d = 1 - n; d <= n - 1; ++d) {
    const int m_lo = std::max(0, d);
    const int m_hi = std::min(n, n + d);
    double acc = 0.0;
    for (int m = m_lo; m < m_hi; ++m) {
      acc += cfg.analysis_window[m] * cfg.synthesis_window[m - d];
    }
    nu[d + n - 1] = acc;
  }
  return nu;
}

void CheckWindows(const StftConfig& cfg, const char* who) {
  if (cfg.analysis_window.size() != cfg.frame_len ||
      cfg.synthesis_window.size() != cfg.frame_len) {
    throw std::invalid_argument(std::string(who) + ": window length mismatch");
  }
}

}  // namespace

int LosslessCtfTaps(Eigen::Index rir_len, const StftConfig& cfg) {
  if (rir_len <= 0) throw std::invalid_argument("LosslessCtfTaps: empty impulse response");
  const Eigen::Index num = rir_len + cfg.frame_len - 1;
  return static_cast<int>((num + cfg.hop - 1) / cfg.hop);
}

CtfFilter CtfFromRir(const Eigen::VectorXd& rir, const StftConfig& cfg,
                     int num_taps) {
  CheckWindows(cfg, "CtfFromRir");
  if (rir.size() == 0) throw std::invalid_argument("CtfFromRir: empty impulse response");
  if (num_taps <= 0) throw std::invalid_argument("CtfFromRir: num_taps must be positive");

  const int n = cfg.frame_len;
  const int hop = cfg.hop;
  const int k_full = cfg.num_bins();
  const Eigen::VectorXd nu = ExtendedNu(cfg);

  CtfFilter filter;
  filter.cfg = cfg;
  filter.truncated = num_taps < LosslessCtfTaps(rir.size(), cfg);
  filter.coeffs.resize(num_taps, k_full);

  // coeffs(q, k) = sum_t rir(t) zeta_k(q hop - t)
  //             = e^{j 2 pi k q hop / N} sum_t rir(t) nu_ext(t - q hop) e^{-j 2 pi k t / N}.
  // The inner sum only sees t within (q hop - N, q hop + N).
  for (int q = 0; q < num_taps; ++q) {
    const Eigen::Index t_lo = std::max<Eigen::Index>(0, static_cast<Eigen::Index>(q) * hop - n + 1);
    const Eigen::Index t_hi = std::min<Eigen::Index>(rir.size(), static_cast<Eigen::Index>(q) * hop + n);
    for (int k = 0; k < k_full; ++k) {
      std::complex<double> acc(0.0, 0.0);
      for (Eigen::Index t = t_lo; t < t_hi; ++t) {
        const double w = nu[t - static_cast<Eigen::Index>(q) * hop + n - 1];
        if (w == 0.0) continue;
        const double phase = -2.0 * M_PI * k * static_cast<double>(t) / n;
        acc += rir[t] * w * std::complex<double>(std::cos(phase), std::sin(phase));
      }
      const double lead = 2.0 * M_PI * k * static_cast<double>(q) * hop / n;
      filter.coeffs(q, k) =
          acc * std::complex<double>(std::cos(lead), std::sin(lead));
    }
  }
  return filter;
}

Eigen::VectorXcd DirectPathAtf(const Eigen::VectorXd& rir, const StftConfig& cfg) {
  CheckWindows(cfg, "DirectPathAtf");
  if (rir.size() == 0) throw std::invalid_argument("DirectPathAtf: empty impulse response");
  const int n = cfg.frame_len;
  const int k_full = cfg.num_bins();
  const Eigen::VectorXd nu = NuWindow(cfg);
  const Eigen::Index t_hi = std::min<Eigen::Index>(rir.size(), n);

  Eigen::VectorXcd atf(k_full);
  for (int k = 0; k < k_full; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (Eigen::Index t = 0; t < t_hi; ++t) {
      const double phase = -2.0 * M_PI * k * static_cast<double>(t) / n;
      acc += rir[t] * nu[t] * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    atf[k] = acc;
  }
  return atf;
}

Spectrogram CtfConvolve(const Spectrogram& src, const CtfFilter& filter) {
  if (!SameConfig(src.cfg, filter.cfg)) {
    throw std::invalid_argument("CtfConvolve: spectrogram and filter configs differ");
  }
  if (src.num_bins() != filter.num_bins()) {
    throw std::invalid_argument("CtfConvolve: bin count mismatch");
  }
  const Eigen::Index num_frames = src.num_frames();
  const Eigen::Index num_taps = filter.num_taps();

  Spectrogram out;
  out.cfg = src.cfg;
  out.channel_id = src.channel_id;
  out.data.setZero(num_frames, src.num_bins());
  for (Eigen::Index k = 0; k < src.num_bins(); ++k) {
    for (Eigen::Index p = 0; p < num_frames; ++p) {
      std::complex<double> acc(0.0, 0.0);
      const Eigen::Index q_hi = std::min(num_taps - 1, p);
      for (Eigen::Index q = 0; q <= q_hi; ++q) {
        acc += src.data(p - q, k) * filter.coeffs(q, k);
      }
      out.data(p, k) = acc;
    }
  }
  return out;
}

DirectPathTruth GroundTruthDpRtf(const Eigen::VectorXd& rir_x,
                                 const Eigen::VectorXd& rir_y,
                                 const StftConfig& cfg) {
  DirectPathTruth truth;
  truth.atf_x = DirectPathAtf(rir_x, cfg);
  truth.atf_y = DirectPathAtf(rir_y, cfg);
  const Eigen::Index k_full = truth.atf_x.size();
  truth.ratio.setZero(k_full);
  truth.valid.assign(static_cast<size_t>(k_full), 0);
  for (Eigen::Index k = 0; k < k_full; ++k) {
    if (std::abs(truth.atf_x[k]) > kAtfEpsilon) {
      truth.ratio[k] = truth.atf_y[k] / truth.atf_x[k];
      truth.valid[static_cast<size_t>(k)] = 1;
    }
  }
  return truth;
}

void SaveRir(const std::string& path, const std::vector<Eigen::VectorXd>& channels,
             double sample_rate) {
  if (channels.empty()) throw std::runtime_error("SaveRir: no channels");
  const Eigen::Index len = channels.front().size();
  for (const auto& ch : channels) {
    if (ch.size() != len) throw std::runtime_error("SaveRir: channel length mismatch");
  }
  nlohmann::json header = {
      {"format", "rir-f64"},
      {"version", 1},
      {"sample_rate", sample_rate},
      {"num_samples", len},
      {"num_channels", channels.size()},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("SaveRir: cannot write " + path);
  out << header.dump() << "\n";
  for (Eigen::Index t = 0; t < len; ++t) {
    for (const auto& ch : channels) {
      const double v = ch[t];
      out.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
  }
  if (!out) throw std::runtime_error("SaveRir: write failed for " + path);
}

RirFile LoadRir(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("LoadRir: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("LoadRir: missing header in " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("LoadRir: bad header in " + path + ": " + e.what());
  }
  if (header.value("format", "") != "rir-f64") {
    throw std::runtime_error("LoadRir: unexpected format tag in " + path);
  }
  RirFile file;
  file.sample_rate = header.at("sample_rate").get<double>();
  const Eigen::Index len = header.at("num_samples").get<Eigen::Index>();
  const size_t num_channels = header.at("num_channels").get<size_t>();
  if (len <= 0 || num_channels == 0) {
    throw std::runtime_error("LoadRir: empty impulse response in " + path);
  }
  file.channels.assign(num_channels, Eigen::VectorXd(len));
  for (Eigen::Index t = 0; t < len; ++t) {
    for (size_t c = 0; c < num_channels; ++c) {
      double v = 0.0;
      in.read(reinterpret_cast<char*>(&v), sizeof(double));
      if (!in) throw std::runtime_error("LoadRir: truncated payload in " + path);
      file.channels[c][t] = v;
    }
  }
  return file;
}

}  // namespace dprtf
