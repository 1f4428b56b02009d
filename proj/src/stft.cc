// stft.cc

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

#include "dprtf/stft.hpp"

#include <cmath>
#include <stdexcept>

#include "dprtf/fft.hpp"

namespace dprtf {

Eigen::VectorXd HammingWindow(int n) {
  if (n <= 0) throw std::invalid_argument("HammingWindow: length must be positive");
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / n);
  }
  return w;
}

Eigen::VectorXd RectWindow(int n) {
  if (n <= 0) throw std::invalid_argument("RectWindow: length must be positive");
  return Eigen::VectorXd::Ones(n);
}

Eigen::VectorXd DualSynthesisWindow(const Eigen::VectorXd& analysis, int hop) {
  const int n = static_cast<int>(analysis.size());
  if (hop <= 0 || hop > n) {
    throw std::invalid_argument("DualSynthesisWindow: hop must be in [1, frame_len]");
  }
  // denom(m) = sum_q wa(m - q hop)^2 over shifts that keep the index in
  // range; it is hop-periodic in m.
  Eigen::VectorXd denom = Eigen::VectorXd::Zero(n);
  for (int m = 0; m < n; ++m) {
    for (int q = -(n / hop + 1); q <= n / hop + 1; ++q) {
      const int idx = m - q * hop;
      if (idx >= 0 && idx < n) denom[m] += analysis[idx] * analysis[idx];
    }
  }
  if (denom.minCoeff() <= 0.0) {
    throw std::invalid_argument(
        "DualSynthesisWindow: analysis window has zero overlap-add power");
  }
  return (analysis.array() / denom.array()).matrix();
}

StftConfig MakeStftConfig(double sample_rate, int frame_len, int hop) {
  if (sample_rate <= 0.0) throw std::invalid_argument("MakeStftConfig: bad sample rate");
  if (frame_len <= 0) throw std::invalid_argument("MakeStftConfig: bad frame length");
  if (hop <= 0 || hop > frame_len) {
    throw std::invalid_argument("MakeStftConfig: hop must be in [1, frame_len]");
  }
  StftConfig cfg;
  cfg.sample_rate = sample_rate;
  cfg.frame_len = frame_len;
  cfg.hop = hop;
  cfg.analysis_window = HammingWindow(frame_len);
  cfg.synthesis_window = DualSynthesisWindow(cfg.analysis_window, hop);
  return cfg;
}

double ColaDeviation(const StftConfig& cfg) {
  const int n = cfg.frame_len;
  const int hop = cfg.hop;
  if (cfg.analysis_window.size() != n || cfg.synthesis_window.size() != n) {
    throw std::invalid_argument("ColaDeviation: window length mismatch");
  }
  // c(m) = sum_q wa(m + q hop) ws(m + q hop), hop-periodic.
  Eigen::VectorXd c = Eigen::VectorXd::Zero(hop);
  for (int m = 0; m < hop; ++m) {
    for (int idx = m; idx < n; idx += hop) {
      c[m] += cfg.analysis_window[idx] * cfg.synthesis_window[idx];
    }
  }
  const double mean = c.mean();
  if (std::abs(mean) < 1e-300) return HUGE_VAL;
  return (c.array() - mean).abs().maxCoeff() / std::abs(mean);
}

int NumFrames(Eigen::Index signal_len, const StftConfig& cfg) {
  if (signal_len < cfg.frame_len) return 0;
  return static_cast<int>((signal_len - cfg.frame_len) / cfg.hop) + 1;
}

Spectrogram Stft(const Eigen::VectorXd& signal, const StftConfig& cfg,
                 const std::string& channel_id) {
  const int n = cfg.frame_len;
  if (cfg.analysis_window.size() != n) {
    throw std::invalid_argument("Stft: analysis window length mismatch");
  }
  const int num_frames = NumFrames(signal.size(), cfg);
  if (num_frames <= 0) {
    throw std::invalid_argument("Stft: signal shorter than one frame");
  }
  const int k_full = cfg.num_bins();

  Spectrogram spec;
  spec.cfg = cfg;
  spec.channel_id = channel_id;
  spec.data.resize(num_frames, k_full);

  std::vector<std::complex<double>> frame(n);
  for (int p = 0; p < num_frames; ++p) {
    const Eigen::Index start = static_cast<Eigen::Index>(p) * cfg.hop;
    for (int i = 0; i < n; ++i) {
      frame[i] = {signal[start + i] * cfg.analysis_window[i], 0.0};
    }
    Fft(frame);
    for (int k = 0; k < k_full; ++k) spec.data(p, k) = frame[k];
  }
  return spec;
}

Eigen::VectorXd Istft(const Spectrogram& spec) {
  const StftConfig& cfg = spec.cfg;
  const int n = cfg.frame_len;
  const int hop = cfg.hop;
  const int num_frames = static_cast<int>(spec.num_frames());
  if (num_frames <= 0) throw std::invalid_argument("Istft: empty spectrogram");
  if (spec.num_bins() != cfg.num_bins()) {
    throw std::invalid_argument("Istft: bin count does not match config");
  }
  if (cfg.synthesis_window.size() != n) {
    throw std::invalid_argument("Istft: synthesis window length mismatch");
  }

  // Per-position overlap-add constant; dividing by it makes reconstruction
  // exact for any window pair with (near-)constant overlap-add.
  Eigen::VectorXd cola = Eigen::VectorXd::Zero(hop);
  for (int m = 0; m < hop; ++m) {
    for (int idx = m; idx < n; idx += hop) {
      cola[m] += cfg.analysis_window[idx] * cfg.synthesis_window[idx];
    }
  }
  if (cola.minCoeff() <= 0.0) {
    throw std::invalid_argument("Istft: windows do not cover the hop grid");
  }

  const Eigen::Index out_len = static_cast<Eigen::Index>(num_frames - 1) * hop + n;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(out_len);

  const int k_full = cfg.num_bins();
  std::vector<std::complex<double>> frame(n);
  for (int p = 0; p < num_frames; ++p) {
    for (int k = 0; k < k_full; ++k) frame[k] = spec.data(p, k);
    for (int k = k_full; k < n; ++k) frame[k] = std::conj(spec.data(p, n - k));
    Ifft(frame);
    const Eigen::Index start = static_cast<Eigen::Index>(p) * hop;
    for (int i = 0; i < n; ++i) {
      out[start + i] += frame[i].real() * cfg.synthesis_window[i];
    }
  }
  for (Eigen::Index i = 0; i < out_len; ++i) {
    out[i] /= cola[i % hop];
  }
  return out;
}

ZetaWindow ComputeZetaWindow(const StftConfig& cfg, int k) {
  const int n = cfg.frame_len;
  if (cfg.analysis_window.size() != n || cfg.synthesis_window.size() != n) {
    throw std::invalid_argument("ComputeZetaWindow: window length mismatch");
  }
  if (k < 0 || k >= n) {
    throw std::invalid_argument("ComputeZetaWindow: bin out of range");
  }
  ZetaWindow zeta;
  zeta.n_min = 1 - n;
  zeta.values.resize(2 * n - 1);
  for (int t = zeta.n_min; t <= n - 1; ++t) {
    double acc = 0.0;
    for (int m = 0; m < n; ++m) {
      const int idx = t + m;
      if (idx >= 0 && idx < n) acc += cfg.analysis_window[m] * cfg.synthesis_window[idx];
    }
    const double phase = 2.0 * M_PI * k * t / n;
    zeta.values[t - zeta.n_min] =
        acc * std::complex<double>(std::cos(phase), std::sin(phase));
  }
  return zeta;
}

Eigen::VectorXd NuWindow(const StftConfig& cfg) {
  const int n = cfg.frame_len;
  if (cfg.analysis_window.size() != n || cfg.synthesis_window.size() != n) {
    throw std::invalid_argument("NuWindow: window length mismatch");
  }
  Eigen::VectorXd nu(n);
  for (int t = 0; t < n; ++t) {
    double acc = 0.0;
    for (int m = t; m < n; ++m) {
      acc += cfg.analysis_window[m] * cfg.synthesis_window[m - t];
    }
    nu[t] = acc;
  }
  return nu;
}

bool SameConfig(const StftConfig& a, const StftConfig& b) {
  if (a.frame_len != b.frame_len || a.hop != b.hop) return false;
  if (std::abs(a.sample_rate - b.sample_rate) > 1e-9) return false;
  if (a.analysis_window.size() != b.analysis_window.size()) return false;
  if (a.synthesis_window.size() != b.synthesis_window.size()) return false;
  if ((a.analysis_window - b.analysis_window).cwiseAbs().maxCoeff() > 1e-12) return false;
  if ((a.synthesis_window - b.synthesis_window).cwiseAbs().maxCoeff() > 1e-12) return false;
  return true;
}

}  // namespace dprtf
