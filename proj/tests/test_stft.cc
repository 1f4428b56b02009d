// test_stft.cc

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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <complex>

#include "doctest.h"
#include "dprtf/stft.hpp"
#include "test_util.hpp"

using namespace dprtf;
using dprtf::test::RandomSignal;

namespace {

constexpr std::complex<double> kJ{0.0, 1.0};

StftConfig RectConfig(int frame_len, int hop) {
  StftConfig cfg;
  cfg.sample_rate = 16000.0;
  cfg.frame_len = frame_len;
  cfg.hop = hop;
  cfg.analysis_window = RectWindow(frame_len);
  cfg.synthesis_window = DualSynthesisWindow(cfg.analysis_window, hop);
  return cfg;
}

// Term-by-term evaluation of the subband kernel definition
//   zeta_k(n) = exp(j 2 pi k n / N) sum_m wa(m) ws(n + m).
std::complex<double> ZetaBruteForce(const StftConfig& cfg, int k, int n) {
  const int N = cfg.frame_len;
  double corr = 0.0;
  for (int m = 0; m < N; ++m) {
    const int idx = n + m;
    if (idx < 0 || idx >= N) continue;
    corr += cfg.analysis_window[m] * cfg.synthesis_window[idx];
  }
  return std::exp(kJ * (2.0 * M_PI * k * n / N)) * corr;
}

}  // namespace

TEST_CASE("periodic hamming window values") {
  Eigen::VectorXd w = HammingWindow(256);
  REQUIRE(w.size() == 256);
  CHECK(w[0] == doctest::Approx(0.08).epsilon(1e-12));
  CHECK(w[128] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w[64] == doctest::Approx(0.54).epsilon(1e-12));
  // Periodic symmetry: w(n) == w(N - n) for n >= 1.
  double worst = 0.0;
  for (int n = 1; n < 256; ++n) worst = std::max(worst, std::abs(w[n] - w[256 - n]));
  CHECK(worst < 1e-12);
  CHECK(RectWindow(5).minCoeff() == 1.0);
  CHECK(RectWindow(5).maxCoeff() == 1.0);
}

TEST_CASE("analysis/synthesis pairs satisfy constant overlap-add") {
  for (auto [n, l] : {std::pair{256, 128}, {256, 64}, {512, 256}, {128, 32}}) {
    StftConfig cfg = MakeStftConfig(16000.0, n, l);
    CHECK(ColaDeviation(cfg) < 1e-12);
  }
  CHECK(ColaDeviation(RectConfig(256, 128)) < 1e-12);
}

TEST_CASE("dual window of the rectangle at half overlap is constant") {
  Eigen::VectorXd dual = DualSynthesisWindow(RectWindow(64), 32);
  CHECK((dual.array() - 0.5).abs().maxCoeff() < 1e-12);
}

TEST_CASE("dual window requires positive overlapped energy") {
  // Window with a dead zone longer than the hop coverage.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(64);
  w.head(16).setOnes();
  CHECK_THROWS_AS(DualSynthesisWindow(w, 32), std::invalid_argument);
}

TEST_CASE("frame counts") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  CHECK(NumFrames(16000, cfg) == 124);
  CHECK(NumFrames(255, cfg) == 0);
  CHECK(NumFrames(256, cfg) == 1);
  CHECK(NumFrames(384, cfg) == 2);
  CHECK(NumFrames(16000 + 127, cfg) == 124);
}

TEST_CASE("stft rejects signals shorter than one frame") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  CHECK_THROWS_AS(Stft(Eigen::VectorXd::Zero(100), cfg), std::invalid_argument);
}

TEST_CASE("delta through a rectangular window gives a flat first frame") {
  StftConfig cfg = RectConfig(64, 32);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(64);
  x[0] = 1.0;
  Spectrogram spec = Stft(x, cfg);
  REQUIRE(spec.num_frames() == 1);
  REQUIRE(spec.num_bins() == 33);
  double worst = 0.0;
  for (Eigen::Index k = 0; k < spec.num_bins(); ++k)
    worst = std::max(worst, std::abs(spec.data(0, k) - 1.0));
  CHECK(worst < 1e-12);
}

TEST_CASE("integer-bin cosine concentrates in its bin") {
  const int N = 256, k0 = 10;
  StftConfig cfg = RectConfig(N, 128);
  Eigen::VectorXd x(N);
  for (int n = 0; n < N; ++n) x[n] = std::cos(2.0 * M_PI * k0 * n / N);
  Spectrogram spec = Stft(x, cfg);
  CHECK(std::abs(spec.data(0, k0) - std::complex<double>(N / 2.0, 0.0)) < 1e-9);
  double leak = 0.0;
  for (Eigen::Index k = 0; k < spec.num_bins(); ++k)
    if (k != k0) leak = std::max(leak, std::abs(spec.data(0, k)));
  CHECK(leak < 1e-9);
}

TEST_CASE("stft is linear") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  Eigen::VectorXd x = RandomSignal(2000, 1), y = RandomSignal(2000, 2);
  Spectrogram sx = Stft(x, cfg), sy = Stft(y, cfg);
  Spectrogram sm = Stft(3.0 * x - 0.5 * y, cfg);
  double worst =
      (sm.data - (3.0 * sx.data - 0.5 * sy.data)).cwiseAbs().maxCoeff();
  CHECK(worst < 1e-10);
}

TEST_CASE("frame spectra satisfy parseval with one-sided bins") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  Eigen::VectorXd x = RandomSignal(1000, 3);
  Spectrogram spec = Stft(x, cfg);
  const int N = cfg.frame_len;
  for (Eigen::Index p = 0; p < 2; ++p) {
    double windowed = 0.0;
    for (int n = 0; n < N; ++n) {
      double v = cfg.analysis_window[n] * x[p * cfg.hop + n];
      windowed += v * v;
    }
    // Reconstitute the two-sided energy from the one-sided row.
    double freq = std::norm(spec.data(p, 0)) + std::norm(spec.data(p, N / 2));
    for (int k = 1; k < N / 2; ++k) freq += 2.0 * std::norm(spec.data(p, k));
    CHECK(std::abs(freq - N * windowed) / (N * windowed) < 1e-9);
  }
}

TEST_CASE("istft reconstructs the full-overlap interior exactly") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  Eigen::VectorXd x = RandomSignal(16000, 4);
  Spectrogram spec = Stft(x, cfg);
  REQUIRE(spec.num_frames() == 124);
  Eigen::VectorXd y = Istft(spec);
  REQUIRE(y.size() == 123 * 128 + 256);
  const int lo = cfg.frame_len - cfg.hop;
  const int hi = 123 * cfg.hop + cfg.hop;
  double worst = 0.0, scale = 0.0;
  for (int n = lo; n < hi; ++n) {
    worst = std::max(worst, std::abs(y[n] - x[n]));
    scale = std::max(scale, std::abs(x[n]));
  }
  CHECK(worst / scale < 1e-10);
}

TEST_CASE("istft round trip also holds at quarter hop") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 64);
  Eigen::VectorXd x = RandomSignal(4000, 5);
  Spectrogram spec = Stft(x, cfg);
  Eigen::VectorXd y = Istft(spec);
  const int lo = cfg.frame_len - cfg.hop;
  const int hi = static_cast<int>(spec.num_frames() - 1) * cfg.hop + cfg.hop;
  double worst = 0.0;
  for (int n = lo; n < hi; ++n) worst = std::max(worst, std::abs(y[n] - x[n]));
  CHECK(worst < 1e-10);
}

TEST_CASE("zeta of rectangular windows at k=0 is triangular") {
  StftConfig cfg;
  cfg.frame_len = 64;
  cfg.hop = 32;
  cfg.analysis_window = RectWindow(64);
  cfg.synthesis_window = RectWindow(64);
  ZetaWindow z = ComputeZetaWindow(cfg, 0);
  CHECK(z.n_min == 1 - 64);
  CHECK(z.n_max() == 63);
  double worst = 0.0;
  for (int n = 1 - 64; n <= 63; ++n)
    worst = std::max(worst, std::abs(z.at(n) - std::complex<double>(64 - std::abs(n), 0.0)));
  CHECK(worst < 1e-12);
  CHECK(z.at(64) == std::complex<double>(0.0, 0.0));
  CHECK(z.at(-64) == std::complex<double>(0.0, 0.0));
}

TEST_CASE("zeta matches the direct definition on a small config") {
  StftConfig cfg = MakeStftConfig(16000.0, 16, 8);
  for (int k : {0, 1, 5, 15}) {
    ZetaWindow z = ComputeZetaWindow(cfg, k);
    double worst = 0.0;
    for (int n = -20; n <= 20; ++n)
      worst = std::max(worst, std::abs(z.at(n) - ZetaBruteForce(cfg, k, n)));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("zeta matches the direct definition with a unit synthesis window") {
  StftConfig cfg;
  cfg.frame_len = 32;
  cfg.hop = 16;
  cfg.analysis_window = HammingWindow(32);
  cfg.synthesis_window = RectWindow(32);
  ZetaWindow z = ComputeZetaWindow(cfg, 1);
  double worst = 0.0;
  for (int n = 1 - 32; n <= 31; ++n)
    worst = std::max(worst, std::abs(z.at(n) - ZetaBruteForce(cfg, 1, n)));
  CHECK(worst < 1e-12);
}

TEST_CASE("zeta spot checks at production size") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  for (int k : {5, 33, 63}) {
    ZetaWindow z = ComputeZetaWindow(cfg, k);
    for (int n : {-255, -128, -37, 0, 1, 100, 255}) {
      CHECK(std::abs(z.at(n) - ZetaBruteForce(cfg, k, n)) < 1e-12);
    }
  }
}

TEST_CASE("nu of rectangular windows decays linearly") {
  StftConfig cfg;
  cfg.frame_len = 64;
  cfg.hop = 32;
  cfg.analysis_window = RectWindow(64);
  cfg.synthesis_window = RectWindow(64);
  Eigen::VectorXd nu = NuWindow(cfg);
  REQUIRE(nu.size() == 64);
  double worst = 0.0;
  for (int t = 0; t < 64; ++t) worst = std::max(worst, std::abs(nu[t] - (64.0 - t)));
  CHECK(worst < 1e-12);
}

TEST_CASE("nu at zero lag is the window dot product") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  Eigen::VectorXd nu = NuWindow(cfg);
  CHECK(nu[0] == doctest::Approx(cfg.analysis_window.dot(cfg.synthesis_window))
                     .epsilon(1e-12));
}

TEST_CASE("nu matches the direct double sum") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  Eigen::VectorXd nu = NuWindow(cfg);
  for (int t : {0, 1, 17, 128, 255}) {
    double want = 0.0;
    for (int m = 0; m < 256; ++m) {
      const int idx = m - t;
      if (idx < 0 || idx >= 256) continue;
      want += cfg.analysis_window[m] * cfg.synthesis_window[idx];
    }
    CHECK(std::abs(nu[t] - want) < 1e-12);
  }
}

TEST_CASE("zeta at negative lags equals the phase-rotated nu") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  Eigen::VectorXd nu = NuWindow(cfg);
  for (int k : {0, 5, 40, 63}) {
    ZetaWindow z = ComputeZetaWindow(cfg, k);
    double worst = 0.0;
    for (int t = 0; t < 256; ++t) {
      auto want = std::exp(-kJ * (2.0 * M_PI * k * t / 256.0)) * nu[t];
      worst = std::max(worst, std::abs(z.at(-t) - want));
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("config comparison checks geometry and windows") {
  StftConfig a = MakeStftConfig(16000.0, 256, 128);
  StftConfig b = MakeStftConfig(16000.0, 256, 128);
  CHECK(SameConfig(a, b));
  b.hop = 64;
  CHECK_FALSE(SameConfig(a, b));
  StftConfig c = MakeStftConfig(16000.0, 256, 128);
  c.analysis_window[10] += 1e-6;
  CHECK_FALSE(SameConfig(a, c));
}
