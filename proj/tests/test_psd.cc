// test_psd.cc

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
#include <filesystem>
#include <vector>

#include "doctest.h"
#include "dprtf/psd.hpp"
#include "dprtf/rng.hpp"
#include "dprtf/stft.hpp"
#include "test_util.hpp"

using namespace dprtf;
using dprtf::test::RandomSignal;
using dprtf::test::RandomSpectrogram;

namespace {

Spectrogram ConstantSpectrogram(const StftConfig& cfg, Eigen::Index frames,
                                std::complex<double> value) {
  Spectrogram spec;
  spec.cfg = cfg;
  spec.channel_id = "const";
  spec.data.setConstant(frames, cfg.num_bins(), value);
  return spec;
}

}  // namespace

TEST_CASE("constant channel gives its squared magnitude") {
  StftConfig cfg = MakeStftConfig(16000.0, 64, 32);
  std::complex<double> c{1.5, -2.0};
  Spectrogram spec = ConstantSpectrogram(cfg, 60, c);
  PsdBlock block = EstimatePsdBlock(spec, spec, 50, 3, 4, 25);
  CHECK(block.phi_yy == doctest::Approx(std::norm(c)).epsilon(1e-12));
  REQUIRE(block.phi_zy.size() == 2 * 4 - 1);
  // Every lag product is c * conj(c) as well.
  CHECK((block.phi_zy.array() - std::norm(c)).abs().maxCoeff() < 1e-12);
}

TEST_CASE("single-frame average is the instantaneous power") {
  StftConfig cfg = MakeStftConfig(16000.0, 64, 32);
  Spectrogram x = RandomSpectrogram(cfg, 30, 61, "x");
  Spectrogram y = RandomSpectrogram(cfg, 30, 62, "y");
  const int p = 17, k = 5, q = 3;
  PsdBlock block = EstimatePsdBlock(x, y, p, k, q, 1);
  CHECK(std::abs(block.phi_yy - std::norm(y.data(p, k))) < 1e-12);
  for (int i = 0; i < q; ++i) {
    auto want = x.data(p - i, k) * std::conj(y.data(p, k));
    CHECK(std::abs(block.phi_zy[i] - want) < 1e-12);
  }
  for (int j = 1; j < q; ++j) {
    auto want = y.data(p - j, k) * std::conj(y.data(p, k));
    CHECK(std::abs(block.phi_zy[q - 1 + j] - want) < 1e-12);
  }
}

TEST_CASE("averaging matches the direct d-sum") {
  StftConfig cfg = MakeStftConfig(16000.0, 64, 32);
  Spectrogram x = RandomSpectrogram(cfg, 50, 63, "x");
  Spectrogram y = RandomSpectrogram(cfg, 50, 64, "y");
  const int p = 40, k = 9, q = 3, d_len = 7;
  PsdBlock block = EstimatePsdBlock(x, y, p, k, q, d_len);
  double want_yy = 0.0;
  Eigen::VectorXcd want_zy = Eigen::VectorXcd::Zero(2 * q - 1);
  for (int d = 0; d < d_len; ++d) {
    const int pp = p - d;
    want_yy += std::norm(y.data(pp, k));
    for (int i = 0; i < q; ++i)
      want_zy[i] += x.data(pp - i, k) * std::conj(y.data(pp, k));
    for (int j = 1; j < q; ++j)
      want_zy[q - 1 + j] += y.data(pp - j, k) * std::conj(y.data(pp, k));
  }
  CHECK(std::abs(block.phi_yy - want_yy / d_len) < 1e-12);
  CHECK((block.phi_zy - want_zy / d_len).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("insufficient history is a boundary error") {
  StftConfig cfg = MakeStftConfig(16000.0, 64, 32);
  Spectrogram spec = RandomSpectrogram(cfg, 40, 65);
  const int q = 4, d_len = 25;
  const int min_frame = (d_len - 1) + (q - 1);
  CHECK_NOTHROW(EstimatePsdBlock(spec, spec, min_frame, 0, q, d_len));
  CHECK_THROWS_AS(EstimatePsdBlock(spec, spec, min_frame - 1, 0, q, d_len),
                  std::invalid_argument);
}

TEST_CASE("white-noise power matches the window energy prediction") {
  // Hop == frame length makes frames independent, so standard errors apply.
  StftConfig cfg = MakeStftConfig(16000.0, 256, 256);
  Eigen::VectorXd x = RandomSignal(256 * 4000, 66);
  Spectrogram spec = Stft(x, cfg);
  const double window_energy =
      cfg.analysis_window.dot(cfg.analysis_window);  // E|X(p,k)|^2 per bin
  const int d_len = 25;
  for (int k : {10, 40, 100}) {
    Eigen::VectorXd power = PowerSeries(spec, k, d_len);
    double sum = 0.0;
    int count = 0;
    for (Eigen::Index p = d_len - 1; p < power.size(); p += d_len) {
      sum += power[p];
      ++count;
    }
    const double mean = sum / count;
    // Per-frame power is ~window_energy with variance window_energy^2 (complex
    // Gaussian); the mean over count*d_len frames has SE we=1/sqrt(count*D).
    const double se = window_energy / std::sqrt(1.0 * count * d_len);
    CHECK(std::abs(mean - window_energy) < 3.0 * se);
  }
}

TEST_CASE("power series starts after the averaging window") {
  StftConfig cfg = MakeStftConfig(16000.0, 64, 32);
  Spectrogram spec = RandomSpectrogram(cfg, 30, 67);
  Eigen::VectorXd power = PowerSeries(spec, 4, 10);
  REQUIRE(power.size() == 30);
  for (int p = 0; p < 9; ++p) CHECK(std::isnan(power[p]));
  double want = 0.0;
  for (int d = 0; d < 10; ++d) want += std::norm(spec.data(9 - d, 4));
  CHECK(power[9] == doctest::Approx(want / 10.0).epsilon(1e-12));
}

TEST_CASE("silence produces an all-zero profile") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  Spectrogram zero;
  zero.cfg = cfg;
  zero.data.setZero(130, cfg.num_bins());
  NoiseProfile profile = EstimateNoiseProfile(zero, zero, 4);
  CHECK(profile.phi_vv.cwiseAbs().maxCoeff() == 0.0);
  CHECK(profile.phi_uu.cwiseAbs().maxCoeff() == 0.0);
  CHECK(profile.phi_wv.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("profile rejects recordings shorter than one second") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  Spectrogram brief = RandomSpectrogram(cfg, 50, 68);  // ~0.4 s of frames
  CHECK_THROWS_WITH_AS(EstimateNoiseProfile(brief, brief, 4),
                       doctest::Contains("too short"), std::invalid_argument);
}

TEST_CASE("identical channels tie cross and auto statistics at lag zero") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  Spectrogram n = RandomSpectrogram(cfg, 200, 69);
  const int q = 4;
  NoiseProfile profile = EstimateNoiseProfile(n, n, q);
  for (int k : {0, 5, 63, 128}) {
    CHECK(std::abs(profile.phi_wv(0, k) -
                   std::complex<double>(profile.phi_vv[k], 0.0)) < 1e-12);
    CHECK(profile.phi_uu[k] == doctest::Approx(profile.phi_vv[k]).epsilon(1e-12));
  }
}

TEST_CASE("independent channels decorrelate with averaging") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  const int frames = 2000;
  Spectrogram a = RandomSpectrogram(cfg, frames, 70, "a");
  Spectrogram b = RandomSpectrogram(cfg, frames, 71, "b");
  NoiseProfile profile = EstimateNoiseProfile(a, b, 3);
  const double bound = 5.0 / std::sqrt(static_cast<double>(frames));
  for (int k : {5, 30, 63}) {
    CHECK(std::abs(profile.phi_wv(0, k)) < bound * profile.phi_vv[k]);
  }
}

TEST_CASE("subtracting a zero profile is the identity") {
  StftConfig cfg = MakeStftConfig(16000.0, 64, 32);
  Spectrogram x = RandomSpectrogram(cfg, 60, 72, "x");
  Spectrogram y = RandomSpectrogram(cfg, 60, 73, "y");
  PsdBlock block = EstimatePsdBlock(x, y, 50, 7, 3, 20);
  NoiseProfile zero;
  zero.num_taps = 3;
  zero.phi_vv = Eigen::VectorXd::Zero(cfg.num_bins());
  zero.phi_uu = Eigen::VectorXd::Zero(cfg.num_bins());
  zero.phi_wv = Eigen::MatrixXcd::Zero(5, cfg.num_bins());
  PsdBlock same = SpectralSubtract(block, zero);
  CHECK(same.phi_yy == block.phi_yy);
  CHECK((same.phi_zy - block.phi_zy).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("self-subtraction leaves near-zero residual on average") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  const int q = 3, d_len = 25;
  // Long stationary noise: the profile from one stretch, blocks from another.
  // Each 25-frame block keeps a chi-square fluctuation of roughly 0.25
  // phi_vv, so the subtraction claim is about the signed mean (bias), not
  // the per-block magnitude.
  Spectrogram noise = RandomSpectrogram(cfg, 4000, 74);
  NoiseProfile profile = EstimateNoiseProfile(noise, noise, q);
  Spectrogram fresh = RandomSpectrogram(cfg, 2000, 75);
  const int k = 20;
  double residual = 0.0;
  int count = 0;
  for (int p = d_len + q; p < 2000; p += d_len) {
    PsdBlock block = EstimatePsdBlock(fresh, fresh, p, k, q, d_len);
    PsdBlock sub = SpectralSubtract(block, profile);
    residual += sub.phi_yy;
    ++count;
  }
  CHECK(std::abs(residual / count) < 0.1 * profile.phi_vv[k]);
}

TEST_CASE("subtraction recovers clean statistics at 10 db snr") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  const int q = 2, d_len = 25, k = 15;
  // Clean component 10x the noise power per bin.
  Spectrogram clean = RandomSpectrogram(cfg, 3000, 76, "s");
  for (Eigen::Index p = 0; p < clean.num_frames(); ++p)
    clean.data.row(p) *= std::sqrt(10.0) / std::sqrt(2.0);
  Spectrogram noise = RandomSpectrogram(cfg, 3000, 77, "v");
  noise.data /= std::sqrt(2.0);
  Spectrogram mix = clean;
  mix.data += noise.data;

  Spectrogram cal = RandomSpectrogram(cfg, 3000, 78, "cal");
  cal.data /= std::sqrt(2.0);
  NoiseProfile profile = EstimateNoiseProfile(cal, cal, q);

  std::vector<double> rel;
  for (int p = d_len + q; p < 3000; p += d_len) {
    PsdBlock noisy = EstimatePsdBlock(mix, mix, p, k, q, d_len);
    PsdBlock ref = EstimatePsdBlock(clean, clean, p, k, q, d_len);
    PsdBlock sub = SpectralSubtract(noisy, profile);
    rel.push_back(std::abs(sub.phi_yy - ref.phi_yy) / ref.phi_yy);
  }
  std::sort(rel.begin(), rel.end());
  CHECK(rel[rel.size() / 2] < 0.2);
}

TEST_CASE("frame selection applies a strict threshold above the floor") {
  Eigen::VectorXd power(8);
  power << 1.0, 5.0, 1.79, 1.81, 1.8, 9.0, NAN, 2.0;
  std::vector<int> picked = SelectFrames(power, 1.0, 1.8, 2);
  // Frames 0,1 are below min_frame; 1.8 is not > 1.8; NaN never passes.
  CHECK(picked == std::vector<int>{3, 5, 7});
}

TEST_CASE("selection shrinks as the threshold grows") {
  StftConfig cfg = MakeStftConfig(16000.0, 64, 32);
  Spectrogram spec = RandomSpectrogram(cfg, 300, 79);
  Eigen::VectorXd power = PowerSeries(spec, 3, 25);
  std::vector<int> loose = SelectFrames(power, 2.0, 1.2, 24);
  std::vector<int> tight = SelectFrames(power, 2.0, 1.8, 24);
  CHECK(std::includes(loose.begin(), loose.end(), tight.begin(), tight.end()));
  CHECK(SelectFrames(power, 2.0, 1e12, 24).empty());
}

TEST_CASE("noise-only selection rate stays below 15 percent") {
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  Eigen::VectorXd v = RandomSignal(16000 * 4, 80);
  Spectrogram spec = Stft(v, cfg);
  NoiseProfile profile = EstimateNoiseProfile(spec, spec, 1);
  const int d_len = 25;
  double worst = 0.0;
  for (int k = 5; k <= 63; ++k) {
    Eigen::VectorXd power = PowerSeries(spec, k, d_len);
    std::vector<int> picked = SelectFrames(power, profile.phi_vv[k], 1.8, d_len - 1);
    const double usable = static_cast<double>(power.size() - (d_len - 1));
    worst = std::max(worst, picked.size() / usable);
  }
  CHECK(worst < 0.15);
}

TEST_CASE("profiles round trip through disk") {
  namespace fs = std::filesystem;
  StftConfig cfg = MakeStftConfig(16000.0, 256, 128);
  Spectrogram a = RandomSpectrogram(cfg, 150, 81, "a");
  Spectrogram b = RandomSpectrogram(cfg, 150, 82, "b");
  NoiseProfile profile = EstimateNoiseProfile(a, b, 4);

  fs::path dir = fs::temp_directory_path() / "dprtf_psd_tests";
  fs::create_directories(dir);
  std::string path = (dir / "profile.json").string();
  SaveNoiseProfile(path, profile);
  NoiseProfile r = LoadNoiseProfile(path);
  CHECK(r.num_taps == profile.num_taps);
  CHECK(r.sample_rate == profile.sample_rate);
  CHECK(r.frame_len == profile.frame_len);
  CHECK(r.hop == profile.hop);
  CHECK((r.phi_vv - profile.phi_vv).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.phi_uu - profile.phi_uu).cwiseAbs().maxCoeff() == 0.0);
  CHECK((r.phi_wv - profile.phi_wv).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("psd variance shrinks with the averaging length") {
  StftConfig cfg = MakeStftConfig(16000.0, 64, 64);
  Spectrogram spec = RandomSpectrogram(cfg, 8000, 83);
  const int k = 7;
  auto block_variance = [&](int d_len) {
    double sum = 0.0, sumsq = 0.0;
    int count = 0;
    for (int p = d_len - 1; p < 8000; p += d_len) {
      PsdBlock b = EstimatePsdBlock(spec, spec, p, k, 1, d_len);
      sum += b.phi_yy;
      sumsq += b.phi_yy * b.phi_yy;
      ++count;
    }
    double mean = sum / count;
    return sumsq / count - mean * mean;
  };
  // 1/D scaling: D=4 vs D=16 should shrink variance by ~4x; allow slack.
  const double v4 = block_variance(4);
  const double v16 = block_variance(16);
  CHECK(v16 < v4 / 2.0);
}
