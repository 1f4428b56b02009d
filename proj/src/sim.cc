// sim.cc

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

#include "dprtf/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "dprtf/fft.hpp"
#include "dprtf/rng.hpp"

namespace dprtf {

namespace {

// Fractional-delay kernel width in taps (2 ms at 16 kHz).
constexpr int kFracTaps = 32;
constexpr int kHalfTaps = kFracTaps / 2;

// Adds gain * hann-windowed sinc centered at `delay` (in samples) into buf.
// The first written sample is floor(delay) - kFracTaps/2 + 1; writes falling
// outside the buffer are dropped.
void DepositSinc(Eigen::VectorXd& buf, double delay, double gain) {
  const double fdist = std::floor(delay);
  const long start = static_cast<long>(fdist) - kHalfTaps + 1;
  const double t0 = static_cast<double>(start) - delay;

  // sin(pi (t0 + n)) alternates sign, so one evaluation covers all taps;
  // the Hann factor uses the angle-addition identity with fixed tables.
  static const auto tables = [] {
    std::array<std::array<double, kFracTaps>, 2> t{};
    for (int n = 0; n < kFracTaps; ++n) {
      t[0][n] = std::cos(2.0 * M_PI * n / kFracTaps);
      t[1][n] = std::sin(2.0 * M_PI * n / kFracTaps);
    }
    return t;
  }();
  const double s0 = std::sin(M_PI * t0);
  const double ca = std::cos(2.0 * M_PI * t0 / kFracTaps);
  const double sa = std::sin(2.0 * M_PI * t0 / kFracTaps);

  double sign = 1.0;
  for (int n = 0; n < kFracTaps; ++n, sign = -sign) {
    const long idx = start + n;
    if (idx < 0 || idx >= buf.size()) continue;
    const double t = t0 + n;
    const double hann = 0.5 * (1.0 + ca * tables[0][static_cast<size_t>(n)] -
                               sa * tables[1][static_cast<size_t>(n)]);
    const double sinc = std::abs(t) < 1e-9 ? 1.0 : s0 * sign / (M_PI * t);
    buf[idx] += gain * hann * sinc;
  }
}

struct Biquad {
  double b0, b1, b2, a1, a2;
  double z1 = 0.0, z2 = 0.0;

  double Step(double x) {
    const double y = b0 * x + z1;
    z1 = b1 * x - a1 * y + z2;
    z2 = b2 * x - a2 * y;
    return y;
  }
};

// RBJ cookbook low-pass.
Biquad LowPass(double fc, double q, double fs) {
  const double w0 = 2.0 * M_PI * fc / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha;
  Biquad bq{};
  bq.b0 = (1.0 - cw) / 2.0 / a0;
  bq.b1 = (1.0 - cw) / a0;
  bq.b2 = (1.0 - cw) / 2.0 / a0;
  bq.a1 = -2.0 * cw / a0;
  bq.a2 = (1.0 - alpha) / a0;
  return bq;
}

// RBJ cookbook high-pass.
Biquad HighPass(double fc, double q, double fs) {
  const double w0 = 2.0 * M_PI * fc / fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double cw = std::cos(w0);
  const double a0 = 1.0 + alpha;
  Biquad bq{};
  bq.b0 = (1.0 + cw) / 2.0 / a0;
  bq.b1 = -(1.0 + cw) / a0;
  bq.b2 = (1.0 + cw) / 2.0 / a0;
  bq.a1 = -2.0 * cw / a0;
  bq.a2 = (1.0 - alpha) / a0;
  return bq;
}

// Stationary low-pass shaped noise with a small broadband floor, unit RMS.
Eigen::VectorXd FanShapedSignal(Eigen::Index n, double fs, uint64_t seed) {
  Rng rng(seed);
  Biquad lp = LowPass(800.0, 0.7, fs);
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = rng.Gaussian();
    out[i] = lp.Step(w) + 0.1 * w;
  }
  const double rms = std::sqrt(out.squaredNorm() / static_cast<double>(n));
  if (rms > 0.0) out /= rms;
  return out;
}

double EffectiveT60(const RoomScene& scene, double beta) {
  if (beta <= 0.0) return 0.0;
  const double v = scene.room_dims.prod();
  const double s = 2.0 * (scene.room_dims[0] * scene.room_dims[1] +
                          scene.room_dims[0] * scene.room_dims[2] +
                          scene.room_dims[1] * scene.room_dims[2]);
  const double alpha = 1.0 - beta * beta;
  return 0.161 * v / (s * (-std::log(1.0 - alpha)));
}

double SceneBeta(const RoomScene& scene) {
  double alpha;
  if (scene.absorption > 0.0) {
    if (scene.absorption > 1.0) {
      throw std::invalid_argument("SimulateRir: absorption must be in (0, 1]");
    }
    alpha = scene.absorption;
  } else {
    alpha = EyringAbsorption(scene.room_dims, scene.t60);
  }
  return std::sqrt(std::max(0.0, 1.0 - alpha));
}

Eigen::MatrixXd GenerateNoiseMatrix(const RoomScene& scene, const NoiseSpec& spec,
                                    Eigen::Index n, uint64_t seed) {
  const size_t num_mics = scene.mic_positions.size();
  const double fs = scene.sample_rate;
  Eigen::MatrixXd noise(n, static_cast<Eigen::Index>(num_mics));

  auto make_stream = [&](uint64_t stream_seed) {
    return spec.kind == NoiseSpec::Kind::kFan
               ? FanShapedSignal(n + 4 * kFracTaps, fs, stream_seed)
               : WhiteNoiseSignal(n + 4 * kFracTaps, stream_seed);
  };

  if (!spec.correlated) {
    for (size_t m = 0; m < num_mics; ++m) {
      noise.col(static_cast<Eigen::Index>(m)) = make_stream(DeriveSeed(seed, {10, m})).head(n);
    }
    return noise;
  }

  // Correlated part: one stream arriving from the noise origin with the
  // geometric inter-channel delays; independent part: fresh streams.
  std::vector<double> delays(num_mics);
  double min_delay = std::numeric_limits<double>::max();
  for (size_t m = 0; m < num_mics; ++m) {
    delays[m] = (spec.source_pos - scene.mic_positions[m]).norm() /
                scene.speed_of_sound * fs;
    min_delay = std::min(min_delay, delays[m]);
  }
  const Eigen::VectorXd base = make_stream(DeriveSeed(seed, {11}));
  const double rho = std::clamp(spec.coherence, 0.0, 1.0);
  for (size_t m = 0; m < num_mics; ++m) {
    const double delay = delays[m] - min_delay + kHalfTaps;
    const Eigen::VectorXd kernel = AnechoicKernel(delay, 1.0);
    Eigen::VectorXd corr = FftConvolve(base, kernel).segment(kHalfTaps, n);
    const Eigen::VectorXd indep = make_stream(DeriveSeed(seed, {12, m})).head(n);
    auto unit = [n](Eigen::VectorXd v) {
      const double rms = std::sqrt(v.squaredNorm() / static_cast<double>(n));
      return rms > 0.0 ? Eigen::VectorXd(v / rms) : v;
    };
    noise.col(static_cast<Eigen::Index>(m)) =
        std::sqrt(rho) * unit(corr) + std::sqrt(1.0 - rho) * unit(indep);
  }
  return noise;
}

}  // namespace

std::vector<Eigen::Vector3d> HeadMicPositions(const Eigen::Vector3d& center,
                                              double radius, double plane_offset) {
  return {
      center + Eigen::Vector3d(radius, 0.0, plane_offset),
      center + Eigen::Vector3d(0.0, -radius, -plane_offset),
      center + Eigen::Vector3d(-radius, 0.0, plane_offset),
      center + Eigen::Vector3d(0.0, radius, -plane_offset),
  };
}

void ValidateScene(const RoomScene& scene) {
  if ((scene.room_dims.array() <= 0.0).any()) {
    throw std::invalid_argument("scene: room dimensions must be positive");
  }
  if (scene.sample_rate <= 0.0) throw std::invalid_argument("scene: bad sample rate");
  if (scene.speed_of_sound <= 0.0) throw std::invalid_argument("scene: bad speed of sound");
  auto inside = [&](const Eigen::Vector3d& p) {
    return (p.array() > 0.0).all() && (p.array() < scene.room_dims.array()).all();
  };
  if (!inside(scene.source_pos)) {
    throw std::invalid_argument("scene: source position outside the room");
  }
  if (scene.mic_positions.empty()) {
    throw std::invalid_argument("scene: no microphones");
  }
  for (size_t m = 0; m < scene.mic_positions.size(); ++m) {
    if (!inside(scene.mic_positions[m])) {
      throw std::invalid_argument("scene: microphone " + std::to_string(m) +
                                  " outside the room");
    }
    if ((scene.mic_positions[m] - scene.source_pos).norm() < 0.01) {
      throw std::invalid_argument("scene: microphone " + std::to_string(m) +
                                  " coincides with the source");
    }
    for (size_t l = 0; l < m; ++l) {
      if ((scene.mic_positions[m] - scene.mic_positions[l]).norm() < 1e-6) {
        throw std::invalid_argument("scene: microphones " + std::to_string(l) +
                                    " and " + std::to_string(m) + " coincide");
      }
    }
  }
}

double EyringAbsorption(const Eigen::Vector3d& room_dims, double t60) {
  if (t60 <= 0.0) throw std::invalid_argument("EyringAbsorption: t60 must be positive");
  const double v = room_dims.prod();
  const double s = 2.0 * (room_dims[0] * room_dims[1] + room_dims[0] * room_dims[2] +
                          room_dims[1] * room_dims[2]);
  const double alpha = 1.0 - std::exp(-0.161 * v / (s * t60));
  constexpr double kMaxAlpha = 0.95;
  if (alpha > kMaxAlpha) {
    const double t60_min = 0.161 * v / (s * (-std::log(1.0 - kMaxAlpha)));
    throw std::invalid_argument(
        "EyringAbsorption: t60 " + std::to_string(t60) +
        " s is unreachable in this room; feasible range is [" +
        std::to_string(t60_min) + ", inf) s (or set absorption = 1 for anechoic)");
  }
  return alpha;
}

RirResult SimulateRir(const RoomScene& scene, int mic_index) {
  ValidateScene(scene);
  if (mic_index < 0 || mic_index >= static_cast<int>(scene.mic_positions.size())) {
    throw std::invalid_argument("SimulateRir: mic index out of range");
  }
  const double fs = scene.sample_rate;
  const double c_ts = scene.speed_of_sound / fs;  // meters per sample
  const double beta = SceneBeta(scene);
  const Eigen::Vector3d& mic = scene.mic_positions[static_cast<size_t>(mic_index)];
  const double direct_m = (scene.source_pos - mic).norm();

  Eigen::Index n;
  if (scene.max_rir_samples > 0) {
    n = scene.max_rir_samples;
  } else if (beta <= 0.0) {
    n = static_cast<Eigen::Index>(std::ceil(direct_m / c_ts)) + kFracTaps + 16;
  } else {
    n = static_cast<Eigen::Index>(std::ceil(0.85 * EffectiveT60(scene, beta) * fs)) +
        static_cast<Eigen::Index>(std::ceil(direct_m / c_ts)) + kFracTaps;
  }

  RirResult result;
  result.rir = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd direct_buf = Eigen::VectorXd::Zero(n);

  const Eigen::Vector3d room_s = scene.room_dims / c_ts;
  const Eigen::Vector3d src_s = scene.source_pos / c_ts;
  const Eigen::Vector3d mic_s = mic / c_ts;

  const int n1 = beta > 0.0 ? static_cast<int>(std::ceil(n / (2.0 * room_s[0]))) : 0;
  const int n2 = beta > 0.0 ? static_cast<int>(std::ceil(n / (2.0 * room_s[1]))) : 0;
  const int n3 = beta > 0.0 ? static_cast<int>(std::ceil(n / (2.0 * room_s[2]))) : 0;

  std::vector<double> beta_pow(static_cast<size_t>(2 * (n1 + n2 + n3) + 7), 0.0);
  beta_pow[0] = 1.0;
  for (size_t i = 1; i < beta_pow.size(); ++i) beta_pow[i] = beta_pow[i - 1] * beta;

  Rng jitter(DeriveSeed(scene.jitter_seed, {static_cast<uint64_t>(mic_index)}));

  double direct_delay = -1.0;
  double first_reflection = -1.0;

  for (int mx = -n1; mx <= n1; ++mx) {
    for (int my = -n2; my <= n2; ++my) {
      for (int mz = -n3; mz <= n3; ++mz) {
        for (int q = 0; q <= 1; ++q) {
          for (int j = 0; j <= 1; ++j) {
            for (int kz = 0; kz <= 1; ++kz) {
              const int order = std::abs(mx - q) + std::abs(mx) + std::abs(my - j) +
                                std::abs(my) + std::abs(mz - kz) + std::abs(mz);
              const double dx = 2.0 * mx * room_s[0] + (1 - 2 * q) * src_s[0] - mic_s[0];
              const double dy = 2.0 * my * room_s[1] + (1 - 2 * j) * src_s[1] - mic_s[1];
              const double dz = 2.0 * mz * room_s[2] + (1 - 2 * kz) * src_s[2] - mic_s[2];
              double dist = std::sqrt(dx * dx + dy * dy + dz * dz);
              const double gain =
                  beta_pow[static_cast<size_t>(order)] / (4.0 * M_PI * dist * c_ts);
              if (order > 0) {
                // Reflections get sub-sample jitter; the direct path stays
                // geometrically exact.
                dist += jitter.Uniform(-0.5, 0.5);
                if (gain == 0.0) continue;
                if (static_cast<long>(std::floor(dist)) - kHalfTaps + 1 >= n) continue;
                DepositSinc(result.rir, dist, gain);
                if (first_reflection < 0.0 || dist < first_reflection) {
                  first_reflection = dist;
                }
              } else {
                DepositSinc(result.rir, dist, gain);
                DepositSinc(direct_buf, dist, gain);
                direct_delay = dist;
              }
            }
          }
        }
      }
    }
  }

  result.meta.direct_delay_samples = direct_delay;
  result.meta.first_reflection_delay_samples = first_reflection;
  if (first_reflection >= 0.0) {
    result.meta.first_contaminated_sample = static_cast<int>(
        std::max(0.0, std::floor(first_reflection) - kHalfTaps + 1));
    result.meta.itdg_samples = first_reflection - direct_delay;
  }

  // Specular image sums decay slower than the diffuse Eyring prediction, so
  // a t60 target would overshoot by tens of percent.  Rescale the
  // reverberant part around the direct arrival until the Schroeder estimate
  // matches the request.  Explicit absorption settings are left untouched.
  if (scene.absorption <= 0.0 && scene.t60 > 0.0 && beta > 0.0) {
    for (int pass = 0; pass < 3; ++pass) {
      double measured;
      try {
        measured = MeasureT60(result.rir, fs);
      } catch (const std::invalid_argument&) {
        break;
      }
      if (std::abs(measured - scene.t60) <= 0.01 * scene.t60) break;
      const double rate =
          3.0 * std::log(10.0) / fs * (1.0 / scene.t60 - 1.0 / measured);
      Eigen::VectorXd rev = result.rir - direct_buf;
      for (Eigen::Index t = 0; t < n; ++t) {
        const double dt = static_cast<double>(t) - direct_delay;
        if (dt > 0.0) rev[t] *= std::exp(-rate * dt);
      }
      result.rir = direct_buf + rev;
    }
  }

  const double e_direct = direct_buf.squaredNorm();
  const double e_rev = (result.rir - direct_buf).squaredNorm();
  result.meta.drr_db = e_rev > 0.0
                           ? 10.0 * std::log10(e_direct / e_rev)
                           : std::numeric_limits<double>::infinity();
  return result;
}

Eigen::VectorXd TruncateAnechoic(const Eigen::VectorXd& rir, const RirMetadata& meta) {
  if (meta.first_contaminated_sample == -1) return rir;
  if (meta.first_contaminated_sample < -1) {
    throw std::invalid_argument(
        "TruncateAnechoic: metadata does not identify the first reflection");
  }
  Eigen::VectorXd out = rir;
  const Eigen::Index cut = std::min<Eigen::Index>(meta.first_contaminated_sample, out.size());
  out.tail(out.size() - cut).setZero();
  return out;
}

double MeasureT60(const Eigen::VectorXd& rir, double sample_rate) {
  if (rir.size() == 0) throw std::invalid_argument("MeasureT60: empty impulse response");
  if (sample_rate <= 0.0) throw std::invalid_argument("MeasureT60: bad sample rate");
  const Eigen::Index n = rir.size();

  // Backward-integrated energy decay curve in dB.
  Eigen::VectorXd edc(n);
  double acc = 0.0;
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    acc += rir[i] * rir[i];
    edc[i] = acc;
  }
  if (acc <= 0.0) throw std::invalid_argument("MeasureT60: zero-energy impulse response");
  edc = (10.0 * (edc / acc).array().max(1e-30).log10()).matrix();

  Eigen::Index t5 = -1, t25 = -1;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (t5 < 0 && edc[i] <= -5.0) t5 = i;
    if (t25 < 0 && edc[i] <= -25.0) {
      t25 = i;
      break;
    }
  }
  if (t5 < 0 || t25 < 0 || t25 <= t5 + 1) {
    throw std::invalid_argument("MeasureT60: decay range above -25 dB is too short");
  }

  // Least-squares line over the -5..-25 dB span, extrapolated to -60 dB.
  const Eigen::Index m = t25 - t5 + 1;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (Eigen::Index i = t5; i <= t25; ++i) {
    const double x = static_cast<double>(i) / sample_rate;
    sx += x;
    sy += edc[i];
    sxx += x * x;
    sxy += x * edc[i];
  }
  const double denom = m * sxx - sx * sx;
  if (denom <= 0.0) throw std::invalid_argument("MeasureT60: degenerate decay fit");
  const double slope = (m * sxy - sx * sy) / denom;
  if (slope >= 0.0) throw std::invalid_argument("MeasureT60: non-decaying response");
  return -60.0 / slope;
}

Eigen::VectorXd AnechoicKernel(double delay_samples, double gain, int min_len) {
  if (delay_samples < 0.0) {
    throw std::invalid_argument("AnechoicKernel: negative delay");
  }
  const Eigen::Index len = std::max<Eigen::Index>(
      min_len, static_cast<Eigen::Index>(std::ceil(delay_samples)) + kFracTaps);
  Eigen::VectorXd buf = Eigen::VectorXd::Zero(len);
  DepositSinc(buf, delay_samples, gain);
  return buf;
}

Eigen::VectorXd WhiteNoiseSignal(Eigen::Index n, uint64_t seed) {
  Rng rng(seed);
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = rng.Gaussian();
  return out;
}

Eigen::VectorXd SpeechShapedProbe(Eigen::Index n, double sample_rate, uint64_t seed) {
  if (n <= 0) throw std::invalid_argument("SpeechShapedProbe: empty length");
  Rng rng(seed);
  // Long-term average speech spectrum: band-pass plateau roughly 160-700 Hz,
  // 12 dB/octave skirts, and a -22 dB broadband floor for the upper formants.
  Biquad hp = HighPass(160.0, 0.7, sample_rate);
  Biquad lp = LowPass(700.0, 0.8, sample_rate);
  Eigen::VectorXd shaped(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = rng.Gaussian();
    shaped[i] = lp.Step(hp.Step(w)) + 0.08 * w;
  }

  // Syllabic gating: voiced bursts with raised-cosine edges separated by
  // pauses, each burst at its own level.
  const Eigen::Index ramp = static_cast<Eigen::Index>(0.02 * sample_rate);
  Eigen::VectorXd env = Eigen::VectorXd::Zero(n);
  Eigen::Index t = 0;
  while (t < n) {
    const Eigen::Index voiced =
        static_cast<Eigen::Index>(rng.Uniform(0.12, 0.35) * sample_rate);
    const Eigen::Index pause =
        static_cast<Eigen::Index>(rng.Uniform(0.06, 0.20) * sample_rate);
    const double level = rng.Uniform(0.5, 1.0);
    for (Eigen::Index i = 0; i < voiced && t + i < n; ++i) {
      double g = 1.0;
      if (i < ramp) g = 0.5 * (1.0 - std::cos(M_PI * i / ramp));
      const Eigen::Index from_end = voiced - 1 - i;
      if (from_end < ramp) g = std::min(g, 0.5 * (1.0 - std::cos(M_PI * from_end / ramp)));
      env[t + i] = level * g;
    }
    t += voiced + pause;
  }

  Eigen::VectorXd out = shaped.cwiseProduct(env);
  const double rms = std::sqrt(out.squaredNorm() / static_cast<double>(n));
  if (rms > 0.0) out *= 0.1 / rms;
  return out;
}

RenderBundle RenderRecording(const RoomScene& scene, const Eigen::VectorXd& source,
                             const NoiseSpec& noise, uint64_t seed,
                             const RenderOptions& options) {
  ValidateScene(scene);
  if (source.size() == 0) throw std::invalid_argument("RenderRecording: empty source");
  const size_t num_mics = scene.mic_positions.size();
  const Eigen::Index n = source.size();

  RenderBundle bundle;
  bundle.pairs = options.pairs;
  for (const auto& [i, j] : bundle.pairs) {
    if (i < 0 || j < 0 || i >= static_cast<int>(num_mics) || j >= static_cast<int>(num_mics)) {
      throw std::invalid_argument("RenderRecording: pair index out of range");
    }
  }

  if (options.rirs != nullptr) {
    if (options.rirs->size() != num_mics) {
      throw std::invalid_argument("RenderRecording: precomputed responses count mismatch");
    }
    bundle.rirs = *options.rirs;
  } else {
    bundle.rirs.reserve(num_mics);
    for (size_t m = 0; m < num_mics; ++m) {
      bundle.rirs.push_back(SimulateRir(scene, static_cast<int>(m)));
    }
  }

  bundle.speech_image.resize(n, static_cast<Eigen::Index>(num_mics));
  for (size_t m = 0; m < num_mics; ++m) {
    bundle.speech_image.col(static_cast<Eigen::Index>(m)) =
        FftConvolve(source, bundle.rirs[m].rir).head(n);
    bundle.rirs_anechoic.push_back(
        TruncateAnechoic(bundle.rirs[m].rir, bundle.rirs[m].meta));
  }
  if (options.truth_cfg != nullptr) {
    for (const auto& [i, j] : bundle.pairs) {
      bundle.dp_truth.push_back(GroundTruthDpRtf(bundle.rirs_anechoic[static_cast<size_t>(i)],
                                                 bundle.rirs_anechoic[static_cast<size_t>(j)],
                                                 *options.truth_cfg));
    }
  }

  const double p_speech =
      bundle.speech_image.col(0).squaredNorm() / static_cast<double>(n);
  if (p_speech <= 0.0) {
    throw std::invalid_argument("RenderRecording: silent source signal");
  }

  if (std::isinf(noise.snr_db) && noise.snr_db > 0.0) {
    bundle.noise_image = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(num_mics));
    bundle.noise_gain = 0.0;
    bundle.snr_measured_db = std::numeric_limits<double>::infinity();
  } else {
    Eigen::MatrixXd raw = GenerateNoiseMatrix(scene, noise, n, DeriveSeed(seed, {1}));
    const double p_noise = raw.col(0).squaredNorm() / static_cast<double>(n);
    if (p_noise <= 0.0) throw std::invalid_argument("RenderRecording: degenerate noise");
    bundle.noise_gain =
        std::sqrt(p_speech / (p_noise * std::pow(10.0, noise.snr_db / 10.0)));
    bundle.noise_image = bundle.noise_gain * raw;
    bundle.snr_measured_db =
        10.0 * std::log10(p_speech / (bundle.noise_image.col(0).squaredNorm() /
                                      static_cast<double>(n)));
  }
  bundle.mics = bundle.speech_image + bundle.noise_image;

  if (options.noise_only_len > 0) {
    if (bundle.noise_gain > 0.0) {
      bundle.noise_only =
          bundle.noise_gain * GenerateNoiseMatrix(scene, noise, options.noise_only_len,
                                                  DeriveSeed(seed, {2}));
    } else {
      bundle.noise_only =
          Eigen::MatrixXd::Zero(options.noise_only_len, static_cast<Eigen::Index>(num_mics));
    }
  }
  return bundle;
}

SteeringGrid BuildSteeringGrid(const std::vector<Eigen::Vector3d>& mics,
                               const std::vector<std::pair<int, int>>& pairs,
                               const std::vector<Direction>& directions,
                               double distance, const StftConfig& cfg,
                               int bin_lo, int bin_hi, double speed_of_sound) {
  if (mics.empty() || pairs.empty() || directions.empty()) {
    throw std::invalid_argument("BuildSteeringGrid: empty geometry");
  }
  if (bin_lo < 0 || bin_hi >= cfg.num_bins() || bin_lo > bin_hi) {
    throw std::invalid_argument("BuildSteeringGrid: band out of range");
  }
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& m : mics) centroid += m;
  centroid /= static_cast<double>(mics.size());

  SteeringGrid grid;
  grid.directions = directions;
  grid.bin_lo = bin_lo;
  grid.bin_hi = bin_hi;
  grid.steering.assign(pairs.size(),
                       Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(directions.size()),
                                              cfg.num_bins()));

  Eigen::MatrixXcd atfs(static_cast<Eigen::Index>(mics.size()), cfg.num_bins());
  for (size_t d = 0; d < directions.size(); ++d) {
    const Eigen::Vector3d src = centroid + distance * DirectionToUnit(directions[d]);
    for (size_t m = 0; m < mics.size(); ++m) {
      const double dist = (src - mics[m]).norm();
      const double delay = dist / speed_of_sound * cfg.sample_rate;
      const Eigen::VectorXd kernel = AnechoicKernel(delay, 1.0 / (4.0 * M_PI * dist));
      atfs.row(static_cast<Eigen::Index>(m)) = DirectPathAtf(kernel, cfg).transpose();
    }
    for (size_t pi = 0; pi < pairs.size(); ++pi) {
      for (int k = bin_lo; k <= bin_hi; ++k) {
        const std::complex<double> u =
            atfs(pairs[pi].first, k) * std::conj(atfs(pairs[pi].second, k));
        const double mag = std::abs(u);
        if (mag > 0.0) {
          grid.steering[pi](static_cast<Eigen::Index>(d), k) = u / mag;
        }
      }
    }
  }
  return grid;
}

TrainingSet BuildTrainingSet(const std::vector<Eigen::Vector3d>& mics,
                             const std::vector<std::pair<int, int>>& pairs,
                             const std::vector<Direction>& directions,
                             double distance, const StftConfig& cfg,
                             const EstimatorParams& params, double probe_seconds,
                             double speed_of_sound, uint64_t seed) {
  if (mics.empty() || pairs.empty() || directions.empty()) {
    throw std::invalid_argument("BuildTrainingSet: empty geometry");
  }
  const Eigen::Index probe_len =
      static_cast<Eigen::Index>(probe_seconds * cfg.sample_rate);
  if (NumFrames(probe_len, cfg) < params.avg_frames + 8) {
    throw std::invalid_argument("BuildTrainingSet: probe too short for averaging");
  }
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& m : mics) centroid += m;
  centroid /= static_cast<double>(mics.size());

  const int num_bins = params.bin_hi - params.bin_lo + 1;
  TrainingSet set;
  set.directions = directions;
  set.bin_lo = params.bin_lo;
  set.bin_hi = params.bin_hi;
  set.num_pairs = static_cast<int>(pairs.size());
  set.features.resize(static_cast<Eigen::Index>(directions.size()),
                      static_cast<Eigen::Index>(num_bins) * set.num_pairs);
  set.labels.resize(static_cast<Eigen::Index>(directions.size()), 2);
  set.masks.resize(directions.size());

  for (size_t d = 0; d < directions.size(); ++d) {
    const Eigen::Vector3d src = centroid + distance * DirectionToUnit(directions[d]);
    std::vector<Eigen::VectorXd> kernels(mics.size());
    int taps = 1;
    for (size_t m = 0; m < mics.size(); ++m) {
      const double dist = (src - mics[m]).norm();
      const double delay = dist / speed_of_sound * cfg.sample_rate;
      kernels[m] = AnechoicKernel(delay, 1.0 / (4.0 * M_PI * dist));
      taps = std::max(taps, LosslessCtfTaps(kernels[m].size(), cfg));
    }
    const Eigen::VectorXd probe = WhiteNoiseSignal(probe_len, DeriveSeed(seed, {d}));
    std::vector<Spectrogram> specs(mics.size());
    for (size_t m = 0; m < mics.size(); ++m) {
      specs[m] = Stft(FftConvolve(probe, kernels[m]).head(probe_len), cfg);
    }

    EstimatorParams local = params;
    local.num_taps = taps;
    std::vector<std::vector<PairBinEstimate>> per_pair;
    per_pair.reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
      per_pair.push_back(EstimatePairDpRtf(specs[static_cast<size_t>(i)],
                                           specs[static_cast<size_t>(j)], nullptr, local));
    }
    const DpRtfFeature feature = AssembleFeature(per_pair, params.bin_lo, params.bin_hi);
    set.features.row(static_cast<Eigen::Index>(d)) = feature.values.transpose();
    set.masks[d] = feature.mask;
    set.labels(static_cast<Eigen::Index>(d), 0) = directions[d].az_deg;
    set.labels(static_cast<Eigen::Index>(d), 1) = directions[d].el_deg;
  }
  return set;
}

std::string SceneToJsonString(const RoomScene& scene) {
  nlohmann::json j;
  j["room_dims"] = {scene.room_dims[0], scene.room_dims[1], scene.room_dims[2]};
  j["t60"] = scene.t60;
  j["absorption"] = scene.absorption;
  j["source_pos"] = {scene.source_pos[0], scene.source_pos[1], scene.source_pos[2]};
  nlohmann::json mics = nlohmann::json::array();
  for (const auto& m : scene.mic_positions) mics.push_back({m[0], m[1], m[2]});
  j["mic_positions"] = mics;
  j["speed_of_sound"] = scene.speed_of_sound;
  j["sample_rate"] = scene.sample_rate;
  j["jitter_seed"] = scene.jitter_seed;
  j["max_rir_samples"] = scene.max_rir_samples;
  return j.dump(2);
}

RoomScene SceneFromJsonString(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(std::string("scene: bad JSON: ") + e.what());
  }
  static const std::vector<std::string> known = {
      "room_dims", "t60",         "absorption",  "source_pos",     "mic_positions",
      "speed_of_sound", "sample_rate", "jitter_seed", "max_rir_samples"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("scene: unknown key '" + key + "'");
    }
  }
  auto vec3 = [](const nlohmann::json& a) {
    if (!a.is_array() || a.size() != 3) {
      throw std::invalid_argument("scene: expected a 3-vector");
    }
    return Eigen::Vector3d(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
  };
  RoomScene scene;
  if (j.contains("room_dims")) scene.room_dims = vec3(j["room_dims"]);
  if (j.contains("t60")) scene.t60 = j["t60"].get<double>();
  if (j.contains("absorption")) scene.absorption = j["absorption"].get<double>();
  if (j.contains("source_pos")) scene.source_pos = vec3(j["source_pos"]);
  if (j.contains("mic_positions")) {
    scene.mic_positions.clear();
    for (const auto& m : j["mic_positions"]) scene.mic_positions.push_back(vec3(m));
  }
  if (j.contains("speed_of_sound")) scene.speed_of_sound = j["speed_of_sound"].get<double>();
  if (j.contains("sample_rate")) scene.sample_rate = j["sample_rate"].get<double>();
  if (j.contains("jitter_seed")) scene.jitter_seed = j["jitter_seed"].get<uint64_t>();
  if (j.contains("max_rir_samples")) scene.max_rir_samples = j["max_rir_samples"].get<int>();
  return scene;
}

}  // namespace dprtf
