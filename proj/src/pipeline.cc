// pipeline.cc

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

#include "dprtf/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

#include "dprtf/rng.hpp"
#include "dprtf/wav.hpp"

namespace dprtf {

namespace {

using nlohmann::json;

const std::set<std::string>& KnownMethods() {
  static const std::set<std::string> methods = {"dprtf", "rtf-mtf", "rtf-ct",
                                                "srp-phat"};
  return methods;
}

void CheckKeys(const json& j, const std::set<std::string>& allowed,
               const std::string& ctx) {
  if (!j.is_object()) {
    throw ConfigError("config: expected an object at '" + ctx + "'");
  }
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (allowed.find(key) == allowed.end()) {
      throw ConfigError("config: unknown key '" +
                        (ctx.empty() ? key : ctx + "." + key) + "'");
    }
  }
}

Eigen::Vector3d Vec3(const json& a, const std::string& ctx) {
  if (!a.is_array() || a.size() != 3) {
    throw ConfigError("config: '" + ctx + "' must be a 3-element array");
  }
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

void DeepMerge(json& base, const json& overlay) {
  if (!base.is_object() || !overlay.is_object()) {
    base = overlay;
    return;
  }
  for (const auto& [key, value] : overlay.items()) {
    if (base.contains(key) && base[key].is_object() && value.is_object()) {
      DeepMerge(base[key], value);
    } else {
      base[key] = value;
    }
  }
}

json LoadJsonFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: bad JSON in " + path + ": " + e.what());
  }
}

json ResolveIncludes(json doc, const std::string& base_dir, int depth) {
  if (depth > 8) throw ConfigError("config: include nesting too deep");
  if (!doc.is_object() || !doc.contains("include")) return doc;
  std::vector<std::string> includes;
  const json& inc = doc["include"];
  if (inc.is_string()) {
    includes.push_back(inc.get<std::string>());
  } else if (inc.is_array()) {
    for (const auto& p : inc) includes.push_back(p.get<std::string>());
  } else {
    throw ConfigError("config: 'include' must be a path or list of paths");
  }
  doc.erase("include");
  json merged = json::object();
  for (const auto& rel : includes) {
    const std::filesystem::path p =
        std::filesystem::path(rel).is_absolute()
            ? std::filesystem::path(rel)
            : std::filesystem::path(base_dir) / rel;
    json sub = ResolveIncludes(LoadJsonFile(p.string()), p.parent_path().string(),
                               depth + 1);
    DeepMerge(merged, sub);
  }
  DeepMerge(merged, doc);
  return merged;
}

PipelineConfig ParseConfig(const json& j) {
  PipelineConfig cfg;
  CheckKeys(j, {"stft", "band", "estimator", "coherence", "room", "array", "train",
                "test", "methods", "seed"},
            "");

  if (j.contains("stft")) {
    const json& s = j["stft"];
    CheckKeys(s, {"sample_rate", "frame_len", "hop"}, "stft");
    cfg.stft.sample_rate = s.value("sample_rate", cfg.stft.sample_rate);
    cfg.stft.frame_len = s.value("frame_len", cfg.stft.frame_len);
    cfg.stft.hop = s.value("hop", cfg.stft.hop);
  }
  if (j.contains("band")) {
    const json& s = j["band"];
    CheckKeys(s, {"lo", "hi"}, "band");
    cfg.band.lo = s.value("lo", cfg.band.lo);
    cfg.band.hi = s.value("hi", cfg.band.hi);
  }
  if (j.contains("estimator")) {
    const json& s = j["estimator"];
    CheckKeys(s, {"avg_frames", "gamma", "taps_t60_factor", "ridge", "ridge_eps"},
              "estimator");
    cfg.estimator.avg_frames = s.value("avg_frames", cfg.estimator.avg_frames);
    cfg.estimator.gamma = s.value("gamma", cfg.estimator.gamma);
    cfg.estimator.taps_t60_factor =
        s.value("taps_t60_factor", cfg.estimator.taps_t60_factor);
    cfg.estimator.ridge = s.value("ridge", cfg.estimator.ridge);
    cfg.estimator.ridge_eps = s.value("ridge_eps", cfg.estimator.ridge_eps);
  }
  if (j.contains("coherence")) {
    const json& s = j["coherence"];
    CheckKeys(s, {"block_frames", "threshold_factor"}, "coherence");
    cfg.coherence.block_frames = s.value("block_frames", cfg.coherence.block_frames);
    cfg.coherence.threshold_factor =
        s.value("threshold_factor", cfg.coherence.threshold_factor);
  }
  if (j.contains("room")) {
    const json& s = j["room"];
    CheckKeys(s, {"dims", "array_center", "speed_of_sound"}, "room");
    if (s.contains("dims")) cfg.room.dims = Vec3(s["dims"], "room.dims");
    if (s.contains("array_center")) {
      cfg.room.array_center = Vec3(s["array_center"], "room.array_center");
    }
    cfg.room.speed_of_sound = s.value("speed_of_sound", cfg.room.speed_of_sound);
  }
  if (j.contains("array")) {
    const json& s = j["array"];
    CheckKeys(s, {"radius", "plane_offset"}, "array");
    cfg.array.radius = s.value("radius", cfg.array.radius);
    cfg.array.plane_offset = s.value("plane_offset", cfg.array.plane_offset);
  }
  if (j.contains("train")) {
    const json& s = j["train"];
    CheckKeys(s, {"az_lo", "az_hi", "n_az", "el_lo", "el_hi", "n_el", "distance",
                  "probe_seconds", "num_components", "ridge_scale", "max_iters"},
              "train");
    cfg.train.az_lo = s.value("az_lo", cfg.train.az_lo);
    cfg.train.az_hi = s.value("az_hi", cfg.train.az_hi);
    cfg.train.n_az = s.value("n_az", cfg.train.n_az);
    cfg.train.el_lo = s.value("el_lo", cfg.train.el_lo);
    cfg.train.el_hi = s.value("el_hi", cfg.train.el_hi);
    cfg.train.n_el = s.value("n_el", cfg.train.n_el);
    cfg.train.distance = s.value("distance", cfg.train.distance);
    cfg.train.probe_seconds = s.value("probe_seconds", cfg.train.probe_seconds);
    cfg.train.num_components = s.value("num_components", cfg.train.num_components);
    cfg.train.ridge_scale = s.value("ridge_scale", cfg.train.ridge_scale);
    cfg.train.max_iters = s.value("max_iters", cfg.train.max_iters);
  }
  if (j.contains("test")) {
    const json& s = j["test"];
    CheckKeys(s, {"conditions", "trials", "num_directions", "distance",
                  "speech_seconds", "noise_seconds", "noise_kind",
                  "noise_correlated", "noise_coherence"},
              "test");
    if (s.contains("conditions")) {
      cfg.test.conditions.clear();
      for (const auto& c : s["conditions"]) {
        CheckKeys(c, {"t60", "snr_db"}, "test.conditions[]");
        Condition cond;
        cond.t60 = c.value("t60", cond.t60);
        if (c.contains("snr_db")) {
          if (c["snr_db"].is_string() && c["snr_db"].get<std::string>() == "inf") {
            cond.snr_db = std::numeric_limits<double>::infinity();
          } else {
            cond.snr_db = c["snr_db"].get<double>();
          }
        }
        cfg.test.conditions.push_back(cond);
      }
    }
    cfg.test.trials = s.value("trials", cfg.test.trials);
    cfg.test.num_directions = s.value("num_directions", cfg.test.num_directions);
    cfg.test.distance = s.value("distance", cfg.test.distance);
    cfg.test.speech_seconds = s.value("speech_seconds", cfg.test.speech_seconds);
    cfg.test.noise_seconds = s.value("noise_seconds", cfg.test.noise_seconds);
    cfg.test.noise_kind = s.value("noise_kind", cfg.test.noise_kind);
    cfg.test.noise_correlated = s.value("noise_correlated", cfg.test.noise_correlated);
    cfg.test.noise_coherence = s.value("noise_coherence", cfg.test.noise_coherence);
  }
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& m : j["methods"]) cfg.methods.push_back(m.get<std::string>());
  }
  if (j.contains("seed")) cfg.seed = j["seed"].get<uint64_t>();

  // Value validation.
  if (cfg.stft.sample_rate <= 0 || cfg.stft.frame_len <= 0 || cfg.stft.hop <= 0 ||
      cfg.stft.hop > cfg.stft.frame_len) {
    throw ConfigError("config: invalid stft geometry");
  }
  if (cfg.band.lo < 0 || cfg.band.hi < cfg.band.lo ||
      cfg.band.hi > cfg.stft.frame_len / 2) {
    throw ConfigError("config: band must satisfy 0 <= lo <= hi <= frame_len/2");
  }
  if (cfg.estimator.avg_frames <= 0) throw ConfigError("config: avg_frames must be positive");
  if (cfg.estimator.gamma <= 0) throw ConfigError("config: gamma must be positive");
  if (cfg.coherence.block_frames <= 0) {
    throw ConfigError("config: block_frames must be positive");
  }
  if (cfg.train.n_az <= 0 || cfg.train.n_el <= 0) {
    throw ConfigError("config: training grid must be non-empty");
  }
  if (cfg.train.num_components <= 0) {
    throw ConfigError("config: num_components must be positive");
  }
  if (cfg.test.conditions.empty()) throw ConfigError("config: no test conditions");
  for (const auto& c : cfg.test.conditions) {
    if (c.t60 < 0) {
      throw ConfigError("config: condition t60 must be >= 0 (0 = anechoic)");
    }
  }
  if (cfg.test.trials <= 0 || cfg.test.num_directions <= 0) {
    throw ConfigError("config: trials and num_directions must be positive");
  }
  if (cfg.test.speech_seconds <= 0 || cfg.test.noise_seconds < 1.0) {
    throw ConfigError("config: speech_seconds must be positive and noise_seconds >= 1");
  }
  if (cfg.test.noise_kind != "fan" && cfg.test.noise_kind != "white") {
    throw ConfigError("config: noise_kind must be 'fan' or 'white'");
  }
  if (cfg.methods.empty()) throw ConfigError("config: methods must be non-empty");
  for (const auto& m : cfg.methods) {
    if (KnownMethods().find(m) == KnownMethods().end()) {
      throw ConfigError("config: unknown method '" + m + "'");
    }
  }
  return cfg;
}

json ConfigToJsonValue(const PipelineConfig& cfg) {
  json j;
  j["stft"] = {{"sample_rate", cfg.stft.sample_rate},
               {"frame_len", cfg.stft.frame_len},
               {"hop", cfg.stft.hop}};
  j["band"] = {{"lo", cfg.band.lo}, {"hi", cfg.band.hi}};
  j["estimator"] = {{"avg_frames", cfg.estimator.avg_frames},
                    {"gamma", cfg.estimator.gamma},
                    {"taps_t60_factor", cfg.estimator.taps_t60_factor},
                    {"ridge", cfg.estimator.ridge},
                    {"ridge_eps", cfg.estimator.ridge_eps}};
  j["coherence"] = {{"block_frames", cfg.coherence.block_frames},
                    {"threshold_factor", cfg.coherence.threshold_factor}};
  j["room"] = {{"dims", {cfg.room.dims[0], cfg.room.dims[1], cfg.room.dims[2]}},
               {"array_center",
                {cfg.room.array_center[0], cfg.room.array_center[1],
                 cfg.room.array_center[2]}},
               {"speed_of_sound", cfg.room.speed_of_sound}};
  j["array"] = {{"radius", cfg.array.radius},
                {"plane_offset", cfg.array.plane_offset}};
  j["train"] = {{"az_lo", cfg.train.az_lo},
                {"az_hi", cfg.train.az_hi},
                {"n_az", cfg.train.n_az},
                {"el_lo", cfg.train.el_lo},
                {"el_hi", cfg.train.el_hi},
                {"n_el", cfg.train.n_el},
                {"distance", cfg.train.distance},
                {"probe_seconds", cfg.train.probe_seconds},
                {"num_components", cfg.train.num_components},
                {"ridge_scale", cfg.train.ridge_scale},
                {"max_iters", cfg.train.max_iters}};
  json conds = json::array();
  for (const auto& c : cfg.test.conditions) {
    json cj;
    cj["t60"] = c.t60;
    if (std::isinf(c.snr_db)) {
      cj["snr_db"] = "inf";
    } else {
      cj["snr_db"] = c.snr_db;
    }
    conds.push_back(cj);
  }
  j["test"] = {{"conditions", conds},
               {"trials", cfg.test.trials},
               {"num_directions", cfg.test.num_directions},
               {"distance", cfg.test.distance},
               {"speech_seconds", cfg.test.speech_seconds},
               {"noise_seconds", cfg.test.noise_seconds},
               {"noise_kind", cfg.test.noise_kind},
               {"noise_correlated", cfg.test.noise_correlated},
               {"noise_coherence", cfg.test.noise_coherence}};
  j["methods"] = cfg.methods;
  j["seed"] = cfg.seed;
  return j;
}

double WrapDeg(double deg) {
  double d = std::fmod(deg + 180.0, 360.0);
  if (d < 0) d += 360.0;
  return d - 180.0;
}

double AngularError(double a, double b) { return std::abs(WrapDeg(a - b)); }

std::string Fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

Eigen::Vector3d NoiseSourcePosition(const PipelineConfig& cfg) {
  return {0.15 * cfg.room.dims[0], 0.85 * cfg.room.dims[1], 0.25 * cfg.room.dims[2]};
}

RoomScene SceneForTrial(const PipelineConfig& cfg, const Condition& cond,
                        const Direction& truth, uint64_t jitter_seed) {
  RoomScene scene;
  scene.room_dims = cfg.room.dims;
  scene.t60 = cond.t60;
  scene.absorption = cond.t60 <= 0.0 ? 1.0 : -1.0;
  scene.source_pos =
      cfg.room.array_center + cfg.test.distance * DirectionToUnit(truth);
  scene.mic_positions = ArrayMicPositions(cfg);
  scene.speed_of_sound = cfg.room.speed_of_sound;
  scene.sample_rate = cfg.stft.sample_rate;
  scene.jitter_seed = jitter_seed;
  return scene;
}

NoiseSpec NoiseForCondition(const PipelineConfig& cfg, const Condition& cond) {
  NoiseSpec spec;
  spec.kind = cfg.test.noise_kind == "white" ? NoiseSpec::Kind::kWhite
                                             : NoiseSpec::Kind::kFan;
  spec.snr_db = cond.snr_db;
  spec.correlated = cfg.test.noise_correlated;
  spec.coherence = cfg.test.noise_coherence;
  spec.source_pos = NoiseSourcePosition(cfg);
  return spec;
}

struct PreparedChannels {
  std::vector<Spectrogram> mix;
  std::vector<NoiseProfile> profiles;  // one per pair; empty if noise-free
  bool has_noise = false;
  EstimatorParams params;
};

PreparedChannels PrepareChannels(const PipelineConfig& cfg, const StftConfig& stft,
                                 double t60, const Eigen::MatrixXd& mixture,
                                 const Eigen::MatrixXd* noise_only) {
  if (mixture.cols() != 4) {
    throw DataError("expected a 4-channel recording, got " +
                    std::to_string(mixture.cols()) + " channels");
  }
  PreparedChannels prep;
  prep.params = MakeEstimatorParams(cfg, t60);
  for (Eigen::Index m = 0; m < mixture.cols(); ++m) {
    prep.mix.push_back(Stft(mixture.col(m), stft, "ch" + std::to_string(m)));
  }
  if (noise_only != nullptr && noise_only->size() > 0 &&
      noise_only->cwiseAbs().maxCoeff() > 0.0) {
    if (noise_only->cols() != mixture.cols()) {
      throw DataError("noise recording channel count does not match the mixture");
    }
    prep.has_noise = true;
    std::vector<Spectrogram> noise_specs;
    for (Eigen::Index m = 0; m < noise_only->cols(); ++m) {
      noise_specs.push_back(Stft(noise_only->col(m), stft));
    }
    for (const auto& [i, j] : kMicPairs) {
      prep.profiles.push_back(EstimateNoiseProfile(
          noise_specs[static_cast<size_t>(i)], noise_specs[static_cast<size_t>(j)],
          prep.params.num_taps));
    }
  }
  return prep;
}

struct MethodRun {
  MethodEstimate estimate;
  bool is_feature_method = false;
  std::vector<std::vector<PairBinEstimate>> per_pair;
  DpRtfFeature feature;
};

MethodRun RunMethod(const PipelineConfig& cfg, const TrialContext& ctx,
                    const PreparedChannels& prep, const std::string& method) {
  MethodRun run;
  const int num_pairs = static_cast<int>(kMicPairs.size());

  if (method == "srp-phat") {
    std::vector<std::pair<const Spectrogram*, const Spectrogram*>> pair_specs;
    std::vector<std::vector<std::vector<int>>> active(kMicPairs.size());
    for (size_t pi = 0; pi < kMicPairs.size(); ++pi) {
      const auto& [i, j] = kMicPairs[pi];
      pair_specs.push_back({&prep.mix[static_cast<size_t>(i)],
                            &prep.mix[static_cast<size_t>(j)]});
      const NoiseProfile* profile = prep.has_noise ? &prep.profiles[pi] : nullptr;
      for (int k = cfg.band.lo; k <= cfg.band.hi; ++k) {
        const Eigen::VectorXd power =
            PowerSeries(prep.mix[static_cast<size_t>(j)], k, prep.params.avg_frames);
        const double noise_power = profile != nullptr ? profile->phi_vv[k] : 0.0;
        active[pi].push_back(SelectFrames(power, noise_power, prep.params.gamma,
                                          prep.params.avg_frames - 1));
      }
    }
    const SrpResult srp = SrpPhat(pair_specs, ctx.grid, active);
    run.estimate.has_estimate = srp.terms > 0;
    run.estimate.az_deg = srp.direction.az_deg;
    run.estimate.el_deg = srp.direction.el_deg;
    run.estimate.valid_fraction = srp.terms > 0 ? 1.0 : 0.0;
    return run;
  }

  run.is_feature_method = true;
  for (const auto& [i, j] : kMicPairs) {
    const size_t pi = run.per_pair.size();
    const NoiseProfile* profile = prep.has_noise ? &prep.profiles[pi] : nullptr;
    const Spectrogram& sx = prep.mix[static_cast<size_t>(i)];
    const Spectrogram& sy = prep.mix[static_cast<size_t>(j)];
    if (method == "dprtf") {
      run.per_pair.push_back(EstimatePairDpRtf(sx, sy, profile, prep.params));
    } else if (method == "rtf-mtf") {
      run.per_pair.push_back(RtfMtf(sx, sy, profile, prep.params));
    } else if (method == "rtf-ct") {
      CoherenceConfig coh;
      coh.block_frames = cfg.coherence.block_frames;
      coh.threshold_factor = cfg.coherence.threshold_factor;
      run.per_pair.push_back(RtfCt(sx, sy, profile, coh, prep.params));
    } else {
      throw ConfigError("unknown method '" + method + "'");
    }
  }
  run.feature = AssembleFeature(run.per_pair, cfg.band.lo, cfg.band.hi);

  Eigen::VectorXd real_values;
  std::vector<uint8_t> real_mask;
  RealifyFeature(run.feature.values, run.feature.mask, &real_values, &real_mask);
  const Prediction pred = Predict(ctx.model, real_values, real_mask);
  run.estimate.has_estimate = pred.has_estimate;
  if (pred.has_estimate) {
    // The mapping is only trained inside the direction grid; keep estimates
    // there, matching the steered methods' search field.
    run.estimate.az_deg = std::clamp(pred.output[0], cfg.train.az_lo, cfg.train.az_hi);
    run.estimate.el_deg = std::clamp(pred.output[1], cfg.train.el_lo, cfg.train.el_hi);
  }
  double valid = 0.0;
  for (uint8_t m : run.feature.mask) valid += m;
  run.estimate.valid_fraction =
      run.feature.mask.empty() ? 0.0 : valid / static_cast<double>(run.feature.mask.size());
  (void)num_pairs;
  return run;
}

struct TrialBundle {
  RoomScene scene;
  RenderBundle bundle;
};

TrialBundle RenderTrial(const PipelineConfig& cfg, const StftConfig& stft,
                        const Condition& cond, const Direction& truth,
                        uint64_t trial_seed, const std::vector<RirResult>* rirs) {
  TrialBundle tb;
  tb.scene = SceneForTrial(cfg, cond, truth, DeriveSeed(trial_seed, {5}));
  const Eigen::Index speech_len =
      static_cast<Eigen::Index>(cfg.test.speech_seconds * cfg.stft.sample_rate);
  const Eigen::VectorXd speech =
      SpeechShapedProbe(speech_len, cfg.stft.sample_rate, DeriveSeed(trial_seed, {0}));
  RenderOptions options;
  options.noise_only_len =
      static_cast<Eigen::Index>(cfg.test.noise_seconds * cfg.stft.sample_rate);
  options.rirs = rirs;
  options.truth_cfg = &stft;
  tb.bundle = RenderRecording(tb.scene, speech, NoiseForCondition(cfg, cond),
                              trial_seed, options);
  return tb;
}

TrialResult EvaluateTrial(const PipelineConfig& cfg, const TrialContext& ctx,
                          const PreparedChannels& prep, const Direction& truth,
                          const std::vector<DirectPathTruth>* dp_truth,
                          double snr_measured_db) {
  TrialResult result;
  result.truth = truth;
  result.snr_measured_db = snr_measured_db;

  for (const std::string& method : cfg.methods) {
    const auto start = std::chrono::steady_clock::now();
    const MethodRun run = RunMethod(cfg, ctx, prep, method);
    MethodOutcome outcome;
    outcome.seconds = std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - start)
                          .count();
    outcome.estimate = run.estimate;
    if (run.estimate.has_estimate) {
      outcome.az_err_deg = AngularError(run.estimate.az_deg, truth.az_deg);
      outcome.el_err_deg = AngularError(run.estimate.el_deg, truth.el_deg);
    } else {
      outcome.az_err_deg = std::numeric_limits<double>::quiet_NaN();
      outcome.el_err_deg = std::numeric_limits<double>::quiet_NaN();
    }
    if (run.is_feature_method && dp_truth != nullptr) {
      std::vector<double> dists;
      for (size_t pi = 0; pi < run.per_pair.size(); ++pi) {
        const DirectPathTruth& dp = (*dp_truth)[pi];
        for (size_t b = 0; b < run.per_pair[pi].size(); ++b) {
          const int k = cfg.band.lo + static_cast<int>(b);
          const PairBinEstimate& est = run.per_pair[pi][b];
          if (!est.valid || !dp.valid[static_cast<size_t>(k)]) continue;
          dists.push_back(std::abs(est.value - NormalizeDpRtf(dp.ratio[k])));
        }
      }
      outcome.dp_dist_median = Median(std::move(dists));
    } else {
      outcome.dp_dist_median = std::numeric_limits<double>::quiet_NaN();
    }
    result.methods[method] = outcome;
  }
  return result;
}

// Accumulates per-condition method statistics and deterministic trial rows.
class ReportBuilder {
 public:
  explicit ReportBuilder(const PipelineConfig& cfg) : cfg_(cfg) {
    report_.config_echo = ConfigToJsonString(cfg);
    report_.trial_rows.push_back(
        "condition,t60,snr_db,trial,method,truth_az,truth_el,est_az,est_el,"
        "az_err,el_err,dp_dist,valid_fraction,has_estimate");
  }

  void AddTrial(size_t cond_idx, const Condition& cond, int trial,
                const TrialResult& result) {
    ++trials_;
    for (const auto& [method, outcome] : result.methods) {
      const MethodEstimate& est = outcome.estimate;
      if (est.has_estimate) {
        ++estimates_[method];
        az_[method].push_back(outcome.az_err_deg);
        el_[method].push_back(outcome.el_err_deg);
        if (outcome.az_err_deg > 15.0) ++outliers_[method];
      } else {
        ++outliers_[method];
      }
      if (!std::isnan(outcome.dp_dist_median)) {
        dp_[method].push_back(outcome.dp_dist_median);
      }
      vf_[method].push_back(est.valid_fraction);
      seconds_[method] += outcome.seconds;

      const Direction& truth = result.truth;
      report_.trial_rows.push_back(
          std::to_string(cond_idx) + "," + Fmt(cond.t60) + "," + Fmt(cond.snr_db) +
          "," + std::to_string(trial) + "," + method + "," + Fmt(truth.az_deg) +
          "," + Fmt(truth.el_deg) + "," + Fmt(est.has_estimate ? est.az_deg : NAN) +
          "," + Fmt(est.has_estimate ? est.el_deg : NAN) + "," +
          Fmt(outcome.az_err_deg) + "," + Fmt(outcome.el_err_deg) + "," +
          Fmt(outcome.dp_dist_median) + "," + Fmt(est.valid_fraction) + "," +
          (est.has_estimate ? "1" : "0"));
    }
  }

  void FinishCondition(const Condition& cond) {
    for (const std::string& method : cfg_.methods) {
      ConditionStats stats;
      stats.cond = cond;
      stats.method = method;
      stats.trials = trials_;
      stats.estimates = estimates_[method];
      const auto& az = az_[method];
      const auto& el = el_[method];
      stats.az_err_median = Median(az);
      stats.el_err_median = Median(el);
      stats.az_err_mean =
          az.empty() ? NAN : std::accumulate(az.begin(), az.end(), 0.0) / az.size();
      stats.el_err_mean =
          el.empty() ? NAN : std::accumulate(el.begin(), el.end(), 0.0) / el.size();
      stats.outlier_rate =
          trials_ == 0 ? 0.0
                       : static_cast<double>(outliers_[method]) /
                             static_cast<double>(trials_);
      stats.dp_dist_median = Median(dp_[method]);
      const auto& vf = vf_[method];
      stats.valid_fraction_mean =
          vf.empty() ? 0.0
                     : std::accumulate(vf.begin(), vf.end(), 0.0) / vf.size();
      stats.seconds = seconds_[method];
      report_.stats.push_back(stats);
    }
    trials_ = 0;
    az_.clear();
    el_.clear();
    dp_.clear();
    vf_.clear();
    estimates_.clear();
    outliers_.clear();
    seconds_.clear();
  }

  RunReport Take() { return std::move(report_); }

 private:
  const PipelineConfig& cfg_;
  RunReport report_;
  int trials_ = 0;
  std::map<std::string, std::vector<double>> az_, el_, dp_, vf_;
  std::map<std::string, int> estimates_, outliers_;
  std::map<std::string, double> seconds_;
};

std::vector<Direction> DirectionPool(const PipelineConfig& cfg) {
  Rng pool_rng(DeriveSeed(cfg.seed, {42}));
  std::vector<Direction> pool;
  for (int d = 0; d < cfg.test.num_directions; ++d) {
    pool.push_back({pool_rng.Uniform(cfg.train.az_lo, cfg.train.az_hi),
                    pool_rng.Uniform(cfg.train.el_lo, cfg.train.el_hi)});
  }
  return pool;
}

}  // namespace

PipelineConfig DefaultConfig() { return PipelineConfig{}; }

PipelineConfig ConfigFromJsonString(const std::string& text, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: bad JSON: ") + e.what());
  }
  return ParseConfig(ResolveIncludes(std::move(doc), base_dir, 0));
}

PipelineConfig LoadConfig(const std::string& path) {
  const json doc = LoadJsonFile(path);
  return ParseConfig(ResolveIncludes(
      doc, std::filesystem::path(path).parent_path().string(), 0));
}

std::string ConfigToJsonString(const PipelineConfig& cfg) {
  return ConfigToJsonValue(cfg).dump(2);
}

StftConfig MakeStft(const PipelineConfig& cfg) {
  return MakeStftConfig(cfg.stft.sample_rate, cfg.stft.frame_len, cfg.stft.hop);
}

EstimatorParams MakeEstimatorParams(const PipelineConfig& cfg, double t60) {
  EstimatorParams params;
  params.bin_lo = cfg.band.lo;
  params.bin_hi = cfg.band.hi;
  params.avg_frames = cfg.estimator.avg_frames;
  params.gamma = cfg.estimator.gamma;
  params.t60 = t60;
  params.taps_t60_factor = cfg.estimator.taps_t60_factor;
  params.ridge = cfg.estimator.ridge;
  params.ridge_eps = cfg.estimator.ridge_eps;
  const StftConfig stft = MakeStft(cfg);
  params.num_taps = TapsFromT60(t60, cfg.estimator.taps_t60_factor, stft);
  // Even without reverberation the direct-path kernel spreads over a few
  // frames through the analysis window.
  if (t60 <= 0.0) params.num_taps = std::max(params.num_taps, 4);
  return params;
}

std::vector<Eigen::Vector3d> ArrayMicPositions(const PipelineConfig& cfg) {
  return HeadMicPositions(cfg.room.array_center, cfg.array.radius,
                          cfg.array.plane_offset);
}

std::vector<Direction> TrainingGrid(const PipelineConfig& cfg) {
  return MakeDirectionGrid(cfg.train.az_lo, cfg.train.az_hi, cfg.train.n_az,
                           cfg.train.el_lo, cfg.train.el_hi, cfg.train.n_el);
}

TrainedModel BuildModelFromConfig(const PipelineConfig& cfg) {
  const StftConfig stft = MakeStft(cfg);
  const std::vector<Direction> grid = TrainingGrid(cfg);
  const std::vector<std::pair<int, int>> pairs(kMicPairs.begin(), kMicPairs.end());
  EstimatorParams params = MakeEstimatorParams(cfg, 0.0);
  params.num_taps = 0;  // training derives lossless taps per direction

  TrainedModel trained;
  trained.training_set = BuildTrainingSet(
      ArrayMicPositions(cfg), pairs, grid, cfg.train.distance, stft, params,
      cfg.train.probe_seconds, cfg.room.speed_of_sound, DeriveSeed(cfg.seed, {100}));

  const Eigen::Index rows = trained.training_set.features.rows();
  const Eigen::Index fdim = 2 * trained.training_set.features.cols();
  trained.real_features.resize(rows, fdim);
  trained.real_masks.resize(static_cast<size_t>(rows));
  for (Eigen::Index i = 0; i < rows; ++i) {
    Eigen::VectorXd values;
    std::vector<uint8_t> mask;
    RealifyFeature(trained.training_set.features.row(i).transpose(),
                   trained.training_set.masks[static_cast<size_t>(i)], &values, &mask);
    trained.real_features.row(i) = values.transpose();
    trained.real_masks[static_cast<size_t>(i)] = std::move(mask);
  }

  TrainOptions options;
  options.num_components = cfg.train.num_components;
  options.seed = DeriveSeed(cfg.seed, {101});
  options.ridge_scale = cfg.train.ridge_scale;
  options.max_iters = cfg.train.max_iters;
  trained.model = TrainMapping(trained.real_features, trained.training_set.labels,
                               options, &trained.info);
  return trained;
}

TrialContext MakeTrialContext(const PipelineConfig& cfg, MappingModel model) {
  TrialContext ctx;
  ctx.stft = MakeStft(cfg);
  ctx.model = std::move(model);
  const std::vector<std::pair<int, int>> pairs(kMicPairs.begin(), kMicPairs.end());
  ctx.grid = BuildSteeringGrid(ArrayMicPositions(cfg), pairs, TrainingGrid(cfg),
                               cfg.test.distance, ctx.stft, cfg.band.lo, cfg.band.hi,
                               cfg.room.speed_of_sound);
  return ctx;
}

TrialResult RunTrial(const PipelineConfig& cfg, const TrialContext& ctx,
                     const Condition& cond, const Direction& truth,
                     uint64_t trial_seed, const std::vector<RirResult>* rirs) {
  const TrialBundle tb = RenderTrial(cfg, ctx.stft, cond, truth, trial_seed, rirs);
  const PreparedChannels prep =
      PrepareChannels(cfg, ctx.stft, cond.t60, tb.bundle.mics,
                      tb.bundle.noise_only.size() > 0 ? &tb.bundle.noise_only : nullptr);
  return EvaluateTrial(cfg, ctx, prep, truth, &tb.bundle.dp_truth,
                       tb.bundle.snr_measured_db);
}

std::map<std::string, MethodEstimate> LocalizeChannels(
    const PipelineConfig& cfg, const TrialContext& ctx, double t60,
    const Eigen::MatrixXd& mixture, const Eigen::MatrixXd* noise_only,
    const std::vector<std::string>& methods) {
  const PreparedChannels prep = PrepareChannels(cfg, ctx.stft, t60, mixture, noise_only);
  std::map<std::string, MethodEstimate> out;
  for (const std::string& method : methods) {
    out[method] = RunMethod(cfg, ctx, prep, method).estimate;
  }
  return out;
}

DpRtfFeature ExtractFeature(const PipelineConfig& cfg, double t60,
                            const Eigen::MatrixXd& mixture,
                            const Eigen::MatrixXd* noise_only) {
  const StftConfig stft = MakeStft(cfg);
  const PreparedChannels prep = PrepareChannels(cfg, stft, t60, mixture, noise_only);
  std::vector<std::vector<PairBinEstimate>> per_pair;
  for (size_t pi = 0; pi < kMicPairs.size(); ++pi) {
    const auto& [i, j] = kMicPairs[pi];
    const NoiseProfile* profile = prep.has_noise ? &prep.profiles[pi] : nullptr;
    per_pair.push_back(EstimatePairDpRtf(prep.mix[static_cast<size_t>(i)],
                                         prep.mix[static_cast<size_t>(j)], profile,
                                         prep.params));
  }
  return AssembleFeature(per_pair, cfg.band.lo, cfg.band.hi);
}

double Median(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](double v) { return std::isnan(v); }),
               values.end());
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + mid, values.end());
  double m = values[mid];
  if (values.size() % 2 == 0) {
    std::nth_element(values.begin(), values.begin() + mid - 1, values.end());
    m = 0.5 * (m + values[mid - 1]);
  }
  return m;
}

RunReport RunComparison(const PipelineConfig& cfg) {
  const TrainedModel trained = BuildModelFromConfig(cfg);
  const TrialContext ctx = MakeTrialContext(cfg, trained.model);

  // Direction pool shared across conditions so room responses can be reused
  // between signal-to-noise settings at the same reverberation time.
  const std::vector<Direction> pool = DirectionPool(cfg);
  std::map<std::pair<long long, int>, std::vector<RirResult>> rir_cache;
  ReportBuilder builder(cfg);

  for (size_t ci = 0; ci < cfg.test.conditions.size(); ++ci) {
    const Condition& cond = cfg.test.conditions[ci];
    for (int t = 0; t < cfg.test.trials; ++t) {
      const int di = t % cfg.test.num_directions;
      const Direction truth = pool[static_cast<size_t>(di)];
      const std::pair<long long, int> key = {
          static_cast<long long>(std::llround(cond.t60 * 1e9)), di};
      auto it = rir_cache.find(key);
      if (it == rir_cache.end()) {
        const RoomScene scene = SceneForTrial(
            cfg, cond, truth,
            DeriveSeed(cfg.seed, {55, static_cast<uint64_t>(key.first),
                                  static_cast<uint64_t>(di)}));
        std::vector<RirResult> rirs;
        for (size_t m = 0; m < scene.mic_positions.size(); ++m) {
          rirs.push_back(SimulateRir(scene, static_cast<int>(m)));
        }
        it = rir_cache.emplace(key, std::move(rirs)).first;
      }

      const uint64_t trial_seed =
          DeriveSeed(cfg.seed, {static_cast<uint64_t>(ci), static_cast<uint64_t>(t)});
      builder.AddTrial(ci, cond, t,
                       RunTrial(cfg, ctx, cond, truth, trial_seed, &it->second));
    }
    builder.FinishCondition(cond);
  }
  return builder.Take();
}

RunReport LocalizeDataset(const PipelineConfig& cfg, const TrialContext& ctx,
                          const std::string& dataset_dir) {
  namespace fs = std::filesystem;
  const fs::path root(dataset_dir);
  const json manifest = LoadJsonFile((root / "manifest.json").string());
  if (manifest.value("format", "") != "dprtf-dataset") {
    throw DataError("not a dataset manifest: " + (root / "manifest.json").string());
  }

  // The mapping input length is fixed by the trained model; refuse a band
  // mismatch up front instead of failing inside every trial.
  const int feature_dims =
      2 * static_cast<int>(kMicPairs.size()) * (cfg.band.hi - cfg.band.lo + 1);
  if (ctx.model.feature_dim != 0 && ctx.model.feature_dim != feature_dims) {
    throw DataError("model expects " + std::to_string(ctx.model.feature_dim) +
                    " feature dimensions but the band yields " +
                    std::to_string(feature_dims));
  }

  ReportBuilder builder(cfg);
  int current_cond = -1;
  Condition current;
  for (const auto& entry : manifest.at("trials")) {
    const int ci = entry.at("condition").get<int>();
    Condition cond;
    cond.t60 = entry.at("t60").get<double>();
    if (entry.at("snr_db").is_string()) {
      cond.snr_db = std::numeric_limits<double>::infinity();
    } else {
      cond.snr_db = entry.at("snr_db").get<double>();
    }
    if (current_cond >= 0 && ci != current_cond) builder.FinishCondition(current);
    current_cond = ci;
    current = cond;

    const fs::path dir = root / entry.at("name").get<std::string>();
    const WavData mix = ReadWav((dir / "mix.wav").string());
    if (mix.sample_rate != static_cast<int>(cfg.stft.sample_rate)) {
      throw DataError("dataset sample rate " + std::to_string(mix.sample_rate) +
                      " does not match the configured " +
                      std::to_string(static_cast<int>(cfg.stft.sample_rate)));
    }
    const WavData noise = ReadWav((dir / "noise.wav").string());
    const PreparedChannels prep = PrepareChannels(
        cfg, ctx.stft, cond.t60, mix.samples,
        noise.samples.size() > 0 ? &noise.samples : nullptr);

    const RirFile rir = LoadRir((dir / "rir.f64").string());
    std::vector<DirectPathTruth> dp_truth;
    for (const auto& [i, j] : kMicPairs) {
      dp_truth.push_back(GroundTruthDpRtf(rir.channels[static_cast<size_t>(i)],
                                          rir.channels[static_cast<size_t>(j)],
                                          ctx.stft));
    }

    Direction truth;
    truth.az_deg = entry.at("direction").at("az_deg").get<double>();
    truth.el_deg = entry.at("direction").at("el_deg").get<double>();
    builder.AddTrial(static_cast<size_t>(ci), cond, entry.at("trial").get<int>(),
                     EvaluateTrial(cfg, ctx, prep, truth, &dp_truth, 0.0));
  }
  if (current_cond >= 0) builder.FinishCondition(current);
  return builder.Take();
}

void WriteReportJson(const std::string& path, const RunReport& report) {
  json j;
  j["config"] = json::parse(report.config_echo);
  json stats = json::array();
  for (const auto& s : report.stats) {
    json sj;
    sj["t60"] = s.cond.t60;
    sj["snr_db"] = std::isinf(s.cond.snr_db) ? json("inf") : json(s.cond.snr_db);
    sj["method"] = s.method;
    sj["trials"] = s.trials;
    sj["estimates"] = s.estimates;
    auto num = [](double v) { return std::isnan(v) ? json() : json(v); };
    sj["az_err_median_deg"] = num(s.az_err_median);
    sj["az_err_mean_deg"] = num(s.az_err_mean);
    sj["el_err_median_deg"] = num(s.el_err_median);
    sj["el_err_mean_deg"] = num(s.el_err_mean);
    sj["outlier_rate"] = s.outlier_rate;
    sj["dp_dist_median"] = num(s.dp_dist_median);
    sj["valid_fraction_mean"] = s.valid_fraction_mean;
    stats.push_back(sj);
  }
  j["stats"] = stats;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw DataError("write failed for " + path);
}

void WriteReportCsv(const std::string& path, const RunReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "t60,snr_db,method,trials,estimates,az_err_median,az_err_mean,"
         "el_err_median,el_err_mean,outlier_rate,dp_dist_median,valid_fraction_mean\n";
  for (const auto& s : report.stats) {
    out << Fmt(s.cond.t60) << "," << Fmt(s.cond.snr_db) << "," << s.method << ","
        << s.trials << "," << s.estimates << "," << Fmt(s.az_err_median) << ","
        << Fmt(s.az_err_mean) << "," << Fmt(s.el_err_median) << ","
        << Fmt(s.el_err_mean) << "," << Fmt(s.outlier_rate) << ","
        << Fmt(s.dp_dist_median) << "," << Fmt(s.valid_fraction_mean) << "\n";
  }
  if (!out) throw DataError("write failed for " + path);
}

void WriteTrialsCsv(const std::string& path, const RunReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& row : report.trial_rows) out << row << "\n";
  if (!out) throw DataError("write failed for " + path);
}

void WriteTimingCsv(const std::string& path, const RunReport& report) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "t60,snr_db,method,seconds\n";
  for (const auto& s : report.stats) {
    out << Fmt(s.cond.t60) << "," << Fmt(s.cond.snr_db) << "," << s.method << ","
        << Fmt(s.seconds) << "\n";
  }
  if (!out) throw DataError("write failed for " + path);
}

RunReport LoadReportJson(const std::string& path) {
  const json j = LoadJsonFile(path);
  RunReport report;
  if (!j.contains("config") || !j.contains("stats")) {
    throw DataError("not a run report: " + path);
  }
  report.config_echo = j["config"].dump(2);
  for (const auto& sj : j["stats"]) {
    ConditionStats s;
    s.cond.t60 = sj.at("t60").get<double>();
    s.cond.snr_db = sj.at("snr_db").is_string()
                        ? std::numeric_limits<double>::infinity()
                        : sj.at("snr_db").get<double>();
    s.method = sj.at("method").get<std::string>();
    s.trials = sj.at("trials").get<int>();
    s.estimates = sj.at("estimates").get<int>();
    auto num = [&sj](const char* key) {
      return sj.at(key).is_null() ? std::numeric_limits<double>::quiet_NaN()
                                  : sj.at(key).get<double>();
    };
    s.az_err_median = num("az_err_median_deg");
    s.az_err_mean = num("az_err_mean_deg");
    s.el_err_median = num("el_err_median_deg");
    s.el_err_mean = num("el_err_mean_deg");
    s.outlier_rate = sj.at("outlier_rate").get<double>();
    s.dp_dist_median = num("dp_dist_median");
    s.valid_fraction_mean = sj.at("valid_fraction_mean").get<double>();
    report.stats.push_back(s);
  }
  return report;
}

ComparisonTable MergeReports(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw ConfigError("compare: no reports given");

  // Everything but the run-selection sections must match across reports.
  json reference;
  for (size_t r = 0; r < reports.size(); ++r) {
    json cfg = json::parse(reports[r].config_echo);
    cfg.erase("test");
    cfg.erase("methods");
    cfg.erase("seed");
    if (r == 0) {
      reference = cfg;
      continue;
    }
    if (cfg != reference) {
      std::string diff;
      for (const auto& [key, value] : reference.items()) {
        if (!cfg.contains(key) || cfg[key] != value) {
          diff += (diff.empty() ? "" : ", ") + key;
        }
      }
      for (const auto& [key, value] : cfg.items()) {
        (void)value;
        if (!reference.contains(key)) diff += (diff.empty() ? "" : ", ") + key;
      }
      throw ConfigError("compare: reports disagree on configuration section(s): " +
                        diff);
    }
  }

  ComparisonTable table;
  auto cond_index = [&table](const Condition& cond) {
    for (size_t c = 0; c < table.conditions.size(); ++c) {
      if (table.conditions[c].t60 == cond.t60 &&
          ((std::isinf(table.conditions[c].snr_db) && std::isinf(cond.snr_db)) ||
           table.conditions[c].snr_db == cond.snr_db)) {
        return c;
      }
    }
    table.conditions.push_back(cond);
    return table.conditions.size() - 1;
  };
  auto method_index = [&table](const std::string& method) {
    for (size_t m = 0; m < table.methods.size(); ++m) {
      if (table.methods[m] == method) return m;
    }
    table.methods.push_back(method);
    return table.methods.size() - 1;
  };

  for (const auto& report : reports) {
    for (const auto& s : report.stats) {
      const size_t c = cond_index(s.cond);
      const size_t m = method_index(s.method);
      if (table.cells.size() < table.methods.size()) {
        table.cells.resize(table.methods.size());
      }
      for (auto& row : table.cells) row.resize(table.conditions.size());
      ComparisonCell& cell = table.cells[m][c];
      cell.present = true;
      cell.az_err_median = s.az_err_median;
      cell.el_err_median = s.el_err_median;
      cell.outlier_rate = s.outlier_rate;
    }
  }

  for (size_t c = 0; c < table.conditions.size(); ++c) {
    double best_az = std::numeric_limits<double>::infinity();
    double best_el = std::numeric_limits<double>::infinity();
    for (const auto& row : table.cells) {
      const ComparisonCell& cell = row[c];
      if (!cell.present) continue;
      if (!std::isnan(cell.az_err_median)) best_az = std::min(best_az, cell.az_err_median);
      if (!std::isnan(cell.el_err_median)) best_el = std::min(best_el, cell.el_err_median);
    }
    for (auto& row : table.cells) {
      ComparisonCell& cell = row[c];
      if (!cell.present) continue;
      cell.best_az = !std::isnan(cell.az_err_median) && cell.az_err_median == best_az;
      cell.best_el = !std::isnan(cell.el_err_median) && cell.el_err_median == best_el;
    }
  }
  return table;
}

void WriteComparisonJson(const std::string& path, const ComparisonTable& table) {
  json j;
  json conds = json::array();
  for (const auto& c : table.conditions) {
    conds.push_back({{"t60", c.t60},
                     {"snr_db", std::isinf(c.snr_db) ? json("inf") : json(c.snr_db)}});
  }
  j["conditions"] = conds;
  json rows = json::array();
  for (size_t m = 0; m < table.methods.size(); ++m) {
    json row;
    row["method"] = table.methods[m];
    json cells = json::array();
    for (const auto& cell : table.cells[m]) {
      if (!cell.present) {
        cells.push_back(nullptr);
        continue;
      }
      auto num = [](double v) { return std::isnan(v) ? json() : json(v); };
      cells.push_back({{"az_err_median_deg", num(cell.az_err_median)},
                       {"el_err_median_deg", num(cell.el_err_median)},
                       {"outlier_rate", cell.outlier_rate},
                       {"best_az", cell.best_az},
                       {"best_el", cell.best_el}});
    }
    row["cells"] = cells;
    rows.push_back(row);
  }
  j["rows"] = rows;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw DataError("write failed for " + path);
}

void WriteComparisonCsv(const std::string& path, const ComparisonTable& table) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "method";
  for (const auto& c : table.conditions) {
    const std::string tag = "t60=" + Fmt(c.t60) + " snr=" + Fmt(c.snr_db);
    out << "," << tag << " az" << "," << tag << " el";
  }
  out << "\n";
  for (size_t m = 0; m < table.methods.size(); ++m) {
    out << table.methods[m];
    for (const auto& cell : table.cells[m]) {
      if (!cell.present) {
        out << ",,";
        continue;
      }
      out << "," << Fmt(cell.az_err_median) << (cell.best_az ? "*" : "") << ","
          << Fmt(cell.el_err_median) << (cell.best_el ? "*" : "");
    }
    out << "\n";
  }
  if (!out) throw DataError("write failed for " + path);
}

void GenerateDataset(const PipelineConfig& cfg, const std::string& out_dir, bool force) {
  namespace fs = std::filesystem;
  const fs::path root(out_dir);
  const fs::path manifest_path = root / "manifest.json";
  if (fs::exists(manifest_path) && !force) {
    throw DataError("dataset manifest already exists at " + manifest_path.string() +
                    " (use --force to overwrite)");
  }
  fs::create_directories(root);

  const StftConfig stft = MakeStft(cfg);
  const std::vector<Direction> pool = DirectionPool(cfg);

  json manifest;
  manifest["format"] = "dprtf-dataset";
  manifest["version"] = 1;
  manifest["config"] = json::parse(ConfigToJsonString(cfg));
  json train_dirs = json::array();
  for (const Direction& d : TrainingGrid(cfg)) {
    train_dirs.push_back({{"az_deg", d.az_deg}, {"el_deg", d.el_deg}});
  }
  manifest["training"] = {{"directions", train_dirs}};
  json trials = json::array();

  for (size_t ci = 0; ci < cfg.test.conditions.size(); ++ci) {
    const Condition& cond = cfg.test.conditions[ci];
    for (int t = 0; t < cfg.test.trials; ++t) {
      const int di = t % cfg.test.num_directions;
      const Direction truth = pool[static_cast<size_t>(di)];
      const uint64_t trial_seed =
          DeriveSeed(cfg.seed, {static_cast<uint64_t>(ci), static_cast<uint64_t>(t)});
      const TrialBundle tb = RenderTrial(cfg, stft, cond, truth, trial_seed, nullptr);

      char name[64];
      std::snprintf(name, sizeof(name), "cond%02zu_trial%03d", ci, t);
      const fs::path dir = root / name;
      fs::create_directories(dir);

      WavData mix;
      mix.sample_rate = static_cast<int>(cfg.stft.sample_rate);
      mix.samples = tb.bundle.mics;
      WriteWav((dir / "mix.wav").string(), mix, WavFormat::kFloat32);

      WavData noise;
      noise.sample_rate = mix.sample_rate;
      noise.samples = tb.bundle.noise_only;
      WriteWav((dir / "noise.wav").string(), noise, WavFormat::kFloat32);

      // Per-microphone responses differ in length; pad to the longest.
      Eigen::Index rir_len = 0;
      for (const auto& r : tb.bundle.rirs) rir_len = std::max(rir_len, r.rir.size());
      std::vector<Eigen::VectorXd> rir_channels;
      for (const auto& r : tb.bundle.rirs) {
        Eigen::VectorXd padded = Eigen::VectorXd::Zero(rir_len);
        padded.head(r.rir.size()) = r.rir;
        rir_channels.push_back(std::move(padded));
      }
      SaveRir((dir / "rir.f64").string(), rir_channels, cfg.stft.sample_rate);

      std::ofstream scene_out(dir / "scene.json");
      scene_out << SceneToJsonString(tb.scene) << "\n";

      json tj;
      tj["name"] = name;
      tj["condition"] = ci;
      tj["t60"] = cond.t60;
      tj["snr_db"] = std::isinf(cond.snr_db) ? json("inf") : json(cond.snr_db);
      tj["snr_measured_db"] = std::isinf(tb.bundle.snr_measured_db)
                                  ? json("inf")
                                  : json(tb.bundle.snr_measured_db);
      tj["trial"] = t;
      tj["seed"] = trial_seed;
      tj["direction"] = {{"az_deg", truth.az_deg}, {"el_deg", truth.el_deg}};
      tj["files"] = {{"mix", std::string(name) + "/mix.wav"},
                     {"noise", std::string(name) + "/noise.wav"},
                     {"rir", std::string(name) + "/rir.f64"},
                     {"scene", std::string(name) + "/scene.json"}};
      trials.push_back(tj);
    }
  }
  manifest["trials"] = trials;
  std::ofstream out(manifest_path);
  if (!out) throw DataError("cannot write " + manifest_path.string());
  out << manifest.dump(2) << "\n";
  if (!out) throw DataError("write failed for " + manifest_path.string());
}

void SavePackedFeatures(const std::string& path, const Eigen::MatrixXcd& features,
                        const std::vector<std::vector<uint8_t>>& masks,
                        const Eigen::MatrixXd& labels) {
  if (features.rows() != labels.rows() ||
      static_cast<Eigen::Index>(masks.size()) != features.rows()) {
    throw std::invalid_argument("SavePackedFeatures: row count mismatch");
  }
  json header = {{"format", "packed-features"},
                 {"version", 1},
                 {"rows", features.rows()},
                 {"cols", features.cols()},
                 {"label_dim", labels.cols()}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << header.dump() << "\n";
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
      const double re = features(i, c).real();
      const double im = features(i, c).imag();
      out.write(reinterpret_cast<const char*>(&re), sizeof(double));
      out.write(reinterpret_cast<const char*>(&im), sizeof(double));
    }
    out.write(reinterpret_cast<const char*>(masks[static_cast<size_t>(i)].data()),
              static_cast<std::streamsize>(features.cols()));
    for (Eigen::Index c = 0; c < labels.cols(); ++c) {
      const double v = labels(i, c);
      out.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
  }
  if (!out) throw DataError("write failed for " + path);
}

PackedFeatures LoadPackedFeatures(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("missing header in " + path);
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError("bad header in " + path + ": " + e.what());
  }
  if (header.value("format", "") != "packed-features") {
    throw DataError("unexpected format tag in " + path);
  }
  const Eigen::Index rows = header.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = header.at("cols").get<Eigen::Index>();
  const Eigen::Index label_dim = header.at("label_dim").get<Eigen::Index>();

  PackedFeatures packed;
  packed.features.resize(rows, cols);
  packed.labels.resize(rows, label_dim);
  packed.masks.assign(static_cast<size_t>(rows),
                      std::vector<uint8_t>(static_cast<size_t>(cols)));
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double re = 0, im = 0;
      in.read(reinterpret_cast<char*>(&re), sizeof(double));
      in.read(reinterpret_cast<char*>(&im), sizeof(double));
      packed.features(i, c) = {re, im};
    }
    in.read(reinterpret_cast<char*>(packed.masks[static_cast<size_t>(i)].data()),
            static_cast<std::streamsize>(cols));
    for (Eigen::Index c = 0; c < label_dim; ++c) {
      double v = 0;
      in.read(reinterpret_cast<char*>(&v), sizeof(double));
      packed.labels(i, c) = v;
    }
    if (!in) throw DataError("truncated payload in " + path);
  }
  return packed;
}

}  // namespace dprtf
