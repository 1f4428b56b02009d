// dprtf/pipeline.hpp

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

#ifndef DPRTF_PIPELINE_HPP_
#define DPRTF_PIPELINE_HPP_

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dprtf/baselines.hpp"
#include "dprtf/regression.hpp"
#include "dprtf/sim.hpp"

namespace dprtf {

// Configuration problems (bad keys, invalid values): CLI exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Data problems (missing or corrupt inputs): CLI exit code 3.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Condition {
  double t60 = 0.5;
  double snr_db = 11.0;
};

// Full run configuration with defaults matching the reference evaluation
// setup: 16 kHz, 256/128 STFT, band bins 5..63, 25-frame averaging,
// gamma = 1.8, filter length a quarter of the reverberation time.
struct PipelineConfig {
  struct Stft {
    double sample_rate = 16000.0;
    int frame_len = 256;
    int hop = 128;
  } stft;

  struct Band {
    int lo = 5;
    int hi = 63;
  } band;

  struct Estimator {
    int avg_frames = 25;
    double gamma = 1.8;
    double taps_t60_factor = 0.25;
    bool ridge = false;
    double ridge_eps = 1e-6;
  } estimator;

  struct Coherence {
    int block_frames = 15;
    double threshold_factor = 0.9;
  } coherence;

  struct Room {
    Eigen::Vector3d dims{6.0, 5.0, 3.0};
    Eigen::Vector3d array_center{3.0, 2.5, 1.5};
    double speed_of_sound = 343.0;
  } room;

  struct Array {
    double radius = 0.05;
    double plane_offset = 0.003;
  } array;

  struct Train {
    double az_lo = -120.0, az_hi = 120.0;
    int n_az = 49;
    double el_lo = -15.0, el_hi = 25.0;
    int n_el = 13;
    double distance = 2.0;
    double probe_seconds = 1.0;
    int num_components = 25;
    double ridge_scale = 1e-3;
    int max_iters = 100;
  } train;

  struct Test {
    std::vector<Condition> conditions = {{0.5, 11.0}};
    int trials = 20;
    int num_directions = 12;
    double distance = 2.0;
    double speech_seconds = 3.0;
    double noise_seconds = 1.5;
    std::string noise_kind = "fan";  // "fan" or "white"
    bool noise_correlated = true;
    double noise_coherence = 0.7;
  } test;

  std::vector<std::string> methods = {"dprtf", "rtf-mtf", "rtf-ct", "srp-phat"};
  uint64_t seed = 12345;
};

PipelineConfig DefaultConfig();

// Parses a config JSON document.  Unknown keys raise ConfigError.  A
// top-level "include" (string or list of strings, relative to base_dir) is
// loaded first and overridden by the current document.
PipelineConfig ConfigFromJsonString(const std::string& text, const std::string& base_dir);
PipelineConfig LoadConfig(const std::string& path);

// Serializes with every default made explicit.
std::string ConfigToJsonString(const PipelineConfig& cfg);

StftConfig MakeStft(const PipelineConfig& cfg);
EstimatorParams MakeEstimatorParams(const PipelineConfig& cfg, double t60);
std::vector<Eigen::Vector3d> ArrayMicPositions(const PipelineConfig& cfg);
std::vector<Direction> TrainingGrid(const PipelineConfig& cfg);

// Trained model together with the training data it came from.
struct TrainedModel {
  MappingModel model;
  TrainingSet training_set;
  Eigen::MatrixXd real_features;         // realified training features
  std::vector<std::vector<uint8_t>> real_masks;
  TrainInfo info;
};

TrainedModel BuildModelFromConfig(const PipelineConfig& cfg);

struct MethodEstimate {
  bool has_estimate = false;
  double az_deg = 0.0;
  double el_deg = 0.0;
  double valid_fraction = 0.0;  // unmasked share of the feature vector
};

struct MethodOutcome {
  MethodEstimate estimate;
  double az_err_deg = 0.0;
  double el_err_deg = 0.0;
  double dp_dist_median = 0.0;  // feature distance to ground truth; NaN for srp
  double seconds = 0.0;         // wall time spent in the method
};

struct TrialResult {
  Direction truth;
  double snr_measured_db = 0.0;
  std::map<std::string, MethodOutcome> methods;
};

// Shared cross-trial state.
struct TrialContext {
  StftConfig stft;
  MappingModel model;
  SteeringGrid grid;
};

TrialContext MakeTrialContext(const PipelineConfig& cfg, MappingModel model);

// Runs one synthetic trial: renders speech plus noise at the condition,
// estimates with every requested method, and scores against the ground
// truth.  `rirs` may carry precomputed room responses for the scene.
TrialResult RunTrial(const PipelineConfig& cfg, const TrialContext& ctx,
                     const Condition& cond, const Direction& truth,
                     uint64_t trial_seed,
                     const std::vector<RirResult>* rirs = nullptr);

// Localization on provided audio (no ground truth).
std::map<std::string, MethodEstimate> LocalizeChannels(
    const PipelineConfig& cfg, const TrialContext& ctx, double t60,
    const Eigen::MatrixXd& mixture, const Eigen::MatrixXd* noise_only,
    const std::vector<std::string>& methods);

// Feature extraction alone, for inspection.
DpRtfFeature ExtractFeature(const PipelineConfig& cfg, double t60,
                            const Eigen::MatrixXd& mixture,
                            const Eigen::MatrixXd* noise_only);

struct ConditionStats {
  Condition cond;
  std::string method;
  int trials = 0;
  int estimates = 0;
  double az_err_median = 0.0;
  double az_err_mean = 0.0;
  double el_err_median = 0.0;
  double el_err_mean = 0.0;
  double outlier_rate = 0.0;  // share with azimuth error > 15 degrees
  double dp_dist_median = 0.0;
  double valid_fraction_mean = 0.0;
  double seconds = 0.0;  // total method wall time; kept out of the reports
};

struct RunReport {
  std::string config_echo;
  std::vector<ConditionStats> stats;
  std::vector<std::string> trial_rows;  // CSV rows, one per (trial, method)
};

// Runs the full condition-by-method matrix.  Deterministic for a fixed
// config: trial seeds derive from (seed, condition, trial).
RunReport RunComparison(const PipelineConfig& cfg);

// Scores every manifest entry of a generated dataset directory with the
// configured methods.  Ground-truth filters come from the stored responses.
RunReport LocalizeDataset(const PipelineConfig& cfg, const TrialContext& ctx,
                          const std::string& dataset_dir);

// report.json and report.csv are byte-deterministic; wall-clock timing goes
// to a separate timings file.
void WriteReportJson(const std::string& path, const RunReport& report);
void WriteReportCsv(const std::string& path, const RunReport& report);
void WriteTrialsCsv(const std::string& path, const RunReport& report);
void WriteTimingCsv(const std::string& path, const RunReport& report);

// Reads back the stats and config echo of a report written by WriteReportJson.
RunReport LoadReportJson(const std::string& path);

// Merged methods-by-conditions error table.  Reports must agree on every
// configuration section other than test, methods, and seed; later reports
// override earlier entries for the same (method, condition) cell.
struct ComparisonCell {
  bool present = false;
  double az_err_median = 0.0;
  double el_err_median = 0.0;
  double outlier_rate = 0.0;
  bool best_az = false;  // lowest median azimuth error in the column
  bool best_el = false;
};
struct ComparisonTable {
  std::vector<std::string> methods;     // row order
  std::vector<Condition> conditions;    // column order
  std::vector<std::vector<ComparisonCell>> cells;  // [method][condition]
};
ComparisonTable MergeReports(const std::vector<RunReport>& reports);
void WriteComparisonJson(const std::string& path, const ComparisonTable& table);
void WriteComparisonCsv(const std::string& path, const ComparisonTable& table);

// Renders the test-condition recordings to a dataset directory: per-trial
// mixture and noise WAVs, room responses, scene description, and a manifest.
// Refuses to overwrite an existing manifest unless force is set.
void GenerateDataset(const PipelineConfig& cfg, const std::string& out_dir, bool force);

// Packed feature matrix I/O (JSON header line, then per row: feature values
// as interleaved float64 re/im, mask bytes, label float64s).
void SavePackedFeatures(const std::string& path, const Eigen::MatrixXcd& features,
                        const std::vector<std::vector<uint8_t>>& masks,
                        const Eigen::MatrixXd& labels);
struct PackedFeatures {
  Eigen::MatrixXcd features;
  std::vector<std::vector<uint8_t>> masks;
  Eigen::MatrixXd labels;
};
PackedFeatures LoadPackedFeatures(const std::string& path);

// Median of a vector; NaN entries are dropped.  Empty input yields NaN.
double Median(std::vector<double> values);

}  // namespace dprtf

#endif  // DPRTF_PIPELINE_HPP_
