// dprtf_main.cc

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

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dprtf/estimator.hpp"
#include "dprtf/pipeline.hpp"
#include "dprtf/regression.hpp"
#include "dprtf/wav.hpp"

namespace {

using dprtf::ConfigError;
using dprtf::DataError;
using dprtf::PipelineConfig;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

struct CommonOpts {
  std::string config_path;
  uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  int jobs = 1;
  bool quiet = false;
};

void AddCommon(CLI::App* sub, CommonOpts* opts) {
  sub->add_option("--config", opts->config_path, "JSON configuration file")
      ->check(CLI::ExistingFile);
  opts->seed_opt = sub->add_option("--seed", opts->seed, "override the config seed");
  sub->add_option("--jobs", opts->jobs, "worker count hint (stages run serially)")
      ->check(CLI::PositiveNumber);
  sub->add_flag("--quiet", opts->quiet, "do not echo the resolved config");
}

PipelineConfig ResolveConfig(const CommonOpts& opts) {
  PipelineConfig cfg = opts.config_path.empty() ? dprtf::DefaultConfig()
                                                : dprtf::LoadConfig(opts.config_path);
  if (opts.seed_opt != nullptr && opts.seed_opt->count() > 0) cfg.seed = opts.seed;
  if (!opts.quiet) {
    std::cerr << "resolved config:\n" << dprtf::ConfigToJsonString(cfg) << "\n";
  }
  return cfg;
}

Eigen::MatrixXd ReadRecording(const std::string& path, const PipelineConfig& cfg) {
  const dprtf::WavData wav = dprtf::ReadWav(path);
  if (wav.sample_rate != static_cast<int>(cfg.stft.sample_rate)) {
    throw DataError(path + ": sample rate " + std::to_string(wav.sample_rate) +
                    " does not match the configured " +
                    std::to_string(static_cast<int>(cfg.stft.sample_rate)));
  }
  return wav.samples;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DP-RTF sound source localization toolkit"};
  app.require_subcommand(1);

  CommonOpts gen_opts;
  std::string gen_out;
  bool gen_force = false;
  CLI::App* gen = app.add_subcommand(
      "generate", "Render the test conditions to a dataset directory");
  AddCommon(gen, &gen_opts);
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_flag("--force", gen_force, "overwrite an existing dataset");

  CommonOpts train_opts;
  std::string train_out, train_features;
  CLI::App* train = app.add_subcommand(
      "train", "Train the direction-mapping model from the configured grid");
  AddCommon(train, &train_opts);
  train->add_option("--out", train_out, "model output path")->required();
  train->add_option("--features", train_features,
                    "also dump the training features (packed binary)");

  CommonOpts loc_opts;
  std::string loc_model, loc_dataset, loc_mix, loc_noise, loc_out;
  std::string loc_csv, loc_trials, loc_timing;
  double loc_t60 = 0.0;
  CLI::App* loc = app.add_subcommand(
      "localize", "Localize a generated dataset or a single 4-channel recording");
  AddCommon(loc, &loc_opts);
  loc->add_option("--model", loc_model, "trained mapping model")
      ->required()
      ->check(CLI::ExistingFile);
  loc->add_option("--dataset", loc_dataset, "dataset directory from 'generate'");
  loc->add_option("--mix", loc_mix, "single 4-channel mixture WAV")
      ->check(CLI::ExistingFile);
  loc->add_option("--noise", loc_noise, "matching noise-only WAV")
      ->check(CLI::ExistingFile);
  loc->add_option("--t60", loc_t60, "reverberation time of the recording (s)");
  loc->add_option("--out", loc_out, "report (dataset) or estimate (single) JSON")
      ->required();
  loc->add_option("--csv", loc_csv, "also write per-condition stats CSV");
  loc->add_option("--trials", loc_trials, "also write per-trial rows CSV");
  loc->add_option("--timing", loc_timing, "also write per-method timing CSV");

  CommonOpts cmp_opts;
  std::vector<std::string> cmp_reports;
  std::string cmp_out, cmp_csv;
  CLI::App* cmp = app.add_subcommand(
      "compare", "Merge run reports into a methods-by-conditions error table");
  AddCommon(cmp, &cmp_opts);
  cmp->add_option("--report", cmp_reports, "report JSON files to merge")
      ->required()
      ->check(CLI::ExistingFile);
  cmp->add_option("--out", cmp_out, "merged table JSON")->required();
  cmp->add_option("--csv", cmp_csv, "also write the table as CSV");

  CommonOpts feat_opts;
  std::string feat_mix, feat_noise, feat_out;
  double feat_t60 = 0.0;
  CLI::App* feat = app.add_subcommand(
      "inspect-feature", "Extract the DP-RTF feature vector from a recording");
  AddCommon(feat, &feat_opts);
  feat->add_option("--mix", feat_mix, "4-channel mixture WAV")
      ->required()
      ->check(CLI::ExistingFile);
  feat->add_option("--noise", feat_noise, "matching noise-only WAV")
      ->check(CLI::ExistingFile);
  feat->add_option("--t60", feat_t60, "reverberation time of the recording (s)");
  feat->add_option("--out", feat_out, "feature JSON path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) {
      const PipelineConfig cfg = ResolveConfig(gen_opts);
      dprtf::GenerateDataset(cfg, gen_out, gen_force);
      std::cerr << "dataset written to " << gen_out << "\n";
    } else if (*train) {
      const PipelineConfig cfg = ResolveConfig(train_opts);
      const dprtf::TrainedModel trained = dprtf::BuildModelFromConfig(cfg);
      dprtf::SaveMappingModel(train_out, trained.model);
      if (!train_features.empty()) {
        dprtf::SavePackedFeatures(train_features, trained.training_set.features,
                                  trained.training_set.masks,
                                  trained.training_set.labels);
      }
      std::cerr << "trained " << trained.model.components.size() << " components in "
                << trained.info.iterations << " iterations, training rmse "
                << trained.info.final_rmse << " deg\n";
    } else if (*loc) {
      const PipelineConfig cfg = ResolveConfig(loc_opts);
      const dprtf::MappingModel model = dprtf::LoadMappingModel(loc_model);
      const dprtf::TrialContext ctx = dprtf::MakeTrialContext(cfg, model);
      if (!loc_dataset.empty()) {
        const dprtf::RunReport report = dprtf::LocalizeDataset(cfg, ctx, loc_dataset);
        dprtf::WriteReportJson(loc_out, report);
        if (!loc_csv.empty()) dprtf::WriteReportCsv(loc_csv, report);
        if (!loc_trials.empty()) dprtf::WriteTrialsCsv(loc_trials, report);
        if (!loc_timing.empty()) dprtf::WriteTimingCsv(loc_timing, report);
        for (const auto& s : report.stats) {
          std::cerr << s.method << " t60=" << s.cond.t60 << " snr=" << s.cond.snr_db
                    << ": median az err " << s.az_err_median << " deg, el err "
                    << s.el_err_median << " deg (" << s.estimates << "/" << s.trials
                    << " estimates)\n";
        }
      } else if (!loc_mix.empty()) {
        const Eigen::MatrixXd mixture = ReadRecording(loc_mix, cfg);
        Eigen::MatrixXd noise;
        if (!loc_noise.empty()) noise = ReadRecording(loc_noise, cfg);
        const auto estimates = dprtf::LocalizeChannels(
            cfg, ctx, loc_t60, mixture, loc_noise.empty() ? nullptr : &noise,
            cfg.methods);
        nlohmann::json j;
        for (const auto& [method, est] : estimates) {
          j[method] = {{"has_estimate", est.has_estimate},
                       {"az_deg", est.az_deg},
                       {"el_deg", est.el_deg},
                       {"valid_fraction", est.valid_fraction}};
        }
        std::ofstream out(loc_out);
        if (!out) throw DataError("cannot write " + loc_out);
        out << j.dump(2) << "\n";
      } else {
        throw ConfigError("localize: give either --dataset or --mix");
      }
    } else if (*cmp) {
      const CommonOpts& opts = cmp_opts;
      if (!opts.quiet && !opts.config_path.empty()) {
        std::cerr << "note: compare uses the configs embedded in the reports\n";
      }
      std::vector<dprtf::RunReport> reports;
      for (const auto& path : cmp_reports) {
        reports.push_back(dprtf::LoadReportJson(path));
      }
      const dprtf::ComparisonTable table = dprtf::MergeReports(reports);
      dprtf::WriteComparisonJson(cmp_out, table);
      if (!cmp_csv.empty()) dprtf::WriteComparisonCsv(cmp_csv, table);
    } else if (*feat) {
      const PipelineConfig cfg = ResolveConfig(feat_opts);
      const Eigen::MatrixXd mixture = ReadRecording(feat_mix, cfg);
      Eigen::MatrixXd noise;
      if (!feat_noise.empty()) noise = ReadRecording(feat_noise, cfg);
      const dprtf::DpRtfFeature feature = dprtf::ExtractFeature(
          cfg, feat_t60, mixture, feat_noise.empty() ? nullptr : &noise);
      if (feat_out.empty()) {
        std::cout << dprtf::FeatureToJson(feature) << "\n";
      } else {
        dprtf::SaveFeature(feat_out, feature);
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}
