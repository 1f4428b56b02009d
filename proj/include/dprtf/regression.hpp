// dprtf/regression.hpp

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

#ifndef DPRTF_REGRESSION_HPP_
#define DPRTF_REGRESSION_HPP_

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dprtf/estimator.hpp"

namespace dprtf {

// Piecewise-affine regression from feature vectors to output vectors: a set
// of components, each an affine map stored in centered form together with a
// diagonal-Gaussian gate.  Component c predicts
//   y_c(x) = offset + A (x - center)
// and is weighted by its gate responsibility.  The centered form restricts
// cleanly to any observed subset of dimensions.
struct MappingModel {
  struct Component {
    Eigen::MatrixXd coef;      // outputs x features
    Eigen::VectorXd offset;    // prediction at the gate center
    Eigen::VectorXd center;    // gate mean
    Eigen::VectorXd variance;  // gate per-dimension variance
    double weight = 0.0;       // gate prior
  };
  std::vector<Component> components;
  int feature_dim = 0;
  int output_dim = 0;
  int version = 1;
};

struct TrainOptions {
  int num_components = 25;
  uint64_t seed = 0;
  double ridge_scale = 1e-3;  // ridge = scale * mean feature variance
  int max_iters = 100;
  double tol = 1e-10;         // relative change of the training objective
};

struct TrainInfo {
  int iterations = 0;
  double final_rmse = 0.0;  // per-output-vector RMS training error
  int pruned_components = 0;
};

// Hard-assignment alternating training: direction-space k-means++ seeding,
// then alternating per-cluster ridge affine fits and gate-based reassignment
// until the training objective stops improving.  Requires
// rows >= num_components * feature_dim / 10.  Internally processes examples
// in a canonical order (sorted by label, ties by feature norm), so any input
// permutation yields the same model up to component order.
MappingModel TrainMapping(const Eigen::MatrixXd& features,
                          const Eigen::MatrixXd& labels, const TrainOptions& options,
                          TrainInfo* info = nullptr);

struct Prediction {
  Eigen::VectorXd output;
  Eigen::VectorXd responsibilities;
  int used_dims = 0;
  bool has_estimate = false;
};

// Gated prediction restricted to the observed dimensions (mask != 0).  With
// everything masked there is no estimate.
Prediction Predict(const MappingModel& model, const Eigen::VectorXd& feature,
                   const std::vector<uint8_t>& mask);

Prediction PredictDense(const MappingModel& model, const Eigen::VectorXd& feature);

// Nearest-neighbor lookup over the observed dimensions; ties break to the
// lowest row index.
Prediction PredictNearest(const Eigen::MatrixXd& features, const Eigen::MatrixXd& labels,
                          const Eigen::VectorXd& feature, const std::vector<uint8_t>& mask);

// Interleaves a complex feature vector as (re, im) per entry; the mask is
// duplicated per real dimension.
void RealifyFeature(const Eigen::VectorXcd& values, const std::vector<uint8_t>& mask,
                    Eigen::VectorXd* out_values, std::vector<uint8_t>* out_mask);

// Versioned JSON model I/O.
void SaveMappingModel(const std::string& path, const MappingModel& model);
MappingModel LoadMappingModel(const std::string& path);

}  // namespace dprtf

#endif  // DPRTF_REGRESSION_HPP_
