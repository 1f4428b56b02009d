// regression.cc

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

#include "dprtf/regression.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "dprtf/rng.hpp"

namespace dprtf {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Canonical example order: labels lexicographically, ties by feature values.
std::vector<Eigen::Index> CanonicalOrder(const Eigen::MatrixXd& features,
                                         const Eigen::MatrixXd& labels) {
  std::vector<Eigen::Index> order(static_cast<size_t>(features.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index d = 0; d < labels.cols(); ++d) {
      if (labels(a, d) != labels(b, d)) return labels(a, d) < labels(b, d);
    }
    for (Eigen::Index d = 0; d < features.cols(); ++d) {
      if (features(a, d) != features(b, d)) return features(a, d) < features(b, d);
    }
    return false;
  });
  return order;
}

// k-means++ seeding plus Lloyd iterations in label space; returns the hard
// assignment per row.
std::vector<int> LabelKMeans(const Eigen::MatrixXd& labels, int k, Rng& rng) {
  const Eigen::Index rows = labels.rows();
  Eigen::MatrixXd centers(k, labels.cols());
  centers.row(0) = labels.row(static_cast<Eigen::Index>(rng.UniformInt(rows)));

  Eigen::VectorXd dist2 =
      (labels.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = dist2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      const double u = rng.Uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < rows; ++i) {
        acc += dist2[i];
        if (acc >= u) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<Eigen::Index>(rng.UniformInt(rows));
    }
    centers.row(c) = labels.row(pick);
    dist2 = dist2.cwiseMin(
        (labels.rowwise() - centers.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> assign(static_cast<size_t>(rows), 0);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < rows; ++i) {
      int best = 0;
      double best_d = (labels.row(i) - centers.row(0)).squaredNorm();
      for (int c = 1; c < k; ++c) {
        const double d = (labels.row(i) - centers.row(c)).squaredNorm();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[static_cast<size_t>(i)] != best) {
        assign[static_cast<size_t>(i)] = best;
        changed = true;
      }
    }
    if (!changed) break;
    for (int c = 0; c < k; ++c) {
      Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(labels.cols());
      int count = 0;
      for (Eigen::Index i = 0; i < rows; ++i) {
        if (assign[static_cast<size_t>(i)] == c) {
          mean += labels.row(i);
          ++count;
        }
      }
      if (count > 0) centers.row(c) = mean / count;
    }
  }
  return assign;
}

double GateLogLik(const MappingModel::Component& comp, const Eigen::VectorXd& x,
                  const std::vector<Eigen::Index>& dims) {
  if (comp.weight <= 0.0) return kNegInf;
  double ll = std::log(comp.weight);
  for (Eigen::Index d : dims) {
    const double var = comp.variance[d];
    const double diff = x[d] - comp.center[d];
    ll += -0.5 * (std::log(2.0 * M_PI * var) + diff * diff / var);
  }
  return ll;
}

Eigen::VectorXd ComponentPredict(const MappingModel::Component& comp,
                                 const Eigen::VectorXd& x,
                                 const std::vector<Eigen::Index>& dims) {
  Eigen::VectorXd out = comp.offset;
  for (Eigen::Index d : dims) {
    out += comp.coef.col(d) * (x[d] - comp.center[d]);
  }
  return out;
}

std::vector<Eigen::Index> AllDims(Eigen::Index n) {
  std::vector<Eigen::Index> dims(static_cast<size_t>(n));
  std::iota(dims.begin(), dims.end(), 0);
  return dims;
}

}  // namespace

MappingModel TrainMapping(const Eigen::MatrixXd& features,
                          const Eigen::MatrixXd& labels, const TrainOptions& options,
                          TrainInfo* info) {
  const Eigen::Index rows = features.rows();
  const Eigen::Index fdim = features.cols();
  const Eigen::Index odim = labels.cols();
  if (rows != labels.rows()) {
    throw std::invalid_argument("TrainMapping: feature and label row counts differ");
  }
  if (rows == 0 || fdim == 0 || odim == 0) {
    throw std::invalid_argument("TrainMapping: empty training data");
  }
  if (options.num_components <= 0) {
    throw std::invalid_argument("TrainMapping: need at least one component");
  }
  const Eigen::Index min_rows =
      static_cast<Eigen::Index>(std::ceil(options.num_components * fdim / 10.0));
  if (rows < min_rows) {
    throw std::invalid_argument(
        "TrainMapping: " + std::to_string(rows) + " examples for " +
        std::to_string(options.num_components) + " components over " +
        std::to_string(fdim) + " dimensions; need at least " + std::to_string(min_rows));
  }
  if (!features.allFinite() || !labels.allFinite()) {
    throw std::invalid_argument("TrainMapping: non-finite training data");
  }
  const int k = std::min<int>(options.num_components, static_cast<int>(rows));

  const std::vector<Eigen::Index> order = CanonicalOrder(features, labels);
  Eigen::MatrixXd x(rows, fdim), y(rows, odim);
  for (Eigen::Index i = 0; i < rows; ++i) {
    x.row(i) = features.row(order[static_cast<size_t>(i)]);
    y.row(i) = labels.row(order[static_cast<size_t>(i)]);
  }

  const Eigen::RowVectorXd mean = x.colwise().mean();
  const double mean_var =
      (x.rowwise() - mean).squaredNorm() / static_cast<double>(rows * fdim);
  const double lambda = std::max(options.ridge_scale * mean_var, 1e-12);
  const double var_floor = std::max(1e-8 * mean_var, 1e-12);

  Rng rng(options.seed);
  std::vector<int> assign = LabelKMeans(y, k, rng);

  const std::vector<Eigen::Index> all_dims = AllDims(fdim);
  MappingModel model;
  model.feature_dim = static_cast<int>(fdim);
  model.output_dim = static_cast<int>(odim);
  model.components.resize(static_cast<size_t>(k));

  MappingModel best_model;
  double best_obj = std::numeric_limits<double>::infinity();
  double prev_obj = std::numeric_limits<double>::infinity();
  int iterations = 0;

  for (int iter = 0; iter < options.max_iters; ++iter) {
    iterations = iter + 1;

    // Fit one ridge affine map and gate per cluster, in centered form so the
    // offset is the prediction at the gate center.
    for (int c = 0; c < k; ++c) {
      std::vector<Eigen::Index> members;
      for (Eigen::Index i = 0; i < rows; ++i) {
        if (assign[static_cast<size_t>(i)] == c) members.push_back(i);
      }
      MappingModel::Component& comp = model.components[static_cast<size_t>(c)];
      if (static_cast<Eigen::Index>(members.size()) < odim + 1) {
        comp.weight = 0.0;
        continue;
      }
      const Eigen::Index m = static_cast<Eigen::Index>(members.size());
      Eigen::MatrixXd xm(m, fdim), ym(m, odim);
      for (Eigen::Index r = 0; r < m; ++r) {
        xm.row(r) = x.row(members[static_cast<size_t>(r)]);
        ym.row(r) = y.row(members[static_cast<size_t>(r)]);
      }
      const Eigen::RowVectorXd mu = xm.colwise().mean();
      const Eigen::RowVectorXd ybar = ym.colwise().mean();
      xm.rowwise() -= mu;
      ym.rowwise() -= ybar;

      Eigen::MatrixXd gram = xm.transpose() * xm;
      gram.diagonal().array() += lambda;
      const Eigen::MatrixXd w = gram.ldlt().solve(xm.transpose() * ym);

      comp.coef = w.transpose();
      comp.offset = ybar.transpose();
      comp.center = mu.transpose();
      const Eigen::VectorXd var =
          (xm.cwiseProduct(xm).colwise().sum() / static_cast<double>(m)).transpose();
      comp.variance = (var.array() + var_floor).matrix();
      comp.weight = static_cast<double>(m) / static_cast<double>(rows);
    }

    // Gate scores over all dimensions, with the log terms hoisted out of the
    // per-example loop.
    Eigen::VectorXd gate_const = Eigen::VectorXd::Constant(k, kNegInf);
    std::vector<Eigen::VectorXd> inv_var(static_cast<size_t>(k));
    for (int c = 0; c < k; ++c) {
      const MappingModel::Component& comp = model.components[static_cast<size_t>(c)];
      if (comp.weight <= 0.0) continue;
      gate_const[c] = std::log(comp.weight) -
                      0.5 * (2.0 * M_PI * comp.variance.array()).log().sum();
      inv_var[static_cast<size_t>(c)] = comp.variance.cwiseInverse();
    }

    // Reassign by gate likelihood and measure the training objective under
    // the new assignment.
    bool changed = false;
    double obj = 0.0;
    bool any_alive = false;
    for (const auto& comp : model.components) any_alive |= comp.weight > 0.0;
    if (!any_alive) {
      throw std::runtime_error("TrainMapping: all components collapsed");
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
      int best = -1;
      double best_ll = kNegInf;
      for (int c = 0; c < k; ++c) {
        if (gate_const[c] == kNegInf) continue;
        const MappingModel::Component& comp = model.components[static_cast<size_t>(c)];
        const double quad =
            ((x.row(i).transpose() - comp.center).array().square() *
             inv_var[static_cast<size_t>(c)].array())
                .sum();
        const double ll = gate_const[c] - 0.5 * quad;
        if (ll > best_ll) {
          best_ll = ll;
          best = c;
        }
      }
      if (best < 0) {
        throw std::runtime_error("TrainMapping: no live component to assign to");
      }
      if (assign[static_cast<size_t>(i)] != best) {
        assign[static_cast<size_t>(i)] = best;
        changed = true;
      }
      obj += (ComponentPredict(model.components[static_cast<size_t>(best)],
                               x.row(i).transpose(), all_dims) -
              y.row(i).transpose())
                 .squaredNorm();
    }

    if (obj < best_obj) {
      best_obj = obj;
      best_model = model;
    }
    const bool converged =
        !changed || std::abs(prev_obj - obj) <= options.tol * std::max(prev_obj, 1e-30);
    prev_obj = obj;
    if (converged) break;
  }

  // Keep only live components and renormalize the gate priors.
  MappingModel final_model;
  final_model.feature_dim = best_model.feature_dim;
  final_model.output_dim = best_model.output_dim;
  double weight_sum = 0.0;
  for (const auto& comp : best_model.components) {
    if (comp.weight > 0.0) {
      final_model.components.push_back(comp);
      weight_sum += comp.weight;
    }
  }
  for (auto& comp : final_model.components) comp.weight /= weight_sum;

  if (info != nullptr) {
    info->iterations = iterations;
    info->final_rmse = std::sqrt(best_obj / static_cast<double>(rows));
    info->pruned_components = k - static_cast<int>(final_model.components.size());
  }
  return final_model;
}

Prediction Predict(const MappingModel& model, const Eigen::VectorXd& feature,
                   const std::vector<uint8_t>& mask) {
  if (feature.size() != model.feature_dim) {
    throw std::invalid_argument("Predict: feature dimension mismatch");
  }
  if (static_cast<Eigen::Index>(mask.size()) != feature.size()) {
    throw std::invalid_argument("Predict: mask length mismatch");
  }
  Prediction pred;
  std::vector<Eigen::Index> dims;
  for (Eigen::Index d = 0; d < feature.size(); ++d) {
    if (mask[static_cast<size_t>(d)] != 0) dims.push_back(d);
  }
  pred.used_dims = static_cast<int>(dims.size());
  if (dims.empty() || model.components.empty()) return pred;

  const int k = static_cast<int>(model.components.size());
  Eigen::VectorXd ll(k);
  for (int c = 0; c < k; ++c) {
    ll[c] = GateLogLik(model.components[static_cast<size_t>(c)], feature, dims);
  }
  const double ll_max = ll.maxCoeff();
  if (!std::isfinite(ll_max)) return pred;
  Eigen::VectorXd resp = ((ll.array() - ll_max).exp()).matrix();
  resp /= resp.sum();

  Eigen::VectorXd out = Eigen::VectorXd::Zero(model.output_dim);
  for (int c = 0; c < k; ++c) {
    if (resp[c] <= 0.0) continue;
    out += resp[c] *
           ComponentPredict(model.components[static_cast<size_t>(c)], feature, dims);
  }
  pred.output = out;
  pred.responsibilities = resp;
  pred.has_estimate = true;
  return pred;
}

Prediction PredictDense(const MappingModel& model, const Eigen::VectorXd& feature) {
  return Predict(model, feature,
                 std::vector<uint8_t>(static_cast<size_t>(feature.size()), 1));
}

Prediction PredictNearest(const Eigen::MatrixXd& features, const Eigen::MatrixXd& labels,
                          const Eigen::VectorXd& feature, const std::vector<uint8_t>& mask) {
  if (features.rows() != labels.rows() || features.rows() == 0) {
    throw std::invalid_argument("PredictNearest: bad training data");
  }
  if (features.cols() != feature.size() ||
      static_cast<Eigen::Index>(mask.size()) != feature.size()) {
    throw std::invalid_argument("PredictNearest: dimension mismatch");
  }
  Prediction pred;
  std::vector<Eigen::Index> dims;
  for (Eigen::Index d = 0; d < feature.size(); ++d) {
    if (mask[static_cast<size_t>(d)] != 0) dims.push_back(d);
  }
  pred.used_dims = static_cast<int>(dims.size());
  if (dims.empty()) return pred;

  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    double d2 = 0.0;
    for (Eigen::Index d : dims) {
      const double diff = features(i, d) - feature[d];
      d2 += diff * diff;
    }
    if (d2 < best_d) {
      best_d = d2;
      best = i;
    }
  }
  pred.output = labels.row(best).transpose();
  pred.has_estimate = true;
  return pred;
}

void RealifyFeature(const Eigen::VectorXcd& values, const std::vector<uint8_t>& mask,
                    Eigen::VectorXd* out_values, std::vector<uint8_t>* out_mask) {
  if (static_cast<Eigen::Index>(mask.size()) != values.size()) {
    throw std::invalid_argument("RealifyFeature: mask length mismatch");
  }
  out_values->resize(2 * values.size());
  out_mask->assign(2 * mask.size(), 0);
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    (*out_values)[2 * i] = values[i].real();
    (*out_values)[2 * i + 1] = values[i].imag();
    (*out_mask)[static_cast<size_t>(2 * i)] = mask[static_cast<size_t>(i)];
    (*out_mask)[static_cast<size_t>(2 * i + 1)] = mask[static_cast<size_t>(i)];
  }
}

void SaveMappingModel(const std::string& path, const MappingModel& model) {
  nlohmann::json j;
  j["format"] = "mapping-model";
  j["version"] = model.version;
  j["feature_dim"] = model.feature_dim;
  j["output_dim"] = model.output_dim;
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& comp : model.components) {
    nlohmann::json cj;
    cj["weight"] = comp.weight;
    cj["offset"] = std::vector<double>(comp.offset.data(),
                                       comp.offset.data() + comp.offset.size());
    cj["center"] = std::vector<double>(comp.center.data(),
                                       comp.center.data() + comp.center.size());
    cj["variance"] = std::vector<double>(comp.variance.data(),
                                         comp.variance.data() + comp.variance.size());
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < comp.coef.rows(); ++r) {
      // Materialize the row: the matrix is column-major, so row slices are
      // not contiguous in memory.
      const Eigen::RowVectorXd row = comp.coef.row(r);
      rows.push_back(std::vector<double>(row.data(), row.data() + row.size()));
    }
    cj["coef"] = rows;
    comps.push_back(cj);
  }
  j["components"] = comps;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("SaveMappingModel: cannot write " + path);
  out << j.dump() << "\n";
  if (!out) throw std::runtime_error("SaveMappingModel: write failed for " + path);
}

MappingModel LoadMappingModel(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("LoadMappingModel: cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("LoadMappingModel: bad JSON in " + path + ": " + e.what());
  }
  if (j.value("format", "") != "mapping-model") {
    throw std::runtime_error("LoadMappingModel: unexpected format tag in " + path);
  }
  if (j.value("version", 0) != 1) {
    throw std::runtime_error("LoadMappingModel: unsupported model version in " + path);
  }
  MappingModel model;
  model.version = j["version"].get<int>();
  model.feature_dim = j.at("feature_dim").get<int>();
  model.output_dim = j.at("output_dim").get<int>();
  for (const auto& cj : j.at("components")) {
    MappingModel::Component comp;
    comp.weight = cj.at("weight").get<double>();
    const auto offset = cj.at("offset").get<std::vector<double>>();
    const auto center = cj.at("center").get<std::vector<double>>();
    const auto variance = cj.at("variance").get<std::vector<double>>();
    comp.offset = Eigen::Map<const Eigen::VectorXd>(offset.data(),
                                                    static_cast<Eigen::Index>(offset.size()));
    comp.center = Eigen::Map<const Eigen::VectorXd>(center.data(),
                                                    static_cast<Eigen::Index>(center.size()));
    comp.variance = Eigen::Map<const Eigen::VectorXd>(
        variance.data(), static_cast<Eigen::Index>(variance.size()));
    const auto& rows = cj.at("coef");
    comp.coef.resize(static_cast<Eigen::Index>(rows.size()), model.feature_dim);
    for (size_t r = 0; r < rows.size(); ++r) {
      const auto row = rows[r].get<std::vector<double>>();
      if (static_cast<int>(row.size()) != model.feature_dim) {
        throw std::runtime_error("LoadMappingModel: coefficient row size mismatch");
      }
      comp.coef.row(static_cast<Eigen::Index>(r)) =
          Eigen::Map<const Eigen::RowVectorXd>(row.data(), model.feature_dim);
    }
    if (comp.center.size() != model.feature_dim ||
        comp.variance.size() != model.feature_dim ||
        comp.offset.size() != model.output_dim) {
      throw std::runtime_error("LoadMappingModel: component dimension mismatch");
    }
    model.components.push_back(std::move(comp));
  }
  return model;
}

}  // namespace dprtf
