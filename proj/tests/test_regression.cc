// test_regression.cc

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
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "dprtf/regression.hpp"
#include "dprtf/rng.hpp"

using namespace dprtf;

namespace {

namespace fs = std::filesystem;

std::string TempFile(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "dprtf_regression_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

// Smooth injective map from a direction grid to an 8-dimensional feature
// vector; recovering (az, el) from it needs a mildly nonlinear inverse.
Eigen::VectorXd GridFeature(double az_deg, double el_deg) {
  const double a = az_deg * M_PI / 180.0;
  const double e = el_deg * M_PI / 180.0;
  Eigen::VectorXd f(8);
  f << std::sin(a), std::cos(a), std::sin(2.0 * a), std::cos(2.0 * a),
      std::sin(e), std::cos(e), std::sin(a + e), std::cos(a - e);
  return f;
}

struct GridData {
  Eigen::MatrixXd features;
  Eigen::MatrixXd labels;
};

GridData MakeGridData() {
  std::vector<double> azs, els;
  for (double a = -60.0; a <= 60.0 + 1e-9; a += 5.0) azs.push_back(a);
  for (double e = -15.0; e <= 15.0 + 1e-9; e += 5.0) els.push_back(e);
  GridData data;
  data.features.resize(static_cast<Eigen::Index>(azs.size() * els.size()), 8);
  data.labels.resize(data.features.rows(), 2);
  Eigen::Index r = 0;
  for (double a : azs) {
    for (double e : els) {
      data.features.row(r) = GridFeature(a, e).transpose();
      data.labels(r, 0) = a;
      data.labels(r, 1) = e;
      ++r;
    }
  }
  return data;
}

}  // namespace

TEST_CASE("single component recovers a global affine map") {
  Rng rng(190);
  const int rows = 400, fdim = 6, odim = 2;
  Eigen::MatrixXd w(odim, fdim);
  for (int r = 0; r < odim; ++r)
    for (int c = 0; c < fdim; ++c) w(r, c) = rng.Uniform(-1.0, 1.0);
  Eigen::VectorXd b(odim);
  b << 0.7, -1.3;

  Eigen::MatrixXd x(rows, fdim), y(rows, odim);
  for (int i = 0; i < rows; ++i) {
    Eigen::VectorXd f(fdim);
    for (int c = 0; c < fdim; ++c) f[c] = rng.Gaussian();
    Eigen::VectorXd noise(odim);
    for (int c = 0; c < odim; ++c) noise[c] = 1e-3 * rng.Gaussian();
    x.row(i) = f.transpose();
    y.row(i) = (w * f + b + noise).transpose();
  }

  TrainOptions options;
  options.num_components = 1;
  options.seed = 191;
  TrainInfo info;
  MappingModel model = TrainMapping(x, y, options, &info);
  REQUIRE(model.components.size() == 1);
  CHECK(info.iterations >= 1);
  CHECK(info.final_rmse < 0.01);
  CHECK((model.components[0].coef - w).norm() / w.norm() < 0.01);

  Eigen::VectorXd probe(fdim);
  probe << 0.3, -0.8, 1.2, 0.1, -0.4, 0.9;
  Prediction pred = PredictDense(model, probe);
  REQUIRE(pred.has_estimate);
  CHECK((pred.output - (w * probe + b)).norm() < 0.01);
  CHECK(pred.used_dims == fdim);
}

TEST_CASE("training rejects degenerate inputs") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(20, 10);
  Eigen::MatrixXd y = Eigen::MatrixXd::Random(20, 2);
  TrainOptions options;

  options.num_components = 25;  // needs ceil(25 * 10 / 10) = 25 rows
  CHECK_THROWS_WITH_AS(TrainMapping(x, y, options),
                       doctest::Contains("need at least"), std::invalid_argument);

  options.num_components = 2;
  CHECK_THROWS_AS(TrainMapping(x.topRows(19), y, options), std::invalid_argument);
  CHECK_THROWS_AS(TrainMapping(Eigen::MatrixXd(), Eigen::MatrixXd(), options),
                  std::invalid_argument);
  options.num_components = 0;
  CHECK_THROWS_AS(TrainMapping(x, y, options), std::invalid_argument);
  options.num_components = 2;
  Eigen::MatrixXd bad = x;
  bad(3, 4) = std::nan("");
  CHECK_THROWS_AS(TrainMapping(bad, y, options), std::invalid_argument);
}

TEST_CASE("piecewise fit beats leave-one-out nearest neighbor") {
  GridData data = MakeGridData();
  TrainOptions options;
  options.num_components = 12;
  options.seed = 192;
  TrainInfo info;
  TrainMapping(data.features, data.labels, options, &info);

  double acc = 0.0;
  const Eigen::Index n = data.features.rows();
  std::vector<uint8_t> full(8, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::MatrixXd fx(n - 1, 8), fy(n - 1, 2);
    Eigen::Index out = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      fx.row(out) = data.features.row(j);
      fy.row(out) = data.labels.row(j);
      ++out;
    }
    Prediction nn = PredictNearest(fx, fy, data.features.row(i).transpose(), full);
    acc += (nn.output - data.labels.row(i).transpose()).squaredNorm();
  }
  const double loo_rmse = std::sqrt(acc / static_cast<double>(n));
  CHECK(info.final_rmse < loo_rmse);
}

TEST_CASE("two affine regimes separate into two components") {
  Rng rng(193);
  const int rows = 100;
  Eigen::MatrixXd x(rows, 1), y(rows, 1);
  for (int i = 0; i < rows; ++i) {
    if (i % 2 == 0) {
      const double t = rng.Uniform(-1.0, 0.0);
      x(i, 0) = t;
      y(i, 0) = 2.0 * t + 1.0;
    } else {
      const double t = rng.Uniform(0.0, 1.0);
      x(i, 0) = t;
      y(i, 0) = -3.0 * t + 5.0;
    }
  }
  TrainOptions options;
  options.num_components = 2;
  options.seed = 194;
  MappingModel model = TrainMapping(x, y, options);
  REQUIRE(model.components.size() == 2);

  Eigen::VectorXd left(1), right(1);
  left << -0.5;
  right << 0.5;
  CHECK(std::abs(PredictDense(model, left).output[0] - 0.0) < 0.05);
  CHECK(std::abs(PredictDense(model, right).output[0] - 3.5) < 0.05);
}

TEST_CASE("grid model localizes training points through partial masks") {
  GridData data = MakeGridData();
  TrainOptions options;
  options.num_components = 12;
  options.seed = 195;
  MappingModel model = TrainMapping(data.features, data.labels, options);

  const Eigen::Index probe_rows[] = {12, 73, 120, 158};
  std::vector<uint8_t> full(8, 1);
  std::vector<uint8_t> partial(8, 1);
  partial[1] = 0;
  partial[6] = 0;
  std::vector<uint8_t> empty(8, 0);

  for (Eigen::Index i : probe_rows) {
    const Eigen::VectorXd f = data.features.row(i).transpose();

    Prediction dense = PredictDense(model, f);
    REQUIRE(dense.has_estimate);
    CHECK(std::abs(dense.output[0] - data.labels(i, 0)) < 1.0);
    CHECK(std::abs(dense.output[1] - data.labels(i, 1)) < 1.0);

    Prediction masked = Predict(model, f, partial);
    REQUIRE(masked.has_estimate);
    CHECK(masked.used_dims == 6);
    CHECK(std::abs(masked.output[0] - data.labels(i, 0)) < 3.0);
    CHECK(std::abs(masked.output[1] - data.labels(i, 1)) < 3.0);

    // A full mask is exactly the dense path.
    Prediction via_mask = Predict(model, f, full);
    CHECK((via_mask.output - dense.output).cwiseAbs().maxCoeff() == 0.0);

    Prediction none = Predict(model, f, empty);
    CHECK_FALSE(none.has_estimate);
    CHECK(none.used_dims == 0);
  }

  Eigen::VectorXd short_feature(3);
  short_feature.setZero();
  CHECK_THROWS_AS(PredictDense(model, short_feature), std::invalid_argument);
  CHECK_THROWS_AS(Predict(model, data.features.row(0).transpose(),
                          std::vector<uint8_t>(5, 1)),
                  std::invalid_argument);
}

TEST_CASE("row order does not change the trained predictions") {
  GridData data = MakeGridData();
  const Eigen::Index n = data.features.rows();

  Rng rng(196);
  std::vector<Eigen::Index> perm(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const Eigen::Index j = static_cast<Eigen::Index>(
        rng.UniformInt(static_cast<uint64_t>(i + 1)));
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  Eigen::MatrixXd fx(n, 8), fy(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    fx.row(i) = data.features.row(perm[static_cast<size_t>(i)]);
    fy.row(i) = data.labels.row(perm[static_cast<size_t>(i)]);
  }

  TrainOptions options;
  options.num_components = 12;
  options.seed = 197;
  MappingModel a = TrainMapping(data.features, data.labels, options);
  MappingModel b = TrainMapping(fx, fy, options);

  for (Eigen::Index i = 0; i < n; i += 17) {
    const Eigen::VectorXd f = data.features.row(i).transpose();
    const Eigen::VectorXd pa = PredictDense(a, f).output;
    const Eigen::VectorXd pb = PredictDense(b, f).output;
    CHECK((pa - pb).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("nearest neighbor lookup is exact and tie stable") {
  Eigen::MatrixXd features(4, 3);
  features << 0.0, 0.0, 0.0,   //
      1.0, 0.0, 0.0,           //
      0.0, 2.0, 0.0,           //
      1.0, 0.0, 0.0;           // duplicate of row 1
  Eigen::MatrixXd labels(4, 2);
  labels << 10.0, 1.0,  //
      20.0, 2.0,        //
      30.0, 3.0,        //
      40.0, 4.0;
  std::vector<uint8_t> full(3, 1);

  Prediction exact = PredictNearest(features, labels, features.row(2).transpose(), full);
  REQUIRE(exact.has_estimate);
  CHECK(exact.output[0] == 30.0);
  CHECK(exact.output[1] == 3.0);

  // Rows 1 and 3 are equidistant; the lower index wins.
  Prediction tie = PredictNearest(features, labels, features.row(1).transpose(), full);
  CHECK(tie.output[0] == 20.0);

  // Perturbations below half the smallest inter-row gap keep the answer.
  Eigen::VectorXd nudged = features.row(2).transpose();
  nudged[0] += 0.3;
  nudged[2] -= 0.3;
  CHECK(PredictNearest(features, labels, nudged, full).output[0] == 30.0);

  // Masking the only discriminating dimension changes the winner.
  std::vector<uint8_t> first_only = {1, 0, 0};
  Prediction masked =
      PredictNearest(features, labels, features.row(2).transpose(), first_only);
  CHECK(masked.output[0] == 10.0);

  Prediction empty_mask =
      PredictNearest(features, labels, features.row(0).transpose(), {0, 0, 0});
  CHECK_FALSE(empty_mask.has_estimate);

  CHECK_THROWS_AS(PredictNearest(Eigen::MatrixXd(), Eigen::MatrixXd(),
                                 features.row(0).transpose(), full),
                  std::invalid_argument);
  CHECK_THROWS_AS(PredictNearest(features, labels.topRows(2),
                                 features.row(0).transpose(), full),
                  std::invalid_argument);
}

TEST_CASE("complex features interleave into real pairs") {
  Eigen::VectorXcd values(3);
  values << std::complex<double>(1.0, -2.0), std::complex<double>(0.0, 0.5),
      std::complex<double>(-3.0, 4.0);
  std::vector<uint8_t> mask = {1, 0, 1};
  Eigen::VectorXd out;
  std::vector<uint8_t> out_mask;
  RealifyFeature(values, mask, &out, &out_mask);
  REQUIRE(out.size() == 6);
  REQUIRE(out_mask.size() == 6);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == -2.0);
  CHECK(out[2] == 0.0);
  CHECK(out[3] == 0.5);
  CHECK(out[4] == -3.0);
  CHECK(out[5] == 4.0);
  CHECK(out_mask == std::vector<uint8_t>({1, 1, 0, 0, 1, 1}));

  CHECK_THROWS_AS(RealifyFeature(values, {1, 0}, &out, &out_mask),
                  std::invalid_argument);
}

TEST_CASE("model files round trip exactly") {
  GridData data = MakeGridData();
  TrainOptions options;
  options.num_components = 3;
  options.seed = 198;
  MappingModel model = TrainMapping(data.features, data.labels, options);
  REQUIRE(model.output_dim == 2);

  const std::string path = TempFile("model.json");
  SaveMappingModel(path, model);
  MappingModel back = LoadMappingModel(path);

  CHECK(back.feature_dim == model.feature_dim);
  CHECK(back.output_dim == model.output_dim);
  CHECK(back.version == model.version);
  REQUIRE(back.components.size() == model.components.size());
  for (size_t c = 0; c < model.components.size(); ++c) {
    const auto& want = model.components[c];
    const auto& got = back.components[c];
    CHECK(got.weight == want.weight);
    CHECK((got.coef - want.coef).cwiseAbs().maxCoeff() == 0.0);
    CHECK((got.offset - want.offset).cwiseAbs().maxCoeff() == 0.0);
    CHECK((got.center - want.center).cwiseAbs().maxCoeff() == 0.0);
    CHECK((got.variance - want.variance).cwiseAbs().maxCoeff() == 0.0);
  }

  const Eigen::VectorXd f = data.features.row(40).transpose();
  CHECK((PredictDense(back, f).output - PredictDense(model, f).output)
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("model loading rejects foreign or stale files") {
  const std::string missing = TempFile("never_written.json");
  std::error_code ec;
  fs::remove(missing, ec);
  CHECK_THROWS_WITH_AS(LoadMappingModel(missing), doctest::Contains("cannot open"),
                       std::runtime_error);

  const std::string garbled = TempFile("garbled.json");
  std::ofstream(garbled) << "{\"format\": \"mapping-model\", ";
  CHECK_THROWS_WITH_AS(LoadMappingModel(garbled), doctest::Contains("bad JSON"),
                       std::runtime_error);

  const std::string foreign = TempFile("foreign.json");
  std::ofstream(foreign) << "{\"format\": \"rir-f64\"}";
  CHECK_THROWS_WITH_AS(LoadMappingModel(foreign),
                       doctest::Contains("unexpected format tag"),
                       std::runtime_error);

  const std::string stale = TempFile("stale.json");
  std::ofstream(stale)
      << "{\"format\": \"mapping-model\", \"version\": 2, \"feature_dim\": 1, "
         "\"output_dim\": 1, \"components\": []}";
  CHECK_THROWS_WITH_AS(LoadMappingModel(stale),
                       doctest::Contains("unsupported model version"),
                       std::runtime_error);
}
