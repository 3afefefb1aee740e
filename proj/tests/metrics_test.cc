#include "slatphys/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "slatphys/error.hpp"

namespace slatphys {
namespace {

std::vector<std::vector<double>> logits_for(const NormalizedMaterialField& f) {
  std::vector<std::vector<double>> out;
  for (const auto& v : f.voxels()) {
    std::vector<double> row(8, 0.0);
    row[static_cast<std::size_t>(v.mat)] = 2.0;
    out.push_back(row);
  }
  return out;
}

NormalizedMaterialField line(std::vector<double> E, std::vector<int> mat = {}) {
  std::vector<NormalizedVoxel> v;
  for (std::size_t i = 0; i < E.size(); ++i) {
    v.push_back({{static_cast<int>(i), 0, 0}, E[i], 0.0, 0.0, mat.empty() ? 0 : mat[i], true});
  }
  return NormalizedMaterialField(16, v);
}

TEST(PerObjectMetricsTest, PerfectPrediction) {
  const auto gt = line({0.1, -0.4, 0.9}, {1, 2, 3});
  const ObjectMetrics m = per_object_metrics(gt, logits_for(gt), gt);
  EXPECT_EQ(m.mse_E, 0.0);
  EXPECT_EQ(m.mse_avg, 0.0);
  EXPECT_EQ(m.mat_acc, 1.0);
  EXPECT_EQ(m.valid_voxels, 3u);
}

TEST(PerObjectMetricsTest, HandAveragedErrors) {
  const auto gt = line({0.0, 0.0}, {0, 0});
  const auto pred = line({0.1, 0.3}, {5, 6});
  const ObjectMetrics m = per_object_metrics(pred, logits_for(pred), gt);
  EXPECT_NEAR(m.mse_E, 0.05, 1e-15);
  EXPECT_EQ(m.mat_acc, 0.0);
  EXPECT_EQ(m.mse_avg, (m.mse_E + m.mse_rho + m.mse_nu) / 3.0);
}

TEST(PerObjectMetricsTest, InvalidVoxelsDoNotCount) {
  auto voxels = line({0.0, 0.0, 0.0}).voxels();
  voxels[1].valid = false;
  const NormalizedMaterialField gt(16, voxels);
  auto p = voxels;
  p[1].E = 0.8;
  p[1].mat = 7;
  const NormalizedMaterialField pred(16, p);
  const ObjectMetrics m = per_object_metrics(pred, logits_for(pred), gt);
  EXPECT_EQ(m.mse_E, 0.0);
  EXPECT_EQ(m.mat_acc, 1.0);
  EXPECT_EQ(m.valid_voxels, 2u);
}

TEST(PerObjectMetricsTest, OccupancyMismatchListsVoxels) {
  const auto gt = line({0.0, 0.0});
  const auto pred = line({0.0, 0.0, 0.0});
  try {
    per_object_metrics(pred, logits_for(pred), gt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kOccupancyMismatch);
    EXPECT_NE(std::string(e.what()).find("(2,0,0)"), std::string::npos) << e.what();
  }
}

TEST(AggregateTest, ObjectsWeighEqually) {
  ObjectMetrics a;
  a.mse_E = 0.04;
  a.valid_voxels = 1;
  a.mat_acc = 1.0;
  ObjectMetrics b;
  b.mse_E = 0.0;
  b.valid_voxels = 3;
  b.mat_acc = 0.5;
  const EvalReport r = aggregate(std::vector<ObjectMetrics>{a, b});
  EXPECT_EQ(r.mse_E, 0.02);  // pooled over voxels this would be 0.01
  EXPECT_EQ(r.mat_acc, 0.75);
  EXPECT_EQ(r.mse_avg, (r.mse_E + r.mse_rho + r.mse_nu) / 3.0);
  const EvalReport swapped = aggregate(std::vector<ObjectMetrics>{b, a});
  EXPECT_EQ(swapped.mse_E, r.mse_E);
  EXPECT_EQ(swapped.mat_acc, r.mat_acc);
}

TEST(AggregateTest, SingleObjectAndEmpty) {
  const auto gt = line({0.2, 0.1});
  const auto pred = line({0.0, 0.4});
  ObjectMetrics m = per_object_metrics(pred, logits_for(pred), gt);
  const EvalReport r = aggregate(std::vector<ObjectMetrics>{m});
  EXPECT_EQ(r.mse_E, m.mse_E);
  EXPECT_EQ(r.mse_avg, m.mse_avg);
  EXPECT_EQ(r.mse_E_std, 0.0);
  EXPECT_THROW(aggregate(std::vector<ObjectMetrics>{}), Error);
}

TEST(MetricsStatisticsTest, GaussianNoiseMseNearVariance) {
  const double sigma = 0.05;
  const int n = 4000;
  std::mt19937_64 rng(17);
  std::normal_distribution<double> noise(0.0, sigma);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  std::vector<NormalizedVoxel> gt, pred;
  for (int i = 0; i < n; ++i) {
    const VoxelCoord c{i % 32, (i / 32) % 32, i / 1024};
    const NormalizedVoxel g{c, u(rng), u(rng), u(rng), i % 8, true};
    gt.push_back(g);
    pred.push_back({c, g.E + noise(rng), g.rho + noise(rng), g.nu + noise(rng), g.mat, true});
  }
  const NormalizedMaterialField gf(32, gt), pf(32, pred);
  const ObjectMetrics m = per_object_metrics(pf, logits_for(pf), gf);
  const double tol = 3.0 * sigma * sigma / std::sqrt(static_cast<double>(n));
  for (double mse : {m.mse_E, m.mse_rho, m.mse_nu}) EXPECT_NEAR(mse, sigma * sigma, tol);
}

TEST(ArgmaxTest, LowestIndexWinsTies) {
  EXPECT_EQ(argmax(std::vector<double>{1.0, 3.0, 3.0, 0.0}), 1);
}

TEST(ReportTest, CsvHasOneRowPerObject) {
  const auto gt = line({0.2});
  ObjectMetrics m = per_object_metrics(gt, logits_for(gt), gt);
  m.name = "a";
  const EvalReport r = aggregate(std::vector<ObjectMetrics>{m, m});
  const std::string csv = per_object_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  const auto j = report_to_json(r);
  EXPECT_EQ(j["per_object"].size(), 2u);
  EXPECT_EQ(j["mat_acc"], 1.0);
}

}  // namespace
}  // namespace slatphys
