#include "slatphys/voxel.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "slatphys/error.hpp"

namespace slatphys {
namespace {

MaterialVoxel mv(VoxelCoord c, double E = 1e6, double rho = 1000.0, double nu = 0.3,
                 int mat = 0) {
  return {c, E, rho, nu, mat, true};
}

std::vector<MaterialVoxel> cube(int n) {
  std::vector<MaterialVoxel> out;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      for (int z = 0; z < n; ++z) out.push_back(mv({x, y, z}));
  return out;
}

TEST(NormalizeTest, LogBoundariesAndMidpoint) {
  const NormalizationSpec spec;
  EXPECT_DOUBLE_EQ(normalize_log(1e2, spec.logE_min, spec.logE_max), -1.0);
  EXPECT_NEAR(normalize_log(std::pow(10.0, 6.5), spec.logE_min, spec.logE_max), 0.0, 1e-15);
  EXPECT_DOUBLE_EQ(normalize_log(1e11, spec.logE_min, spec.logE_max), 1.0);
  EXPECT_NEAR(denormalize_log(-1.0, spec.logE_min, spec.logE_max), 1e2, 1e-12);
  EXPECT_DOUBLE_EQ(denormalize_linear(1.0, spec.nu_min, spec.nu_max), spec.nu_max);
}

TEST(NormalizeTest, FieldRoundTrip) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> logE(2.0, 11.0), logR(0.0, 4.0), nu(0.0, 0.49);
  std::vector<MaterialVoxel> voxels;
  for (int i = 0; i < 200; ++i) {
    voxels.push_back(mv({i % 16, (i / 16) % 16, i / 256}, std::pow(10.0, logE(rng)),
                        std::pow(10.0, logR(rng)), nu(rng), i % 8));
  }
  const MaterialField f(16, voxels);
  const NormalizationSpec spec;
  const NormalizedMaterialField n = normalize_field(f, spec);
  EXPECT_EQ(occupancy_of(n), occupancy_of(f));
  const MaterialField back = denormalize_field(n, spec);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto& a = f.voxels()[i];
    const auto& b = back.voxels()[i];
    EXPECT_EQ(a.coord, b.coord);
    EXPECT_LT(std::abs(a.E - b.E) / a.E, 1e-9);
    EXPECT_LT(std::abs(a.rho - b.rho) / a.rho, 1e-9);
    EXPECT_LE(std::abs(a.nu - b.nu), 1e-9 * std::max(a.nu, 1e-300) + 1e-15);
    EXPECT_EQ(a.mat, b.mat);
    const auto& nv = n.voxels()[i];
    EXPECT_GE(nv.E, -1.0);
    EXPECT_LE(nv.E, 1.0);
  }
}

TEST(NormalizeTest, MonotoneInEachProperty) {
  const NormalizationSpec spec;
  double prev = -2.0;
  for (double e = 2.0; e <= 11.0; e += 0.25) {
    const double n = normalize_log(std::pow(10.0, e), spec.logE_min, spec.logE_max);
    EXPECT_GT(n, prev);
    prev = n;
  }
}

TEST(NormalizeTest, OutOfRangeRejected) {
  const NormalizationSpec spec;
  const MaterialField f(8, {mv({0, 0, 0}, 1e12)});
  EXPECT_THROW(normalize_field(f, spec), Error);
  NormalizationSpec bad;
  bad.logE_min = bad.logE_max;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(MaterialFieldTest, RejectsBadNu) {
  EXPECT_THROW(MaterialField(8, {mv({0, 0, 0}, 1e6, 1000.0, 0.5)}), Error);
  EXPECT_THROW(MaterialField(8, {mv({0, 0, 0}, 1e6, 1000.0, -0.1)}), Error);
}

TEST(SparseLatentGridTest, ValidatesVoxels) {
  EXPECT_THROW(SparseLatentGrid(4, {{{4, 0, 0}, {}}}), Error);
  EXPECT_THROW(SparseLatentGrid(4, {{{1, 1, 1}, {}}, {{1, 1, 1}, {}}}), Error);
  LatentFeature nan{};
  nan[3] = std::nan("");
  EXPECT_THROW(SparseLatentGrid(4, {{{0, 0, 0}, nan}}), Error);
  const SparseLatentGrid g(4, {{{0, 0, 0}, {}}, {{1, 0, 0}, {}}, {{3, 3, 3}, {}}});
  EXPECT_EQ(occupancy_of(g).size(), 3u);
  EXPECT_EQ(coords_of(g).size(), 3u);
}

TEST(BoundaryTest, SingleVoxel) {
  const MaterialField f(8, {mv({2, 3, 4})});
  const auto b = boundary_voxels(f);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0], (VoxelCoord{2, 3, 4}));
}

TEST(BoundaryTest, SolidCubeLeavesOnlyCenter) {
  const MaterialField f(8, cube(3));
  const auto b = boundary_voxels(f);
  EXPECT_EQ(b.size(), 26u);
  for (const auto& c : b) EXPECT_NE(c, (VoxelCoord{1, 1, 1}));
  const CoordSet occ = occupancy_of(f);
  for (const auto& c : b) EXPECT_TRUE(occ.count(c));
}

TEST(BoundaryTest, EmptyAndHollow) {
  EXPECT_TRUE(boundary_voxels(MaterialField(8, {})).empty());
  std::vector<MaterialVoxel> shell;
  for (const auto& v : cube(4)) {
    const auto& c = v.coord;
    const bool inner = c.x > 0 && c.x < 3 && c.y > 0 && c.y < 3 && c.z > 0 && c.z < 3;
    if (!inner) shell.push_back(v);
  }
  const MaterialField f(8, shell);
  EXPECT_EQ(boundary_voxels(f).size(), f.size());
}

TEST(BoundaryTest, GridEdgeCountsAsOutside) {
  const MaterialField f(2, cube(2));
  EXPECT_EQ(boundary_voxels(f).size(), 8u);
}

}  // namespace
}  // namespace slatphys
