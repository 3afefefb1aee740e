#include "slatphys/fixtures.hpp"

#include <cmath>
#include <numbers>
#include <set>

#include <gtest/gtest.h>

#include "slatphys/error.hpp"

namespace slatphys {
namespace {

TEST(FixturesTest, SphereVolumeMatchesContinuum) {
  FixtureSpec spec{FixtureKind::kSphere, 64, 3};
  spec.size = 10.0;
  const FixtureObject obj = generate_object(spec);
  const double expected = 4.0 / 3.0 * std::numbers::pi * 1000.0;
  EXPECT_NEAR(static_cast<double>(obj.field.size()), expected, 0.05 * expected);
  EXPECT_EQ(obj.grid.size(), obj.field.size());
}

TEST(FixturesTest, SnowmanHasTwoClasses) {
  const FixtureObject obj = generate_object({FixtureKind::kSnowman, 64, 0});
  std::set<int> classes;
  for (const auto& v : obj.field.voxels()) classes.insert(v.mat);
  EXPECT_EQ(classes.size(), 2u);
  EXPECT_EQ(obj.region_names.size(), 2u);
}

TEST(FixturesTest, PropertiesFollowPresets) {
  const FixtureObject obj = generate_object({FixtureKind::kFlower, 48, 5});
  ASSERT_GT(obj.field.size(), 0u);
  for (std::size_t i = 0; i < obj.field.size(); ++i) {
    const auto& v = obj.field.voxels()[i];
    const MaterialPreset& p = material_preset(v.mat);
    EXPECT_EQ(v.E, p.E);
    EXPECT_EQ(v.rho, p.rho);
    EXPECT_EQ(v.nu, p.nu);
    EXPECT_EQ(obj.regions[static_cast<std::size_t>(obj.region_of[i])].mat, v.mat);
  }
}

TEST(FixturesTest, SameSpecSameObject) {
  for (auto kind : {FixtureKind::kSphere, FixtureKind::kBox, FixtureKind::kSnowman,
                    FixtureKind::kFlower, FixtureKind::kLShape}) {
    const FixtureSpec spec{kind, 32, 11};
    const FixtureObject a = generate_object(spec);
    const FixtureObject b = generate_object(spec);
    ASSERT_EQ(a.field.size(), b.field.size()) << fixture_kind_name(kind);
    ASSERT_GT(a.field.size(), 0u) << fixture_kind_name(kind);
    for (std::size_t i = 0; i < a.field.size(); ++i) {
      EXPECT_EQ(a.field.voxels()[i].coord, b.field.voxels()[i].coord);
      EXPECT_EQ(a.field.voxels()[i].mat, b.field.voxels()[i].mat);
      EXPECT_EQ(a.grid.voxels()[i].feature, b.grid.voxels()[i].feature);
    }
    EXPECT_EQ(parse_fixture_kind(fixture_kind_name(kind)), kind);
  }
  EXPECT_THROW(parse_fixture_kind("teapot"), Error);
}

TEST(FixturesTest, ExplicitRegionsOverrideDefaults) {
  FixtureSpec spec{FixtureKind::kSnowman, 32, 0};
  spec.material_regions = {{0, 4, 5e7, 700.0, 0.35}, {1, 0, 1e5, 400.0, 0.2}};
  const FixtureObject obj = generate_object(spec);
  for (std::size_t i = 0; i < obj.field.size(); ++i) {
    const auto& v = obj.field.voxels()[i];
    const MaterialRegion& r = spec.material_regions[static_cast<std::size_t>(obj.region_of[i])];
    EXPECT_EQ(v.E, r.E);
    EXPECT_EQ(v.mat, r.mat);
  }
}

TEST(LatentCodeTest, ClassCodesAreOrthogonalOrAntipodal) {
  for (int a = 0; a < kMaterialClasses; ++a) {
    for (int b = 0; b < kMaterialClasses; ++b) {
      const auto fa = latent_code(a, {1, 2, 3}, 0, 16);
      const auto fb = latent_code(b, {1, 2, 3}, 0, 16);
      double dot = 0.0;
      for (int k = 0; k < 4; ++k) dot += static_cast<double>(fa[k]) * static_cast<double>(fb[k]);
      if (a == b) {
        EXPECT_EQ(dot, 4.0);
      } else {
        EXPECT_TRUE(dot == 0.0 || dot == -4.0) << a << " " << b;
      }
    }
  }
}

TEST(PerturbTest, IdentityKeepsField) {
  const FixtureObject obj = generate_object({FixtureKind::kLShape, 32, 2});
  const PerturbedField p = perturb_annotation(obj.field, 0, {0, 0, 0});
  ASSERT_EQ(p.field.size(), obj.field.size());
  for (std::size_t i = 0; i < p.field.size(); ++i) {
    EXPECT_EQ(p.field.voxels()[i].coord, obj.field.voxels()[i].coord);
  }
  EXPECT_TRUE(p.applied.rotation.isIdentity(0.0));
}

TEST(PerturbTest, EveryRotationPreservesCountAndInverts) {
  const FixtureObject obj = generate_object({FixtureKind::kLShape, 32, 4});
  for (int r = 0; r < 24; ++r) {
    const PerturbedField p = perturb_annotation(obj.field, r, {1, -1, 0});
    ASSERT_EQ(p.field.size(), obj.field.size()) << r;
    EXPECT_TRUE(p.applied.is_proper());
    // Mapping every perturbed voxel back lands on the original occupancy.
    std::set<VoxelCoord> original;
    for (const auto& v : obj.field.voxels()) original.insert(v.coord);
    for (const auto& v : p.field.voxels()) {
      const Eigen::Vector3d back = p.inverse.rotation * Eigen::Vector3d(v.coord.x, v.coord.y, v.coord.z) +
                                   p.inverse.translation;
      const VoxelCoord c{static_cast<int>(std::lround(back.x())), static_cast<int>(std::lround(back.y())),
                         static_cast<int>(std::lround(back.z()))};
      EXPECT_NEAR(back.x(), c.x, 1e-12);
      EXPECT_TRUE(original.count(c)) << r;
    }
  }
  EXPECT_THROW(perturb_annotation(obj.field, 24, {0, 0, 0}), Error);
  EXPECT_THROW(perturb_annotation(obj.field, 0, {40, 0, 0}), Error);
}

TEST(PerturbTest, AlignmentRecoversAllRotations) {
  const FixtureObject obj = generate_object({FixtureKind::kLShape, 32, 9});
  for (int r = 0; r < 24; ++r) {
    const PerturbedField p = perturb_annotation(obj.field, r, {0, 0, 0});
    const AlignResult a = align_and_resample(p.field, obj.grid);
    EXPECT_DOUBLE_EQ(a.icp.fitness, 1.0) << r;
    ASSERT_EQ(a.field.size(), obj.field.size());
    for (std::size_t i = 0; i < a.field.size(); ++i) {
      EXPECT_EQ(a.field.voxels()[i].mat, obj.field.voxels()[i].mat) << r;
    }
  }
}

}  // namespace
}  // namespace slatphys
