#ifndef SLATPHYS_FIXTURES_HPP_
#define SLATPHYS_FIXTURES_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "slatphys/align.hpp"
#include "slatphys/voxel.hpp"

namespace slatphys {

enum class FixtureKind { kSphere, kBox, kSnowman, kFlower, kLShape };

std::string_view fixture_kind_name(FixtureKind kind);
FixtureKind parse_fixture_kind(std::string_view name);

struct MaterialPreset {
  std::string_view name;
  double E;
  double rho;
  double nu;
};

// Canonical physical values of the eight material classes.
const MaterialPreset& material_preset(int mat);

struct MaterialRegion {
  int region = 0;
  int mat = 0;
  double E = 0.0;
  double rho = 0.0;
  double nu = 0.0;
};

struct FixtureSpec {
  FixtureKind kind = FixtureKind::kSphere;
  int resolution = kDefaultResolution;
  std::uint64_t seed = 0;
  // Empty: per-kind defaults (classes drawn from the seed, preset values).
  std::vector<MaterialRegion> material_regions;
  double latent_noise = 0.0;
  // Characteristic size in voxels; 0 picks a seed-jittered size scaled to the grid.
  double size = 0.0;
};

struct FixtureObject {
  SparseLatentGrid grid;
  MaterialField field;
  std::vector<int> region_of;  // per voxel, parallel to field.voxels()
  std::vector<std::string> region_names;
  std::vector<MaterialRegion> regions;
};

FixtureObject generate_object(const FixtureSpec& spec);

// Deterministic latent code: components 0-3 a +-1 class code (distinct classes
// are orthogonal or antipodal), 4-6 normalized coordinates, 7 scaled
// distance to the surface.
LatentFeature latent_code(int mat, const VoxelCoord& c, int depth, int resolution);

struct PerturbedField {
  MaterialField field;
  RigidTransform applied;  // original -> perturbed voxel coordinates
  RigidTransform inverse;
};

// Applies cube_rotations()[rotation_index] about the grid center, then the
// integer translation, to every voxel. Properties travel with their voxels.
PerturbedField perturb_annotation(const MaterialField& field, int rotation_index,
                                  const VoxelCoord& translation);

nlohmann::json fixture_manifest(const FixtureSpec& spec, const FixtureObject& object);
nlohmann::json transform_to_json(const RigidTransform& t);

}  // namespace slatphys

#endif  // SLATPHYS_FIXTURES_HPP_
