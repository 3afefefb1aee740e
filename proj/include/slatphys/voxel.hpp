#ifndef SLATPHYS_VOXEL_HPP_
#define SLATPHYS_VOXEL_HPP_

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <unordered_set>
#include <vector>

namespace slatphys {

inline constexpr int kDefaultResolution = 64;
inline constexpr int kLatentDim = 8;
inline constexpr int kMaterialClasses = 8;

struct VoxelCoord {
  int x = 0;
  int y = 0;
  int z = 0;

  auto operator<=>(const VoxelCoord&) const = default;
  int& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }
  int operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
};

struct VoxelCoordHash {
  std::size_t operator()(const VoxelCoord& c) const {
    std::uint64_t h = static_cast<std::uint32_t>(c.x);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(c.y);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(c.z);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

using CoordSet = std::set<VoxelCoord>;
using CoordHashSet = std::unordered_set<VoxelCoord, VoxelCoordHash>;

bool in_grid(const VoxelCoord& c, int resolution);

using LatentFeature = std::array<double, kLatentDim>;

struct LatentVoxel {
  VoxelCoord coord;
  LatentFeature feature{};
};

// Sparse structured latent: occupied voxels of a cubic grid, each carrying an
// 8-component feature. Construction validates bounds, finiteness and
// uniqueness; afterwards the value is treated as immutable.
class SparseLatentGrid {
 public:
  SparseLatentGrid() = default;
  SparseLatentGrid(int resolution, std::vector<LatentVoxel> voxels);

  int resolution() const { return resolution_; }
  const std::vector<LatentVoxel>& voxels() const { return voxels_; }
  std::size_t size() const { return voxels_.size(); }
  bool empty() const { return voxels_.empty(); }

 private:
  int resolution_ = kDefaultResolution;
  std::vector<LatentVoxel> voxels_;
};

// Bounds of the normalized encoding. E and rho are encoded in log10 space,
// nu linearly.
struct NormalizationSpec {
  double logE_min = 2.0;
  double logE_max = 11.0;
  double logRho_min = 0.0;
  double logRho_max = 4.0;
  double nu_min = 0.0;
  double nu_max = 0.49;

  void validate() const;
  bool operator==(const NormalizationSpec&) const = default;
};

struct MaterialVoxel {
  VoxelCoord coord;
  double E = 1.0;    // Pa
  double rho = 1.0;  // kg/m^3
  double nu = 0.0;
  int mat = 0;
  bool valid = true;
};

class MaterialField {
 public:
  MaterialField() = default;
  MaterialField(int resolution, std::vector<MaterialVoxel> voxels);

  int resolution() const { return resolution_; }
  const std::vector<MaterialVoxel>& voxels() const { return voxels_; }
  std::size_t size() const { return voxels_.size(); }
  bool empty() const { return voxels_.empty(); }

 private:
  int resolution_ = kDefaultResolution;
  std::vector<MaterialVoxel> voxels_;
};

struct NormalizedVoxel {
  VoxelCoord coord;
  double E = 0.0;
  double rho = 0.0;
  double nu = 0.0;
  int mat = 0;
  bool valid = true;
};

class NormalizedMaterialField {
 public:
  NormalizedMaterialField() = default;
  NormalizedMaterialField(int resolution, std::vector<NormalizedVoxel> voxels);

  int resolution() const { return resolution_; }
  const std::vector<NormalizedVoxel>& voxels() const { return voxels_; }
  std::size_t size() const { return voxels_.size(); }
  bool empty() const { return voxels_.empty(); }

 private:
  int resolution_ = kDefaultResolution;
  std::vector<NormalizedVoxel> voxels_;
};

NormalizedMaterialField normalize_field(const MaterialField& field,
                                        const NormalizationSpec& spec);
MaterialField denormalize_field(const NormalizedMaterialField& field,
                                const NormalizationSpec& spec);

// Scalar encoders, exposed for the metrics and prediction paths.
double normalize_log(double value, double log_lo, double log_hi);
double normalize_linear(double value, double lo, double hi);
double denormalize_log(double n, double log_lo, double log_hi);
double denormalize_linear(double n, double lo, double hi);

// Occupied voxels with at least one unoccupied (or out-of-grid) face
// neighbour, in the order they appear in the field.
std::vector<VoxelCoord> boundary_voxels(const MaterialField& field);
std::vector<VoxelCoord> boundary_voxels(std::span<const VoxelCoord> coords,
                                        int resolution);

CoordSet occupancy_of(const SparseLatentGrid& grid);
CoordSet occupancy_of(const MaterialField& field);
CoordSet occupancy_of(const NormalizedMaterialField& field);

std::vector<VoxelCoord> coords_of(const SparseLatentGrid& grid);
std::vector<VoxelCoord> coords_of(const MaterialField& field);

}  // namespace slatphys

#endif  // SLATPHYS_VOXEL_HPP_
