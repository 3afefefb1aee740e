#include "slatphys/voxel.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "slatphys/error.hpp"

namespace slatphys {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kOutOfRange: return "out_of_range";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kAlignmentFailure: return "alignment_failure";
    case ErrorKind::kNonFinite: return "non_finite";
    case ErrorKind::kOccupancyMismatch: return "occupancy_mismatch";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

namespace {

std::string describe(const VoxelCoord& c) {
  std::ostringstream os;
  os << "(" << c.x << "," << c.y << "," << c.z << ")";
  return os.str();
}

void check_resolution(int resolution) {
  if (resolution < 1) {
    throw Error(ErrorKind::kInvalidArgument,
                "grid resolution must be positive, got " + std::to_string(resolution));
  }
}

template <typename Voxel>
void check_coords(const std::vector<Voxel>& voxels, int resolution) {
  CoordHashSet seen;
  seen.reserve(voxels.size());
  for (const auto& v : voxels) {
    if (!in_grid(v.coord, resolution)) {
      throw Error(ErrorKind::kOutOfRange,
                  "voxel " + describe(v.coord) + " outside grid of resolution " +
                      std::to_string(resolution));
    }
    if (!seen.insert(v.coord).second) {
      throw Error(ErrorKind::kInvalidArgument, "duplicate voxel " + describe(v.coord));
    }
  }
}

[[noreturn]] void out_of_range(const VoxelCoord& c, const char* property, double value) {
  std::ostringstream os;
  os.precision(17);
  os << "voxel " << describe(c) << " property " << property << " value " << value
     << " outside normalization range";
  throw Error(ErrorKind::kOutOfRange, os.str());
}

}  // namespace

bool in_grid(const VoxelCoord& c, int resolution) {
  return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < resolution && c.y < resolution &&
         c.z < resolution;
}

SparseLatentGrid::SparseLatentGrid(int resolution, std::vector<LatentVoxel> voxels)
    : resolution_(resolution), voxels_(std::move(voxels)) {
  check_resolution(resolution_);
  check_coords(voxels_, resolution_);
  for (const auto& v : voxels_) {
    for (double f : v.feature) {
      if (!std::isfinite(f)) {
        throw Error(ErrorKind::kNonFinite, "non-finite latent at voxel " + describe(v.coord));
      }
    }
  }
}

MaterialField::MaterialField(int resolution, std::vector<MaterialVoxel> voxels)
    : resolution_(resolution), voxels_(std::move(voxels)) {
  check_resolution(resolution_);
  check_coords(voxels_, resolution_);
  for (const auto& v : voxels_) {
    if (!(std::isfinite(v.E) && v.E > 0.0) || !(std::isfinite(v.rho) && v.rho > 0.0)) {
      throw Error(ErrorKind::kOutOfRange,
                  "E and rho must be positive and finite at voxel " + describe(v.coord));
    }
    if (!(v.nu >= 0.0 && v.nu < 0.5)) {
      throw Error(ErrorKind::kOutOfRange, "nu outside [0, 0.5) at voxel " + describe(v.coord));
    }
    if (v.mat < 0 || v.mat >= kMaterialClasses) {
      throw Error(ErrorKind::kOutOfRange,
                  "material class outside {0..7} at voxel " + describe(v.coord));
    }
  }
}

NormalizedMaterialField::NormalizedMaterialField(int resolution,
                                                 std::vector<NormalizedVoxel> voxels)
    : resolution_(resolution), voxels_(std::move(voxels)) {
  check_resolution(resolution_);
  check_coords(voxels_, resolution_);
  for (const auto& v : voxels_) {
    for (double n : {v.E, v.rho, v.nu}) {
      if (!(n >= -1.0 && n <= 1.0)) {
        throw Error(ErrorKind::kOutOfRange,
                    "normalized value outside [-1, 1] at voxel " + describe(v.coord));
      }
    }
    if (v.mat < 0 || v.mat >= kMaterialClasses) {
      throw Error(ErrorKind::kOutOfRange,
                  "material class outside {0..7} at voxel " + describe(v.coord));
    }
  }
}

void NormalizationSpec::validate() const {
  const bool ok = logE_min < logE_max && logRho_min < logRho_max && nu_min < nu_max &&
                  nu_min >= 0.0 && nu_max < 0.5 && std::isfinite(logE_min) &&
                  std::isfinite(logE_max) && std::isfinite(logRho_min) &&
                  std::isfinite(logRho_max);
  if (!ok) {
    throw Error(ErrorKind::kInvalidArgument, "invalid normalization spec");
  }
}

double normalize_log(double value, double log_lo, double log_hi) {
  return 2.0 * (std::log10(value) - log_lo) / (log_hi - log_lo) - 1.0;
}

double normalize_linear(double value, double lo, double hi) {
  return 2.0 * (value - lo) / (hi - lo) - 1.0;
}

double denormalize_log(double n, double log_lo, double log_hi) {
  return std::pow(10.0, log_lo + 0.5 * (n + 1.0) * (log_hi - log_lo));
}

double denormalize_linear(double n, double lo, double hi) {
  return lo + 0.5 * (n + 1.0) * (hi - lo);
}

NormalizedMaterialField normalize_field(const MaterialField& field,
                                        const NormalizationSpec& spec) {
  spec.validate();
  std::vector<NormalizedVoxel> out;
  out.reserve(field.size());
  for (const auto& v : field.voxels()) {
    const double logE = std::log10(v.E);
    const double logRho = std::log10(v.rho);
    // Boundary values survive a log10/pow round trip only to within an ulp.
    constexpr double kSlack = 1e-12;
    if (!(logE >= spec.logE_min - kSlack && logE <= spec.logE_max + kSlack)) {
      out_of_range(v.coord, "E", v.E);
    }
    if (!(logRho >= spec.logRho_min - kSlack && logRho <= spec.logRho_max + kSlack)) {
      out_of_range(v.coord, "rho", v.rho);
    }
    if (!(v.nu >= spec.nu_min - kSlack && v.nu <= spec.nu_max + kSlack)) {
      out_of_range(v.coord, "nu", v.nu);
    }
    NormalizedVoxel n;
    n.coord = v.coord;
    n.E = std::clamp(normalize_log(v.E, spec.logE_min, spec.logE_max), -1.0, 1.0);
    n.rho = std::clamp(normalize_log(v.rho, spec.logRho_min, spec.logRho_max), -1.0, 1.0);
    n.nu = std::clamp(normalize_linear(v.nu, spec.nu_min, spec.nu_max), -1.0, 1.0);
    n.mat = v.mat;
    n.valid = v.valid;
    out.push_back(n);
  }
  return NormalizedMaterialField(field.resolution(), std::move(out));
}

MaterialField denormalize_field(const NormalizedMaterialField& field,
                                const NormalizationSpec& spec) {
  spec.validate();
  std::vector<MaterialVoxel> out;
  out.reserve(field.size());
  for (const auto& n : field.voxels()) {
    MaterialVoxel v;
    v.coord = n.coord;
    v.E = denormalize_log(n.E, spec.logE_min, spec.logE_max);
    v.rho = denormalize_log(n.rho, spec.logRho_min, spec.logRho_max);
    v.nu = denormalize_linear(n.nu, spec.nu_min, spec.nu_max);
    v.mat = n.mat;
    v.valid = n.valid;
    out.push_back(v);
  }
  return MaterialField(field.resolution(), std::move(out));
}

std::vector<VoxelCoord> boundary_voxels(std::span<const VoxelCoord> coords, int resolution) {
  CoordHashSet occupied(coords.begin(), coords.end());
  static constexpr std::array<std::array<int, 3>, 6> kFaces{
      {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
  std::vector<VoxelCoord> out;
  for (const auto& c : coords) {
    for (const auto& d : kFaces) {
      const VoxelCoord n{c.x + d[0], c.y + d[1], c.z + d[2]};
      if (!in_grid(n, resolution) || !occupied.contains(n)) {
        out.push_back(c);
        break;
      }
    }
  }
  return out;
}

std::vector<VoxelCoord> boundary_voxels(const MaterialField& field) {
  const auto coords = coords_of(field);
  return boundary_voxels(coords, field.resolution());
}

std::vector<VoxelCoord> coords_of(const SparseLatentGrid& grid) {
  std::vector<VoxelCoord> out;
  out.reserve(grid.size());
  for (const auto& v : grid.voxels()) out.push_back(v.coord);
  return out;
}

std::vector<VoxelCoord> coords_of(const MaterialField& field) {
  std::vector<VoxelCoord> out;
  out.reserve(field.size());
  for (const auto& v : field.voxels()) out.push_back(v.coord);
  return out;
}

CoordSet occupancy_of(const SparseLatentGrid& grid) {
  CoordSet s;
  for (const auto& v : grid.voxels()) s.insert(v.coord);
  return s;
}

CoordSet occupancy_of(const MaterialField& field) {
  CoordSet s;
  for (const auto& v : field.voxels()) s.insert(v.coord);
  return s;
}

CoordSet occupancy_of(const NormalizedMaterialField& field) {
  CoordSet s;
  for (const auto& v : field.voxels()) s.insert(v.coord);
  return s;
}

}  // namespace slatphys
