#include "slatphys/align.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <Eigen/LU>
#include <Eigen/SVD>
#include <omp.h>

namespace slatphys {

namespace {

Eigen::Matrix3d axis_rotation(int axis, int quarter_turns) {
  const int q = ((quarter_turns % 4) + 4) % 4;
  static constexpr int kCos[4] = {1, 0, -1, 0};
  static constexpr int kSin[4] = {0, 1, 0, -1};
  const double c = kCos[q];
  const double s = kSin[q];
  Eigen::Matrix3d r;
  switch (axis) {
    case 0: r << 1, 0, 0, 0, c, -s, 0, s, c; break;
    case 1: r << c, 0, s, 0, 1, 0, -s, 0, c; break;
    default: r << c, -s, 0, s, c, 0, 0, 0, 1; break;
  }
  return r;
}

Point3 centroid(std::span<const Point3> pts) {
  Point3 c = Point3::Zero();
  for (const auto& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

struct Correspondences {
  std::vector<Point3> from;
  std::vector<Point3> to;
  double truncated_sq = 0.0;
};

Correspondences correspond(std::span<const Point3> source, const NearestIndex& target,
                           const RigidTransform& t, double threshold) {
  const double cap = threshold * threshold;
  const auto n = static_cast<std::ptrdiff_t>(source.size());
  std::vector<std::ptrdiff_t> match(source.size(), -1);
  std::vector<double> d2(source.size(), cap);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    if (auto nb = target.nearest_within(t.apply(source[i]), threshold)) {
      match[i] = static_cast<std::ptrdiff_t>(nb->index);
      d2[i] = nb->dist2;
    }
  }
  Correspondences c;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    c.truncated_sq += d2[i];
    if (match[i] >= 0) {
      c.from.push_back(source[i]);
      c.to.push_back(target.point(static_cast<std::size_t>(match[i])));
    }
  }
  return c;
}

double rmse_of(const Correspondences& c, std::size_t n) {
  return std::sqrt(c.truncated_sq / static_cast<double>(n));
}

void require_clouds(std::span<const Point3> source, std::span<const Point3> target,
                    double threshold) {
  if (source.empty() || target.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "ICP requires non-empty source and target");
  }
  if (!(threshold > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "ICP threshold must be positive");
  }
}

}  // namespace

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  return {rotation * other.rotation, rotation * other.translation + translation};
}

RigidTransform RigidTransform::inverse() const {
  const Eigen::Matrix3d rt = rotation.transpose();
  return {rt, -(rt * translation)};
}

bool RigidTransform::is_proper(double tol) const {
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity())
                           .cwiseAbs()
                           .maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

std::vector<RigidTransform> candidate_orientations() {
  std::vector<RigidTransform> out;
  out.reserve(64);
  for (int g = 0; g < 4; ++g) {
    for (int b = 0; b < 4; ++b) {
      for (int a = 0; a < 4; ++a) {
        RigidTransform t;
        t.rotation = axis_rotation(2, g) * axis_rotation(1, b) * axis_rotation(0, a);
        out.push_back(t);
      }
    }
  }
  return out;
}

std::vector<Eigen::Matrix3i> cube_rotations() {
  std::vector<Eigen::Matrix3i> out;
  for (const auto& c : candidate_orientations()) {
    const Eigen::Matrix3i m = c.rotation.array().round().cast<int>().matrix();
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  return out;
}

std::vector<Point3> to_points(std::span<const VoxelCoord> coords) {
  std::vector<Point3> out;
  out.reserve(coords.size());
  for (const auto& c : coords) out.emplace_back(c.x, c.y, c.z);
  return out;
}

double icp_fitness(std::span<const Point3> source, std::span<const Point3> target,
                   const RigidTransform& transform, double threshold) {
  require_clouds(source, target, threshold);
  const NearestIndex index(target, threshold);
  const auto c = correspond(source, index, transform, threshold);
  return static_cast<double>(c.from.size()) / static_cast<double>(source.size());
}

double icp_truncated_rmse(std::span<const Point3> source, std::span<const Point3> target,
                          const RigidTransform& transform, double threshold) {
  require_clouds(source, target, threshold);
  const NearestIndex index(target, threshold);
  return rmse_of(correspond(source, index, transform, threshold), source.size());
}

RigidTransform kabsch(std::span<const Point3> from, std::span<const Point3> to) {
  const Point3 cf = centroid(from);
  const Point3 ct = centroid(to);
  Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) h += (from[i] - cf) * (to[i] - ct).transpose();
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  // Flip the least-significant direction when the best orthogonal fit is a reflection.
  Eigen::Matrix3d d = Eigen::Matrix3d::Identity();
  d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  RigidTransform t;
  t.rotation = v * d * u.transpose();
  t.translation = ct - t.rotation * cf;
  return t;
}

IcpResult icp_refine(std::span<const Point3> source, std::span<const Point3> target,
                     const RigidTransform& init, int max_iters, double threshold) {
  require_clouds(source, target, threshold);
  const NearestIndex index(target, threshold);

  IcpResult result;
  result.transform = init;
  auto corr = correspond(source, index, init, threshold);
  if (corr.from.size() < 3) {
    throw DegenerateCorrespondence("fewer than 3 correspondences within threshold", init);
  }
  double rmse = rmse_of(corr, source.size());
  std::size_t inliers = corr.from.size();
  result.rmse_history.push_back(rmse);

  for (int it = 1; it <= max_iters; ++it) {
    const RigidTransform next = kabsch(corr.from, corr.to);
    auto next_corr = correspond(source, index, next, threshold);
    if (next_corr.from.size() < 3) {
      throw DegenerateCorrespondence("fewer than 3 correspondences within threshold",
                                     result.transform);
    }
    const double next_rmse = rmse_of(next_corr, source.size());
    // The truncated energy cannot rise in exact arithmetic; reject round-off increases.
    if (next_rmse > rmse) break;
    const double improvement = rmse - next_rmse;
    result.transform = next;
    result.iterations = it;
    rmse = next_rmse;
    inliers = next_corr.from.size();
    corr = std::move(next_corr);
    result.rmse_history.push_back(rmse);
    if (improvement < 1e-6) break;
  }
  result.rmse = rmse;
  result.fitness = static_cast<double>(inliers) / static_cast<double>(source.size());
  return result;
}

AlignResult align_and_resample(const MaterialField& physics, const SparseLatentGrid& slat,
                               const AlignOptions& options) {
  if (physics.empty() || slat.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "alignment requires non-empty inputs");
  }
  if (physics.resolution() != slat.resolution()) {
    throw Error(ErrorKind::kInvalidArgument, "physics and SLAT grids differ in resolution");
  }

  const auto boundary = boundary_voxels(physics);
  const auto slat_coords = coords_of(slat);
  std::vector<Point3> source = to_points(boundary);
  std::vector<Point3> target = to_points(slat_coords);
  const Point3 cs = centroid(source);
  const Point3 ct = centroid(target);
  for (auto& p : source) p -= cs;
  for (auto& p : target) p -= ct;

  const auto candidates = candidate_orientations();
  const NearestIndex target_index(target, options.threshold);
  const int n_cand = static_cast<int>(candidates.size());
  std::vector<double> fitness(candidates.size()), rmse(candidates.size());
#pragma omp parallel for schedule(dynamic)
  for (int k = 0; k < n_cand; ++k) {
    const auto c = correspond(source, target_index, candidates[k], options.threshold);
    fitness[k] = static_cast<double>(c.from.size()) / static_cast<double>(source.size());
    rmse[k] = rmse_of(c, source.size());
  }
  // Reduction in candidate order: highest fitness, then lowest rmse, then lowest index.
  int best = 0;
  for (int k = 1; k < n_cand; ++k) {
    if (fitness[k] > fitness[best] || (fitness[k] == fitness[best] && rmse[k] < rmse[best])) {
      best = k;
    }
  }

  // Centered frame -> raw voxel frame: p -> R (p - cs) + t + ct.
  auto to_raw = [&](const RigidTransform& centered) {
    RigidTransform raw;
    raw.rotation = centered.rotation;
    raw.translation = centered.translation + ct - centered.rotation * cs;
    return raw;
  };

  AlignResult out;
  out.chosen_candidate = best;
  try {
    out.icp = icp_refine(source, target, candidates[best], options.max_iters, options.threshold);
  } catch (const DegenerateCorrespondence& e) {
    throw DegenerateCorrespondence(e.what(), to_raw(e.best()));
  }
  out.icp.transform = to_raw(out.icp.transform);

  // Resample: every SLAT voxel takes the nearest transformed physics voxel,
  // with physics voxels in lexicographic order so ties favour the smaller coordinate.
  std::vector<const MaterialVoxel*> sorted;
  sorted.reserve(physics.size());
  for (const auto& v : physics.voxels()) sorted.push_back(&v);
  std::sort(sorted.begin(), sorted.end(),
            [](const MaterialVoxel* a, const MaterialVoxel* b) { return a->coord < b->coord; });
  std::vector<Point3> moved;
  moved.reserve(sorted.size());
  for (const auto* v : sorted) {
    moved.push_back(out.icp.transform.apply(Point3(v->coord.x, v->coord.y, v->coord.z)));
  }
  const NearestIndex moved_index(moved, std::max(1.0, options.threshold));

  std::vector<MaterialVoxel> resampled(slat.size());
  const auto n_slat = static_cast<std::ptrdiff_t>(slat.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n_slat; ++i) {
    const auto& q = slat.voxels()[i].coord;
    const Neighbor nb = moved_index.nearest(Point3(q.x, q.y, q.z));
    MaterialVoxel v = *sorted[nb.index];
    v.coord = q;
    v.valid = v.valid && nb.dist2 <= options.threshold * options.threshold;
    resampled[i] = v;
  }
  const bool any_valid =
      std::any_of(resampled.begin(), resampled.end(), [](const auto& v) { return v.valid; });
  if (!any_valid) {
    throw Error(ErrorKind::kAlignmentFailure, "no SLAT voxel received a valid annotation");
  }
  out.field = MaterialField(slat.resolution(), std::move(resampled));
  return out;
}

nlohmann::json transform_report(const AlignResult& result) {
  const auto& t = result.icp.transform;
  nlohmann::json rot = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) {
    rot.push_back({t.rotation(r, 0), t.rotation(r, 1), t.rotation(r, 2)});
  }
  return {{"rotation", rot},
          {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}},
          {"fitness", result.icp.fitness},
          {"rmse", result.icp.rmse},
          {"iterations", result.icp.iterations},
          {"chosen_candidate", result.chosen_candidate}};
}

}  // namespace slatphys
