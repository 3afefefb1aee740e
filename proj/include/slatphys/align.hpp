#ifndef SLATPHYS_ALIGN_HPP_
#define SLATPHYS_ALIGN_HPP_

#include <span>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"
#include "slatphys/error.hpp"
#include "slatphys/nearest.hpp"
#include "slatphys/voxel.hpp"

namespace slatphys {

struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Point3 apply(const Point3& p) const { return rotation * p + translation; }
  // (this * other)(p) == this->apply(other.apply(p))
  RigidTransform operator*(const RigidTransform& other) const;
  RigidTransform inverse() const;
  // Orthogonal with det +1, both within tol.
  bool is_proper(double tol = 1e-9) const;
};

struct IcpResult {
  RigidTransform transform;
  double fitness = 0.0;
  // Truncated RMSE: sqrt(mean over all source points of min(d^2, threshold^2)).
  double rmse = 0.0;
  int iterations = 0;
  // rmse after the initial transform and after every accepted iteration.
  std::vector<double> rmse_history;
};

// Thrown when fewer than three correspondences fall within the threshold.
class DegenerateCorrespondence : public Error {
 public:
  DegenerateCorrespondence(const std::string& message, RigidTransform best)
      : Error(ErrorKind::kDegenerate, message), best_(best) {}
  const RigidTransform& best() const { return best_; }

 private:
  RigidTransform best_;
};

inline constexpr double kDefaultIcpThreshold = 2.0;
inline constexpr int kDefaultIcpIterations = 50;

// Rz(g) * Ry(b) * Rx(a) for a, b, g in {0, 90, 180, 270} degrees, a fastest.
// All 64 are kept, including repeats; entry 0 is the identity.
std::vector<RigidTransform> candidate_orientations();
// The 24 distinct rotations of the cube in first-appearance order within
// candidate_orientations(); entry 0 is the identity.
std::vector<Eigen::Matrix3i> cube_rotations();

double icp_fitness(std::span<const Point3> source, std::span<const Point3> target,
                   const RigidTransform& transform, double threshold);
// Truncated RMSE, same definition as IcpResult::rmse.
double icp_truncated_rmse(std::span<const Point3> source, std::span<const Point3> target,
                          const RigidTransform& transform, double threshold);

IcpResult icp_refine(std::span<const Point3> source, std::span<const Point3> target,
                     const RigidTransform& init, int max_iters = kDefaultIcpIterations,
                     double threshold = kDefaultIcpThreshold);

// Closed-form least-squares rotation + translation taking from[i] to to[i].
RigidTransform kabsch(std::span<const Point3> from, std::span<const Point3> to);

struct AlignOptions {
  double threshold = kDefaultIcpThreshold;
  int max_iters = kDefaultIcpIterations;
};

struct AlignResult {
  // Transform maps physics voxel coordinates into the SLAT frame.
  IcpResult icp;
  int chosen_candidate = 0;
  MaterialField field;
};

AlignResult align_and_resample(const MaterialField& physics, const SparseLatentGrid& slat,
                               const AlignOptions& options = {});

nlohmann::json transform_report(const AlignResult& result);

std::vector<Point3> to_points(std::span<const VoxelCoord> coords);

}  // namespace slatphys

#endif  // SLATPHYS_ALIGN_HPP_
