#ifndef SLATPHYS_NEAREST_HPP_
#define SLATPHYS_NEAREST_HPP_

#include <cstddef>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

namespace slatphys {

using Point3 = Eigen::Vector3d;

struct Neighbor {
  std::size_t index = 0;
  double dist2 = 0.0;
};

// Exact nearest-neighbour queries over a uniform spatial hash. Ties between
// equidistant points resolve to the lowest point index.
class NearestIndex {
 public:
  NearestIndex(std::span<const Point3> points, double cell_size);

  std::size_t size() const { return points_.size(); }
  const Point3& point(std::size_t i) const { return points_[i]; }

  // Requires a non-empty index.
  Neighbor nearest(const Point3& query) const;
  // Nearest point with distance <= radius, if any.
  std::optional<Neighbor> nearest_within(const Point3& query, double radius) const;

 private:
  struct CellKey {
    long long x, y, z;
    bool operator==(const CellKey&) const = default;
  };
  struct CellKeyHash {
    std::size_t operator()(const CellKey& k) const;
  };

  CellKey cell_of(const Point3& p) const;
  void scan_cell(const CellKey& key, const Point3& query, std::optional<Neighbor>& best) const;

  std::vector<Point3> points_;
  double cell_size_;
  CellKey lo_{}, hi_{};
  std::unordered_map<CellKey, std::vector<std::size_t>, CellKeyHash> cells_;
};

}  // namespace slatphys

#endif  // SLATPHYS_NEAREST_HPP_
