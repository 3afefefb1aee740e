#include "slatphys/nearest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "slatphys/error.hpp"

namespace slatphys {

std::size_t NearestIndex::CellKeyHash::operator()(const CellKey& k) const {
  std::size_t h = static_cast<std::size_t>(k.x) * 73856093u;
  h ^= static_cast<std::size_t>(k.y) * 19349663u;
  h ^= static_cast<std::size_t>(k.z) * 83492791u;
  return h;
}

NearestIndex::NearestIndex(std::span<const Point3> points, double cell_size)
    : points_(points.begin(), points.end()), cell_size_(cell_size) {
  if (!(cell_size_ > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "spatial hash cell size must be positive");
  }
  if (points_.empty()) return;
  lo_ = hi_ = cell_of(points_[0]);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const CellKey k = cell_of(points_[i]);
    cells_[k].push_back(i);
    lo_ = {std::min(lo_.x, k.x), std::min(lo_.y, k.y), std::min(lo_.z, k.z)};
    hi_ = {std::max(hi_.x, k.x), std::max(hi_.y, k.y), std::max(hi_.z, k.z)};
  }
}

NearestIndex::CellKey NearestIndex::cell_of(const Point3& p) const {
  return {static_cast<long long>(std::floor(p.x() / cell_size_)),
          static_cast<long long>(std::floor(p.y() / cell_size_)),
          static_cast<long long>(std::floor(p.z() / cell_size_))};
}

void NearestIndex::scan_cell(const CellKey& key, const Point3& query,
                             std::optional<Neighbor>& best) const {
  auto it = cells_.find(key);
  if (it == cells_.end()) return;
  for (std::size_t i : it->second) {
    const double d2 = (points_[i] - query).squaredNorm();
    if (!best || d2 < best->dist2 || (d2 == best->dist2 && i < best->index)) {
      best = Neighbor{i, d2};
    }
  }
}

Neighbor NearestIndex::nearest(const Point3& query) const {
  if (points_.empty()) throw Error(ErrorKind::kInvalidArgument, "nearest() on empty index");
  const CellKey c = cell_of(query);
  // Rings beyond this radius cannot contain points.
  const long long max_ring = std::max({std::abs(c.x - lo_.x), std::abs(c.x - hi_.x),
                                       std::abs(c.y - lo_.y), std::abs(c.y - hi_.y),
                                       std::abs(c.z - lo_.z), std::abs(c.z - hi_.z)});
  std::optional<Neighbor> best;
  for (long long k = 0; k <= max_ring; ++k) {
    for (long long dx = -k; dx <= k; ++dx) {
      for (long long dy = -k; dy <= k; ++dy) {
        const bool edge = std::abs(dx) == k || std::abs(dy) == k;
        const long long step = edge ? 1 : 2 * k;
        for (long long dz = -k; dz <= k; dz += (step == 0 ? 1 : step)) {
          scan_cell({c.x + dx, c.y + dy, c.z + dz}, query, best);
        }
      }
    }
    // Anything in ring k+1 or beyond is at least k cells away.
    if (best) {
      const double reach = static_cast<double>(k) * cell_size_;
      if (best->dist2 < reach * reach) break;
    }
  }
  return *best;
}

std::optional<Neighbor> NearestIndex::nearest_within(const Point3& query, double radius) const {
  std::optional<Neighbor> best;
  if (points_.empty()) return best;
  const CellKey lo = cell_of(query - Point3::Constant(radius));
  const CellKey hi = cell_of(query + Point3::Constant(radius));
  for (long long x = lo.x; x <= hi.x; ++x) {
    for (long long y = lo.y; y <= hi.y; ++y) {
      for (long long z = lo.z; z <= hi.z; ++z) scan_cell({x, y, z}, query, best);
    }
  }
  if (best && best->dist2 > radius * radius) best.reset();
  return best;
}

}  // namespace slatphys
