#include "slatphys/fixtures.hpp"

#include <array>
#include <cmath>
#include <deque>
#include <functional>
#include <map>
#include <random>

#include "slatphys/error.hpp"

namespace slatphys {

namespace {

// snow, rubber, wood, metal, plastic, foliage, stem, ceramic
constexpr std::array<MaterialPreset, kMaterialClasses> kPresets{{
    {"snow", 5e3, 400.0, 0.2},
    {"rubber", 1e6, 1100.0, 0.45},
    {"wood", 5e9, 600.0, 0.3},
    {"metal", 5e10, 7800.0, 0.3},
    {"plastic", 2e9, 1200.0, 0.35},
    {"foliage", 5e4, 500.0, 0.3},
    {"stem", 5e6, 800.0, 0.35},
    {"ceramic", 2e10, 2400.0, 0.2},
}};

constexpr int kSnow = 0;
constexpr int kWood = 2;
constexpr int kFoliage = 5;
constexpr int kStem = 6;
constexpr int kCeramic = 7;

struct Vec {
  double x, y, z;
};

// A region predicate in continuous voxel coordinates; first match wins.
struct Region {
  std::string name;
  std::function<bool(const Vec&)> contains;
};

double sq(double v) { return v * v; }

bool in_sphere(const Vec& p, const Vec& c, double r) {
  return sq(p.x - c.x) + sq(p.y - c.y) + sq(p.z - c.z) <= r * r;
}

bool in_box(const Vec& p, const Vec& lo, const Vec& hi) {
  return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z &&
         p.z <= hi.z;
}

// Cylinder along `axis` (0=x, 2=z) from a to b around center line (u, v).
bool in_cylinder(const Vec& p, int axis, double a, double b, double cu, double cv, double r) {
  const double along = axis == 0 ? p.x : (axis == 1 ? p.y : p.z);
  const double u = axis == 0 ? p.y : p.x;
  const double v = axis == 2 ? p.y : p.z;
  return along >= a && along <= b && sq(u - cu) + sq(v - cv) <= r * r;
}

struct Shape {
  std::vector<Region> regions;
  std::vector<int> default_classes;
};

Shape make_shape(const FixtureSpec& spec, std::mt19937_64& rng) {
  const double res = spec.resolution;
  const double s = res / 64.0;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const double jitter = 1.0 + 0.12 * unit(rng);
  const double c0 = (res - 1.0) / 2.0;
  const Vec c{c0 + 2.0 * s * unit(rng), c0 + 2.0 * s * unit(rng), c0 + 2.0 * s * unit(rng)};
  auto size = [&](double base) { return spec.size > 0.0 ? spec.size * base / 10.0 : base * s * jitter; };
  std::uniform_int_distribution<int> pick(0, kMaterialClasses - 1);
  auto distinct = [&](int n) {
    std::vector<int> out;
    while (static_cast<int>(out.size()) < n) {
      const int m = pick(rng);
      if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    return out;
  };

  Shape shape;
  switch (spec.kind) {
    case FixtureKind::kSphere: {
      const double r = size(10.0);
      shape.regions = {
          {"core", [=](const Vec& p) { return in_sphere(p, c, 0.55 * r); }},
          {"shell", [=](const Vec& p) { return in_sphere(p, c, r); }},
      };
      shape.default_classes = distinct(2);
      break;
    }
    case FixtureKind::kBox: {
      const Vec h{size(8.0), size(6.0), size(5.0)};
      shape.regions = {
          {"bottom", [=](const Vec& p) {
             return in_box(p, {c.x - h.x, c.y - h.y, c.z - h.z}, {c.x + h.x, c.y + h.y, c.z});
           }},
          {"top", [=](const Vec& p) {
             return in_box(p, {c.x - h.x, c.y - h.y, c.z}, {c.x + h.x, c.y + h.y, c.z + h.z});
           }},
      };
      shape.default_classes = distinct(2);
      break;
    }
    case FixtureKind::kSnowman: {
      const double rb = size(7.0);
      const double rt = size(5.0);
      const Vec bottom{c.x, c.y, c.z - 0.55 * rb};
      const Vec top{c.x, c.y, bottom.z + rb + 0.7 * rt};
      const double arm_r = std::max(0.75, size(1.0));
      const double reach = rt + size(6.0);
      shape.regions = {
          {"arms", [=](const Vec& p) {
             return in_cylinder(p, 0, top.x - reach, top.x + reach, top.y, top.z, arm_r) &&
                    !in_sphere(p, top, rt - arm_r);
           }},
          {"body", [=](const Vec& p) { return in_sphere(p, bottom, rb) || in_sphere(p, top, rt); }},
      };
      shape.default_classes = {kWood, kSnow};
      break;
    }
    case FixtureKind::kFlower: {
      const double pot = size(5.0);
      const double stem_len = size(10.0);
      const double head = size(5.0);
      const double base = c.z - 1.2 * pot;
      const double pot_top = base + 1.6 * pot;
      const double stem_top = pot_top + stem_len;
      const double stem_r = std::max(0.75, size(1.2));
      shape.regions = {
          {"pot", [=](const Vec& p) {
             return in_box(p, {c.x - pot, c.y - pot, base}, {c.x + pot, c.y + pot, pot_top});
           }},
          {"stem", [=](const Vec& p) {
             return in_cylinder(p, 2, pot_top, stem_top, c.x, c.y, stem_r);
           }},
          {"petals", [=](const Vec& p) {
             // Flattened ellipsoid on top of the stem.
             return sq((p.x - c.x) / head) + sq((p.y - c.y) / head) +
                        sq((p.z - stem_top) / (0.45 * head)) <=
                    1.0;
           }},
      };
      shape.default_classes = {kCeramic, kStem, kFoliage};
      break;
    }
    case FixtureKind::kLShape: {
      // Three unequal arms from one corner; no non-trivial cube rotation maps it to itself.
      const double t = std::max(2.0, std::round(size(3.0)));
      const double ax = std::round(size(14.0));
      const double ay = std::round(size(9.0));
      const double az = std::round(size(5.0));
      const Vec o{std::round(c.x - ax / 2.0), std::round(c.y - ay / 2.0), std::round(c.z - az / 2.0)};
      shape.regions = {
          {"arm_x", [=](const Vec& p) {
             return in_box(p, o, {o.x + ax + t - 1, o.y + t - 1, o.z + t - 1});
           }},
          {"arm_y", [=](const Vec& p) {
             return in_box(p, {o.x, o.y + t, o.z}, {o.x + t - 1, o.y + ay + t - 1, o.z + t - 1});
           }},
          {"arm_z", [=](const Vec& p) {
             return in_box(p, {o.x, o.y, o.z + t}, {o.x + t - 1, o.y + t - 1, o.z + az + t - 1});
           }},
      };
      shape.default_classes = distinct(3);
      break;
    }
  }
  return shape;
}

// 6-connected steps to the nearest unoccupied cell; boundary voxels get 0.
std::vector<int> surface_depth(const std::vector<VoxelCoord>& coords, int resolution) {
  std::map<VoxelCoord, std::size_t> index;
  for (std::size_t i = 0; i < coords.size(); ++i) index[coords[i]] = i;
  const auto boundary = boundary_voxels(coords, resolution);
  std::vector<int> depth(coords.size(), -1);
  std::deque<std::size_t> queue;
  for (const auto& b : boundary) {
    const std::size_t i = index.at(b);
    depth[i] = 0;
    queue.push_back(i);
  }
  static constexpr int kFaces[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                                       {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    for (const auto& f : kFaces) {
      const VoxelCoord n{coords[i].x + f[0], coords[i].y + f[1], coords[i].z + f[2]};
      auto it = index.find(n);
      if (it != index.end() && depth[it->second] < 0) {
        depth[it->second] = depth[i] + 1;
        queue.push_back(it->second);
      }
    }
  }
  return depth;
}

}  // namespace

std::string_view fixture_kind_name(FixtureKind kind) {
  switch (kind) {
    case FixtureKind::kSphere: return "sphere";
    case FixtureKind::kBox: return "box";
    case FixtureKind::kSnowman: return "snowman";
    case FixtureKind::kFlower: return "flower";
    case FixtureKind::kLShape: return "lshape";
  }
  return "unknown";
}

FixtureKind parse_fixture_kind(std::string_view name) {
  for (auto k : {FixtureKind::kSphere, FixtureKind::kBox, FixtureKind::kSnowman,
                 FixtureKind::kFlower, FixtureKind::kLShape}) {
    if (fixture_kind_name(k) == name) return k;
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown fixture kind '" + std::string(name) + "'");
}

const MaterialPreset& material_preset(int mat) {
  if (mat < 0 || mat >= kMaterialClasses) {
    throw Error(ErrorKind::kOutOfRange, "material class outside {0..7}");
  }
  return kPresets[static_cast<std::size_t>(mat)];
}

LatentFeature latent_code(int mat, const VoxelCoord& c, int depth, int resolution) {
  LatentFeature z{};
  const int b0 = mat & 1, b1 = (mat >> 1) & 1, b2 = (mat >> 2) & 1;
  const int bits[4] = {b0, b1, b2, b0 ^ b1 ^ b2};
  for (int i = 0; i < 4; ++i) z[static_cast<std::size_t>(i)] = bits[i] ? 1.0 : -1.0;
  const double span = std::max(1, resolution - 1);
  for (int a = 0; a < 3; ++a) z[static_cast<std::size_t>(4 + a)] = 2.0 * c[a] / span - 1.0;
  z[7] = depth / (0.125 * resolution);
  return z;
}

FixtureObject generate_object(const FixtureSpec& spec) {
  if (spec.resolution < 4) throw Error(ErrorKind::kInvalidArgument, "fixture resolution too small");
  if (!(spec.latent_noise >= 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "latent_noise must be non-negative");
  }
  std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(spec.kind));
  const Shape shape = make_shape(spec, rng);

  std::vector<MaterialRegion> regions = spec.material_regions;
  if (regions.empty()) {
    for (std::size_t r = 0; r < shape.regions.size(); ++r) {
      const int mat = shape.default_classes[r];
      const auto& p = material_preset(mat);
      regions.push_back({static_cast<int>(r), mat, p.E, p.rho, p.nu});
    }
  }
  auto region_material = [&](int region) -> const MaterialRegion& {
    for (const auto& m : regions) {
      if (m.region == region) return m;
    }
    throw Error(ErrorKind::kInvalidArgument,
                "no material assigned to region " + std::to_string(region));
  };

  std::vector<VoxelCoord> coords;
  std::vector<int> region_of;
  const int res = spec.resolution;
  for (int x = 0; x < res; ++x) {
    for (int y = 0; y < res; ++y) {
      for (int z = 0; z < res; ++z) {
        const Vec p{double(x), double(y), double(z)};
        for (std::size_t r = 0; r < shape.regions.size(); ++r) {
          if (shape.regions[r].contains(p)) {
            coords.push_back({x, y, z});
            region_of.push_back(static_cast<int>(r));
            break;
          }
        }
      }
    }
  }
  if (coords.empty()) throw Error(ErrorKind::kInvalidArgument, "fixture rasterized to no voxels");

  const auto depth = surface_depth(coords, res);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<LatentVoxel> latents;
  std::vector<MaterialVoxel> materials;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const auto& m = region_material(region_of[i]);
    LatentVoxel lv{coords[i], latent_code(m.mat, coords[i], depth[i], res)};
    if (spec.latent_noise > 0.0) {
      for (double& f : lv.feature) f += spec.latent_noise * noise(rng);
    }
    latents.push_back(lv);
    materials.push_back({coords[i], m.E, m.rho, m.nu, m.mat, true});
  }

  FixtureObject obj;
  obj.grid = SparseLatentGrid(res, std::move(latents));
  obj.field = MaterialField(res, std::move(materials));
  obj.region_of = std::move(region_of);
  for (const auto& r : shape.regions) obj.region_names.push_back(r.name);
  obj.regions = std::move(regions);
  return obj;
}

PerturbedField perturb_annotation(const MaterialField& field, int rotation_index,
                                  const VoxelCoord& translation) {
  static const auto rotations = cube_rotations();
  if (rotation_index < 0 || rotation_index >= static_cast<int>(rotations.size())) {
    throw Error(ErrorKind::kOutOfRange, "rotation index outside 0..23");
  }
  const Eigen::Matrix3i& m = rotations[static_cast<std::size_t>(rotation_index)];
  const int res = field.resolution();
  const int span = res - 1;  // twice the grid center
  std::vector<MaterialVoxel> moved;
  moved.reserve(field.size());
  for (const auto& v : field.voxels()) {
    // Doubled coordinates keep the half-integer grid center exact.
    const Eigen::Vector3i d(2 * v.coord.x - span, 2 * v.coord.y - span, 2 * v.coord.z - span);
    const Eigen::Vector3i r = m * d + Eigen::Vector3i::Constant(span);
    MaterialVoxel out = v;
    out.coord = {r.x() / 2 + translation.x, r.y() / 2 + translation.y, r.z() / 2 + translation.z};
    if (!in_grid(out.coord, res)) {
      throw Error(ErrorKind::kOutOfRange, "perturbed voxel leaves the grid");
    }
    moved.push_back(out);
  }
  std::sort(moved.begin(), moved.end(),
            [](const MaterialVoxel& a, const MaterialVoxel& b) { return a.coord < b.coord; });

  PerturbedField out;
  out.field = MaterialField(res, std::move(moved));
  const double center = span / 2.0;
  out.applied.rotation = m.cast<double>();
  out.applied.translation = Eigen::Vector3d::Constant(center) - out.applied.rotation * Eigen::Vector3d::Constant(center) +
                            Eigen::Vector3d(translation.x, translation.y, translation.z);
  out.inverse = out.applied.inverse();
  return out;
}

nlohmann::json transform_to_json(const RigidTransform& t) {
  nlohmann::json rot = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) rot.push_back({t.rotation(r, 0), t.rotation(r, 1), t.rotation(r, 2)});
  return {{"rotation", rot},
          {"translation", {t.translation.x(), t.translation.y(), t.translation.z()}}};
}

nlohmann::json fixture_manifest(const FixtureSpec& spec, const FixtureObject& object) {
  nlohmann::json regions = nlohmann::json::array();
  std::vector<std::size_t> counts(object.region_names.size(), 0);
  for (int r : object.region_of) ++counts[static_cast<std::size_t>(r)];
  for (const auto& m : object.regions) {
    const auto r = static_cast<std::size_t>(m.region);
    regions.push_back({{"region", m.region},
                       {"name", r < object.region_names.size() ? object.region_names[r] : ""},
                       {"mat", m.mat},
                       {"material", std::string(material_preset(m.mat).name)},
                       {"E", m.E},
                       {"rho", m.rho},
                       {"nu", m.nu},
                       {"voxels", r < counts.size() ? counts[r] : 0}});
  }
  return {{"kind", std::string(fixture_kind_name(spec.kind))},
          {"resolution", spec.resolution},
          {"seed", spec.seed},
          {"latent_noise", spec.latent_noise},
          {"voxels", object.field.size()},
          {"regions", std::move(regions)}};
}

}  // namespace slatphys
