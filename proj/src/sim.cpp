#include "slatphys/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <omp.h>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "slatphys/error.hpp"

namespace slatphys {

namespace {

using Eigen::Matrix3d;
using Eigen::Vector3d;

// Quadratic B-spline stencil of one particle: nodes base + {0,1,2} per axis.
struct Stencil {
  int base[3];
  double fx[3];
  double w[3][3];
};

Stencil make_stencil(const Vector3d& x, const Vector3d& lo, double inv_h) {
  Stencil s;
  for (int a = 0; a < 3; ++a) {
    const double g = (x[a] - lo[a]) * inv_h;
    s.base[a] = static_cast<int>(std::floor(g - 0.5));
    const double f = g - s.base[a];
    s.fx[a] = f;
    s.w[a][0] = 0.5 * (1.5 - f) * (1.5 - f);
    s.w[a][1] = 0.75 - (f - 1.0) * (f - 1.0);
    s.w[a][2] = 0.5 * (f - 0.5) * (f - 0.5);
  }
  return s;
}

// Per-particle quantities the transfer needs, computed once per step.
struct Transfer {
  Stencil st;
  double mass;
  Vector3d momentum;
  Matrix3d affine;  // -dt V0 (4/h^2) P F^T + m C
};

// The one place a particle's share of a node is computed; the serial scatter
// and the parallel gather both call it so their sums match bit for bit.
inline void accumulate(const Transfer& t, int a, int b, int c, double h, double& mass,
                       Vector3d& momentum) {
  const double weight = t.st.w[0][a] * t.st.w[1][b] * t.st.w[2][c];
  const Vector3d dpos((a - t.st.fx[0]) * h, (b - t.st.fx[1]) * h, (c - t.st.fx[2]) * h);
  mass += weight * t.mass;
  momentum += weight * (t.momentum + t.affine * dpos);
}

void check_config(const SimConfig& config) {
  if (config.grid_resolution < 4) {
    throw Error(ErrorKind::kInvalidArgument, "grid_resolution must be at least 4");
  }
  if (!(config.dt > 0.0) || !std::isfinite(config.dt)) {
    throw Error(ErrorKind::kInvalidArgument, "dt must be positive");
  }
  if (!(config.domain_size > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "domain_size must be positive");
  }
}

std::vector<Transfer> prepare(const ParticleSet& ps, const SimConfig& config, int n) {
  const double h = config.cell();
  const double inv_h = 1.0 / h;
  const double dinv = 4.0 / (h * h);
  const bool par = config.exec == kernels::Exec::kParallel;
  std::vector<Transfer> out(ps.size());
  const long long count = static_cast<long long>(ps.size());
  bool outside = false;
#pragma omp parallel for schedule(static) if (par) reduction(|| : outside)
  for (long long p = 0; p < count; ++p) {
    Transfer& t = out[p];
    t.st = make_stencil(ps.position[p], config.domain_lo, inv_h);
    for (int a = 0; a < 3; ++a) {
      if (t.st.base[a] < 0 || t.st.base[a] + 2 >= n) outside = true;
    }
    t.mass = ps.mass[p];
    t.momentum = ps.mass[p] * ps.velocity[p];
    const Matrix3d& F = ps.deformation[p];
    const Matrix3d P = fixed_corotated_stress(F, ps.mu[p], ps.lambda[p]);
    t.affine = (-config.dt * ps.volume[p] * dinv) * (P * F.transpose()) +
               ps.mass[p] * ps.affine[p];
  }
  if (outside) throw Error(ErrorKind::kOutOfRange, "particle left the simulation domain");
  return out;
}

void collect_active(const std::vector<Transfer>& transfers, int n,
                    std::vector<std::uint32_t>& stamp, std::uint32_t epoch,
                    std::vector<std::size_t>& active) {
  active.clear();
  for (const Transfer& t : transfers) {
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        for (int c = 0; c < 3; ++c) {
          const std::size_t id =
              (static_cast<std::size_t>(t.st.base[0] + a) * n + (t.st.base[1] + b)) * n +
              (t.st.base[2] + c);
          if (stamp[id] != epoch) {
            stamp[id] = epoch;
            active.push_back(id);
          }
        }
      }
    }
  }
  std::sort(active.begin(), active.end());
}

}  // namespace

LameParameters lame_from_modulus(double E, double nu) {
  if (!(E > 0.0) || !std::isfinite(E)) {
    throw Error(ErrorKind::kInvalidArgument, "Young's modulus must be positive");
  }
  if (nu < 0.0) throw Error(ErrorKind::kInvalidArgument, "negative Poisson ratio rejected");
  if (!(nu < 0.5)) {
    throw Error(ErrorKind::kInvalidArgument, "Poisson ratio >= 0.5 is incompressible");
  }
  return {E / (2.0 * (1.0 + nu)), E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))};
}

double ParticleSet::total_mass() const {
  double m = 0.0;
  for (double v : mass) m += v;
  return m;
}

Vector3d ParticleSet::total_momentum() const {
  Vector3d p = Vector3d::Zero();
  for (std::size_t i = 0; i < size(); ++i) p += mass[i] * velocity[i];
  return p;
}

void ParticleSet::push_back(const Vector3d& x, double m, double vol, LameParameters lame,
                            const VoxelCoord& voxel, int mat_class) {
  if (!(m > 0.0)) throw Error(ErrorKind::kInvalidArgument, "particle mass must be positive");
  position.push_back(x);
  velocity.push_back(Vector3d::Zero());
  affine.push_back(Matrix3d::Zero());
  deformation.push_back(Matrix3d::Identity());
  mass.push_back(m);
  volume.push_back(vol);
  mu.push_back(lame.mu);
  lambda.push_back(lame.lambda);
  source_voxel.push_back(voxel);
  mat.push_back(mat_class);
}

double cfl_dt_bound(const ParticleSet& particles, const SimConfig& config) {
  double c2 = 0.0;
  for (std::size_t p = 0; p < particles.size(); ++p) {
    const double rho = particles.mass[p] / particles.volume[p];
    c2 = std::max(c2, (particles.lambda[p] + 2.0 * particles.mu[p]) / rho);
  }
  if (c2 == 0.0) return std::numeric_limits<double>::infinity();
  return 0.3 * config.cell() / std::sqrt(c2);
}

ParticleSet voxels_to_particles(const MaterialField& field, const CoordSet& occupancy,
                                int per_voxel, double voxel_size, std::uint64_t seed,
                                const Vector3d& origin) {
  if (per_voxel < 1) throw Error(ErrorKind::kInvalidArgument, "per_voxel must be >= 1");
  if (!(voxel_size > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "voxel_size must be positive");
  }
  if (occupancy_of(field) != occupancy) {
    throw Error(ErrorKind::kOccupancyMismatch,
                "material field occupancy differs from the latent grid");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto jitter = [&] {
    double u = unit(rng);
    while (u <= 0.0) u = unit(rng);
    return u;
  };
  const double volume = voxel_size * voxel_size * voxel_size / per_voxel;
  ParticleSet ps;
  for (const MaterialVoxel& v : field.voxels()) {
    const LameParameters lame = lame_from_modulus(v.E, v.nu);
    for (int i = 0; i < per_voxel; ++i) {
      Vector3d x;
      for (int a = 0; a < 3; ++a) x[a] = origin[a] + (v.coord[a] + jitter()) * voxel_size;
      ps.push_back(x, v.rho * volume, volume, lame, v.coord, v.mat);
    }
  }
  return ps;
}

Matrix3d fixed_corotated_stress(const Matrix3d& F, double mu, double lambda) {
  Eigen::JacobiSVD<Matrix3d> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3d U = svd.matrixU();
  const Matrix3d V = svd.matrixV();
  if (U.determinant() * V.determinant() < 0.0) U.col(2) *= -1.0;
  const Matrix3d R = U * V.transpose();
  const double J = F.determinant();
  return 2.0 * mu * (F - R) + lambda * (J - 1.0) * J * F.inverse().transpose();
}

MpmGrid::MpmGrid(const SimConfig& config) : n_(config.grid_resolution + 1) {
  const std::size_t total = static_cast<std::size_t>(n_) * n_ * n_;
  mass_.assign(total, 0.0);
  vel_.assign(total, Vector3d::Zero());
  stamp_.assign(total, 0);
}

void p2g_serial(const ParticleSet& particles, MpmGrid& grid, const SimConfig& config) {
  SimConfig cfg = config;
  cfg.exec = kernels::Exec::kSerial;
  const int n = grid.n_;
  for (std::size_t id : grid.active_) {
    grid.mass_[id] = 0.0;
    grid.vel_[id].setZero();
  }
  const std::vector<Transfer> transfers = prepare(particles, cfg, n);
  collect_active(transfers, n, grid.stamp_, ++grid.epoch_, grid.active_);
  const double h = config.cell();
  for (const Transfer& t : transfers) {
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        for (int c = 0; c < 3; ++c) {
          const std::size_t id = grid.index(t.st.base[0] + a, t.st.base[1] + b,
                                            t.st.base[2] + c);
          accumulate(t, a, b, c, h, grid.mass_[id], grid.vel_[id]);
        }
      }
    }
  }
}

void p2g_parallel(const ParticleSet& particles, MpmGrid& grid, const SimConfig& config) {
  const int n = grid.n_;
  for (std::size_t id : grid.active_) {
    grid.mass_[id] = 0.0;
    grid.vel_[id].setZero();
  }
  const std::vector<Transfer> transfers = prepare(particles, config, n);
  collect_active(transfers, n, grid.stamp_, ++grid.epoch_, grid.active_);

  // Bin particles by base node with a stable counting sort, so each bin lists
  // particle indices in ascending order.
  const std::size_t cells = static_cast<std::size_t>(n) * n * n;
  std::vector<std::uint32_t> start(cells + 1, 0);
  for (const Transfer& t : transfers) {
    ++start[grid.index(t.st.base[0], t.st.base[1], t.st.base[2]) + 1];
  }
  for (std::size_t i = 0; i < cells; ++i) start[i + 1] += start[i];
  std::vector<std::uint32_t> order(transfers.size());
  {
    std::vector<std::uint32_t> fill(start.begin(), start.end() - 1);
    for (std::size_t p = 0; p < transfers.size(); ++p) {
      const Transfer& t = transfers[p];
      order[fill[grid.index(t.st.base[0], t.st.base[1], t.st.base[2])]++] =
          static_cast<std::uint32_t>(p);
    }
  }

  const double h = config.cell();
  const long long active = static_cast<long long>(grid.active_.size());
#pragma omp parallel
  {
    std::vector<std::uint32_t> candidates;
#pragma omp for schedule(dynamic, 64)
    for (long long q = 0; q < active; ++q) {
      const std::size_t id = grid.active_[q];
      const int i = static_cast<int>(id / (static_cast<std::size_t>(n) * n));
      const int j = static_cast<int>((id / n) % n);
      const int k = static_cast<int>(id % n);
      candidates.clear();
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
          for (int c = 0; c < 3; ++c) {
            if (i - a < 0 || j - b < 0 || k - c < 0) continue;
            const std::size_t cell = grid.index(i - a, j - b, k - c);
            candidates.insert(candidates.end(), order.begin() + start[cell],
                              order.begin() + start[cell + 1]);
          }
        }
      }
      std::sort(candidates.begin(), candidates.end());
      double m = 0.0;
      Vector3d mv = Vector3d::Zero();
      for (std::uint32_t p : candidates) {
        const Transfer& t = transfers[p];
        accumulate(t, i - t.st.base[0], j - t.st.base[1], k - t.st.base[2], h, m, mv);
      }
      grid.mass_[id] = m;
      grid.vel_[id] = mv;
    }
  }
}

void mpm_step(ParticleSet& particles, MpmGrid& grid, const SimConfig& config,
              long long step_index) {
  check_config(config);
  if (grid.n_ != config.grid_resolution + 1) {
    throw Error(ErrorKind::kShape, "grid does not match the configured resolution");
  }
  // The two transfers agree bit for bit, so a single thread takes the cheaper
  // scatter.
  if (config.exec == kernels::Exec::kParallel && omp_get_max_threads() > 1) {
    p2g_parallel(particles, grid, config);
  } else {
    p2g_serial(particles, grid, config);
  }

  const bool par = config.exec == kernels::Exec::kParallel;
  const int n = grid.n_;
  const double h = config.cell();
  Vector3d accel = config.gravity;
  if (config.wind) accel += *config.wind;

  // Grid update: momentum to velocity, body forces, boundaries.
  const long long active = static_cast<long long>(grid.active_.size());
  bool non_finite = false;
#pragma omp parallel for schedule(static) if (par) reduction(|| : non_finite)
  for (long long q = 0; q < active; ++q) {
    const std::size_t id = grid.active_[q];
    const double m = grid.mass_[id];
    Vector3d& v = grid.vel_[id];
    if (m <= 0.0) {
      v.setZero();
      continue;
    }
    v = v / m + config.dt * accel;
    if (!v.allFinite()) {
      non_finite = true;
      continue;
    }
    const int idx[3] = {static_cast<int>(id / (static_cast<std::size_t>(n) * n)),
                        static_cast<int>((id / n) % n), static_cast<int>(id % n)};
    if (config.sticky_floor && config.domain_lo.z() + idx[2] * h <= 0.0) {
      v.setZero();
      continue;
    }
    // Separating walls on the remaining faces.
    for (int a = 0; a < 3; ++a) {
      if (idx[a] < 3 && v[a] < 0.0) v[a] = 0.0;
      if (idx[a] > n - 4 && v[a] > 0.0) v[a] = 0.0;
    }
  }
  if (non_finite) {
    throw Error(ErrorKind::kNonFinite,
                "non-finite grid velocity at step " + std::to_string(step_index));
  }

  // Grid to particles.
  const double inv_h = 1.0 / h;
  const double dinv = 4.0 / (h * h);
  const long long count = static_cast<long long>(particles.size());
  bool inverted = false;
#pragma omp parallel for schedule(static) if (par) reduction(|| : inverted)
  for (long long p = 0; p < count; ++p) {
    const Stencil st = make_stencil(particles.position[p], config.domain_lo, inv_h);
    Vector3d v = Vector3d::Zero();
    Matrix3d B = Matrix3d::Zero();
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        for (int c = 0; c < 3; ++c) {
          const double weight = st.w[0][a] * st.w[1][b] * st.w[2][c];
          const Vector3d& vi = grid.vel_[grid.index(st.base[0] + a, st.base[1] + b,
                                                    st.base[2] + c)];
          const Vector3d dpos((a - st.fx[0]) * h, (b - st.fx[1]) * h, (c - st.fx[2]) * h);
          v += weight * vi;
          B += (weight * vi) * dpos.transpose();
        }
      }
    }
    const Matrix3d C = dinv * B;
    particles.velocity[p] = v;
    particles.affine[p] = C;
    particles.position[p] += config.dt * v;
    Matrix3d F = (Matrix3d::Identity() + config.dt * C) * particles.deformation[p];
    particles.deformation[p] = F;
    if (!(F.determinant() > 0.0)) inverted = true;
  }
  if (inverted) {
    throw Error(ErrorKind::kDegenerate,
                "degenerate deformation (det F <= 0) at step " + std::to_string(step_index));
  }
}

std::string_view scenario_name(Scenario s) { return s == Scenario::kDrop ? "drop" : "wind"; }

Scenario parse_scenario(std::string_view name) {
  if (name == "drop") return Scenario::kDrop;
  if (name == "wind") return Scenario::kWind;
  throw Error(ErrorKind::kInvalidArgument, "unknown scenario '" + std::string(name) + "'");
}

ScenarioSetup setup_scenario(Scenario scenario, const MaterialField& field,
                             const SparseLatentGrid& slat, const ScenarioConfig& config) {
  if (field.empty()) throw Error(ErrorKind::kInvalidArgument, "empty material field");
  if (config.frames < 1) throw Error(ErrorKind::kInvalidArgument, "frames must be >= 1");
  if (!(config.frame_dt > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "frame_dt must be positive");
  }
  VoxelCoord lo{std::numeric_limits<int>::max(), std::numeric_limits<int>::max(),
                std::numeric_limits<int>::max()};
  VoxelCoord hi{std::numeric_limits<int>::min(), std::numeric_limits<int>::min(),
                std::numeric_limits<int>::min()};
  for (const MaterialVoxel& v : field.voxels()) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], v.coord[a]);
      hi[a] = std::max(hi[a], v.coord[a] + 1);
    }
  }
  const double vs = config.voxel_size;
  Vector3d extent;
  for (int a = 0; a < 3; ++a) extent[a] = (hi[a] - lo[a]) * vs;

  SimConfig sim;
  sim.grid_resolution = config.grid_resolution;
  sim.gravity = config.gravity;
  if (scenario == Scenario::kWind) sim.wind = config.wind;
  sim.exec = config.exec;
  const int r = config.grid_resolution;
  if (r < 16) throw Error(ErrorKind::kInvalidArgument, "grid_resolution must be >= 16");

  // Box about twice the object; tall enough for the drop gap plus the floor
  // and ceiling boundary layers.
  double drop = config.drop_height;
  auto box_for = [&](double gap) {
    return std::max(2.0 * extent.maxCoeff(), (extent.z() + gap) * 1.25 * r / (r - 8.0));
  };
  if (drop < 0.0 && scenario == Scenario::kDrop) {
    // The quadratic stencil reaches 1.5 cells, so a smaller gap starts the
    // object in contact with the floor. Grow the gap to two cells.
    drop = 0.1 * extent.z();
    for (int it = 0; it < 4; ++it) drop = std::max(drop, 2.0 * box_for(drop) / r);
  } else if (drop < 0.0) {
    drop = 0.0;
  }
  const double size = box_for(drop);
  const double h = size / r;
  sim.domain_size = size;
  sim.domain_lo = Vector3d(-0.5 * size, -0.5 * size, -3.0 * h);

  const Vector3d origin(-0.5 * extent.x() - lo.x * vs, -0.5 * extent.y() - lo.y * vs,
                        drop - lo.z * vs);
  ParticleSet ps =
      voxels_to_particles(field, occupancy_of(slat), config.per_voxel, vs, config.seed, origin);

  const double bound = cfl_dt_bound(ps, sim);
  double dt = config.dt;
  if (dt > 0.0) {
    if (dt > bound) {
      throw Error(ErrorKind::kOutOfRange, "dt exceeds the elastic CFL bound");
    }
  } else {
    dt = std::min(bound, config.frame_dt);
  }
  const int per_frame = static_cast<int>(std::ceil(config.frame_dt / dt - 1e-9));
  sim.dt = config.frame_dt / per_frame;
  if (sim.dt > bound) sim.dt = bound;
  sim.steps = per_frame * config.frames;
  return {std::move(ps), sim, per_frame};
}

Trajectory simulate_scenario(Scenario scenario, const MaterialField& field,
                             const SparseLatentGrid& slat, const ScenarioConfig& config) {
  ScenarioSetup setup = setup_scenario(scenario, field, slat, config);
  Trajectory traj;
  traj.dt = setup.sim.dt;
  traj.steps_per_frame = setup.steps_per_frame;
  traj.initial = setup.particles.position;
  traj.frames.reserve(config.frames);
  MpmGrid grid(setup.sim);
  long long step = 0;
  for (int f = 0; f < config.frames; ++f) {
    for (int s = 0; s < setup.steps_per_frame; ++s) {
      mpm_step(setup.particles, grid, setup.sim, step++);
    }
    traj.frames.push_back(setup.particles.position);
  }
  traj.final_state = std::move(setup.particles);
  return traj;
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

}  // namespace

std::string encode_trajectory(const Trajectory& t) {
  const std::size_t particles = t.frames.empty() ? t.initial.size() : t.frames.front().size();
  std::string out = "SLTJ";
  put_u32(out, kTrajectoryVersion);
  put_u32(out, static_cast<std::uint32_t>(t.frames.size()));
  put_u32(out, static_cast<std::uint32_t>(particles));
  out.reserve(out.size() + t.frames.size() * particles * 12);
  for (const auto& frame : t.frames) {
    for (const Vector3d& x : frame) {
      for (int a = 0; a < 3; ++a) {
        const float f = static_cast<float>(x[a]);
        std::uint32_t bits;
        std::memcpy(&bits, &f, sizeof bits);
        put_u32(out, bits);
      }
    }
  }
  return out;
}

void save_trajectory(const std::filesystem::path& path, const Trajectory& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  const std::string bytes = encode_trajectory(t);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "write failed for " + path.string());
}

std::string trajectory_csv(const Trajectory& t) {
  std::ostringstream out;
  out.precision(9);
  out << "frame,time,particle,x,y,z\n";
  for (std::size_t f = 0; f < t.frames.size(); ++f) {
    const double time = (f + 1) * t.steps_per_frame * t.dt;
    for (std::size_t p = 0; p < t.frames[f].size(); ++p) {
      const Vector3d& x = t.frames[f][p];
      out << f << ',' << time << ',' << p << ',' << x.x() << ',' << x.y() << ',' << x.z()
          << '\n';
    }
  }
  return out.str();
}

}  // namespace slatphys
