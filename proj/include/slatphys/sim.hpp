#ifndef SLATPHYS_SIM_HPP_
#define SLATPHYS_SIM_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "slatphys/kernels.hpp"
#include "slatphys/voxel.hpp"

namespace slatphys {

struct LameParameters {
  double mu = 0.0;
  double lambda = 0.0;
};

LameParameters lame_from_modulus(double E, double nu);

// Structure-of-arrays particle state.
struct ParticleSet {
  std::vector<Eigen::Vector3d> position;  // m
  std::vector<Eigen::Vector3d> velocity;  // m/s
  std::vector<Eigen::Matrix3d> affine;    // APIC velocity gradient
  std::vector<Eigen::Matrix3d> deformation;
  std::vector<double> mass;    // kg
  std::vector<double> volume;  // rest volume, m^3
  std::vector<double> mu;
  std::vector<double> lambda;
  std::vector<VoxelCoord> source_voxel;
  std::vector<int> mat;

  std::size_t size() const { return position.size(); }
  double total_mass() const;
  Eigen::Vector3d total_momentum() const;
  void push_back(const Eigen::Vector3d& x, double m, double vol, LameParameters lame,
                 const VoxelCoord& voxel, int mat_class);
};

struct SimConfig {
  int grid_resolution = 64;
  double dt = 1e-4;
  int steps = 1;
  Eigen::Vector3d gravity{0.0, 0.0, -9.8};
  std::optional<Eigen::Vector3d> wind;  // uniform acceleration, N/kg
  Eigen::Vector3d domain_lo{-0.5, -0.5, -0.5};
  double domain_size = 1.0;  // cubic box edge
  bool sticky_floor = true;  // zero velocity at nodes with z <= 0
  kernels::Exec exec = kernels::Exec::kParallel;

  double cell() const { return domain_size / grid_resolution; }
};

// Largest explicit step allowed by the elastic CFL bound 0.3 h / max wave speed.
double cfl_dt_bound(const ParticleSet& particles, const SimConfig& config);

// Seeds `per_voxel` uniformly jittered particles inside every voxel cell of
// `field`, whose occupancy must equal `occupancy`. Voxel (i,j,k) spans
// origin + [i, i+1) * voxel_size along each axis.
ParticleSet voxels_to_particles(const MaterialField& field, const CoordSet& occupancy,
                                int per_voxel, double voxel_size, std::uint64_t seed,
                                const Eigen::Vector3d& origin = Eigen::Vector3d::Zero());

// Fixed-corotated first Piola-Kirchhoff stress.
Eigen::Matrix3d fixed_corotated_stress(const Eigen::Matrix3d& F, double mu, double lambda);

// Background grid plus scratch state; reusing one across steps avoids
// reallocating the node arrays.
class MpmGrid {
 public:
  explicit MpmGrid(const SimConfig& config);

  int nodes_per_axis() const { return n_; }
  double node_mass(int i, int j, int k) const { return mass_[index(i, j, k)]; }
  const Eigen::Vector3d& node_velocity(int i, int j, int k) const { return vel_[index(i, j, k)]; }
  const std::vector<std::size_t>& active() const { return active_; }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * n_ + j) * n_ + k;
  }

 private:
  friend void mpm_step(ParticleSet&, MpmGrid&, const SimConfig&, long long);
  friend void p2g_serial(const ParticleSet&, MpmGrid&, const SimConfig&);
  friend void p2g_parallel(const ParticleSet&, MpmGrid&, const SimConfig&);

  int n_;
  std::vector<double> mass_;
  std::vector<Eigen::Vector3d> vel_;  // momentum until normalized
  std::vector<std::uint32_t> stamp_;
  std::uint32_t epoch_ = 0;
  std::vector<std::size_t> active_;
};

// Particle-to-grid transfer of mass and momentum (including the stress
// impulse). Both versions accumulate each node over particles in index order.
void p2g_serial(const ParticleSet& particles, MpmGrid& grid, const SimConfig& config);
void p2g_parallel(const ParticleSet& particles, MpmGrid& grid, const SimConfig& config);

// One explicit MLS-MPM step. `step_index` only labels errors.
void mpm_step(ParticleSet& particles, MpmGrid& grid, const SimConfig& config,
              long long step_index = 0);

enum class Scenario { kDrop, kWind };
std::string_view scenario_name(Scenario s);
Scenario parse_scenario(std::string_view name);

struct ScenarioConfig {
  int frames = 60;
  double frame_dt = 1.0 / 60.0;  // seconds between recorded frames
  double dt = 0.0;               // 0: largest stable step dividing frame_dt
  int grid_resolution = 64;
  int per_voxel = 8;
  double voxel_size = 0.02;  // m
  double drop_height = -1.0;  // gap below the object, m; <0: max(10% of its height, ~2 cells), 0 for wind
  Eigen::Vector3d wind{3.0, 0.0, 0.0};
  Eigen::Vector3d gravity{0.0, 0.0, -9.8};
  std::uint64_t seed = 0;
  kernels::Exec exec = kernels::Exec::kParallel;
};

struct Trajectory {
  double dt = 0.0;
  int steps_per_frame = 0;
  std::vector<Eigen::Vector3d> initial;
  std::vector<std::vector<Eigen::Vector3d>> frames;  // positions after each frame
  ParticleSet final_state;
};

struct ScenarioSetup {
  ParticleSet particles;
  SimConfig sim;  // sim.steps covers every frame
  int steps_per_frame = 0;
};

// Places the object centered above the floor in a cubic box about twice its
// extent and picks the step size.
ScenarioSetup setup_scenario(Scenario scenario, const MaterialField& field,
                             const SparseLatentGrid& slat, const ScenarioConfig& config);

Trajectory simulate_scenario(Scenario scenario, const MaterialField& field,
                             const SparseLatentGrid& slat, const ScenarioConfig& config);

// "SLTJ", u32 version, u32 frames, u32 particles, then f32 LE positions.
std::string encode_trajectory(const Trajectory& t);
void save_trajectory(const std::filesystem::path& path, const Trajectory& t);
std::string trajectory_csv(const Trajectory& t);

inline constexpr std::uint32_t kTrajectoryVersion = 1;

}  // namespace slatphys

#endif  // SLATPHYS_SIM_HPP_
