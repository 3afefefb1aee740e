#include "slatphys/bench.hpp"

#include <sys/utsname.h>

#include <algorithm>
#include <chrono>
#include <thread>

#include <omp.h>

#include "slatphys/align.hpp"
#include "slatphys/error.hpp"
#include "slatphys/io.hpp"
#include "slatphys/metrics.hpp"
#include "slatphys/sim.hpp"

namespace slatphys {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Loaded {
  SparseLatentGrid grid;
  MaterialField field;
  NormalizationSpec spec;
};

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorKind::kInvalidArgument, "median of nothing");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string machine_descriptor() {
  std::string out;
  utsname u{};
  if (uname(&u) == 0) out = std::string(u.sysname) + " " + u.release + " " + u.machine;
  out += ", " + std::to_string(std::thread::hardware_concurrency()) + " hw threads";
  out += ", omp max " + std::to_string(omp_get_max_threads());
  return out;
}

BenchReport bench_pipeline(const std::filesystem::path& dataset, const DecoderParams& params,
                           int repeats) {
  if (repeats < kMinBenchRepeats) {
    throw Error(ErrorKind::kInvalidArgument,
                "bench needs at least " + std::to_string(kMinBenchRepeats) + " repeats");
  }
  const auto pairs = list_pairs(dataset);
  if (pairs.empty()) {
    throw Error(ErrorKind::kIo, "no object pairs in " + dataset.string());
  }

  const char* names[] = {"load", "align", "forward", "eval", "sim_step"};
  std::vector<std::vector<double>> times(5);
  std::size_t voxels = 0;
  for (int r = 0; r < repeats; ++r) {
    double t_load = 0, t_align = 0, t_forward = 0, t_eval = 0, t_sim = 0;
    voxels = 0;
    for (const auto& pair : pairs) {
      auto start = Clock::now();
      Loaded in;
      in.grid = load_latent_grid(pair.slat);
      std::tie(in.field, in.spec) = load_material_field(pair.mat);
      t_load += seconds_since(start);
      voxels += in.grid.size();

      start = Clock::now();
      const AlignResult aligned = align_and_resample(in.field, in.grid);
      t_align += seconds_since(start);

      start = Clock::now();
      const auto preds = forward(params, in.grid);
      t_forward += seconds_since(start);

      start = Clock::now();
      const auto coords = coords_of(in.grid);
      std::vector<ObjectMetrics> objects{
          per_object_metrics(preds, coords, normalize_field(aligned.field, in.spec))};
      const EvalReport report = aggregate(objects);
      t_eval += seconds_since(start);
      (void)report;

      const MaterialField physical = denormalize_field(
          predicted_field(preds, coords, in.grid.resolution()), in.spec);
      ScenarioConfig sc;
      sc.exec = kernels::Exec::kParallel;
      ScenarioSetup setup = setup_scenario(Scenario::kDrop, physical, in.grid, sc);
      MpmGrid grid(setup.sim);
      start = Clock::now();
      mpm_step(setup.particles, grid, setup.sim);
      t_sim += seconds_since(start);
    }
    times[0].push_back(t_load);
    times[1].push_back(t_align);
    times[2].push_back(t_forward);
    times[3].push_back(t_eval);
    times[4].push_back(t_sim);
  }

  BenchReport report;
  report.machine = machine_descriptor();
  report.repeats = repeats;
  for (int s = 0; s < 5; ++s) {
    report.stages.push_back({names[s], median(times[s]), voxels});
    report.total_s += report.stages.back().median_s;
  }
  return report;
}

nlohmann::json bench_to_json(const BenchReport& report) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : report.stages) {
    stages.push_back({{"name", s.name}, {"median_s", s.median_s}, {"voxels", s.voxels}});
  }
  return {{"machine", report.machine},
          {"repeats", report.repeats},
          {"stages", stages},
          {"total_s", report.total_s}};
}

}  // namespace slatphys
