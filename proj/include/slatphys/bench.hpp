#ifndef SLATPHYS_BENCH_HPP_
#define SLATPHYS_BENCH_HPP_

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "slatphys/decoder.hpp"

namespace slatphys {

struct StageTiming {
  std::string name;
  double median_s = 0.0;
  std::size_t voxels = 0;
};

struct BenchReport {
  std::string machine;
  int repeats = 0;
  std::vector<StageTiming> stages;  // load, align, forward, eval, sim_step
  double total_s = 0.0;             // sum of stage medians
};

inline constexpr int kMinBenchRepeats = 3;

// Times each stage over every object pair in `dataset` and reports the median
// wall time of each stage across repeats. Forward timing excludes file IO.
BenchReport bench_pipeline(const std::filesystem::path& dataset, const DecoderParams& params,
                           int repeats);

double median(std::vector<double> values);
std::string machine_descriptor();
nlohmann::json bench_to_json(const BenchReport& report);

}  // namespace slatphys

#endif  // SLATPHYS_BENCH_HPP_
