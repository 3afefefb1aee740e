#ifndef SLATPHYS_METRICS_HPP_
#define SLATPHYS_METRICS_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "slatphys/decoder.hpp"
#include "slatphys/voxel.hpp"

namespace slatphys {

struct ObjectMetrics {
  std::string name;
  double mse_E = 0.0;
  double mse_rho = 0.0;
  double mse_nu = 0.0;
  double mse_avg = 0.0;
  double mat_acc = 0.0;
  std::size_t valid_voxels = 0;
};

// Global values average objects with equal weight. The *_std fields are the
// sample standard deviation across objects (zero for a single object).
struct EvalReport {
  double mse_E = 0.0;
  double mse_rho = 0.0;
  double mse_nu = 0.0;
  double mse_avg = 0.0;
  double mat_acc = 0.0;
  double mse_E_std = 0.0;
  double mse_rho_std = 0.0;
  double mse_nu_std = 0.0;
  double mse_avg_std = 0.0;
  double mat_acc_std = 0.0;
  std::vector<ObjectMetrics> per_object;
};

// Normalized predictions plus one logit row per predicted voxel. Voxels are
// matched to ground truth by coordinate; only valid ground-truth voxels count.
ObjectMetrics per_object_metrics(const NormalizedMaterialField& pred,
                                 std::span<const std::vector<double>> logits,
                                 const NormalizedMaterialField& gt);

// Decoder output aligned index-wise with `coords`.
ObjectMetrics per_object_metrics(std::span<const VoxelPrediction> preds,
                                 std::span<const VoxelCoord> coords,
                                 const NormalizedMaterialField& gt);

// Decoder output as a normalized field: class = argmax of the logits, every
// voxel valid.
NormalizedMaterialField predicted_field(std::span<const VoxelPrediction> preds,
                                        std::span<const VoxelCoord> coords, int resolution);

EvalReport aggregate(std::span<const ObjectMetrics> objects);

// Lowest index wins ties.
int argmax(std::span<const double> logits);

nlohmann::json report_to_json(const EvalReport& report);
std::string per_object_csv(const EvalReport& report);

}  // namespace slatphys

#endif  // SLATPHYS_METRICS_HPP_
