#ifndef SLATPHYS_TRAIN_HPP_
#define SLATPHYS_TRAIN_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "slatphys/decoder.hpp"
#include "slatphys/metrics.hpp"
#include "slatphys/voxel.hpp"

namespace slatphys {

struct LossWeights {
  double E = 1.0;
  double rho = 1.0;
  double nu = 1.0;
  double mat = 0.5;

  void validate() const;
};

struct LossValue {
  double total = 0.0;
  double E = 0.0;
  double rho = 0.0;
  double nu = 0.0;
  double mat = 0.0;
};

// Masked multi-task loss: per-property MSE and mean cross-entropy over valid
// voxels, combined with the given weights. preds[i] belongs to targets.voxels()[i].
LossValue total_loss(std::span<const VoxelPrediction> preds,
                     const NormalizedMaterialField& targets, const LossWeights& weights);

struct Sample {
  std::string name;
  SparseLatentGrid grid;
  NormalizedMaterialField target;
};

// Reorders `field` to the voxel order of `grid` and normalizes it. Throws
// OccupancyMismatch when the two cover different voxels.
Sample make_sample(std::string name, SparseLatentGrid grid, const MaterialField& field,
                   const NormalizationSpec& spec);
// Every <stem>.slat.json / <stem>.mat.json pair of a directory, sorted by stem.
std::vector<Sample> load_samples(const std::filesystem::path& dir);

struct GradResult {
  LossValue loss;
  std::vector<double> grads;  // DecoderParams layout
};

// Exact reverse-mode gradient of total_loss for one object.
GradResult grad(const DecoderParams& params, const SparseLatentGrid& grid,
                const NormalizedMaterialField& targets, const LossWeights& weights,
                kernels::Exec exec = kernels::Exec::kParallel);

// Mean of per-object losses and gradients over a batch of objects.
GradResult batch_grad(const DecoderParams& params, std::span<const Sample* const> batch,
                      const LossWeights& weights,
                      kernels::Exec exec = kernels::Exec::kParallel);

struct TrainConfig {
  double lr_base = 1e-4;
  double lr_min = 0.0;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int total_steps = 2000;
  int accumulation = 1;
  int batch_size = 1;  // objects per micro-batch
  std::uint64_t seed = 0;
  LossWeights weights;

  void validate() const;
};

double cosine_lr(int step, const TrainConfig& config);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long long step = 0;
};

// Bias-corrected adaptive moments with decoupled weight decay; decay applies
// to weight matrices only.
void optimizer_step(DecoderParams& params, std::span<const double> grads, AdamState& state,
                    double lr, const TrainConfig& config);

struct TrainRecord {
  int step = 0;
  double lr = 0.0;
  LossValue loss;
};

struct HeldOut {
  std::span<const Sample> samples;
  int eval_every = 0;  // 0 disables checkpoint selection
};

struct TrainResult {
  DecoderParams params;       // after the last step
  DecoderParams best_params;  // best held-out mse_avg, or final params without held-out data
  int best_step = -1;
  std::vector<TrainRecord> history;
};

TrainResult train(const TrainConfig& config, std::span<const Sample> dataset,
                  const DecoderConfig& decoder_config, const HeldOut& held_out = {},
                  const std::function<void(const TrainRecord&)>& on_step = {});

// Runs the decoder over every sample and aggregates the evaluation metrics.
EvalReport evaluate(const DecoderParams& params, std::span<const Sample> samples,
                    kernels::Exec exec = kernels::Exec::kParallel);

std::string history_csv(std::span<const TrainRecord> history);

}  // namespace slatphys

#endif  // SLATPHYS_TRAIN_HPP_
