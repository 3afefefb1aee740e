#ifndef SLATPHYS_DECODER_HPP_
#define SLATPHYS_DECODER_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "slatphys/kernels.hpp"
#include "slatphys/voxel.hpp"

namespace slatphys {

struct DecoderConfig {
  int channels = 64;
  int blocks = 4;
  int heads = 4;
  int window = 8;
  double mlp_ratio = 4.0;
  int classes = kMaterialClasses;
  int input_dim = kLatentDim;
  int resolution = kDefaultResolution;

  void validate() const;
  int mlp_hidden() const;
  bool operator==(const DecoderConfig&) const = default;

  static DecoderConfig small(int resolution = kDefaultResolution);
  static DecoderConfig medium(int resolution = kDefaultResolution);
  static DecoderConfig large(int resolution = kDefaultResolution);
};

nlohmann::json config_to_json(const DecoderConfig& c);
DecoderConfig config_from_json(const nlohmann::json& j);

// Sinusoidal positional features: sin/cos at this many octaves per axis.
inline constexpr int kPosOctaves = 4;
inline constexpr int kPosFeatures = 3 * 2 * kPosOctaves;

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;  // weights are [in, out]
  std::size_t offset = 0;
  std::size_t size = 0;
  bool decay = false;  // true for weight matrices only
};

// Tensor inventory of a config, in storage order.
std::vector<TensorInfo> decoder_layout(const DecoderConfig& config);

// Offsets of every tensor inside the flat storage.
struct BlockOffsets {
  std::size_t ln1_g, ln1_b, q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
  std::size_t ln2_g, ln2_b, mlp_in_w, mlp_in_b, mlp_out_w, mlp_out_b;
};
struct DecoderOffsets {
  std::size_t in_w, in_b, pos_w, pos_b;
  std::vector<BlockOffsets> blocks;
  std::size_t reg_w, reg_b, cls_w, cls_b;
};

// All learnable scalars in one contiguous buffer plus a named tensor table.
class DecoderParams {
 public:
  DecoderParams() = default;
  explicit DecoderParams(const DecoderConfig& config);

  const DecoderConfig& config() const { return config_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  const DecoderOffsets& offsets() const { return offsets_; }
  std::size_t size() const { return values_.size(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> tensor(const std::string& name);
  std::span<const double> tensor(const std::string& name) const;
  const TensorInfo& info(const std::string& name) const;

  bool operator==(const DecoderParams& o) const {
    return config_ == o.config_ && values_ == o.values_;
  }

 private:
  DecoderConfig config_;
  std::vector<TensorInfo> tensors_;
  DecoderOffsets offsets_{};
  std::vector<double> values_;
};

// Weights ~ N(0, 1/fan_in) truncated at two standard deviations, biases zero,
// norm scales one. Deterministic in (config, seed).
DecoderParams build_decoder(const DecoderConfig& config, std::uint64_t seed);

// Closed-form scalar count; equals build_decoder(config, s).size().
std::size_t param_count(const DecoderConfig& config);

// Groups voxel indices by window cell floor(((c + s) mod R) / window), with
// s = window / 2 when shifted. Groups are ordered by cell, indices ascending.
kernels::Groups window_partition(std::span<const VoxelCoord> coords, int window, int resolution,
                                 bool shifted);

struct VoxelPrediction {
  double E = 0.0;
  double rho = 0.0;
  double nu = 0.0;
  std::vector<double> logits;
};

struct BlockCache {
  kernels::Groups groups;
  std::vector<double> input, ln1, ln1_mean, ln1_rstd, q, k, v, attn;
  std::vector<double> mid, ln2, ln2_mean, ln2_rstd, hidden_pre, hidden;
};

// Activations retained by forward_cached for the backward pass.
struct ForwardCache {
  std::size_t rows = 0;
  std::vector<double> features;  // [N x input_dim]
  std::vector<double> pos;       // [N x kPosFeatures]
  std::vector<BlockCache> blocks;
  std::vector<double> final;   // residual stream after the last block
  std::vector<double> reg;     // tanh outputs [N x 3]
  std::vector<double> logits;  // [N x classes]
};

std::vector<double> positional_features(std::span<const VoxelCoord> coords, int resolution);

ForwardCache forward_cached(const DecoderParams& params, const SparseLatentGrid& grid,
                            kernels::Exec exec = kernels::Exec::kParallel);

std::vector<VoxelPrediction> forward(const DecoderParams& params, const SparseLatentGrid& grid,
                                     kernels::Exec exec = kernels::Exec::kParallel);

std::vector<VoxelPrediction> predictions_from(const ForwardCache& cache, int classes);

// Accumulates parameter gradients into `grads` (same layout as params) given
// d(loss)/d(tanh outputs) [N x 3] and d(loss)/d(logits) [N x classes].
void backward(const DecoderParams& params, const ForwardCache& cache,
              std::span<const double> d_reg, std::span<const double> d_logits,
              std::span<double> grads, kernels::Exec exec = kernels::Exec::kParallel);

// Checkpoint: u32 LE manifest length, JSON manifest { "config", "tensors": [ {
// "name", "shape", "offset" } ] }, then the little-endian f64 blob.
void save_checkpoint(const std::string& path, const DecoderParams& params);
DecoderParams load_checkpoint(const std::string& path);
std::string encode_checkpoint(const DecoderParams& params);
DecoderParams decode_checkpoint(const std::string& bytes);

}  // namespace slatphys

#endif  // SLATPHYS_DECODER_HPP_
