#include "slatphys/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "slatphys/error.hpp"
#include "slatphys/io.hpp"

namespace slatphys {

void LossWeights::validate() const {
  if (!(E >= 0.0 && rho >= 0.0 && nu >= 0.0 && mat >= 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "loss weights must be non-negative");
  }
}

void TrainConfig::validate() const {
  if (!(lr_base > lr_min && lr_min >= 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "learning rates need lr_base > lr_min >= 0");
  }
  if (total_steps < 1 || accumulation < 1 || batch_size < 1) {
    throw Error(ErrorKind::kInvalidArgument,
                "total_steps, accumulation and batch_size must be at least 1");
  }
  if (!(weight_decay >= 0.0 && beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 &&
        eps > 0.0)) {
    throw Error(ErrorKind::kInvalidArgument, "invalid optimizer hyperparameters");
  }
  weights.validate();
}

namespace {

struct LossGrad {
  LossValue value;
  std::vector<double> d_reg;
  std::vector<double> d_logits;
};

// Loss on raw decoder outputs (tanh triplets [N x 3], logits [N x K]) plus
// its gradient with respect to those outputs.
LossGrad loss_and_output_grad(std::span<const double> reg, std::span<const double> logits,
                              std::size_t classes, const NormalizedMaterialField& targets,
                              const LossWeights& w) {
  w.validate();
  const std::size_t n = targets.size();
  if (reg.size() != n * 3 || logits.size() != n * classes) {
    throw Error(ErrorKind::kShape, "predictions are not index-aligned with targets");
  }
  std::size_t valid = 0;
  for (const auto& t : targets.voxels()) valid += t.valid ? 1 : 0;
  if (valid == 0) throw Error(ErrorKind::kInvalidArgument, "no valid target voxels");
  const double inv = 1.0 / static_cast<double>(valid);

  LossGrad out;
  out.d_reg.assign(n * 3, 0.0);
  out.d_logits.assign(n * classes, 0.0);
  const double lam[3] = {w.E, w.rho, w.nu};
  double sq[3] = {0.0, 0.0, 0.0};
  double ce = 0.0;
  std::vector<double> prob(classes);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = targets.voxels()[i];
    if (!t.valid) continue;
    if (t.mat < 0 || static_cast<std::size_t>(t.mat) >= classes) {
      throw Error(ErrorKind::kOutOfRange, "target class outside decoder classes");
    }
    const double target[3] = {t.E, t.rho, t.nu};
    for (int p = 0; p < 3; ++p) {
      const double err = reg[i * 3 + static_cast<std::size_t>(p)] - target[p];
      sq[p] += err * err;
      out.d_reg[i * 3 + static_cast<std::size_t>(p)] = lam[p] * 2.0 * err * inv;
    }
    const double* li = logits.data() + i * classes;
    const double mx = *std::max_element(li, li + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      prob[c] = std::exp(li[c] - mx);
      z += prob[c];
    }
    ce += mx + std::log(z) - li[t.mat];
    for (std::size_t c = 0; c < classes; ++c) {
      const double onehot = static_cast<int>(c) == t.mat ? 1.0 : 0.0;
      out.d_logits[i * classes + c] = w.mat * (prob[c] / z - onehot) * inv;
    }
  }
  out.value.E = sq[0] * inv;
  out.value.rho = sq[1] * inv;
  out.value.nu = sq[2] * inv;
  out.value.mat = ce * inv;
  out.value.total =
      w.E * out.value.E + w.rho * out.value.rho + w.nu * out.value.nu + w.mat * out.value.mat;
  return out;
}

void check_aligned(const SparseLatentGrid& grid, const NormalizedMaterialField& targets) {
  if (grid.size() != targets.size()) {
    throw Error(ErrorKind::kShape, "grid and targets differ in voxel count");
  }
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (grid.voxels()[i].coord != targets.voxels()[i].coord) {
      throw Error(ErrorKind::kShape, "grid and targets are not index-aligned at voxel " +
                                         std::to_string(i));
    }
  }
}

}  // namespace

LossValue total_loss(std::span<const VoxelPrediction> preds,
                     const NormalizedMaterialField& targets, const LossWeights& weights) {
  if (preds.size() != targets.size()) {
    throw Error(ErrorKind::kShape, "predictions are not index-aligned with targets");
  }
  const std::size_t classes = preds.empty() ? kMaterialClasses : preds.front().logits.size();
  std::vector<double> reg, logits;
  for (const auto& p : preds) {
    if (p.logits.size() != classes) throw Error(ErrorKind::kShape, "ragged logits");
    reg.insert(reg.end(), {p.E, p.rho, p.nu});
    logits.insert(logits.end(), p.logits.begin(), p.logits.end());
  }
  return loss_and_output_grad(reg, logits, classes, targets, weights).value;
}

GradResult grad(const DecoderParams& params, const SparseLatentGrid& grid,
                const NormalizedMaterialField& targets, const LossWeights& weights,
                kernels::Exec exec) {
  check_aligned(grid, targets);
  const ForwardCache cache = forward_cached(params, grid, exec);
  const auto lg = loss_and_output_grad(cache.reg, cache.logits,
                                       static_cast<std::size_t>(params.config().classes),
                                       targets, weights);
  GradResult out;
  out.loss = lg.value;
  out.grads.assign(params.size(), 0.0);
  backward(params, cache, lg.d_reg, lg.d_logits, out.grads, exec);
  return out;
}

GradResult batch_grad(const DecoderParams& params, std::span<const Sample* const> batch,
                      const LossWeights& weights, kernels::Exec exec) {
  if (batch.empty()) throw Error(ErrorKind::kInvalidArgument, "empty batch");
  GradResult out;
  out.grads.assign(params.size(), 0.0);
  for (const Sample* s : batch) {
    const GradResult g = grad(params, s->grid, s->target, weights, exec);
    for (std::size_t i = 0; i < out.grads.size(); ++i) out.grads[i] += g.grads[i];
    out.loss.total += g.loss.total;
    out.loss.E += g.loss.E;
    out.loss.rho += g.loss.rho;
    out.loss.nu += g.loss.nu;
    out.loss.mat += g.loss.mat;
  }
  const auto n = static_cast<double>(batch.size());
  for (double& g : out.grads) g /= n;
  out.loss.total /= n;
  out.loss.E /= n;
  out.loss.rho /= n;
  out.loss.nu /= n;
  out.loss.mat /= n;
  return out;
}

double cosine_lr(int step, const TrainConfig& config) {
  if (step < 0 || step > config.total_steps) {
    throw Error(ErrorKind::kOutOfRange, "schedule step " + std::to_string(step) +
                                            " outside [0, " +
                                            std::to_string(config.total_steps) + "]");
  }
  const double t = static_cast<double>(step) / static_cast<double>(config.total_steps);
  return config.lr_min +
         0.5 * (config.lr_base - config.lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

void optimizer_step(DecoderParams& params, std::span<const double> grads, AdamState& state,
                    double lr, const TrainConfig& config) {
  if (grads.size() != params.size()) {
    throw Error(ErrorKind::kShape, "gradient buffer does not match parameters");
  }
  for (const auto& t : params.tensors()) {
    for (std::size_t i = t.offset; i < t.offset + t.size; ++i) {
      if (!std::isfinite(grads[i])) {
        throw Error(ErrorKind::kNonFinite, "non-finite gradient in tensor " + t.name);
      }
    }
  }
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  auto values = params.values();
  for (const auto& t : params.tensors()) {
    const double decay = t.decay ? config.weight_decay : 0.0;
    for (std::size_t i = t.offset; i < t.offset + t.size; ++i) {
      const double g = grads[i];
      state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
      state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
      const double m_hat = state.m[i] / c1;
      const double v_hat = state.v[i] / c2;
      const double p = values[i];
      values[i] = p - lr * (m_hat / (std::sqrt(v_hat) + config.eps)) - lr * decay * p;
    }
  }
}

EvalReport evaluate(const DecoderParams& params, std::span<const Sample> samples,
                    kernels::Exec exec) {
  std::vector<ObjectMetrics> objects;
  for (const auto& s : samples) {
    const auto preds = forward(params, s.grid, exec);
    const auto coords = coords_of(s.grid);
    ObjectMetrics m = per_object_metrics(preds, coords, s.target);
    m.name = s.name;
    objects.push_back(std::move(m));
  }
  return aggregate(objects);
}

Sample make_sample(std::string name, SparseLatentGrid grid, const MaterialField& field,
                   const NormalizationSpec& spec) {
  std::map<VoxelCoord, const MaterialVoxel*> by_coord;
  for (const auto& v : field.voxels()) by_coord[v.coord] = &v;
  if (by_coord.size() != grid.size()) {
    throw Error(ErrorKind::kOccupancyMismatch,
                name + ": material field and latent grid differ in voxel count");
  }
  std::vector<MaterialVoxel> ordered;
  ordered.reserve(grid.size());
  for (const auto& lv : grid.voxels()) {
    const auto it = by_coord.find(lv.coord);
    if (it == by_coord.end()) {
      throw Error(ErrorKind::kOccupancyMismatch,
                  name + ": latent voxel without material annotation");
    }
    ordered.push_back(*it->second);
  }
  NormalizedMaterialField target =
      normalize_field(MaterialField(grid.resolution(), std::move(ordered)), spec);
  return Sample{std::move(name), std::move(grid), std::move(target)};
}

std::vector<Sample> load_samples(const std::filesystem::path& dir) {
  std::vector<Sample> out;
  for (const auto& pair : list_pairs(dir)) {
    auto [field, spec] = load_material_field(pair.mat);
    out.push_back(make_sample(pair.stem, load_latent_grid(pair.slat), field, spec));
  }
  if (out.empty()) {
    throw Error(ErrorKind::kIo, "no <stem>.slat.json/<stem>.mat.json pairs in " + dir.string());
  }
  return out;
}

TrainResult train(const TrainConfig& config, std::span<const Sample> dataset,
                  const DecoderConfig& decoder_config, const HeldOut& held_out,
                  const std::function<void(const TrainRecord&)>& on_step) {
  config.validate();
  if (dataset.empty()) throw Error(ErrorKind::kInvalidArgument, "training dataset is empty");

  TrainResult result;
  result.params = build_decoder(decoder_config, config.seed);
  AdamState state;

  // Epoch-wise shuffled stream of object indices.
  std::mt19937_64 rng(config.seed ^ 0x5eed0da7aULL);
  std::vector<std::size_t> order(dataset.size());
  std::size_t cursor = order.size();
  auto next_sample = [&]() -> const Sample* {
    if (cursor == order.size()) {
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    return &dataset[order[cursor++]];
  };

  const bool select = !held_out.samples.empty() && held_out.eval_every > 0;
  double best_mse = INFINITY;
  auto consider = [&](int step) {
    const double mse = evaluate(result.params, held_out.samples).mse_avg;
    if (mse < best_mse) {
      best_mse = mse;
      result.best_params = result.params;
      result.best_step = step;
    }
  };

  std::vector<double> acc(result.params.size());
  std::vector<const Sample*> batch(static_cast<std::size_t>(config.batch_size));
  for (int step = 0; step < config.total_steps; ++step) {
    std::fill(acc.begin(), acc.end(), 0.0);
    LossValue loss;
    for (int micro = 0; micro < config.accumulation; ++micro) {
      for (auto& s : batch) s = next_sample();
      const GradResult g = batch_grad(result.params, batch, config.weights);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g.grads[i];
      loss.total += g.loss.total;
      loss.E += g.loss.E;
      loss.rho += g.loss.rho;
      loss.nu += g.loss.nu;
      loss.mat += g.loss.mat;
    }
    const auto k = static_cast<double>(config.accumulation);
    for (double& a : acc) a /= k;
    loss.total /= k;
    loss.E /= k;
    loss.rho /= k;
    loss.nu /= k;
    loss.mat /= k;
    if (!std::isfinite(loss.total)) {
      throw Error(ErrorKind::kNonFinite, "loss became non-finite at step " + std::to_string(step));
    }
    const double lr = cosine_lr(step, config);
    optimizer_step(result.params, acc, state, lr, config);
    TrainRecord rec{step, lr, loss};
    result.history.push_back(rec);
    if (on_step) on_step(rec);
    if (select && ((step + 1) % held_out.eval_every == 0 || step + 1 == config.total_steps)) {
      consider(step + 1);
    }
  }
  if (!select) {
    result.best_params = result.params;
    result.best_step = config.total_steps;
  }
  return result;
}

std::string history_csv(std::span<const TrainRecord> history) {
  std::ostringstream os;
  os.precision(17);
  os << "step,lr,total,l_e,l_rho,l_nu,l_mat\n";
  for (const auto& r : history) {
    os << r.step << "," << r.lr << "," << r.loss.total << "," << r.loss.E << "," << r.loss.rho
       << "," << r.loss.nu << "," << r.loss.mat << "\n";
  }
  return os.str();
}

}  // namespace slatphys
