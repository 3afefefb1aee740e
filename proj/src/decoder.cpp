#include "slatphys/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <tuple>

#include "slatphys/error.hpp"

namespace slatphys {

using kernels::Exec;
using kernels::KernelSet;

void DecoderConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::kInvalidArgument, m); };
  if (channels < 1 || heads < 1) fail("channels and heads must be positive");
  if (channels % heads != 0) fail("channels must be divisible by heads");
  if (blocks < 1) fail("decoder needs at least one block");
  if (classes < 2) fail("decoder needs at least two classes");
  if (input_dim < 1) fail("input_dim must be positive");
  if (resolution < 1 || window < 1 || window > resolution || resolution % window != 0) {
    fail("window must divide the grid resolution");
  }
  if (!(mlp_ratio > 0.0) || mlp_hidden() < 1) fail("mlp_ratio must give a positive hidden width");
}

int DecoderConfig::mlp_hidden() const {
  return static_cast<int>(std::lround(mlp_ratio * channels));
}

DecoderConfig DecoderConfig::small(int resolution) {
  DecoderConfig c;
  c.channels = 64;
  c.blocks = 4;
  c.heads = 4;
  c.resolution = resolution;
  return c;
}

DecoderConfig DecoderConfig::medium(int resolution) {
  DecoderConfig c;
  c.channels = 128;
  c.blocks = 6;
  c.heads = 8;
  c.resolution = resolution;
  return c;
}

DecoderConfig DecoderConfig::large(int resolution) {
  DecoderConfig c;
  c.channels = 256;
  c.blocks = 8;
  c.heads = 16;
  c.resolution = resolution;
  return c;
}

nlohmann::json config_to_json(const DecoderConfig& c) {
  return {{"channels", c.channels},   {"blocks", c.blocks},       {"heads", c.heads},
          {"window", c.window},       {"mlp_ratio", c.mlp_ratio}, {"classes", c.classes},
          {"input_dim", c.input_dim}, {"resolution", c.resolution}};
}

DecoderConfig config_from_json(const nlohmann::json& j) {
  DecoderConfig c;
  try {
    c.channels = j.at("channels").get<int>();
    c.blocks = j.at("blocks").get<int>();
    c.heads = j.at("heads").get<int>();
    c.window = j.value("window", c.window);
    c.mlp_ratio = j.value("mlp_ratio", c.mlp_ratio);
    c.classes = j.value("classes", c.classes);
    c.input_dim = j.value("input_dim", c.input_dim);
    c.resolution = j.value("resolution", c.resolution);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kIo, std::string("malformed decoder config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<TensorInfo> decoder_layout(const DecoderConfig& config) {
  config.validate();
  const auto c = static_cast<std::size_t>(config.channels);
  const auto hid = static_cast<std::size_t>(config.mlp_hidden());
  std::vector<TensorInfo> out;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::vector<std::size_t> shape, bool decay) {
    std::size_t n = 1;
    for (auto s : shape) n *= s;
    out.push_back({std::move(name), std::move(shape), offset, n, decay});
    offset += n;
  };
  add("in_proj.w", {static_cast<std::size_t>(config.input_dim), c}, true);
  add("in_proj.b", {c}, false);
  add("pos_proj.w", {static_cast<std::size_t>(kPosFeatures), c}, true);
  add("pos_proj.b", {c}, false);
  for (int b = 0; b < config.blocks; ++b) {
    const std::string p = "blocks." + std::to_string(b) + ".";
    add(p + "ln1.g", {c}, false);
    add(p + "ln1.b", {c}, false);
    for (const char* m : {"q", "k", "v", "o"}) {
      add(p + "attn." + m + ".w", {c, c}, true);
      add(p + "attn." + m + ".b", {c}, false);
    }
    add(p + "ln2.g", {c}, false);
    add(p + "ln2.b", {c}, false);
    add(p + "mlp.in.w", {c, hid}, true);
    add(p + "mlp.in.b", {hid}, false);
    add(p + "mlp.out.w", {hid, c}, true);
    add(p + "mlp.out.b", {c}, false);
  }
  add("head.reg.w", {c, 3}, true);
  add("head.reg.b", {3}, false);
  add("head.cls.w", {c, static_cast<std::size_t>(config.classes)}, true);
  add("head.cls.b", {static_cast<std::size_t>(config.classes)}, false);
  return out;
}

std::size_t param_count(const DecoderConfig& config) {
  config.validate();
  const auto c = static_cast<std::size_t>(config.channels);
  const auto h = static_cast<std::size_t>(config.mlp_hidden());
  const auto d = static_cast<std::size_t>(config.input_dim);
  const auto k = static_cast<std::size_t>(config.classes);
  const auto p = static_cast<std::size_t>(kPosFeatures);
  const std::size_t per_block = 4 * c          // two layer norms
                                + 4 * (c * c + c)  // q, k, v, o
                                + (c * h + h) + (h * c + c);
  return (d * c + c) + (p * c + c) + static_cast<std::size_t>(config.blocks) * per_block +
         (c * 3 + 3) + (c * k + k);
}

DecoderParams::DecoderParams(const DecoderConfig& config)
    : config_(config), tensors_(decoder_layout(config)) {
  std::size_t total = 0;
  std::map<std::string, std::size_t> at;
  for (const auto& t : tensors_) {
    at[t.name] = t.offset;
    total += t.size;
  }
  values_.assign(total, 0.0);
  offsets_.in_w = at["in_proj.w"];
  offsets_.in_b = at["in_proj.b"];
  offsets_.pos_w = at["pos_proj.w"];
  offsets_.pos_b = at["pos_proj.b"];
  for (int b = 0; b < config.blocks; ++b) {
    const std::string p = "blocks." + std::to_string(b) + ".";
    offsets_.blocks.push_back({at[p + "ln1.g"], at[p + "ln1.b"], at[p + "attn.q.w"],
                               at[p + "attn.q.b"], at[p + "attn.k.w"], at[p + "attn.k.b"],
                               at[p + "attn.v.w"], at[p + "attn.v.b"], at[p + "attn.o.w"],
                               at[p + "attn.o.b"], at[p + "ln2.g"], at[p + "ln2.b"],
                               at[p + "mlp.in.w"], at[p + "mlp.in.b"], at[p + "mlp.out.w"],
                               at[p + "mlp.out.b"]});
  }
  offsets_.reg_w = at["head.reg.w"];
  offsets_.reg_b = at["head.reg.b"];
  offsets_.cls_w = at["head.cls.w"];
  offsets_.cls_b = at["head.cls.b"];
}

const TensorInfo& DecoderParams::info(const std::string& name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw Error(ErrorKind::kInvalidArgument, "no decoder tensor named " + name);
}

std::span<double> DecoderParams::tensor(const std::string& name) {
  const auto& t = info(name);
  return std::span<double>(values_).subspan(t.offset, t.size);
}

std::span<const double> DecoderParams::tensor(const std::string& name) const {
  const auto& t = info(name);
  return std::span<const double>(values_).subspan(t.offset, t.size);
}

DecoderParams build_decoder(const DecoderConfig& config, std::uint64_t seed) {
  DecoderParams params(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& t : params.tensors()) {
    auto span = params.tensor(t.name);
    const bool is_scale = t.name.ends_with(".g");
    const double stddev = t.decay ? 1.0 / std::sqrt(static_cast<double>(t.shape.front())) : 0.0;
    for (double& v : span) {
      if (t.decay) {
        double z;
        do {
          z = normal(rng);
        } while (std::abs(z) > 2.0);
        v = stddev * z;
      } else {
        v = is_scale ? 1.0 : 0.0;
      }
    }
  }
  return params;
}

kernels::Groups window_partition(std::span<const VoxelCoord> coords, int window, int resolution,
                                 bool shifted) {
  if (window < 1 || resolution % window != 0) {
    throw Error(ErrorKind::kInvalidArgument, "window must divide the grid resolution");
  }
  const int shift = shifted ? window / 2 : 0;
  std::map<std::tuple<int, int, int>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    auto cell = [&](int v) { return ((v + shift) % resolution) / window; };
    cells[{cell(coords[i].x), cell(coords[i].y), cell(coords[i].z)}].push_back(i);
  }
  kernels::Groups out;
  out.reserve(cells.size());
  for (auto& [key, idx] : cells) out.push_back(std::move(idx));
  return out;
}

std::vector<double> positional_features(std::span<const VoxelCoord> coords, int resolution) {
  std::vector<double> out(coords.size() * kPosFeatures);
  for (std::size_t n = 0; n < coords.size(); ++n) {
    double* row = out.data() + n * kPosFeatures;
    for (int axis = 0; axis < 3; ++axis) {
      for (int f = 0; f < kPosOctaves; ++f) {
        const double w = 2.0 * std::numbers::pi * static_cast<double>(1 << f) / resolution;
        const double a = w * coords[n][axis];
        row[axis * 2 * kPosOctaves + 2 * f] = std::sin(a);
        row[axis * 2 * kPosOctaves + 2 * f + 1] = std::cos(a);
      }
    }
  }
  return out;
}

ForwardCache forward_cached(const DecoderParams& params, const SparseLatentGrid& grid,
                            Exec exec) {
  const auto& cfg = params.config();
  if (grid.empty()) throw Error(ErrorKind::kInvalidArgument, "decoder input grid is empty");
  if (cfg.input_dim != kLatentDim) {
    throw Error(ErrorKind::kShape, "feature width " + std::to_string(kLatentDim) +
                                       " does not match decoder input_dim " +
                                       std::to_string(cfg.input_dim));
  }
  if (grid.resolution() != cfg.resolution) {
    throw Error(ErrorKind::kShape, "grid resolution " + std::to_string(grid.resolution()) +
                                       " does not match decoder resolution " +
                                       std::to_string(cfg.resolution));
  }
  const KernelSet& k = kernels::kernel_set(exec);
  const auto& off = params.offsets();
  const auto w = params.values();
  auto P = [&](std::size_t o, std::size_t n) { return w.subspan(o, n); };

  const std::size_t n = grid.size();
  const auto c = static_cast<std::size_t>(cfg.channels);
  const auto hid = static_cast<std::size_t>(cfg.mlp_hidden());
  const auto d = static_cast<std::size_t>(cfg.input_dim);
  const auto nc = static_cast<std::size_t>(cfg.classes);
  const auto coords = coords_of(grid);

  ForwardCache cache;
  cache.rows = n;
  cache.features.resize(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(grid.voxels()[i].feature.begin(), grid.voxels()[i].feature.end(),
              cache.features.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  cache.pos = positional_features(coords, cfg.resolution);

  std::vector<double> h(n * c), tmp(n * c);
  k.linear_forward(cache.features, P(off.in_w, d * c), P(off.in_b, c), h, n, d, c);
  k.linear_forward(cache.pos, P(off.pos_w, kPosFeatures * c), P(off.pos_b, c), tmp, n,
                   kPosFeatures, c);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] += tmp[i];

  const kernels::AttentionShape shape{n, c, static_cast<std::size_t>(cfg.heads),
                                      1.0 / std::sqrt(static_cast<double>(c / cfg.heads))};
  cache.blocks.resize(static_cast<std::size_t>(cfg.blocks));
  for (int b = 0; b < cfg.blocks; ++b) {
    const auto& bo = off.blocks[static_cast<std::size_t>(b)];
    auto& bc = cache.blocks[static_cast<std::size_t>(b)];
    bc.groups = window_partition(coords, cfg.window, cfg.resolution, b % 2 == 1);
    bc.input = h;
    bc.ln1.resize(n * c);
    bc.ln1_mean.resize(n);
    bc.ln1_rstd.resize(n);
    k.layernorm_forward(bc.input, P(bo.ln1_g, c), P(bo.ln1_b, c), bc.ln1, bc.ln1_mean,
                        bc.ln1_rstd, n, c);
    bc.q.resize(n * c);
    bc.k.resize(n * c);
    bc.v.resize(n * c);
    k.linear_forward(bc.ln1, P(bo.q_w, c * c), P(bo.q_b, c), bc.q, n, c, c);
    k.linear_forward(bc.ln1, P(bo.k_w, c * c), P(bo.k_b, c), bc.k, n, c, c);
    k.linear_forward(bc.ln1, P(bo.v_w, c * c), P(bo.v_b, c), bc.v, n, c, c);
    bc.attn.resize(n * c);
    k.window_attention_forward(bc.q, bc.k, bc.v, bc.groups, shape, bc.attn);
    k.linear_forward(bc.attn, P(bo.o_w, c * c), P(bo.o_b, c), tmp, n, c, c);
    bc.mid.resize(n * c);
    for (std::size_t i = 0; i < n * c; ++i) bc.mid[i] = bc.input[i] + tmp[i];

    bc.ln2.resize(n * c);
    bc.ln2_mean.resize(n);
    bc.ln2_rstd.resize(n);
    k.layernorm_forward(bc.mid, P(bo.ln2_g, c), P(bo.ln2_b, c), bc.ln2, bc.ln2_mean,
                        bc.ln2_rstd, n, c);
    bc.hidden_pre.resize(n * hid);
    bc.hidden.resize(n * hid);
    k.linear_forward(bc.ln2, P(bo.mlp_in_w, c * hid), P(bo.mlp_in_b, hid), bc.hidden_pre, n, c,
                     hid);
    k.gelu_forward(bc.hidden_pre, bc.hidden);
    k.linear_forward(bc.hidden, P(bo.mlp_out_w, hid * c), P(bo.mlp_out_b, c), tmp, n, hid, c);
    for (std::size_t i = 0; i < n * c; ++i) h[i] = bc.mid[i] + tmp[i];
  }
  cache.final = h;
  cache.reg.resize(n * 3);
  cache.logits.resize(n * nc);
  k.linear_forward(cache.final, P(off.reg_w, c * 3), P(off.reg_b, 3), cache.reg, n, c, 3);
  for (double& r : cache.reg) r = std::tanh(r);
  k.linear_forward(cache.final, P(off.cls_w, c * nc), P(off.cls_b, nc), cache.logits, n, c, nc);
  return cache;
}

std::vector<VoxelPrediction> predictions_from(const ForwardCache& cache, int classes) {
  const auto nc = static_cast<std::size_t>(classes);
  std::vector<VoxelPrediction> out(cache.rows);
  for (std::size_t i = 0; i < cache.rows; ++i) {
    out[i].E = cache.reg[i * 3];
    out[i].rho = cache.reg[i * 3 + 1];
    out[i].nu = cache.reg[i * 3 + 2];
    out[i].logits.assign(cache.logits.begin() + static_cast<std::ptrdiff_t>(i * nc),
                         cache.logits.begin() + static_cast<std::ptrdiff_t>((i + 1) * nc));
  }
  return out;
}

std::vector<VoxelPrediction> forward(const DecoderParams& params, const SparseLatentGrid& grid,
                                     Exec exec) {
  return predictions_from(forward_cached(params, grid, exec), params.config().classes);
}

void backward(const DecoderParams& params, const ForwardCache& cache,
              std::span<const double> d_reg, std::span<const double> d_logits,
              std::span<double> grads, Exec exec) {
  const auto& cfg = params.config();
  const KernelSet& k = kernels::kernel_set(exec);
  const auto& off = params.offsets();
  const auto w = params.values();
  auto P = [&](std::size_t o, std::size_t n) { return w.subspan(o, n); };
  auto G = [&](std::size_t o, std::size_t n) { return grads.subspan(o, n); };

  const std::size_t n = cache.rows;
  const auto c = static_cast<std::size_t>(cfg.channels);
  const auto hid = static_cast<std::size_t>(cfg.mlp_hidden());
  const auto d = static_cast<std::size_t>(cfg.input_dim);
  const auto nc = static_cast<std::size_t>(cfg.classes);
  if (d_reg.size() != n * 3 || d_logits.size() != n * nc || grads.size() != params.size()) {
    throw Error(ErrorKind::kShape, "backward received mismatched gradient buffers");
  }

  std::vector<double> d_pre(n * 3);
  for (std::size_t i = 0; i < n * 3; ++i) {
    d_pre[i] = d_reg[i] * (1.0 - cache.reg[i] * cache.reg[i]);
  }
  std::vector<double> dh(n * c), tmp(n * c), tmp2(n * c);
  k.linear_backward(cache.final, P(off.reg_w, c * 3), d_pre, dh, G(off.reg_w, c * 3),
                    G(off.reg_b, 3), n, c, 3);
  k.linear_backward(cache.final, P(off.cls_w, c * nc), d_logits, tmp, G(off.cls_w, c * nc),
                    G(off.cls_b, nc), n, c, nc);
  for (std::size_t i = 0; i < n * c; ++i) dh[i] += tmp[i];

  const kernels::AttentionShape shape{n, c, static_cast<std::size_t>(cfg.heads),
                                      1.0 / std::sqrt(static_cast<double>(c / cfg.heads))};
  std::vector<double> d_hidden(n * hid), d_hidden_pre(n * hid);
  std::vector<double> dq(n * c), dk(n * c), dv(n * c), d_attn(n * c);
  for (int b = cfg.blocks - 1; b >= 0; --b) {
    const auto& bo = off.blocks[static_cast<std::size_t>(b)];
    const auto& bc = cache.blocks[static_cast<std::size_t>(b)];
    // out = mid + mlp(ln2(mid))
    k.linear_backward(bc.hidden, P(bo.mlp_out_w, hid * c), dh, d_hidden,
                      G(bo.mlp_out_w, hid * c), G(bo.mlp_out_b, c), n, hid, c);
    k.gelu_backward(bc.hidden_pre, d_hidden, d_hidden_pre);
    k.linear_backward(bc.ln2, P(bo.mlp_in_w, c * hid), d_hidden_pre, tmp,
                      G(bo.mlp_in_w, c * hid), G(bo.mlp_in_b, hid), n, c, hid);
    k.layernorm_backward(bc.mid, P(bo.ln2_g, c), bc.ln2_mean, bc.ln2_rstd, tmp, tmp2,
                         G(bo.ln2_g, c), G(bo.ln2_b, c), n, c);
    for (std::size_t i = 0; i < n * c; ++i) dh[i] += tmp2[i];
    // mid = input + attn_out(ln1(input))
    k.linear_backward(bc.attn, P(bo.o_w, c * c), dh, d_attn, G(bo.o_w, c * c), G(bo.o_b, c), n,
                      c, c);
    k.window_attention_backward(bc.q, bc.k, bc.v, d_attn, bc.groups, shape, dq, dk, dv);
    k.linear_backward(bc.ln1, P(bo.q_w, c * c), dq, tmp, G(bo.q_w, c * c), G(bo.q_b, c), n, c,
                      c);
    k.linear_backward(bc.ln1, P(bo.k_w, c * c), dk, tmp2, G(bo.k_w, c * c), G(bo.k_b, c), n, c,
                      c);
    for (std::size_t i = 0; i < n * c; ++i) tmp[i] += tmp2[i];
    k.linear_backward(bc.ln1, P(bo.v_w, c * c), dv, tmp2, G(bo.v_w, c * c), G(bo.v_b, c), n, c,
                      c);
    for (std::size_t i = 0; i < n * c; ++i) tmp[i] += tmp2[i];
    k.layernorm_backward(bc.input, P(bo.ln1_g, c), bc.ln1_mean, bc.ln1_rstd, tmp, tmp2,
                         G(bo.ln1_g, c), G(bo.ln1_b, c), n, c);
    for (std::size_t i = 0; i < n * c; ++i) dh[i] += tmp2[i];
  }
  k.linear_backward(cache.features, P(off.in_w, d * c), dh, {}, G(off.in_w, d * c),
                    G(off.in_b, c), n, d, c);
  k.linear_backward(cache.pos, P(off.pos_w, kPosFeatures * c), dh, {},
                    G(off.pos_w, kPosFeatures * c), G(off.pos_b, c), n, kPosFeatures, c);
}

}  // namespace slatphys
