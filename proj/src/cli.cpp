#include "slatphys/cli.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "slatphys/align.hpp"
#include "slatphys/bench.hpp"
#include "slatphys/decoder.hpp"
#include "slatphys/error.hpp"
#include "slatphys/fixtures.hpp"
#include "slatphys/io.hpp"
#include "slatphys/metrics.hpp"
#include "slatphys/sim.hpp"
#include "slatphys/train.hpp"

namespace slatphys {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
  bool quiet = false;
};

class Log {
 public:
  explicit Log(const Globals& g) : quiet_(g.quiet) {}
  template <typename... Args>
  void operator()(const Args&... args) const {
    if (quiet_) return;
    (std::cout << ... << args) << '\n';
  }

 private:
  bool quiet_;
};

std::vector<FixtureKind> parse_kinds(const std::string& text) {
  std::vector<FixtureKind> kinds;
  if (text == "all") {
    return {FixtureKind::kSphere, FixtureKind::kBox, FixtureKind::kSnowman, FixtureKind::kFlower,
            FixtureKind::kLShape};
  }
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) kinds.push_back(parse_fixture_kind(item));
  if (kinds.empty()) throw Error(ErrorKind::kInvalidArgument, "no fixture kind given");
  return kinds;
}

VoxelCoord to_coord(const std::vector<int>& v) { return {v[0], v[1], v[2]}; }

// Seeded translation, shrunk per axis so the perturbed object stays on the grid.
VoxelCoord fitting_translation(const MaterialField& field, int rotation, std::mt19937_64& rng) {
  const PerturbedField rotated = perturb_annotation(field, rotation, {0, 0, 0});
  VoxelCoord lo{field.resolution(), field.resolution(), field.resolution()};
  VoxelCoord hi{-1, -1, -1};
  for (const auto& v : rotated.field.voxels()) {
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], v.coord[a]);
      hi[a] = std::max(hi[a], v.coord[a]);
    }
  }
  std::uniform_int_distribution<int> shift(-3, 3);
  VoxelCoord t;
  for (int a = 0; a < 3; ++a) {
    t[a] = std::clamp(shift(rng), -lo[a], field.resolution() - 1 - hi[a]);
  }
  return t;
}

std::string stem_for(FixtureKind kind, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04llu", std::string(fixture_kind_name(kind)).c_str(),
                static_cast<unsigned long long>(seed));
  return buf;
}

DecoderConfig decoder_config_from(const std::string& name, int resolution) {
  DecoderConfig c;
  if (name == "small") {
    c = DecoderConfig::small(resolution);
  } else if (name == "medium") {
    c = DecoderConfig::medium(resolution);
  } else if (name == "large") {
    c = DecoderConfig::large(resolution);
  } else {
    c = config_from_json(read_json_file(name));
    c.resolution = resolution;
  }
  c.window = std::min(c.window, resolution);
  c.validate();
  return c;
}

SparseLatentGrid occupancy_grid(const MaterialField& field) {
  std::vector<LatentVoxel> voxels;
  voxels.reserve(field.size());
  for (const auto& v : field.voxels()) voxels.push_back({v.coord, {}});
  return SparseLatentGrid(field.resolution(), std::move(voxels));
}

// Fixed-size one-hot logits so a stored class reads back through argmax.
std::vector<std::vector<double>> one_hot_logits(const NormalizedMaterialField& field) {
  std::vector<std::vector<double>> logits;
  logits.reserve(field.size());
  for (const auto& v : field.voxels()) {
    std::vector<double> row(kMaterialClasses, 0.0);
    row[static_cast<std::size_t>(v.mat)] = 1.0;
    logits.push_back(std::move(row));
  }
  return logits;
}

struct GenArgs {
  std::string kind = "all";
  int count = 1;
  int resolution = kDefaultResolution;
  double noise = 0.0;
  double size = 0.0;
  int rotation = -1;
  std::vector<int> translation;
  std::string out;
};

void run_gen(const Globals& g, const GenArgs& a) {
  Log log(g);
  if (a.count < 1) throw Error(ErrorKind::kInvalidArgument, "--count must be >= 1");
  fs::create_directories(a.out);
  json listing = json::array();
  for (FixtureKind kind : parse_kinds(a.kind)) {
    for (int i = 0; i < a.count; ++i) {
      FixtureSpec spec;
      spec.kind = kind;
      spec.resolution = a.resolution;
      spec.seed = g.seed + static_cast<std::uint64_t>(i);
      spec.latent_noise = a.noise;
      spec.size = a.size;
      const FixtureObject obj = generate_object(spec);

      std::mt19937_64 rng(spec.seed * 0x9E3779B97F4A7C15ull + static_cast<int>(kind));
      const int rotation =
          a.rotation >= 0 ? a.rotation : static_cast<int>(rng() % cube_rotations().size());
      const VoxelCoord shift = a.translation.empty()
                                   ? fitting_translation(obj.field, rotation, rng)
                                   : to_coord(a.translation);
      const PerturbedField perturbed = perturb_annotation(obj.field, rotation, shift);

      const std::string stem = stem_for(kind, spec.seed);
      const fs::path base = fs::path(a.out) / stem;
      const NormalizationSpec norm;
      save_latent_grid(base.string() + ".slat.json", obj.grid);
      save_material_field(base.string() + ".mat.json", obj.field, norm);
      save_material_field(base.string() + ".perturbed.mat.json", perturbed.field, norm);
      json manifest = fixture_manifest(spec, obj);
      manifest["perturbation"] = {{"rotation_index", rotation},
                                  {"translation", {shift.x, shift.y, shift.z}},
                                  {"applied", transform_to_json(perturbed.applied)},
                                  {"inverse", transform_to_json(perturbed.inverse)}};
      write_json_file(base.string() + ".manifest.json", manifest);
      listing.push_back({{"stem", stem}, {"kind", fixture_kind_name(kind)}, {"seed", spec.seed},
                         {"voxels", obj.field.size()}});
      log(stem, ": ", obj.field.size(), " voxels, rotation ", rotation, ", translation (",
          shift.x, ",", shift.y, ",", shift.z, ")");
    }
  }
  write_json_file(fs::path(a.out) / "manifest.json",
                  {{"resolution", a.resolution}, {"latent_noise", a.noise}, {"objects", listing}});
}

struct AlignArgs {
  std::string slat, mat, out, report;
  double threshold = kDefaultIcpThreshold;
  int iters = kDefaultIcpIterations;
};

void run_align(const Globals& g, const AlignArgs& a) {
  Log log(g);
  const SparseLatentGrid grid = load_latent_grid(a.slat);
  const auto [field, spec] = load_material_field(a.mat);
  const AlignResult result = align_and_resample(field, grid, {a.threshold, a.iters});
  save_material_field(a.out, result.field, spec);
  json report = transform_report(result);
  std::size_t valid = 0;
  for (const auto& v : result.field.voxels()) valid += v.valid ? 1 : 0;
  report["valid_voxels"] = valid;
  report["voxels"] = result.field.size();
  if (!a.report.empty()) write_json_file(a.report, report);
  log("fitness ", result.icp.fitness, ", rmse ", result.icp.rmse, ", candidate ",
      result.chosen_candidate, ", valid ", valid, "/", result.field.size());
}

struct TrainArgs {
  std::string data, decoder = "small", out, history, eval_data;
  int steps = 2000;
  double lr = 1e-4;
  double lr_min = 0.0;
  double weight_decay = 1e-2;
  int accum = 1;
  int batch = 1;
  int eval_every = 0;
};

void run_train(const Globals& g, const TrainArgs& a) {
  Log log(g);
  const std::vector<Sample> data = load_samples(a.data);
  std::vector<Sample> held;
  if (!a.eval_data.empty()) held = load_samples(a.eval_data);
  const DecoderConfig dc = decoder_config_from(a.decoder, data.front().grid.resolution());
  TrainConfig tc;
  tc.lr_base = a.lr;
  tc.lr_min = a.lr_min;
  tc.weight_decay = a.weight_decay;
  tc.total_steps = a.steps;
  tc.accumulation = a.accum;
  tc.batch_size = a.batch;
  tc.seed = g.seed;
  const int every = std::max(1, a.steps / 20);
  const TrainResult result =
      train(tc, data, dc, HeldOut{held, a.eval_every}, [&](const TrainRecord& r) {
        if (r.step % every == 0 || r.step + 1 == a.steps) {
          log("step ", r.step, " lr ", r.lr, " loss ", r.loss.total);
        }
      });
  save_checkpoint(a.out, result.best_params);
  if (!a.history.empty()) write_text_file(a.history, history_csv(result.history));
  log("saved ", a.out, " (", param_count(dc), " parameters, step ", result.best_step, ")");
}

struct EvalArgs {
  std::string data, checkpoint, pred, out, per_object;
};

void run_eval(const Globals& g, const EvalArgs& a) {
  Log log(g);
  if (a.checkpoint.empty() == a.pred.empty()) {
    throw Error(ErrorKind::kInvalidArgument, "give exactly one of --checkpoint or --pred");
  }
  const std::vector<Sample> data = load_samples(a.data);
  EvalReport report;
  if (!a.checkpoint.empty()) {
    report = evaluate(load_checkpoint(a.checkpoint), data);
  } else {
    std::vector<ObjectMetrics> objects;
    for (const Sample& s : data) {
      const auto [field, spec] = load_material_field(fs::path(a.pred) / (s.name + ".mat.json"));
      const NormalizedMaterialField pred = normalize_field(field, spec);
      ObjectMetrics m = per_object_metrics(pred, one_hot_logits(pred), s.target);
      m.name = s.name;
      objects.push_back(std::move(m));
    }
    report = aggregate(objects);
  }
  write_json_file(a.out, report_to_json(report));
  if (!a.per_object.empty()) write_text_file(a.per_object, per_object_csv(report));
  log("mse_avg ", report.mse_avg, " mat_acc ", report.mat_acc, " over ",
      report.per_object.size(), " objects");
}

struct SimArgs {
  std::string scenario = "drop", out, csv, slat, mat, checkpoint, fixture = "snowman";
  int fixture_resolution = 32;
  ScenarioConfig config;
  std::vector<double> wind;
};

void run_simulate(const Globals& g, SimArgs a) {
  Log log(g);
  SparseLatentGrid grid;
  MaterialField field;
  if (!a.checkpoint.empty()) {
    if (a.slat.empty()) throw Error(ErrorKind::kInvalidArgument, "--checkpoint needs --slat");
    grid = load_latent_grid(a.slat);
    NormalizationSpec spec;
    if (!a.mat.empty()) spec = load_material_field(a.mat).second;
    const auto preds = forward(load_checkpoint(a.checkpoint), grid);
    field = denormalize_field(predicted_field(preds, coords_of(grid), grid.resolution()), spec);
  } else if (!a.mat.empty()) {
    field = load_material_field(a.mat).first;
    grid = a.slat.empty() ? occupancy_grid(field) : load_latent_grid(a.slat);
  } else {
    FixtureSpec spec;
    spec.kind = parse_fixture_kind(a.fixture);
    spec.resolution = a.fixture_resolution;
    spec.seed = g.seed;
    FixtureObject obj = generate_object(spec);
    grid = std::move(obj.grid);
    field = std::move(obj.field);
  }
  a.config.seed = g.seed;
  if (!a.wind.empty()) a.config.wind = {a.wind[0], a.wind[1], a.wind[2]};
  const Trajectory t = simulate_scenario(parse_scenario(a.scenario), field, grid, a.config);
  save_trajectory(a.out, t);
  if (!a.csv.empty()) write_text_file(a.csv, trajectory_csv(t));
  double lo = t.frames.back().front().z(), hi = lo;
  for (const auto& x : t.frames.back()) {
    lo = std::min(lo, x.z());
    hi = std::max(hi, x.z());
  }
  log(t.frames.size(), " frames of ", t.initial.size(), " particles, dt ", t.dt, ", ",
      t.steps_per_frame, " steps/frame, final height ", hi - lo);
}

struct BenchArgs {
  std::string data, checkpoint, decoder = "small", out;
  int repeats = kMinBenchRepeats;
};

void run_bench(const Globals& g, const BenchArgs& a) {
  Log log(g);
  DecoderParams params;
  if (!a.checkpoint.empty()) {
    params = load_checkpoint(a.checkpoint);
  } else {
    const auto pairs = list_pairs(a.data);
    if (pairs.empty()) throw Error(ErrorKind::kIo, "no object pairs in " + a.data);
    const int res = load_latent_grid(pairs.front().slat).resolution();
    params = build_decoder(decoder_config_from(a.decoder, res), g.seed);
  }
  const BenchReport report = bench_pipeline(a.data, params, a.repeats);
  const json j = bench_to_json(report);
  if (a.out.empty()) {
    std::cout << j.dump(1) << '\n';
    return;
  }
  write_json_file(a.out, j);
  for (const auto& s : report.stages) log(s.name, ": ", s.median_s, " s");
  log("total: ", report.total_s, " s");
}

}  // namespace

int run_command(int argc, char** argv) {
  CLI::App app{"slatphys: material fields from sparse latents, alignment, training, MPM"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Suppress progress output");

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "Generate fixture objects");
  c_gen->add_option("--kind", gen.kind, "sphere|box|snowman|flower|lshape|all, comma list")
      ->capture_default_str();
  c_gen->add_option("--count", gen.count, "Objects per kind (seeds seed..seed+count-1)");
  c_gen->add_option("--resolution", gen.resolution)->capture_default_str();
  c_gen->add_option("--noise", gen.noise, "Latent noise std");
  c_gen->add_option("--size", gen.size, "Characteristic size in voxels (0: seeded)");
  c_gen->add_option("--perturb-rotation", gen.rotation, "Cube rotation index 0-23")
      ->check(CLI::Range(0, 23));
  c_gen->add_option("--perturb-translation", gen.translation, "x,y,z voxels")
      ->delimiter(',')
      ->expected(3);
  c_gen->add_option("--out", gen.out, "Output directory")->required();

  AlignArgs align;
  auto* c_align = app.add_subcommand("align", "Align a physics annotation to a latent grid");
  c_align->add_option("--slat", align.slat)->required()->check(CLI::ExistingFile);
  c_align->add_option("--mat", align.mat)->required()->check(CLI::ExistingFile);
  c_align->add_option("--out", align.out, "Resampled .mat.json")->required();
  c_align->add_option("--report", align.report, "Transform report JSON");
  c_align->add_option("--threshold", align.threshold)->capture_default_str();
  c_align->add_option("--iters", align.iters)->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train the decoder");
  c_train->add_option("--data", tr.data)->required()->check(CLI::ExistingDirectory);
  c_train->add_option("--decoder", tr.decoder, "small|medium|large or config JSON")
      ->capture_default_str();
  c_train->add_option("--steps", tr.steps)->capture_default_str();
  c_train->add_option("--lr", tr.lr)->capture_default_str();
  c_train->add_option("--lr-min", tr.lr_min)->capture_default_str();
  c_train->add_option("--weight-decay", tr.weight_decay)->capture_default_str();
  c_train->add_option("--accum", tr.accum)->capture_default_str();
  c_train->add_option("--batch", tr.batch, "Objects per micro-batch")->capture_default_str();
  c_train->add_option("--out", tr.out, "Checkpoint path")->required();
  c_train->add_option("--history", tr.history, "Loss history CSV");
  c_train->add_option("--eval-data", tr.eval_data, "Held-out directory")
      ->check(CLI::ExistingDirectory);
  c_train->add_option("--eval-every", tr.eval_every, "Held-out check period in steps");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Score predictions against ground truth");
  c_eval->add_option("--data", ev.data)->required()->check(CLI::ExistingDirectory);
  c_eval->add_option("--checkpoint", ev.checkpoint)->check(CLI::ExistingFile);
  c_eval->add_option("--pred", ev.pred, "Directory of <stem>.mat.json predictions")
      ->check(CLI::ExistingDirectory);
  c_eval->add_option("--out", ev.out, "Report JSON")->required();
  c_eval->add_option("--per-object", ev.per_object, "Per-object CSV");

  SimArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Run an MPM scenario");
  c_sim->add_option("--scenario", sim.scenario, "drop|wind")->capture_default_str();
  c_sim->add_option("--frames", sim.config.frames)->capture_default_str();
  c_sim->add_option("--frame-dt", sim.config.frame_dt, "Seconds per frame")
      ->capture_default_str();
  c_sim->add_option("--dt", sim.config.dt, "Step size (0: CFL-limited)");
  c_sim->add_option("--grid", sim.config.grid_resolution)->capture_default_str();
  c_sim->add_option("--per-voxel", sim.config.per_voxel)->capture_default_str();
  c_sim->add_option("--voxel-size", sim.config.voxel_size, "Meters")->capture_default_str();
  c_sim->add_option("--drop-height", sim.config.drop_height, "Meters (<0: default)");
  c_sim->add_option("--wind", sim.wind, "x,y,z acceleration")->delimiter(',')->expected(3);
  c_sim->add_option("--slat", sim.slat)->check(CLI::ExistingFile);
  c_sim->add_option("--mat", sim.mat)->check(CLI::ExistingFile);
  c_sim->add_option("--checkpoint", sim.checkpoint)->check(CLI::ExistingFile);
  c_sim->add_option("--fixture", sim.fixture, "Fixture kind when no input is given")
      ->capture_default_str();
  c_sim->add_option("--fixture-resolution", sim.fixture_resolution)->capture_default_str();
  c_sim->add_option("--out", sim.out, "Trajectory file")->required();
  c_sim->add_option("--csv", sim.csv, "Per-frame positions CSV");

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Time the pipeline stages");
  c_bench->add_option("--data", bench.data)->required()->check(CLI::ExistingDirectory);
  c_bench->add_option("--checkpoint", bench.checkpoint)->check(CLI::ExistingFile);
  c_bench->add_option("--decoder", bench.decoder, "Preset when no checkpoint")
      ->capture_default_str();
  c_bench->add_option("--repeats", bench.repeats)->capture_default_str();
  c_bench->add_option("--out", bench.out, "Report JSON (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  omp_set_num_threads(g.threads);
  try {
    if (*c_gen) run_gen(g, gen);
    if (*c_align) run_align(g, align);
    if (*c_train) run_train(g, tr);
    if (*c_eval) run_eval(g, ev);
    if (*c_sim) run_simulate(g, sim);
    if (*c_bench) run_bench(g, bench);
  } catch (const Error& e) {
    std::cerr << "error: " << error_kind_name(e.kind()) << ": " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << '\n';
    return kExitError;
  }
  return kExitOk;
}

int run_command(const std::vector<std::string>& args) {
  std::vector<std::string> copy = args;
  std::vector<char*> argv;
  for (auto& s : copy) argv.push_back(s.data());
  argv.push_back(nullptr);
  return run_command(static_cast<int>(copy.size()), argv.data());
}

}  // namespace slatphys
