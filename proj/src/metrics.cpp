#include "slatphys/metrics.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "slatphys/error.hpp"

namespace slatphys {

int argmax(std::span<const double> logits) {
  int best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

namespace {

std::string coord_text(const VoxelCoord& c) {
  std::ostringstream os;
  os << "(" << c.x << "," << c.y << "," << c.z << ")";
  return os.str();
}

[[noreturn]] void occupancy_mismatch(const std::vector<VoxelCoord>& missing_pred,
                                     const std::vector<VoxelCoord>& extra_pred) {
  std::ostringstream os;
  os << "prediction and ground truth occupancy differ:";
  constexpr std::size_t kShow = 8;
  auto list = [&](const char* label, const std::vector<VoxelCoord>& v) {
    if (v.empty()) return;
    os << " " << label << " " << v.size() << " [";
    for (std::size_t i = 0; i < std::min(kShow, v.size()); ++i) os << (i ? " " : "") << coord_text(v[i]);
    if (v.size() > kShow) os << " ...";
    os << "]";
  };
  list("missing from prediction", missing_pred);
  list("not in ground truth", extra_pred);
  throw Error(ErrorKind::kOccupancyMismatch, os.str());
}

struct Row {
  double E, rho, nu;
  int cls;
};

ObjectMetrics score(const std::vector<Row>& pred, const std::vector<VoxelCoord>& pred_coords,
                    const NormalizedMaterialField& gt) {
  std::map<VoxelCoord, std::size_t> index;
  for (std::size_t i = 0; i < pred_coords.size(); ++i) index[pred_coords[i]] = i;
  std::vector<VoxelCoord> missing, extra;
  for (const auto& g : gt.voxels()) {
    if (!index.contains(g.coord)) missing.push_back(g.coord);
  }
  if (pred_coords.size() != gt.size() || !missing.empty()) {
    const auto gt_occ = occupancy_of(gt);
    for (const auto& c : pred_coords) {
      if (!gt_occ.contains(c)) extra.push_back(c);
    }
    occupancy_mismatch(missing, extra);
  }

  ObjectMetrics m;
  double se = 0.0, sr = 0.0, sn = 0.0;
  std::size_t hits = 0;
  for (const auto& g : gt.voxels()) {
    if (!g.valid) continue;
    const Row& p = pred[index.at(g.coord)];
    se += (p.E - g.E) * (p.E - g.E);
    sr += (p.rho - g.rho) * (p.rho - g.rho);
    sn += (p.nu - g.nu) * (p.nu - g.nu);
    hits += p.cls == g.mat ? 1 : 0;
    ++m.valid_voxels;
  }
  if (m.valid_voxels == 0) {
    throw Error(ErrorKind::kInvalidArgument, "object has no valid ground-truth voxels");
  }
  const auto n = static_cast<double>(m.valid_voxels);
  m.mse_E = se / n;
  m.mse_rho = sr / n;
  m.mse_nu = sn / n;
  m.mse_avg = (m.mse_E + m.mse_rho + m.mse_nu) / 3.0;
  m.mat_acc = static_cast<double>(hits) / n;
  return m;
}

double sample_std(std::span<const ObjectMetrics> objects, double mean,
                  double ObjectMetrics::*field) {
  if (objects.size() < 2) return 0.0;
  double s = 0.0;
  for (const auto& o : objects) s += (o.*field - mean) * (o.*field - mean);
  return std::sqrt(s / static_cast<double>(objects.size() - 1));
}

}  // namespace

ObjectMetrics per_object_metrics(const NormalizedMaterialField& pred,
                                 std::span<const std::vector<double>> logits,
                                 const NormalizedMaterialField& gt) {
  if (logits.size() != pred.size()) {
    throw Error(ErrorKind::kShape, "one logit row per predicted voxel is required");
  }
  std::vector<Row> rows;
  std::vector<VoxelCoord> coords;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto& v = pred.voxels()[i];
    rows.push_back({v.E, v.rho, v.nu, argmax(logits[i])});
    coords.push_back(v.coord);
  }
  return score(rows, coords, gt);
}

ObjectMetrics per_object_metrics(std::span<const VoxelPrediction> preds,
                                 std::span<const VoxelCoord> coords,
                                 const NormalizedMaterialField& gt) {
  if (preds.size() != coords.size()) {
    throw Error(ErrorKind::kShape, "predictions and coordinates differ in length");
  }
  std::vector<Row> rows;
  for (const auto& p : preds) rows.push_back({p.E, p.rho, p.nu, argmax(p.logits)});
  return score(rows, {coords.begin(), coords.end()}, gt);
}

NormalizedMaterialField predicted_field(std::span<const VoxelPrediction> preds,
                                        std::span<const VoxelCoord> coords, int resolution) {
  if (preds.size() != coords.size()) {
    throw Error(ErrorKind::kShape, "prediction and coordinate counts differ");
  }
  std::vector<NormalizedVoxel> voxels(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    voxels[i] = {coords[i], preds[i].E, preds[i].rho, preds[i].nu, argmax(preds[i].logits), true};
  }
  return NormalizedMaterialField(resolution, std::move(voxels));
}

EvalReport aggregate(std::span<const ObjectMetrics> objects) {
  if (objects.empty()) throw Error(ErrorKind::kInvalidArgument, "nothing to aggregate");
  EvalReport r;
  for (const auto& o : objects) {
    r.mse_E += o.mse_E;
    r.mse_rho += o.mse_rho;
    r.mse_nu += o.mse_nu;
    r.mat_acc += o.mat_acc;
  }
  const auto n = static_cast<double>(objects.size());
  r.mse_E /= n;
  r.mse_rho /= n;
  r.mse_nu /= n;
  r.mat_acc /= n;
  r.mse_avg = (r.mse_E + r.mse_rho + r.mse_nu) / 3.0;
  double avg_mean = 0.0;
  for (const auto& o : objects) avg_mean += o.mse_avg;
  avg_mean /= n;
  r.mse_E_std = sample_std(objects, r.mse_E, &ObjectMetrics::mse_E);
  r.mse_rho_std = sample_std(objects, r.mse_rho, &ObjectMetrics::mse_rho);
  r.mse_nu_std = sample_std(objects, r.mse_nu, &ObjectMetrics::mse_nu);
  r.mse_avg_std = sample_std(objects, avg_mean, &ObjectMetrics::mse_avg);
  r.mat_acc_std = sample_std(objects, r.mat_acc, &ObjectMetrics::mat_acc);
  r.per_object.assign(objects.begin(), objects.end());
  return r;
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : r.per_object) {
    objects.push_back({{"name", o.name},
                       {"mse_E", o.mse_E},
                       {"mse_rho", o.mse_rho},
                       {"mse_nu", o.mse_nu},
                       {"mse_avg", o.mse_avg},
                       {"mat_acc", o.mat_acc},
                       {"valid_voxels", o.valid_voxels}});
  }
  return {{"objects", r.per_object.size()},
          {"mse_E", r.mse_E},
          {"mse_rho", r.mse_rho},
          {"mse_nu", r.mse_nu},
          {"mse_avg", r.mse_avg},
          {"mat_acc", r.mat_acc},
          {"std_across_objects",
           {{"mse_E", r.mse_E_std},
            {"mse_rho", r.mse_rho_std},
            {"mse_nu", r.mse_nu_std},
            {"mse_avg", r.mse_avg_std},
            {"mat_acc", r.mat_acc_std}}},
          {"per_object", std::move(objects)}};
}

std::string per_object_csv(const EvalReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "name,valid_voxels,mse_E,mse_rho,mse_nu,mse_avg,mat_acc\n";
  for (const auto& o : r.per_object) {
    os << o.name << "," << o.valid_voxels << "," << o.mse_E << "," << o.mse_rho << ","
       << o.mse_nu << "," << o.mse_avg << "," << o.mat_acc << "\n";
  }
  return os.str();
}

}  // namespace slatphys
