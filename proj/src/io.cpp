#include "slatphys/io.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "slatphys/error.hpp"

namespace slatphys {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json coord_json(const VoxelCoord& c) { return json::array({c.x, c.y, c.z}); }

VoxelCoord coord_from(const json& j) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorKind::kShape, "voxel coordinate must be an array of 3 integers");
  }
  return {j[0].get<int>(), j[1].get<int>(), j[2].get<int>()};
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

json latent_grid_to_json(const SparseLatentGrid& grid) {
  json voxels = json::array();
  for (const auto& v : grid.voxels()) {
    voxels.push_back({{"c", coord_json(v.coord)}, {"z", v.feature}});
  }
  return {{"resolution", grid.resolution()}, {"voxels", std::move(voxels)}};
}

SparseLatentGrid latent_grid_from_json(const json& j) {
  try {
    std::vector<LatentVoxel> voxels;
    for (const auto& jv : j.at("voxels")) {
      LatentVoxel v;
      v.coord = coord_from(jv.at("c"));
      const auto& z = jv.at("z");
      if (!z.is_array() || z.size() != kLatentDim) {
        throw Error(ErrorKind::kShape, "latent feature must have exactly 8 components");
      }
      for (int i = 0; i < kLatentDim; ++i) v.feature[i] = z[i].get<double>();
      voxels.push_back(v);
    }
    return SparseLatentGrid(j.at("resolution").get<int>(), std::move(voxels));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, std::string("malformed .slat.json: ") + e.what());
  }
}

json spec_to_json(const NormalizationSpec& s) {
  return {{"logE_min", s.logE_min},     {"logE_max", s.logE_max}, {"logRho_min", s.logRho_min},
          {"logRho_max", s.logRho_max}, {"nu_min", s.nu_min},     {"nu_max", s.nu_max}};
}

NormalizationSpec spec_from_json(const json& j) {
  NormalizationSpec s;
  s.logE_min = j.at("logE_min").get<double>();
  s.logE_max = j.at("logE_max").get<double>();
  s.logRho_min = j.at("logRho_min").get<double>();
  s.logRho_max = j.at("logRho_max").get<double>();
  s.nu_min = j.at("nu_min").get<double>();
  s.nu_max = j.at("nu_max").get<double>();
  s.validate();
  return s;
}

json material_field_to_json(const MaterialField& field, const NormalizationSpec& spec) {
  json voxels = json::array();
  for (const auto& v : field.voxels()) {
    voxels.push_back({{"c", coord_json(v.coord)},
                      {"E", v.E},
                      {"rho", v.rho},
                      {"nu", v.nu},
                      {"mat", v.mat},
                      {"valid", v.valid}});
  }
  return {{"resolution", field.resolution()},
          {"spec", spec_to_json(spec)},
          {"voxels", std::move(voxels)}};
}

std::pair<MaterialField, NormalizationSpec> material_field_from_json(const json& j) {
  try {
    NormalizationSpec spec = j.contains("spec") ? spec_from_json(j.at("spec")) : NormalizationSpec{};
    std::vector<MaterialVoxel> voxels;
    for (const auto& jv : j.at("voxels")) {
      MaterialVoxel v;
      v.coord = coord_from(jv.at("c"));
      v.E = jv.at("E").get<double>();
      v.rho = jv.at("rho").get<double>();
      v.nu = jv.at("nu").get<double>();
      v.mat = jv.at("mat").get<int>();
      v.valid = jv.value("valid", true);
      voxels.push_back(v);
    }
    return {MaterialField(j.at("resolution").get<int>(), std::move(voxels)), spec};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, std::string("malformed .mat.json: ") + e.what());
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, "cannot parse " + path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << text;
}

void write_json_file(const fs::path& path, const json& j) {
  write_text_file(path, j.dump(1) + "\n");
}

SparseLatentGrid load_latent_grid(const fs::path& path) {
  return latent_grid_from_json(read_json_file(path));
}

std::pair<MaterialField, NormalizationSpec> load_material_field(const fs::path& path) {
  return material_field_from_json(read_json_file(path));
}

void save_latent_grid(const fs::path& path, const SparseLatentGrid& grid) {
  write_json_file(path, latent_grid_to_json(grid));
}

void save_material_field(const fs::path& path, const MaterialField& field,
                         const NormalizationSpec& spec) {
  write_json_file(path, material_field_to_json(field, spec));
}

std::vector<PairedFiles> list_pairs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorKind::kIo, "not a directory: " + dir.string());
  std::map<std::string, PairedFiles> by_stem;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (ends_with(name, ".perturbed.mat.json")) continue;
    if (ends_with(name, ".slat.json")) {
      auto stem = name.substr(0, name.size() - 10);
      by_stem[stem].stem = stem;
      by_stem[stem].slat = entry.path();
    } else if (ends_with(name, ".mat.json")) {
      auto stem = name.substr(0, name.size() - 9);
      by_stem[stem].stem = stem;
      by_stem[stem].mat = entry.path();
    }
  }
  std::vector<PairedFiles> out;
  for (auto& [stem, p] : by_stem) {
    if (!p.slat.empty() && !p.mat.empty()) out.push_back(std::move(p));
  }
  return out;
}

}  // namespace slatphys
