#ifndef SLATPHYS_IO_HPP_
#define SLATPHYS_IO_HPP_

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "slatphys/voxel.hpp"

namespace slatphys {

// .slat.json: { "resolution": int, "voxels": [ { "c": [x,y,z], "z": [8 floats] } ] }
nlohmann::json latent_grid_to_json(const SparseLatentGrid& grid);
SparseLatentGrid latent_grid_from_json(const nlohmann::json& j);

// .mat.json: { "resolution", "spec": {6 floats}, "voxels": [ { "c", "E", "rho", "nu",
// "mat", "valid" } ] }
nlohmann::json material_field_to_json(const MaterialField& field, const NormalizationSpec& spec);
std::pair<MaterialField, NormalizationSpec> material_field_from_json(const nlohmann::json& j);

nlohmann::json spec_to_json(const NormalizationSpec& spec);
NormalizationSpec spec_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::filesystem::path& path);
// Pretty-printed with a trailing newline; doubles use round-trip precision.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
void write_text_file(const std::filesystem::path& path, const std::string& text);

SparseLatentGrid load_latent_grid(const std::filesystem::path& path);
std::pair<MaterialField, NormalizationSpec> load_material_field(
    const std::filesystem::path& path);
void save_latent_grid(const std::filesystem::path& path, const SparseLatentGrid& grid);
void save_material_field(const std::filesystem::path& path, const MaterialField& field,
                         const NormalizationSpec& spec);

// A paired object in a data directory: <stem>.slat.json + <stem>.mat.json.
struct PairedFiles {
  std::string stem;
  std::filesystem::path slat;
  std::filesystem::path mat;
};

// Pairs sorted by stem. Files named <stem>.perturbed.mat.json are ignored.
std::vector<PairedFiles> list_pairs(const std::filesystem::path& dir);

}  // namespace slatphys

#endif  // SLATPHYS_IO_HPP_
