#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "slatphys/decoder.hpp"
#include "slatphys/error.hpp"

namespace slatphys {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

std::string encode_checkpoint(const DecoderParams& params) {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : params.tensors()) {
    tensors.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", t.offset}});
  }
  const nlohmann::json manifest = {{"config", config_to_json(params.config())},
                                   {"tensors", std::move(tensors)}};
  const std::string text = manifest.dump();
  const auto len = static_cast<std::uint32_t>(text.size());

  std::string out;
  out.resize(4 + text.size() + params.size() * sizeof(double));
  std::memcpy(out.data(), &len, 4);
  std::memcpy(out.data() + 4, text.data(), text.size());
  std::memcpy(out.data() + 4 + text.size(), params.values().data(),
              params.size() * sizeof(double));
  return out;
}

DecoderParams decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4) throw Error(ErrorKind::kIo, "checkpoint truncated");
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data(), 4);
  if (bytes.size() < 4ull + len) throw Error(ErrorKind::kIo, "checkpoint manifest truncated");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(4, len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kIo, std::string("checkpoint manifest unreadable: ") + e.what());
  }
  DecoderParams params(config_from_json(manifest.at("config")));
  const std::size_t blob = bytes.size() - 4 - len;
  if (blob != params.size() * sizeof(double)) {
    throw Error(ErrorKind::kIo, "checkpoint blob size does not match its config");
  }
  // The manifest must describe the same layout the config implies.
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != params.tensors().size()) {
    throw Error(ErrorKind::kIo, "checkpoint tensor table does not match its config");
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& t = params.tensors()[i];
    if (tensors[i].at("name") != t.name || tensors[i].at("offset") != t.offset ||
        tensors[i].at("shape").get<std::vector<std::size_t>>() != t.shape) {
      throw Error(ErrorKind::kIo, "checkpoint tensor " + t.name + " has unexpected layout");
    }
  }
  std::memcpy(params.values().data(), bytes.data() + 4 + len, blob);
  return params;
}

void save_checkpoint(const std::string& path, const DecoderParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write checkpoint " + path);
  const std::string bytes = encode_checkpoint(params);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

DecoderParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

}  // namespace slatphys
