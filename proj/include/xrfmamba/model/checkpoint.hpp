#pragma once

// Single-file checkpoint:
//   "XRFCKPT1" | u64 header length | JSON header | float32 tensor data (LE)
// The header echoes the model config, records the code version and indexes
// every tensor by name, shape and byte offset into the data section.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "xrfmamba/model/xrfmamba.hpp"
#include "xrfmamba/version.hpp"

namespace xrf::model {

inline constexpr char kCheckpointMagic[8] = {'X', 'R', 'F', 'C', 'K', 'P', 'T', '1'};

inline void save_checkpoint(const std::filesystem::path& path, const XRFMamba<float>& model,
                            const json& extra = json::object()) {
  json tensors = json::array();
  std::uint64_t offset = 0;
  for (const auto& e : model.params().entries()) {
    tensors.push_back({{"name", e.name}, {"shape", e.tensor.shape()}, {"offset", offset}});
    offset += e.tensor.size() * sizeof(float);
  }
  const json header{{"format", "xrfmamba-checkpoint"},
                    {"version", 1},
                    {"code_version", code_version()},
                    {"model", to_json(model.config())},
                    {"extra", extra},
                    {"tensors", tensors}};
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write to a sibling file and rename so a crash never leaves a torn checkpoint.
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& e : model.params().entries()) {
      out.write(reinterpret_cast<const char*>(e.tensor.values().data()),
                static_cast<std::streamsize>(e.tensor.size() * sizeof(float)));
    }
    if (!out) throw IoError("checkpoint write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

struct LoadedCheckpoint {
  XRFMamba<float> model;
  json header;
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw SchemaError(path.string() + ": not a checkpoint (bad magic)");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1u << 30)) throw SchemaError(path.string() + ": bad header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw SchemaError(path.string() + ": truncated header");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": header is not JSON: " + e.what());
  }
  const auto data_start = static_cast<std::uint64_t>(in.tellg());
  LoadedCheckpoint ck{XRFMamba<float>(model_config_from_json(header.at("model"), "checkpoint.model")), header};
  std::map<std::string, json> index;
  for (const auto& t : header.at("tensors")) index[t.at("name").get<std::string>()] = t;
  for (const auto& e : ck.model.params().entries()) {
    auto it = index.find(e.name);
    if (it == index.end()) throw SchemaError(path.string() + ": missing tensor " + e.name);
    const auto shape = it->second.at("shape").get<ad::Shape>();
    if (shape != e.tensor.shape()) {
      throw SchemaError(path.string() + ": tensor " + e.name + " has shape " + ad::shape_str(shape) +
                        ", model expects " + ad::shape_str(e.tensor.shape()));
    }
    in.seekg(static_cast<std::streamoff>(data_start + it->second.at("offset").get<std::uint64_t>()));
    auto tensor = e.tensor;
    in.read(reinterpret_cast<char*>(tensor.values().data()),
            static_cast<std::streamsize>(tensor.size() * sizeof(float)));
    if (!in) throw SchemaError(path.string() + ": truncated data for " + e.name);
  }
  if (index.size() != ck.model.params().entries().size()) {
    throw SchemaError(path.string() + ": checkpoint holds tensors the model does not define");
  }
  return ck;
}

}  // namespace xrf::model
