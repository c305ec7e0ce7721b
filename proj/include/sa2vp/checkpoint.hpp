#pragma once

// Self-describing checkpoint container: an 8-byte magic, a JSON header with
// the resolved run config, the dtype and a tensor table (name, shape,
// frozen/tunable label, byte offset), then the raw little-endian values.
// Round-trips are bit-exact.

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "sa2vp/params.hpp"

namespace sa2vp {

inline constexpr char kCheckpointMagic[8] = {'S', 'A', '2', 'V', 'P', 'C', 'K', '1'};

struct CheckpointInfo {
  std::string dtype;  // "f32" | "f64"
  std::map<std::string, std::string> config;
  struct Entry {
    std::string name;
    Shape shape;
    bool tunable = false;
    uint64_t offset = 0;  // bytes from payload start
  };
  std::vector<Entry> entries;
  uint64_t payload_offset = 0;  // bytes from file start
};

template <typename T>
const char* dtype_name() {
  return sizeof(T) == 8 ? "f64" : "f32";
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const ParamList<T>& params,
                     const std::map<std::string, std::string>& config) {
  nlohmann::json header;
  header["dtype"] = dtype_name<T>();
  header["config"] = config;
  nlohmann::json tensors = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& p : params) {
    nlohmann::json e;
    e["name"] = p.name;
    e["shape"] = p.tensor.shape();
    e["tunable"] = p.tensor.requires_grad();
    e["offset"] = offset;
    tensors.push_back(std::move(e));
    offset += static_cast<uint64_t>(p.tensor.numel()) * sizeof(T);
  }
  header["tensors"] = std::move(tensors);
  std::string hs = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail_io("cannot write checkpoint " + path.string());
  f.write(kCheckpointMagic, 8);
  uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), 8);
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& p : params)
    f.write(reinterpret_cast<const char*>(p.tensor.data()),
            static_cast<std::streamsize>(p.tensor.numel() * sizeof(T)));
  if (!f) fail_io("checkpoint write failed: " + path.string());
}

inline CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail_io("cannot open checkpoint " + path.string());
  char magic[8];
  uint64_t hlen = 0;
  f.read(magic, 8);
  f.read(reinterpret_cast<char*>(&hlen), 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    fail_io("not a checkpoint file: " + path.string());
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) fail_io("truncated checkpoint header: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const std::exception& e) {
    fail_io(std::string("bad checkpoint header: ") + e.what());
  }
  CheckpointInfo info;
  info.dtype = header.at("dtype").get<std::string>();
  for (auto& [k, v] : header.at("config").items()) info.config[k] = v.get<std::string>();
  for (const auto& e : header.at("tensors")) {
    CheckpointInfo::Entry entry;
    entry.name = e.at("name").get<std::string>();
    entry.shape = e.at("shape").get<Shape>();
    entry.tunable = e.at("tunable").get<bool>();
    entry.offset = e.at("offset").get<uint64_t>();
    info.entries.push_back(std::move(entry));
  }
  info.payload_offset = 16 + hlen;
  return info;
}

// Copies stored values into the given parameters. Every requested parameter
// must be present with a matching shape and dtype; anything else is a load
// error. `required_prefix` restricts loading to a namespace (e.g. "backbone.")
// while ignoring the rest of the file.
template <typename T>
void load_checkpoint_into(const std::filesystem::path& path, const ParamList<T>& params,
                          const std::string& required_prefix = "") {
  CheckpointInfo info = read_checkpoint_info(path);
  check(info.dtype == dtype_name<T>(), ErrKind::io,
        "checkpoint dtype " + info.dtype + " does not match model dtype " + dtype_name<T>());
  std::map<std::string, const CheckpointInfo::Entry*> by_name;
  for (const auto& e : info.entries) by_name[e.name] = &e;

  std::ifstream f(path, std::ios::binary);
  if (!f) fail_io("cannot open checkpoint " + path.string());
  for (const auto& p : params) {
    if (!required_prefix.empty() && p.name.rfind(required_prefix, 0) != 0) continue;
    auto it = by_name.find(p.name);
    check(it != by_name.end(), ErrKind::io,
          "checkpoint " + path.string() + " has no tensor named " + p.name);
    const auto& entry = *it->second;
    check(entry.shape == p.tensor.shape(), ErrKind::io,
          "checkpoint tensor " + p.name + " has shape " + shape_str(entry.shape) +
              ", model expects " + shape_str(p.tensor.shape()));
    f.seekg(static_cast<std::streamoff>(info.payload_offset + entry.offset));
    f.read(reinterpret_cast<char*>(p.tensor.data()),
           static_cast<std::streamsize>(p.tensor.numel() * sizeof(T)));
    if (!f) fail_io("truncated checkpoint payload reading " + p.name);
  }
}

}  // namespace sa2vp
