#pragma once

// Versioned binary checkpoint: magic, format version, string metadata,
// layer/parameter manifest, little-endian float32 payloads, CRC32 trailer.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pilotforge/common.hpp"
#include "pilotforge/tensor.hpp"

namespace pilotforge::nn {

inline constexpr char kCheckpointMagic[4] = {'P', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry& require(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return e;
    throw RunError("checkpoint: missing parameter '" + name + "'");
  }

  bool has(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return true;
    return false;
  }

  std::string meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw RunError("checkpoint: missing metadata key '" + key + "'");
    return it->second;
  }
};

inline void save_checkpoint(const std::filesystem::path& path,
                            const std::vector<std::pair<std::string, const Tensor<float>*>>& params,
                            const std::map<std::string, std::string>& meta) {
  ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    w.str(k);
    w.str(v);
  }
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.str(name);
    w.u8(0);  // dtype tag: float32
    w.u32(static_cast<std::uint32_t>(t->shape.size()));
    for (int d : t->shape) w.u32(static_cast<std::uint32_t>(d));
  }
  for (const auto& [name, t] : params)
    for (float v : t->data) w.f32(v);
  w.write_file_with_crc(path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  ByteReader r = ByteReader::from_file_checked(path);
  char magic[4];
  magic[0] = static_cast<char>(r.u8());
  magic[1] = static_cast<char>(r.u8());
  magic[2] = static_cast<char>(r.u8());
  magic[3] = static_cast<char>(r.u8());
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw RunError("not a checkpoint file: " + path.string());
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw RunError("unsupported checkpoint version " + std::to_string(version) + ": " +
                   path.string());
  Checkpoint ck;
  const std::uint32_t nmeta = r.u32();
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = r.str();
    ck.meta[k] = r.str();
  }
  const std::uint32_t nparams = r.u32();
  ck.entries.resize(nparams);
  for (auto& e : ck.entries) {
    e.name = r.str();
    if (r.u8() != 0) throw RunError("unsupported dtype in checkpoint: " + path.string());
    const std::uint32_t ndim = r.u32();
    e.shape.resize(ndim);
    for (auto& d : e.shape) d = static_cast<int>(r.u32());
  }
  for (auto& e : ck.entries) {
    e.data.resize(static_cast<std::size_t>(Tensor<float>::count(e.shape)));
    for (auto& v : e.data) v = r.f32();
  }
  return ck;
}

// Copies checkpoint entries into a live parameter set, matching by name.
inline void restore_params(const Checkpoint& ck, const std::vector<Param<float>*>& params,
                           const std::string& prefix = "") {
  for (auto* p : params) {
    const CheckpointEntry& e = ck.require(prefix + p->name);
    if (e.shape != p->value.shape)
      throw RunError("checkpoint: shape mismatch for '" + p->name + "': file has " +
                     shape_string(e.shape) + ", model has " + shape_string(p->value.shape));
    p->value.data.assign(e.data.begin(), e.data.end());
  }
}

inline std::vector<std::pair<std::string, const Tensor<float>*>> named_params(
    const std::vector<Param<float>*>& params, const std::string& prefix = "") {
  std::vector<std::pair<std::string, const Tensor<float>*>> out;
  out.reserve(params.size());
  for (const auto* p : params) out.emplace_back(prefix + p->name, &p->value);
  return out;
}

}  // namespace pilotforge::nn
