#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "parlab/params.hpp"
#include "parlab/tensor.hpp"

namespace parlab {

// Binary container: magic MPCK, u32 version, length-prefixed UTF-8 config
// snapshot, name table, then per-tensor shape + little-endian f32 data in
// name-table order. save(load(file)) reproduces the file byte for byte.

inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

template <class T>
inline void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
inline T get(std::istream& is, const std::string& what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ParseError("checkpoint: truncated while reading " + what);
  return v;
}

}  // namespace detail

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

struct Checkpoint {
  std::string config_text;
  std::vector<CheckpointTensor> tensors;
};

inline void save_checkpoint(const ParamRegistry& reg, const std::string& config_text,
                            const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path);
  f.write("MPCK", 4);
  detail::put<uint32_t>(f, kCheckpointVersion);
  detail::put<uint64_t>(f, config_text.size());
  f.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  detail::put<uint32_t>(f, static_cast<uint32_t>(reg.items.size()));
  for (const auto& [name, t] : reg.items) {
    detail::put<uint32_t>(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
  }
  for (const auto& [name, t] : reg.items) {
    detail::put<uint32_t>(f, static_cast<uint32_t>(t.shape().size()));
    for (int64_t e : t.shape()) detail::put<uint32_t>(f, static_cast<uint32_t>(e));
    for (Real v : t.values()) detail::put<float>(f, static_cast<float>(v));
  }
  if (!f) throw IoError("short write on checkpoint " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "MPCK", 4) != 0)
    throw ParseError("checkpoint " + path + ": bad magic");
  uint32_t version = detail::get<uint32_t>(f, "version");
  if (version != kCheckpointVersion)
    throw ParseError("checkpoint " + path + ": unsupported version " + std::to_string(version));
  uint64_t clen = detail::get<uint64_t>(f, "config length");
  Checkpoint ck;
  ck.config_text.resize(clen);
  f.read(ck.config_text.data(), static_cast<std::streamsize>(clen));
  if (!f) throw ParseError("checkpoint " + path + ": truncated config text");
  uint32_t count = detail::get<uint32_t>(f, "tensor count");
  ck.tensors.resize(count);
  for (auto& t : ck.tensors) {
    uint32_t nlen = detail::get<uint32_t>(f, "name length");
    t.name.resize(nlen);
    f.read(t.name.data(), nlen);
    if (!f) throw ParseError("checkpoint " + path + ": truncated name table");
  }
  for (auto& t : ck.tensors) {
    uint32_t rank = detail::get<uint32_t>(f, "rank");
    int64_t n = 1;
    t.shape.resize(rank);
    for (auto& e : t.shape) {
      e = detail::get<uint32_t>(f, "extent");
      n *= e;
    }
    t.data.resize(static_cast<std::size_t>(n));
    f.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(n * 4));
    if (!f) throw ParseError("checkpoint " + path + ": truncated tensor data for " + t.name);
  }
  return ck;
}

// Copies checkpoint values into an already-built registry; names and shapes
// must match exactly.
inline void load_into_registry(const Checkpoint& ck, ParamRegistry& reg) {
  if (ck.tensors.size() != reg.items.size())
    throw ConfigError("checkpoint has " + std::to_string(ck.tensors.size()) +
                      " tensors, model expects " + std::to_string(reg.items.size()));
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    const auto& src = ck.tensors[i];
    auto& [name, dst] = reg.items[i];
    if (src.name != name)
      throw ConfigError("checkpoint tensor '" + src.name + "' does not match model parameter '" +
                        name + "'");
    if (src.shape != dst.shape())
      throw ConfigError("checkpoint tensor '" + src.name + "': shape " + shape_str(src.shape) +
                        " does not match model " + shape_str(dst.shape()));
    auto& vals = dst.values();
    for (std::size_t k = 0; k < vals.size(); ++k) vals[k] = static_cast<Real>(src.data[k]);
  }
}

}  // namespace parlab
