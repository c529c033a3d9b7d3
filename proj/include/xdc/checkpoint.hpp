#pragma once

// Parameter checkpoint file, version 1. All integers and floats little-endian.
//
//   bytes 0..7   magic "XDCCKPT\0"
//   u32          format version (1)
//   u32          metadata length L, followed by L bytes of UTF-8 (JSON text)
//   u32          parameter count P, then P records:
//                  u32 name length, name bytes,
//                  u32 rank R, R × u64 dims,
//                  prod(dims) × f64 values (IEEE-754 binary64)

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xdc/io.hpp"
#include "xdc/tensor.hpp"

namespace xdc {

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::string metadata;
  std::vector<CheckpointEntry> entries;

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

namespace detail {

inline constexpr std::array<char, 8> kCheckpointMagic = {'X', 'D', 'C', 'C',
                                                         'K', 'P', 'T', '\0'};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  std::string out(detail::kCheckpointMagic.begin(),
                  detail::kCheckpointMagic.end());
  detail::put_le<std::uint32_t>(out, Checkpoint::kVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.metadata.size()));
  out += ck.metadata;
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ck.entries.size()));
  for (const auto& e : ck.entries) {
    if (numel(e.shape) != e.values.size())
      throw ShapeError("checkpoint: entry '" + e.name + "' shape " +
                       to_string(e.shape) + " does not match its values");
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) detail::put_le<std::uint64_t>(out, d);
    for (double v : e.values) detail::put_le<double>(out, v);
  }
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& bytes,
                                   const std::string& what = "checkpoint") {
  detail::ByteReader r(bytes, what);
  const auto magic = r.get_string(8, "magic");
  if (!std::equal(magic.begin(), magic.end(), detail::kCheckpointMagic.begin()))
    throw IoError(what + ": bad magic at offset 0");
  const auto version = r.get<std::uint32_t>("version");
  if (version != Checkpoint::kVersion)
    throw IoError(what + ": unsupported version " + std::to_string(version));
  Checkpoint ck;
  const auto mlen = r.get<std::uint32_t>("metadata length");
  ck.metadata = r.get_string(mlen, "metadata");
  const auto count = r.get<std::uint32_t>("parameter count");
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto nlen = r.get<std::uint32_t>("name length");
    e.name = r.get_string(nlen, "name");
    const auto rank = r.get<std::uint32_t>("rank");
    for (std::uint32_t d = 0; d < rank; ++d)
      e.shape.push_back(r.get<std::uint64_t>("dims"));
    e.values.resize(numel(e.shape));
    for (auto& v : e.values) v = r.get<double>("values");
    ck.entries.push_back(std::move(e));
  }
  if (!r.done())
    throw IoError(what + ": trailing bytes at offset " +
                  std::to_string(r.offset()));
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const Checkpoint& ck) {
  detail::write_file(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(detail::read_file(path), path.string());
}

inline Checkpoint make_checkpoint(const std::vector<Tensor>& params,
                                  std::string metadata = {}) {
  Checkpoint ck;
  ck.metadata = std::move(metadata);
  for (const auto& p : params)
    ck.entries.push_back({p.name(), p.shape(), p.values()});
  return ck;
}

// Copies stored values into same-named parameters; shapes must agree.
inline void restore_parameters(const Checkpoint& ck, std::vector<Tensor>& params) {
  for (auto& p : params) {
    const auto* e = ck.find(p.name());
    if (!e) throw IoError("checkpoint: missing parameter '" + p.name() + "'");
    if (e->shape != p.shape())
      throw ShapeError("checkpoint: parameter '" + p.name() + "' stored as " +
                       to_string(e->shape) + ", model expects " +
                       to_string(p.shape()));
    std::copy(e->values.begin(), e->values.end(), p.mutable_data().begin());
  }
}

}  // namespace xdc
