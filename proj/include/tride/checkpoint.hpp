#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tride/errors.hpp"
#include "tride/tape.hpp"
#include "tride/tensor.hpp"

namespace tride {

// Ordered, named collection of trainable tensors. Order is the registration
// order and is part of the contract: optimizer state and tape bindings index
// into it positionally.
struct ParamSet {
  std::vector<std::string> names;
  std::vector<Tensor<float>> tensors;

  Tensor<float>& add(const std::string& name, Tensor<float> t) {
    if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
    index_[name] = static_cast<int>(names.size());
    names.push_back(name);
    tensors.push_back(std::move(t));
    return tensors.back();
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter: " + name);
    return it->second;
  }

  Tensor<float>& at(const std::string& name) { return tensors[find(name)]; }
  const Tensor<float>& at(const std::string& name) const { return tensors[find(name)]; }

  std::size_t size() const { return names.size(); }

 private:
  std::unordered_map<std::string, int> index_;
};

// Push every parameter onto a tape as a gradient-carrying leaf. Returned ids
// are parallel to ParamSet order.
template <typename T>
std::vector<Var> bind_params(Tape<T>& tape, const ParamSet& params, bool requires_grad = true) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& t : params.tensors) {
    if constexpr (std::is_same_v<T, float>) {
      vars.push_back(tape.leaf(t, requires_grad));
    } else {
      vars.push_back(tape.leaf(t.template cast<T>(), requires_grad));
    }
  }
  return vars;
}

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file: " + path, 0);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open file for writing: " + path, 0);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write: " + path, 0);
}

}  // namespace detail

// Checkpoint = UTF-8 JSON manifest (array of {name, shape, dtype, byte_offset})
// plus a raw little-endian float32 blob. Round-trips are bit-exact, including
// non-finite values.
inline void save_checkpoint(const ParamSet& params, const std::string& manifest_path,
                            const std::string& blob_path) {
  nlohmann::json manifest = nlohmann::json::array();
  std::string blob;
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = params.tensors[i];
    nlohmann::json entry;
    entry["name"] = params.names[i];
    entry["shape"] = t.shape;
    entry["dtype"] = "f32";
    entry["byte_offset"] = offset;
    manifest.push_back(entry);
    for (float v : t.data) detail::put_u32_le(blob, std::bit_cast<std::uint32_t>(v));
    offset += t.numel() * 4;
  }
  detail::write_file_bytes(manifest_path, manifest.dump(2) + "\n");
  detail::write_file_bytes(blob_path, blob);
}

inline ParamSet load_checkpoint(const std::string& manifest_path, const std::string& blob_path) {
  const std::string text = detail::read_file_bytes(manifest_path);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("manifest is not valid JSON: " + std::string(e.what()),
                      static_cast<std::size_t>(e.byte));
  }
  if (!manifest.is_array()) throw FormatError("manifest must be a JSON array", 0);
  const std::string blob = detail::read_file_bytes(blob_path);
  const auto* raw = reinterpret_cast<const unsigned char*>(blob.data());

  ParamSet params;
  for (const auto& entry : manifest) {
    if (!entry.is_object() || !entry.contains("name") || !entry.contains("shape") ||
        !entry.contains("dtype") || !entry.contains("byte_offset")) {
      throw FormatError("manifest entry missing required field", 0);
    }
    const std::string name = entry.at("name").get<std::string>();
    const std::string dtype = entry.at("dtype").get<std::string>();
    if (dtype != "f32") throw FormatError("unsupported dtype '" + dtype + "' for " + name, 0);
    const Shape shape = entry.at("shape").get<Shape>();
    const std::size_t offset = entry.at("byte_offset").get<std::size_t>();
    const std::size_t n = shape_numel(shape);
    if (offset % 4 != 0) throw FormatError("misaligned byte_offset for " + name, offset);
    if (offset + n * 4 > blob.size()) {
      throw FormatError("blob too small for tensor " + name, offset);
    }
    Tensor<float> t(shape);
    for (std::size_t i = 0; i < n; ++i) {
      t.data[i] = std::bit_cast<float>(detail::get_u32_le(raw + offset + i * 4));
    }
    params.add(name, std::move(t));
  }
  return params;
}

}  // namespace tride
