#pragma once

// On-disk volume format: `<path>.json` header plus `<path>.raw` payload.
//
//   {"dims":[nx,ny,nz], "spacing":[sx,sy,sz], "dtype":"uint8"|"float32",
//    "order":"x-fastest", "endianness":"little"}
//
// The payload is the voxel data in x-fastest order, little-endian, no padding.
// This is also the exchange format of the external predictor protocol.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <type_traits>
#include <vector>

#include <json.hpp>

#include "vlk/error.hpp"
#include "vlk/volume.hpp"

namespace vlk {

enum class DType { u8, f32 };

template <typename T>
struct dtype_of;
template <>
struct dtype_of<std::uint8_t> {
  static constexpr DType value = DType::u8;
  static constexpr const char* name = "uint8";
};
template <>
struct dtype_of<float> {
  static constexpr DType value = DType::f32;
  static constexpr const char* name = "float32";
};

inline std::string header_path(const std::string& path) { return path + ".json"; }
inline std::string raw_path(const std::string& path) { return path + ".raw"; }

namespace detail {

template <typename T>
void to_little_endian_inplace(std::vector<char>& bytes) {
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    for (std::size_t i = 0; i + sizeof(T) <= bytes.size(); i += sizeof(T))
      std::reverse(bytes.begin() + static_cast<std::ptrdiff_t>(i),
                   bytes.begin() + static_cast<std::ptrdiff_t>(i + sizeof(T)));
  }
}

inline nlohmann::json read_header(const std::string& path) {
  const std::string hp = header_path(path);
  std::ifstream in(hp);
  if (!in) throw IoError(hp, "cannot open volume header");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(hp, std::string("malformed JSON: ") + e.what());
  }
}

struct Header {
  Dims dims;
  Spacing spacing;
  DType dtype;
};

inline Header parse_header(const nlohmann::json& j, const std::string& hp) {
  Header h{};
  try {
    if (!j.is_object()) throw FormatError(hp, "header is not a JSON object");
    for (const char* key : {"dims", "spacing", "dtype", "order", "endianness"})
      if (!j.contains(key)) throw FormatError(hp, std::string("missing header key '") + key + "'");

    const auto& dims = j.at("dims");
    const auto& spacing = j.at("spacing");
    if (!dims.is_array() || dims.size() != 3) throw FormatError(hp, "dims must be a 3-element array");
    if (!spacing.is_array() || spacing.size() != 3)
      throw FormatError(hp, "spacing must be a 3-element array");
    for (int a = 0; a < 3; ++a) {
      const auto& d = dims.at(static_cast<std::size_t>(a));
      if (!d.is_number_integer() || d.get<std::int64_t>() <= 0)
        throw FormatError(hp, "dims must be positive integers");
      h.dims[a] = d.get<std::int64_t>();
      const auto& s = spacing.at(static_cast<std::size_t>(a));
      if (!s.is_number() || !(s.get<double>() > 0.0))
        throw FormatError(hp, "spacing must be positive numbers");
      h.spacing[static_cast<std::size_t>(a)] = s.get<double>();
    }

    const auto dtype = j.at("dtype").get<std::string>();
    if (dtype == "uint8")
      h.dtype = DType::u8;
    else if (dtype == "float32")
      h.dtype = DType::f32;
    else
      throw FormatError(hp, "unsupported dtype '" + dtype + "'");

    const auto order = j.at("order").get<std::string>();
    if (order != "x-fastest") throw FormatError(hp, "unsupported order '" + order + "'");
    const auto endian = j.at("endianness").get<std::string>();
    if (endian != "little") throw FormatError(hp, "unsupported endianness '" + endian + "'");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(hp, std::string("bad header field: ") + e.what());
  }
  return h;
}

}  // namespace detail

/// dtype recorded in the header at `path`, without reading the payload.
inline DType read_volume_dtype(const std::string& path) {
  return detail::parse_header(detail::read_header(path), header_path(path)).dtype;
}

template <typename T>
void write_volume(const Volume<T>& v, const std::string& path) {
  static_assert(std::is_same_v<T, std::uint8_t> || std::is_same_v<T, float>,
                "on-disk volumes are uint8 or float32");
  if (v.size() != v.dims().voxel_count())
    throw InvariantError("volume data length does not match dims " + to_string(v.dims()));

  nlohmann::json h;
  h["dims"] = {v.dims()[0], v.dims()[1], v.dims()[2]};
  h["spacing"] = {v.spacing()[0], v.spacing()[1], v.spacing()[2]};
  h["dtype"] = dtype_of<T>::name;
  h["order"] = "x-fastest";
  h["endianness"] = "little";

  const std::string hp = header_path(path);
  {
    std::ofstream out(hp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(hp, "cannot open for writing");
    out << h.dump(2) << '\n';
    if (!out) throw IoError(hp, "write failed");
  }

  std::vector<char> bytes(static_cast<std::size_t>(v.size()) * sizeof(T));
  if (!bytes.empty()) std::memcpy(bytes.data(), v.data().data(), bytes.size());
  detail::to_little_endian_inplace<T>(bytes);

  const std::string rp = raw_path(path);
  std::ofstream out(rp, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(rp, "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(rp, "write failed");
}

template <typename T>
Volume<T> read_volume(const std::string& path) {
  static_assert(std::is_same_v<T, std::uint8_t> || std::is_same_v<T, float>,
                "on-disk volumes are uint8 or float32");
  const std::string hp = header_path(path);
  const auto h = detail::parse_header(detail::read_header(path), hp);
  if (h.dtype != dtype_of<T>::value)
    throw FormatError(hp, std::string("expected dtype ") + dtype_of<T>::name);

  const std::string rp = raw_path(path);
  std::ifstream in(rp, std::ios::binary);
  if (!in) throw IoError(rp, "cannot open volume payload");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  const auto expected = static_cast<std::size_t>(h.dims.voxel_count()) * sizeof(T);
  if (bytes.size() != expected)
    throw FormatError(rp, "payload length " + std::to_string(bytes.size()) + " bytes, expected " +
                              std::to_string(expected) + " for dims " + to_string(h.dims));

  detail::to_little_endian_inplace<T>(bytes);
  std::vector<T> data(static_cast<std::size_t>(h.dims.voxel_count()));
  if (!data.empty()) std::memcpy(data.data(), bytes.data(), bytes.size());
  return Volume<T>(h.dims, h.spacing, std::move(data));
}

}  // namespace vlk
