#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlk/error.hpp"
#include "vlk/volume.hpp"

namespace vlk {

/// One labeled polyline in voxel coordinates.
struct Centerline {
  std::uint8_t label = 0;
  std::vector<Vec3> points;

  friend bool operator==(const Centerline&, const Centerline&) = default;
};

using CenterlineSet = std::vector<Centerline>;

/// Throws unless every label is a vessel id and every polyline has >= 2 points.
inline void validate_centerlines(const CenterlineSet& set) {
  for (const auto& c : set) {
    if (!ClassMap::is_vessel(c.label))
      throw InvariantError("centerline label " + std::to_string(int(c.label)) + " outside [1,9]");
    if (c.points.size() < 2) throw InvariantError("centerline polyline needs at least 2 points");
  }
}

inline std::size_t total_points(const CenterlineSet& set) {
  std::size_t n = 0;
  for (const auto& c : set) n += c.points.size();
  return n;
}

inline nlohmann::json centerlines_to_json(const CenterlineSet& set) {
  auto arr = nlohmann::json::array();
  for (const auto& c : set) {
    auto pts = nlohmann::json::array();
    for (const auto& p : c.points) pts.push_back({p[0], p[1], p[2]});
    arr.push_back({{"label", int(c.label)}, {"points", std::move(pts)}});
  }
  return arr;
}

inline CenterlineSet centerlines_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InvariantError("centerline JSON must be an array");
  CenterlineSet out;
  for (const auto& item : j) {
    Centerline c;
    const int label = item.at("label").get<int>();
    if (label < 0 || label > 255) throw InvariantError("centerline label out of range");
    c.label = static_cast<std::uint8_t>(label);
    for (const auto& p : item.at("points")) {
      if (!p.is_array() || p.size() != 3) throw InvariantError("centerline point must be [x,y,z]");
      c.points.push_back({p[0].get<double>(), p[1].get<double>(), p[2].get<double>()});
    }
    out.push_back(std::move(c));
  }
  validate_centerlines(out);
  return out;
}

inline void write_centerlines(const CenterlineSet& set, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out << centerlines_to_json(set).dump() << '\n';
  if (!out) throw IoError(path, "write failed");
}

inline CenterlineSet read_centerlines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open centerline file");
  try {
    return centerlines_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path, std::string("malformed centerline JSON: ") + e.what());
  }
}

}  // namespace vlk
