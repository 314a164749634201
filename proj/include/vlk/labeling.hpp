#pragma once

// Centerline-to-voxel label transfer. Each foreground voxel takes the label of
// the closest centerline point inside the cube of `neighborhood`^3 whole
// voxels centered on it; foreground voxels with no such point become
// non-annotated. Distances are in voxel units regardless of spacing.

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "vlk/centerline.hpp"
#include "vlk/error.hpp"
#include "vlk/parallel.hpp"
#include "vlk/volume.hpp"

namespace vlk {

namespace detail {

/// Centerline points bucketed by nearest voxel cell, stored CSR-style over a
/// grid padded by `margin` cells on every side.
class CenterlineGrid {
 public:
  struct Point {
    Vec3 p;
    std::uint8_t label;
  };

  CenterlineGrid(const Dims& dims, const CenterlineSet& set, std::int64_t margin)
      : margin_(margin), ext_{dims[0] + 2 * margin, dims[1] + 2 * margin, dims[2] + 2 * margin} {
    const auto cells = static_cast<std::size_t>(ext_.voxel_count());
    std::vector<std::int64_t> cell_of;
    std::vector<Point> flat;
    for (const auto& c : set)
      for (const auto& p : c.points) {
        const auto cell = cell_index(p);
        if (cell < 0) continue;  // too far outside to reach any voxel
        cell_of.push_back(cell);
        flat.push_back({p, c.label});
      }
    start_.assign(cells + 1, 0);
    for (auto cell : cell_of) ++start_[static_cast<std::size_t>(cell) + 1];
    for (std::size_t i = 0; i < cells; ++i) start_[i + 1] += start_[i];
    points_.resize(flat.size());
    auto cursor = start_;
    for (std::size_t i = 0; i < flat.size(); ++i)
      points_[static_cast<std::size_t>(cursor[static_cast<std::size_t>(cell_of[i])]++)] = flat[i];
  }

  /// Calls fn(point) for every point whose cell lies within `reach` cells of v.
  template <typename Fn>
  void for_each_near(const Index3& v, std::int64_t reach, Fn&& fn) const {
    Index3 lo{}, hi{};
    for (std::size_t a = 0; a < 3; ++a) {
      lo[a] = std::max<std::int64_t>(0, v[a] + margin_ - reach);
      hi[a] = std::min<std::int64_t>(ext_[static_cast<int>(a)] - 1, v[a] + margin_ + reach);
    }
    for (std::int64_t z = lo[2]; z <= hi[2]; ++z)
      for (std::int64_t y = lo[1]; y <= hi[1]; ++y) {
        const auto row = ext_.linear(0, y, z);
        const auto b = start_[static_cast<std::size_t>(row + lo[0])];
        const auto e = start_[static_cast<std::size_t>(row + hi[0] + 1)];
        for (auto i = b; i < e; ++i) fn(points_[static_cast<std::size_t>(i)]);
      }
  }

 private:
  std::int64_t cell_index(const Vec3& p) const {
    Index3 c{};
    for (std::size_t a = 0; a < 3; ++a) {
      if (!(std::abs(p[a]) < 1e15)) return -1;
      c[a] = round_half_away(p[a]) + margin_;
    }
    return ext_.contains(c) ? ext_.linear(c[0], c[1], c[2]) : -1;
  }

  std::int64_t margin_;
  Dims ext_;
  std::vector<std::int64_t> start_;
  std::vector<Point> points_;
};

}  // namespace detail

/// True when centerline point p falls inside the neighborhood cube of voxel v:
/// |p_i - v_i| <= (neighborhood - 1) / 2 + 0.5 on every axis.
inline bool in_neighborhood(const Vec3& p, const Index3& v, int neighborhood) {
  const double half = 0.5 * static_cast<double>(neighborhood - 1) + 0.5;
  for (std::size_t a = 0; a < 3; ++a)
    if (std::abs(p[a] - static_cast<double>(v[a])) > half) return false;
  return true;
}

inline LabelVolume assign_voxel_labels(const LabelVolume& segmentation, const CenterlineSet& centerlines,
                                       int neighborhood = 7) {
  if (neighborhood < 1 || neighborhood % 2 == 0)
    throw InvariantError("neighborhood must be an odd positive integer");
  require_binary(segmentation, "segmentation");
  for (const auto& c : centerlines)
    if (!ClassMap::is_vessel(c.label))
      throw InvariantError("centerline label " + std::to_string(int(c.label)) + " outside [1,9]");

  const Dims& dims = segmentation.dims();
  const std::int64_t half = (neighborhood - 1) / 2;
  // A point in cell c lies within 0.5 of c, so cells up to half+1 away can qualify.
  const std::int64_t reach = half + 1;
  const detail::CenterlineGrid grid(dims, centerlines, reach);

  LabelVolume out(dims, segmentation.spacing(), 0);
  parallel_for(0, dims.nz(), [&](std::int64_t z) {
    for (std::int64_t y = 0; y < dims.ny(); ++y)
      for (std::int64_t x = 0; x < dims.nx(); ++x) {
        if (segmentation.at(x, y, z) == 0) continue;
        const Index3 v{x, y, z};
        double best = std::numeric_limits<double>::infinity();
        std::uint8_t label = kNonAnnotated;
        grid.for_each_near(v, reach, [&](const detail::CenterlineGrid::Point& pt) {
          if (!in_neighborhood(pt.p, v, neighborhood)) return;
          const double dx = pt.p[0] - double(x), dy = pt.p[1] - double(y), dz = pt.p[2] - double(z);
          const double d2 = dx * dx + dy * dy + dz * dz;
          if (d2 < best || (d2 == best && pt.label < label)) {
            best = d2;
            label = pt.label;
          }
        });
        out.at(x, y, z) = label;
      }
  });
  return out;
}

}  // namespace vlk
