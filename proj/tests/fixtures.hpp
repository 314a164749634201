#pragma once

#include <algorithm>
#include <random>

#include "vlk/phantom.hpp"

namespace fixtures {

/// A phantom with 1-4 random tubes on a grid of at most `max_side` voxels,
/// control points kept away from the border so the tubes stay inside.
inline vlk::PhantomSpec random_tube_spec(std::mt19937_64& rng, std::int64_t max_side) {
  std::uniform_int_distribution<std::int64_t> side(16, max_side);
  vlk::PhantomSpec spec;
  spec.dims = {side(rng), side(rng), side(rng)};
  const int tubes = std::uniform_int_distribution<int>(1, 4)(rng);
  for (int t = 0; t < tubes; ++t) {
    vlk::TubeSpec tube;
    tube.label = static_cast<std::uint8_t>(std::uniform_int_distribution<int>(1, 9)(rng));
    const double r = std::uniform_real_distribution<double>(0.6, 3.0)(rng);
    tube.radii = {r};
    const int n = std::uniform_int_distribution<int>(2, 4)(rng);
    for (int k = 0; k < n; ++k) {
      vlk::Vec3 p{};
      for (int a = 0; a < 3; ++a) {
        const double lo = 4.0, hi = double(spec.dims[a]) - 5.0;
        p[std::size_t(a)] = std::uniform_real_distribution<double>(lo, hi)(rng);
      }
      tube.control_points.push_back(p);
    }
    spec.segments.push_back(tube);
  }
  return spec;
}

/// Straight tube along x through the grid center.
inline vlk::PhantomSpec straight_tube(vlk::Dims dims, std::uint8_t label, double radius) {
  vlk::PhantomSpec spec;
  spec.dims = dims;
  const double cy = (dims[1] - 1) / 2.0, cz = (dims[2] - 1) / 2.0;
  vlk::TubeSpec tube;
  tube.label = label;
  tube.radii = {radius};
  tube.control_points = {{2.0, cy, cz}, {double(dims[0]) - 3.0, cy, cz}};
  spec.segments.push_back(tube);
  return spec;
}

}  // namespace fixtures
