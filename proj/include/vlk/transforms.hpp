#pragma once

// Rigid test-time-augmentation transforms and the two ways of mapping a
// prediction made in transformed space back onto the original grid.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "vlk/parallel.hpp"
#include "vlk/rng.hpp"
#include "vlk/volume.hpp"

namespace vlk {

inline constexpr double kTtaMaxRotationDeg = 18.0;
inline constexpr double kTtaMaxTranslationVox = 5.0;

using Mat3 = std::array<std::array<double, 3>, 3>;

/// y = linear * x + offset.
struct AffineMap {
  Mat3 linear{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  Vec3 offset{0, 0, 0};

  Vec3 operator()(const Vec3& x) const {
    Vec3 y{};
    for (std::size_t r = 0; r < 3; ++r)
      y[r] = linear[r][0] * x[0] + linear[r][1] * x[1] + linear[r][2] * x[2] + offset[r];
    return y;
  }

  /// Inverse of a map whose linear part is orthonormal.
  AffineMap rigid_inverse() const {
    AffineMap inv;
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c) inv.linear[r][c] = linear[c][r];
    for (std::size_t r = 0; r < 3; ++r)
      inv.offset[r] = -(inv.linear[r][0] * offset[0] + inv.linear[r][1] * offset[1] +
                        inv.linear[r][2] * offset[2]);
    return inv;
  }
};

inline Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 out{};
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c)
      out[r][c] = a[r][0] * b[0][c] + a[r][1] * b[1][c] + a[r][2] * b[2][c];
  return out;
}

/// Rotation about x, y, z (degrees) composed as Rz * Ry * Rx around the
/// volume center, followed by a translation in voxels.
struct RigidTransform {
  Vec3 euler_deg{0, 0, 0};
  Vec3 translation_vox{0, 0, 0};

  static RigidTransform identity() { return {}; }

  Mat3 rotation() const {
    const double k = std::numbers::pi / 180.0;
    const double cx = std::cos(euler_deg[0] * k), sx = std::sin(euler_deg[0] * k);
    const double cy = std::cos(euler_deg[1] * k), sy = std::sin(euler_deg[1] * k);
    const double cz = std::cos(euler_deg[2] * k), sz = std::sin(euler_deg[2] * k);
    const Mat3 rx{{{1, 0, 0}, {0, cx, -sx}, {0, sx, cx}}};
    const Mat3 ry{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
    const Mat3 rz{{{cz, -sz, 0}, {sz, cz, 0}, {0, 0, 1}}};
    return matmul(rz, matmul(ry, rx));
  }

  /// Forward point map on a grid of `dims`: x -> R (x - c) + c + t.
  AffineMap forward_map(const Dims& dims) const {
    AffineMap m;
    m.linear = rotation();
    Vec3 center{};
    for (int a = 0; a < 3; ++a) center[static_cast<std::size_t>(a)] = 0.5 * static_cast<double>(dims[a] - 1);
    for (std::size_t r = 0; r < 3; ++r)
      m.offset[r] = center[r] + translation_vox[r] -
                    (m.linear[r][0] * center[0] + m.linear[r][1] * center[1] + m.linear[r][2] * center[2]);
    return m;
  }

  bool within_tta_range() const {
    for (std::size_t a = 0; a < 3; ++a)
      if (std::abs(euler_deg[a]) > kTtaMaxRotationDeg || std::abs(translation_vox[a]) > kTtaMaxTranslationVox)
        return false;
    return true;
  }

  friend bool operator==(const RigidTransform&, const RigidTransform&) = default;
};

/// Deterministic TTA transform `index` for `seed`: six independent uniform
/// draws, rotation in [-18, 18] degrees and translation in [-5, 5] voxels.
inline RigidTransform sample_tta_transform(std::uint64_t seed, std::uint32_t index) {
  RigidTransform t;
  for (std::size_t a = 0; a < 3; ++a) {
    t.euler_deg[a] = kTtaMaxRotationDeg * (2.0 * counter_uniform(seed, index, a) - 1.0);
    t.translation_vox[a] = kTtaMaxTranslationVox * (2.0 * counter_uniform(seed, index, 3 + a) - 1.0);
  }
  return t;
}

inline Index3 round_point(const Vec3& p) {
  return {round_half_away(p[0]), round_half_away(p[1]), round_half_away(p[2])};
}

/// out(o) = in(round(sample_at(o))), 0 where the sample point is off-grid.
template <typename T>
Volume<T> resample_nearest(const Volume<T>& in, const AffineMap& sample_at) {
  const Dims& dims = in.dims();
  Volume<T> out(dims, in.spacing(), T{});
  parallel_for(0, dims.nz(), [&](std::int64_t z) {
    for (std::int64_t y = 0; y < dims.ny(); ++y)
      for (std::int64_t x = 0; x < dims.nx(); ++x) {
        const Index3 src = round_point(sample_at({double(x), double(y), double(z)}));
        out.at(x, y, z) = in.get_or(src, T{});
      }
  });
  return out;
}

/// Augments `labels` by t using inverse mapping and nearest-neighbor sampling.
inline LabelVolume apply_forward(const LabelVolume& labels, const RigidTransform& t) {
  return resample_nearest(labels, t.forward_map(labels.dims()).rigid_inverse());
}

/// Standard inversion: resample `pred` with the analytic inverse of t, i.e.
/// apply_forward with t^-1. Output voxel v reads pred at round(t(v)).
inline LabelVolume invert_standard(const LabelVolume& pred, const RigidTransform& t) {
  const AffineMap inverse = t.forward_map(pred.dims()).rigid_inverse();
  return resample_nearest(pred, inverse.rigid_inverse());
}

/// Coordinate-guided inversion. For every voxel v of the original mask, the
/// forward-transformed coordinate is rounded to p and pred(p) is taken when it
/// is a label; otherwise the nearest labeled prediction voxel within Chebyshev
/// radius `search_radius` of p is used (ties to the smaller linear index), and
/// failing that the voxel becomes non-annotated. Voxels outside the mask are 0.
inline LabelVolume invert_coordinate_guided(const LabelVolume& pred, const RigidTransform& t,
                                            const LabelVolume& original_seg, int search_radius = 2) {
  require_same_grid(pred.dims(), original_seg.dims(), "invert_coordinate_guided");
  const Dims& dims = pred.dims();
  const AffineMap fwd = t.forward_map(dims);
  LabelVolume out(dims, original_seg.spacing(), 0);

  parallel_for(0, dims.nz(), [&](std::int64_t z) {
    for (std::int64_t y = 0; y < dims.ny(); ++y)
      for (std::int64_t x = 0; x < dims.nx(); ++x) {
        if (original_seg.at(x, y, z) == 0) continue;
        const Index3 p = round_point(fwd({double(x), double(y), double(z)}));
        const std::uint8_t direct = pred.get_or(p, 0);
        if (direct != 0) {
          out.at(x, y, z) = direct;
          continue;
        }
        std::int64_t best_d2 = std::numeric_limits<std::int64_t>::max();
        std::int64_t best_idx = std::numeric_limits<std::int64_t>::max();
        std::uint8_t label = kNonAnnotated;
        for (std::int64_t dz = -search_radius; dz <= search_radius; ++dz)
          for (std::int64_t dy = -search_radius; dy <= search_radius; ++dy)
            for (std::int64_t dx = -search_radius; dx <= search_radius; ++dx) {
              const Index3 q{p[0] + dx, p[1] + dy, p[2] + dz};
              if (!dims.contains(q)) continue;
              const std::uint8_t v = pred.at(q);
              if (v == 0) continue;
              const std::int64_t d2 = dx * dx + dy * dy + dz * dz;
              const std::int64_t idx = dims.linear(q[0], q[1], q[2]);
              if (d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
                best_d2 = d2;
                best_idx = idx;
                label = v;
              }
            }
        out.at(x, y, z) = label;
      }
  });
  return out;
}

/// Share of voxels labeled nonzero in `original` whose value differs in `roundtrip`.
inline double misassigned_fraction(const LabelVolume& original, const LabelVolume& roundtrip) {
  require_same_grid(original.dims(), roundtrip.dims(), "misassigned_fraction");
  std::int64_t labeled = 0, wrong = 0;
  for (std::int64_t i = 0; i < original.size(); ++i) {
    if (original[i] == 0) continue;
    ++labeled;
    wrong += roundtrip[i] != original[i];
  }
  if (labeled == 0) throw EmptyInputError("misassigned_fraction: no labeled voxels");
  return static_cast<double>(wrong) / static_cast<double>(labeled);
}

}  // namespace vlk

namespace vlk {

/// Round-trip misassignment of both inversion methods over n TTA transforms.
struct InversionComparison {
  std::vector<RigidTransform> transforms;
  std::vector<double> standard;
  std::vector<double> coordinate_guided;
};

/// For each sampled transform: augment `labels`, then map back with both the
/// standard and the coordinate-guided inversion and score against `labels`.
inline InversionComparison compare_inversions(const LabelVolume& labels, const LabelVolume& seg, std::uint32_t n,
                                              std::uint64_t seed, int search_radius = 2) {
  require_same_grid(labels.dims(), seg.dims(), "compare_inversions");
  InversionComparison r;
  r.transforms.resize(n);
  r.standard.resize(n);
  r.coordinate_guided.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const RigidTransform t = sample_tta_transform(seed, i);
    const LabelVolume moved = apply_forward(labels, t);
    r.transforms[i] = t;
    r.standard[i] = misassigned_fraction(labels, invert_standard(moved, t));
    r.coordinate_guided[i] = misassigned_fraction(labels, invert_coordinate_guided(moved, t, seg, search_radius));
  }
  return r;
}

}  // namespace vlk
