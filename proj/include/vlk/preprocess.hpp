#pragma once

// Two input pipelines: fixed-size (tight box, zero margin, isotropic
// nearest-neighbor scaling, center pad/crop) and sliding-window patches with
// weighted stitching of per-class probabilities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "vlk/error.hpp"
#include "vlk/parallel.hpp"
#include "vlk/prediction.hpp"
#include "vlk/volume.hpp"

namespace vlk {

/// Inclusive voxel box.
struct BoundingBox {
  Index3 min{0, 0, 0};
  Index3 max{0, 0, 0};

  std::int64_t extent(int axis) const {
    const auto a = static_cast<std::size_t>(axis);
    return max[a] - min[a] + 1;
  }
  Dims size() const { return {extent(0), extent(1), extent(2)}; }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

template <typename T>
BoundingBox tight_bbox(const Volume<T>& v) {
  const Dims& d = v.dims();
  BoundingBox b{{d[0], d[1], d[2]}, {-1, -1, -1}};
  for (std::int64_t z = 0; z < d.nz(); ++z)
    for (std::int64_t y = 0; y < d.ny(); ++y)
      for (std::int64_t x = 0; x < d.nx(); ++x) {
        if (v.at(x, y, z) == T{}) continue;
        const Index3 p{x, y, z};
        for (std::size_t a = 0; a < 3; ++a) {
          b.min[a] = std::min(b.min[a], p[a]);
          b.max[a] = std::max(b.max[a], p[a]);
        }
      }
  if (b.max[0] < 0) throw EmptyInputError("tight_bbox: segmentation has no nonzero voxel");
  return b;
}

/// Margin in voxels added per side on `axis`: round(fraction * extent).
inline std::int64_t bbox_margin(const BoundingBox& b, double fraction, int axis) {
  return round_half_away(fraction * static_cast<double>(b.extent(axis)));
}

/// Grows each side by round(fraction * extent), clamped to the volume.
inline BoundingBox pad_bbox(const BoundingBox& b, double fraction, const Dims& dims) {
  if (!(fraction >= 0.0)) throw InvariantError("pad fraction must be nonnegative");
  BoundingBox out = b;
  for (int a = 0; a < 3; ++a) {
    const auto ax = static_cast<std::size_t>(a);
    const std::int64_t m = bbox_margin(b, fraction, a);
    out.min[ax] = std::max<std::int64_t>(0, b.min[ax] - m);
    out.max[ax] = std::min<std::int64_t>(dims[a] - 1, b.max[ax] + m);
  }
  return out;
}

/// Copies `b` grown by the unclamped margin; voxels beyond the source volume
/// become literal zeros.
template <typename T>
Volume<T> extract_with_margin(const Volume<T>& v, const BoundingBox& b, double fraction) {
  if (!(fraction >= 0.0)) throw InvariantError("pad fraction must be nonnegative");
  Index3 origin{};
  Dims out_dims;
  for (int a = 0; a < 3; ++a) {
    const auto ax = static_cast<std::size_t>(a);
    const std::int64_t m = bbox_margin(b, fraction, a);
    origin[ax] = b.min[ax] - m;
    out_dims[a] = b.extent(a) + 2 * m;
  }
  Volume<T> out(out_dims, v.spacing(), T{});
  for (std::int64_t z = 0; z < out_dims.nz(); ++z)
    for (std::int64_t y = 0; y < out_dims.ny(); ++y)
      for (std::int64_t x = 0; x < out_dims.nx(); ++x)
        out.at(x, y, z) = v.get_or({x + origin[0], y + origin[1], z + origin[2]}, T{});
  return out;
}

/// Isotropic scale that fits the source inside `target` on every axis.
inline double fit_scale(const Dims& source, const Dims& target) {
  double s = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a)
    s = std::min(s, static_cast<double>(target[a]) / static_cast<double>(source[a]));
  return s;
}

/// Scales by fit_scale with nearest-neighbor sampling, then centers the result
/// in a zero volume of exactly `target` (cropping symmetrically if needed).
inline LabelVolume scale_crop_to_target(const LabelVolume& v, const Dims& target = {128, 256, 256}) {
  if (!target.positive()) throw InvariantError("target dims must be positive");
  const Dims& src = v.dims();
  const double s = fit_scale(src, target);
  Dims scaled;
  for (int a = 0; a < 3; ++a)
    scaled[a] = std::max<std::int64_t>(1, round_half_away(static_cast<double>(src[a]) * s));

  Index3 shift{};
  for (int a = 0; a < 3; ++a) {
    const std::int64_t gap = target[a] - scaled[a];
    // floor(gap / 2): pads when gap > 0, crops when gap < 0
    shift[static_cast<std::size_t>(a)] = gap >= 0 ? gap / 2 : -((-gap + 1) / 2);
  }

  Spacing spacing{};
  for (std::size_t a = 0; a < 3; ++a)
    spacing[a] = v.spacing()[a] * static_cast<double>(src[static_cast<int>(a)]) /
                 static_cast<double>(scaled[static_cast<int>(a)]);

  // Per-axis source index for each output index, -1 when outside the content.
  std::array<std::vector<std::int64_t>, 3> lut;
  for (int a = 0; a < 3; ++a) {
    auto& l = lut[static_cast<std::size_t>(a)];
    l.assign(static_cast<std::size_t>(target[a]), -1);
    const double ratio = static_cast<double>(src[a]) / static_cast<double>(scaled[a]);
    for (std::int64_t o = 0; o < target[a]; ++o) {
      const std::int64_t j = o - shift[static_cast<std::size_t>(a)];
      if (j < 0 || j >= scaled[a]) continue;
      const auto si = static_cast<std::int64_t>(std::floor((static_cast<double>(j) + 0.5) * ratio));
      l[static_cast<std::size_t>(o)] = std::clamp<std::int64_t>(si, 0, src[a] - 1);
    }
  }

  LabelVolume out(target, spacing, 0);
  parallel_for(0, target.nz(), [&](std::int64_t z) {
    const auto sz = lut[2][static_cast<std::size_t>(z)];
    if (sz < 0) return;
    for (std::int64_t y = 0; y < target.ny(); ++y) {
      const auto sy = lut[1][static_cast<std::size_t>(y)];
      if (sy < 0) continue;
      for (std::int64_t x = 0; x < target.nx(); ++x) {
        const auto sx = lut[0][static_cast<std::size_t>(x)];
        if (sx >= 0) out.at(x, y, z) = v.at(sx, sy, sz);
      }
    }
  });
  return out;
}

/// Fixed-size pipeline: tight box, zero margin, scale and center to target.
inline LabelVolume preprocess_fixed(const LabelVolume& seg, double margin_fraction = 0.15,
                                    const Dims& target = {128, 256, 256}) {
  const BoundingBox b = tight_bbox(seg);
  return scale_crop_to_target(extract_with_margin(seg, b, margin_fraction), target);
}

enum class PatchWeights { uniform, gaussian };

struct PatchPlan {
  Dims volume_dims;
  /// volume_dims raised to at least the patch size per axis.
  Dims padded_dims;
  Dims patch_dims;
  std::vector<Index3> offsets;
  PatchWeights weights = PatchWeights::uniform;
};

/// Offsets along one axis: stride ceil(patch * step), last one clamped so the
/// final patch ends exactly at the edge.
inline std::vector<std::int64_t> axis_offsets(std::int64_t extent, std::int64_t patch, double step_fraction) {
  const auto stride = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(static_cast<double>(patch) * step_fraction)));
  std::vector<std::int64_t> out;
  for (std::int64_t o = 0;; o += stride) {
    if (o + patch >= extent) {
      out.push_back(extent - patch);
      break;
    }
    out.push_back(o);
  }
  return out;
}

inline PatchPlan plan_patches(const Dims& dims, const Dims& patch = {80, 224, 160}, double step_fraction = 0.5,
                              PatchWeights weights = PatchWeights::uniform) {
  if (!(step_fraction > 0.0 && step_fraction <= 1.0)) throw InvariantError("step_fraction must lie in (0, 1]");
  if (!dims.positive() || !patch.positive()) throw InvariantError("dims and patch must be positive");
  PatchPlan plan;
  plan.volume_dims = dims;
  plan.patch_dims = patch;
  plan.weights = weights;
  std::array<std::vector<std::int64_t>, 3> per_axis;
  for (int a = 0; a < 3; ++a) {
    plan.padded_dims[a] = std::max(dims[a], patch[a]);
    per_axis[static_cast<std::size_t>(a)] = axis_offsets(plan.padded_dims[a], patch[a], step_fraction);
  }
  for (auto x : per_axis[0])
    for (auto y : per_axis[1])
      for (auto z : per_axis[2]) plan.offsets.push_back({x, y, z});
  return plan;
}

/// Copies the patch at `offset`; voxels beyond `v` read as zero.
template <typename T>
Volume<T> extract_patch(const Volume<T>& v, const Index3& offset, const Dims& patch) {
  Volume<T> out(patch, v.spacing(), T{});
  for (std::int64_t z = 0; z < patch.nz(); ++z)
    for (std::int64_t y = 0; y < patch.ny(); ++y)
      for (std::int64_t x = 0; x < patch.nx(); ++x)
        out.at(x, y, z) = v.get_or({offset[0] + x, offset[1] + y, offset[2] + z}, T{});
  return out;
}

/// Importance weight of voxel (x, y, z) inside a patch.
inline double patch_weight(PatchWeights w, const Dims& patch, std::int64_t x, std::int64_t y, std::int64_t z) {
  if (w == PatchWeights::uniform) return 1.0;
  const Index3 p{x, y, z};
  double e = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double sigma = static_cast<double>(patch[a]) / 8.0;
    const double c = 0.5 * static_cast<double>(patch[a] - 1);
    const double d = static_cast<double>(p[static_cast<std::size_t>(a)]) - c;
    e += d * d / (2.0 * sigma * sigma);
  }
  return std::exp(-e);
}

struct PlacedPatch {
  Index3 offset;
  ProbabilityMap probabilities;
};

/// Weighted per-voxel average of overlapping patch probabilities over `dims`,
/// renormalized to sum to one. Every voxel must be covered.
inline ProbabilityMap stitch(const std::vector<PlacedPatch>& patches, const Dims& dims, const Spacing& spacing,
                             PatchWeights weights = PatchWeights::uniform) {
  if (patches.empty()) throw EmptyInputError("stitch: no patches");
  const int classes = patches.front().probabilities.classes();
  std::vector<double> acc(static_cast<std::size_t>(dims.voxel_count() * classes), 0.0);
  std::vector<double> wsum(static_cast<std::size_t>(dims.voxel_count()), 0.0);

  for (const auto& pp : patches) {
    const auto& p = pp.probabilities;
    if (p.classes() != classes) throw ShapeError("stitch: class-count mismatch between patches");
    const Dims& pd = p.dims();
    for (int a = 0; a < 3; ++a)
      if (pp.offset[static_cast<std::size_t>(a)] < 0 || pp.offset[static_cast<std::size_t>(a)] + pd[a] > dims[a])
        throw ShapeError("stitch: patch out of bounds");
  }

  // Patches are accumulated in list order per z-slab so the sum is identical
  // for any thread count.
  parallel_for(0, dims.nz(), [&](std::int64_t z) {
    for (const auto& pp : patches) {
      const auto& p = pp.probabilities;
      const Dims& pd = p.dims();
      const std::int64_t lz = z - pp.offset[2];
      if (lz < 0 || lz >= pd.nz()) continue;
      for (std::int64_t ly = 0; ly < pd.ny(); ++ly)
        for (std::int64_t lx = 0; lx < pd.nx(); ++lx) {
          const double w = patch_weight(weights, pd, lx, ly, lz);
          const auto gi = dims.linear(lx + pp.offset[0], ly + pp.offset[1], z);
          const auto li = pd.linear(lx, ly, lz);
          wsum[static_cast<std::size_t>(gi)] += w;
          for (int c = 0; c < classes; ++c) acc[static_cast<std::size_t>(gi * classes + c)] += w * p(li, c);
        }
    }
  });

  ProbabilityMap out(dims, spacing, classes);
  for (std::int64_t i = 0; i < dims.voxel_count(); ++i) {
    if (!(wsum[static_cast<std::size_t>(i)] > 0.0)) throw InvariantError("stitch: voxel not covered by any patch");
    double total = 0.0;
    for (int c = 0; c < classes; ++c) total += acc[static_cast<std::size_t>(i * classes + c)];
    if (!(total > 0.0)) throw InvariantError("stitch: voxel has zero total probability");
    for (int c = 0; c < classes; ++c)
      out(i, c) = static_cast<float>(acc[static_cast<std::size_t>(i * classes + c)] / total);
  }
  return out;
}

}  // namespace vlk
