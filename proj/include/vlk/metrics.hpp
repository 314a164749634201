#pragma once

// Labeling metrics (per-class Dice, average surface distance) and the
// training losses with their epoch-dependent mixing schedule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "vlk/error.hpp"
#include "vlk/parallel.hpp"
#include "vlk/prediction.hpp"
#include "vlk/volume.hpp"

namespace vlk {

/// Dice of class c from soft or one-hot predictions. A class absent from both
/// sides scores 1.
inline double dice_per_class(const ProbabilityMap& pred, const LabelVolume& gt, int c) {
  require_same_grid(pred.dims(), gt.dims(), "dice");
  if (c < 0 || c >= pred.classes()) throw InvariantError("dice: class id out of range");
  double inter = 0.0, sp = 0.0, sg = 0.0;
  for (std::int64_t i = 0; i < gt.size(); ++i) {
    const double p = pred(i, c);
    const double g = gt[i] == c ? 1.0 : 0.0;
    inter += p * g;
    sp += p;
    sg += g;
  }
  if (sp + sg == 0.0) return 1.0;
  return 2.0 * inter / (sp + sg);
}

/// Dice of class c between two hard label volumes.
inline double dice_per_class(const LabelVolume& pred, const LabelVolume& gt, int c) {
  require_same_grid(pred.dims(), gt.dims(), "dice");
  std::int64_t inter = 0, sp = 0, sg = 0;
  for (std::int64_t i = 0; i < gt.size(); ++i) {
    const bool p = pred[i] == c, g = gt[i] == c;
    inter += p && g;
    sp += p;
    sg += g;
  }
  if (sp + sg == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(sp + sg);
}

inline bool class_present(const LabelVolume& v, int c) {
  return std::any_of(v.data().begin(), v.data().end(), [c](std::uint8_t x) { return x == c; });
}

struct DiceLossOptions {
  /// Average over class 0 as well (all 11 classes).
  bool include_background = true;
  /// Leave out classes absent from both prediction argmax support and gt
  /// instead of scoring them 1.
  bool skip_absent = false;
};

inline double dice_loss(const ProbabilityMap& pred, const LabelVolume& gt, const DiceLossOptions& opt = {}) {
  require_same_grid(pred.dims(), gt.dims(), "dice_loss");
  double sum = 0.0;
  int used = 0;
  for (int c = opt.include_background ? 0 : 1; c < pred.classes(); ++c) {
    if (opt.skip_absent) {
      bool present = class_present(gt, c);
      for (std::int64_t i = 0; !present && i < pred.voxel_count(); ++i) present = pred(i, c) > 0.0f;
      if (!present) continue;
    }
    sum += dice_per_class(pred, gt, c);
    ++used;
  }
  if (used == 0) return 0.0;
  return 1.0 - sum / used;
}

inline constexpr double kLogClamp = 1e-7;

/// Mean over voxels of -log p(true class), probabilities clamped to [1e-7, 1].
inline double cross_entropy(const ProbabilityMap& pred, const LabelVolume& gt) {
  require_same_grid(pred.dims(), gt.dims(), "cross_entropy");
  double sum = 0.0;
  for (std::int64_t i = 0; i < gt.size(); ++i) {
    if (gt[i] >= pred.classes()) throw InvariantError("cross_entropy: label exceeds class count");
    const double p = std::clamp(static_cast<double>(pred(i, gt[i])), kLogClamp, 1.0);
    sum -= std::log(p);
  }
  return sum / static_cast<double>(gt.size());
}

struct LossSchedule {
  double beta = 0;
  double gamma = 0;
  double total = 0;

  void validate() const {
    if (!(0 < beta && beta < gamma && gamma <= total))
      throw InvariantError("loss schedule requires 0 < beta < gamma <= total");
  }
};

/// CE weight between beta and gamma: 0.8 (1 - (epoch - beta)/(gamma - beta)) + 0.1.
/// epoch == beta is accepted and yields the right-hand limit 0.9.
inline double alpha(double epoch, const LossSchedule& s) {
  s.validate();
  if (epoch < s.beta || epoch > s.gamma) throw InvariantError("alpha: epoch outside (beta, gamma]");
  return 0.8 * (1.0 - (epoch - s.beta) / (s.gamma - s.beta)) + 0.1;
}

/// Hybrid loss from already computed CE and Dice losses.
inline double hybrid_loss(double ce, double dice, double epoch, const LossSchedule& s) {
  s.validate();
  if (epoch < 0 || epoch > s.total) throw InvariantError("hybrid_loss: epoch outside [0, total]");
  if (epoch <= s.beta) return ce;
  if (epoch <= s.gamma) {
    const double a = alpha(epoch, s);
    return a * ce + (1.0 - a) * dice;
  }
  return 0.9 * dice + 0.1 * ce;
}

inline double hybrid_loss(const ProbabilityMap& pred, const LabelVolume& gt, double epoch, const LossSchedule& s,
                          const DiceLossOptions& opt = {}) {
  return hybrid_loss(cross_entropy(pred, gt), dice_loss(pred, gt, opt), epoch, s);
}

// -- average surface distance -------------------------------------------------

/// Region voxels with at least one 6-neighbor outside the region (the grid
/// border counts as outside), in x-fastest order.
inline std::vector<Index3> surface_voxels(const LabelVolume& region) {
  const Dims& d = region.dims();
  std::vector<Index3> out;
  static constexpr std::array<Index3, 6> kNeighbors{
      {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}}};
  for (std::int64_t z = 0; z < d.nz(); ++z)
    for (std::int64_t y = 0; y < d.ny(); ++y)
      for (std::int64_t x = 0; x < d.nx(); ++x) {
        if (region.at(x, y, z) == 0) continue;
        for (const auto& n : kNeighbors)
          if (region.get_or({x + n[0], y + n[1], z + n[2]}, 0) == 0) {
            out.push_back({x, y, z});
            break;
          }
      }
  return out;
}

/// Squared physical distance between two voxel centers.
inline double voxel_distance2(const Index3& a, const Index3& b, const Spacing& s) {
  const double dx = static_cast<double>(a[0] - b[0]) * s[0];
  const double dy = static_cast<double>(a[1] - b[1]) * s[1];
  const double dz = static_cast<double>(a[2] - b[2]) * s[2];
  return dx * dx + dy * dy + dz * dz;
}

/// Exact nearest-surface-point queries over a bucket grid.
class SurfaceIndex {
 public:
  static constexpr std::int64_t kBucket = 4;

  SurfaceIndex(std::vector<Index3> points, const Dims& dims, const Spacing& spacing)
      : spacing_(spacing),
        grid_{(dims[0] + kBucket - 1) / kBucket, (dims[1] + kBucket - 1) / kBucket,
              (dims[2] + kBucket - 1) / kBucket} {
    min_spacing_ = std::min({spacing[0], spacing[1], spacing[2]});
    const auto cells = static_cast<std::size_t>(grid_.voxel_count());
    start_.assign(cells + 1, 0);
    for (const auto& p : points) ++start_[static_cast<std::size_t>(cell_of(p)) + 1];
    for (std::size_t i = 0; i < cells; ++i) start_[i + 1] += start_[i];
    points_.resize(points.size());
    auto cursor = start_;
    for (const auto& p : points) points_[static_cast<std::size_t>(cursor[static_cast<std::size_t>(cell_of(p))]++)] = p;
  }

  bool empty() const { return points_.empty(); }

  /// Distance in mm from q to the nearest indexed point.
  double nearest(const Index3& q) const {
    const Index3 qc{q[0] / kBucket, q[1] / kBucket, q[2] / kBucket};
    const std::int64_t max_ring = std::max({grid_[0], grid_[1], grid_[2]});
    double best = std::numeric_limits<double>::infinity();
    for (std::int64_t r = 0; r <= max_ring; ++r) {
      for (std::int64_t cz = qc[2] - r; cz <= qc[2] + r; ++cz) {
        if (cz < 0 || cz >= grid_[2]) continue;
        for (std::int64_t cy = qc[1] - r; cy <= qc[1] + r; ++cy) {
          if (cy < 0 || cy >= grid_[1]) continue;
          const bool yz_shell = std::abs(cz - qc[2]) == r || std::abs(cy - qc[1]) == r;
          for (std::int64_t cx = qc[0] - r; cx <= qc[0] + r; cx += (yz_shell || r == 0) ? 1 : 2 * r) {
            if (cx < 0 || cx >= grid_[0]) continue;
            const auto cell = static_cast<std::size_t>(grid_.linear(cx, cy, cz));
            for (auto i = start_[cell]; i < start_[cell + 1]; ++i)
              best = std::min(best, voxel_distance2(q, points_[static_cast<std::size_t>(i)], spacing_));
          }
        }
      }
      // Points in rings beyond r differ from q by at least r*B+1 voxels on some axis.
      const double bound = static_cast<double>(r * kBucket + 1) * min_spacing_;
      if (best <= bound * bound) break;
    }
    return std::sqrt(best);
  }

 private:
  std::int64_t cell_of(const Index3& p) const { return grid_.linear(p[0] / kBucket, p[1] / kBucket, p[2] / kBucket); }

  Spacing spacing_;
  double min_spacing_ = 1.0;
  Dims grid_;
  std::vector<std::int64_t> start_;
  std::vector<Index3> points_;
};

/// Symmetric average surface distance in mm between the nonzero regions of a
/// and b, using `spacing` for physical distances.
inline double asd(const LabelVolume& a, const LabelVolume& b, const Spacing& spacing) {
  require_same_grid(a.dims(), b.dims(), "asd");
  auto sa = surface_voxels(a);
  auto sb = surface_voxels(b);
  if (sa.empty() || sb.empty()) throw EmptyInputError("asd: empty region, distance undefined");

  const SurfaceIndex ia(sa, a.dims(), spacing);
  const SurfaceIndex ib(sb, b.dims(), spacing);
  std::vector<double> da(sa.size()), db(sb.size());
  parallel_for(0, static_cast<std::int64_t>(sa.size()),
               [&](std::int64_t i) { da[static_cast<std::size_t>(i)] = ib.nearest(sa[static_cast<std::size_t>(i)]); });
  parallel_for(0, static_cast<std::int64_t>(sb.size()),
               [&](std::int64_t i) { db[static_cast<std::size_t>(i)] = ia.nearest(sb[static_cast<std::size_t>(i)]); });
  double sum_a = 0.0, sum_b = 0.0;
  for (double d : da) sum_a += d;
  for (double d : db) sum_b += d;
  // two-term addition commutes exactly, so asd(a, b) == asd(b, a) bit for bit
  return (sum_a + sum_b) / static_cast<double>(sa.size() + sb.size());
}

inline double asd(const LabelVolume& a, const LabelVolume& b) { return asd(a, b, a.spacing()); }

/// ASD of class c between two label volumes; nullopt when either side lacks c.
inline std::optional<double> asd_class(const LabelVolume& pred, const LabelVolume& gt, std::uint8_t c) {
  require_same_grid(pred.dims(), gt.dims(), "asd");
  if (!class_present(pred, c) || !class_present(gt, c)) return std::nullopt;
  return asd(class_mask(pred, c), class_mask(gt, c), gt.spacing());
}

}  // namespace vlk
