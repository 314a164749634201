#pragma once

// Synthetic Circle-of-Willis-like phantoms: tubes swept along Catmull-Rom
// curves, optional focal stenoses, and a Poiseuille velocity profile.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "vlk/centerline.hpp"
#include "vlk/error.hpp"
#include "vlk/rng.hpp"
#include "vlk/volume.hpp"

namespace vlk {

struct TubeSpec {
  std::uint8_t label = 1;
  std::vector<Vec3> control_points;
  /// One radius for the whole tube, or one per control point (voxels).
  std::vector<double> radii{2.0};
  /// Peak axial velocity in cm/s.
  double velocity_peak = 50.0;

  friend bool operator==(const TubeSpec&, const TubeSpec&) = default;
};

/// Focal narrowing on one segment: radius *= 1 - severity * bump(t), where
/// bump is a raised-cosine window of width `extent` centered at `center`
/// (both in normalized arc length). severity == 1 pinches the lumen to its
/// axis and splits the emitted centerline.
struct Stenosis {
  std::size_t segment = 0;
  double center = 0.5;
  double severity = 0.0;
  double extent = 0.2;

  friend bool operator==(const Stenosis&, const Stenosis&) = default;
};

struct PhantomSpec {
  Dims dims{64, 64, 64};
  Spacing spacing{1.0, 1.0, 1.0};
  std::vector<TubeSpec> segments;
  std::uint64_t noise_seed = 0;
  std::vector<Stenosis> stenoses;

  friend bool operator==(const PhantomSpec&, const PhantomSpec&) = default;
};

struct Phantom {
  LabelVolume segmentation;
  CenterlineSet centerlines;
  FloatVolume velocity;
};

/// Centerline samples are emitted only where the lumen radius is at least
/// this large, which keeps every emitted point within one voxel of the mask.
inline constexpr double kMinCenterlineRadius = 0.8660254037844386;  // sqrt(3)/2

/// Arc-length step of emitted centerlines (voxels).
inline constexpr double kCenterlineStep = 0.5;

namespace detail {

inline Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 scale(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 lerp(const Vec3& a, const Vec3& b, double f) { return add(a, scale(sub(b, a), f)); }

/// Uniform Catmull-Rom between p1 and p2.
inline Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3, double u) {
  Vec3 out{};
  const double u2 = u * u, u3 = u2 * u;
  for (std::size_t a = 0; a < 3; ++a) {
    out[a] = 0.5 * (2.0 * p1[a] + (-p0[a] + p2[a]) * u +
                    (2.0 * p0[a] - 5.0 * p1[a] + 4.0 * p2[a] - p3[a]) * u2 +
                    (-p0[a] + 3.0 * p1[a] - 3.0 * p2[a] + p3[a]) * u3);
  }
  return out;
}

struct TubeSample {
  Vec3 point;
  double radius;  // after stenosis scaling
};

inline double stenosis_factor(const std::vector<Stenosis>& stenoses, std::size_t segment, double t) {
  double f = 1.0;
  for (const auto& s : stenoses) {
    if (s.segment != segment) continue;
    const double half = 0.5 * s.extent;
    const double off = t - s.center;
    if (std::abs(off) >= half) continue;
    const double bump = 0.5 * (1.0 + std::cos(std::numbers::pi * off / half));
    f *= 1.0 - s.severity * bump;
  }
  return std::max(0.0, f);
}

/// Interpolated axis of one tube resampled at <= kCenterlineStep arc length.
inline std::vector<TubeSample> sample_tube(const TubeSpec& tube, std::size_t segment,
                                           const std::vector<Stenosis>& stenoses) {
  const auto& cp = tube.control_points;
  const std::size_t n = cp.size();
  auto radius_at = [&](std::size_t k) { return tube.radii.size() == 1 ? tube.radii[0] : tube.radii[k]; };

  // Dense pass along each span; radius interpolated linearly in span parameter.
  std::vector<Vec3> dense;
  std::vector<double> dense_r;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const Vec3 p0 = k == 0 ? sub(scale(cp[0], 2.0), cp[1]) : cp[k - 1];
    const Vec3 p3 = k + 2 >= n ? sub(scale(cp[n - 1], 2.0), cp[n - 2]) : cp[k + 2];
    const double chord = std::sqrt(dot(sub(cp[k + 1], cp[k]), sub(cp[k + 1], cp[k])));
    const int steps = std::max(8, static_cast<int>(std::ceil(chord * 8.0)));
    for (int s = (k == 0 ? 0 : 1); s <= steps; ++s) {
      const double u = static_cast<double>(s) / steps;
      dense.push_back(catmull_rom(p0, cp[k], cp[k + 1], p3, u));
      dense_r.push_back(radius_at(k) + u * (radius_at(k + 1) - radius_at(k)));
    }
  }

  std::vector<double> arc(dense.size(), 0.0);
  for (std::size_t i = 1; i < dense.size(); ++i) {
    const Vec3 d = sub(dense[i], dense[i - 1]);
    arc[i] = arc[i - 1] + std::sqrt(dot(d, d));
  }
  const double length = arc.back();
  const auto count = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(length / kCenterlineStep)));

  std::vector<TubeSample> out;
  out.reserve(static_cast<std::size_t>(count + 1));
  std::size_t j = 0;
  for (std::int64_t i = 0; i <= count; ++i) {
    const double s = length * static_cast<double>(i) / static_cast<double>(count);
    while (j + 2 < dense.size() && arc[j + 1] < s) ++j;
    const double span = arc[j + 1] - arc[j];
    const double f = span > 0.0 ? std::clamp((s - arc[j]) / span, 0.0, 1.0) : 0.0;
    const double t = length > 0.0 ? s / length : 0.0;
    const double r = dense_r[j] + f * (dense_r[j + 1] - dense_r[j]);
    out.push_back({lerp(dense[j], dense[j + 1], f), r * stenosis_factor(stenoses, segment, t)});
  }
  return out;
}

}  // namespace detail

inline void validate_phantom_spec(const PhantomSpec& spec) {
  if (spec.segments.empty()) throw InvariantError("phantom spec needs at least one segment");
  if (!spec.dims.positive()) throw InvariantError("phantom dims must be positive");
  for (double s : spec.spacing)
    if (!(s > 0.0)) throw InvariantError("phantom spacing must be positive");
  for (std::size_t i = 0; i < spec.segments.size(); ++i) {
    const auto& t = spec.segments[i];
    const std::string name = "segment " + std::to_string(i);
    if (!ClassMap::is_vessel(t.label)) throw InvariantError(name + ": label outside [1,9]");
    if (t.control_points.size() < 2) throw InvariantError(name + ": needs at least 2 control points");
    if (t.radii.size() != 1 && t.radii.size() != t.control_points.size())
      throw InvariantError(name + ": radii must have 1 or one-per-control-point entries");
    for (double r : t.radii)
      if (!(r > 0.0)) throw InvariantError(name + ": radius must be positive");
    for (const auto& p : t.control_points)
      for (int a = 0; a < 3; ++a)
        if (!(p[static_cast<std::size_t>(a)] >= 0.0) ||
            p[static_cast<std::size_t>(a)] > static_cast<double>(spec.dims[a] - 1))
          throw InvariantError(name + ": tube exits volume bounds (control point)");
  }
  for (const auto& s : spec.stenoses) {
    if (s.segment >= spec.segments.size()) throw InvariantError("stenosis references unknown segment");
    if (!(s.center >= 0.0 && s.center <= 1.0)) throw InvariantError("stenosis center outside [0,1]");
    if (!(s.severity >= 0.0 && s.severity <= 1.0)) throw InvariantError("stenosis severity outside [0,1]");
    if (!(s.extent > 0.0 && s.extent <= 1.0)) throw InvariantError("stenosis extent outside (0,1]");
  }
}

inline Phantom generate_phantom(const PhantomSpec& spec) {
  validate_phantom_spec(spec);
  const Dims& dims = spec.dims;
  Phantom ph{LabelVolume(dims, spec.spacing, 0), {}, FloatVolume(dims, spec.spacing, 0.0f)};
  std::vector<double> speed(static_cast<std::size_t>(dims.voxel_count()), 0.0);

  for (std::size_t seg = 0; seg < spec.segments.size(); ++seg) {
    const auto& tube = spec.segments[seg];
    const auto samples = detail::sample_tube(tube, seg, spec.stenoses);

    for (const auto& s : samples)
      for (int a = 0; a < 3; ++a)
        if (s.point[static_cast<std::size_t>(a)] < 0.0 ||
            s.point[static_cast<std::size_t>(a)] > static_cast<double>(dims[a] - 1))
          throw InvariantError("segment " + std::to_string(seg) + " (" +
                               std::string(ClassMap::name(tube.label)) + "): tube exits volume bounds");

    // Voxel is inside if within the linearly interpolated radius of a
    // segment of the axis polyline, or within the radius of a sample point.
    auto mark = [&](const Index3& c, double d2, double r) {
      if (!(r > 0.0) || d2 > r * r) return;
      const auto i = static_cast<std::size_t>(dims.linear(c[0], c[1], c[2]));
      ph.segmentation[static_cast<std::int64_t>(i)] = 1;
      speed[i] = std::max(speed[i], tube.velocity_peak * (1.0 - d2 / (r * r)));
    };

    for (std::size_t k = 0; k + 1 < samples.size(); ++k) {
      const auto& a = samples[k];
      const auto& b = samples[k + 1];
      const double reach = std::max(a.radius, b.radius);
      Index3 lo{}, hi{};
      for (std::size_t ax = 0; ax < 3; ++ax) {
        lo[ax] = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(std::min(a.point[ax], b.point[ax]) - reach)));
        hi[ax] = std::min<std::int64_t>(dims[static_cast<int>(ax)] - 1,
                                        static_cast<std::int64_t>(std::ceil(std::max(a.point[ax], b.point[ax]) + reach)));
      }
      const Vec3 ab = detail::sub(b.point, a.point);
      const double ab2 = detail::dot(ab, ab);
      for (std::int64_t z = lo[2]; z <= hi[2]; ++z)
        for (std::int64_t y = lo[1]; y <= hi[1]; ++y)
          for (std::int64_t x = lo[0]; x <= hi[0]; ++x) {
            const Index3 c{x, y, z};
            const Vec3 p{double(x), double(y), double(z)};
            const Vec3 ap = detail::sub(p, a.point);
            const double tau = ab2 > 0.0 ? std::clamp(detail::dot(ap, ab) / ab2, 0.0, 1.0) : 0.0;
            const Vec3 q = detail::add(a.point, detail::scale(ab, tau));
            const Vec3 pq = detail::sub(p, q);
            mark(c, detail::dot(pq, pq), a.radius + tau * (b.radius - a.radius));
            mark(c, detail::dot(ap, ap), a.radius);
            const Vec3 bp = detail::sub(p, b.point);
            mark(c, detail::dot(bp, bp), b.radius);
          }
    }

    // Emit the axis as one or more polylines, split where the lumen closes.
    Centerline run{tube.label, {}};
    auto flush = [&] {
      if (run.points.size() >= 2) ph.centerlines.push_back(run);
      run.points.clear();
    };
    for (const auto& s : samples) {
      if (s.radius >= kMinCenterlineRadius)
        run.points.push_back(s.point);
      else
        flush();
    }
    flush();
  }

  for (std::int64_t i = 0; i < dims.voxel_count(); ++i)
    ph.velocity[i] = static_cast<float>(speed[static_cast<std::size_t>(i)]);
  return ph;
}

/// Nine-vessel Circle-of-Willis-like layout scaled to `dims`, control points
/// jittered deterministically by `seed`. Axes: x right-to-left, y
/// anterior-to-posterior, z inferior-to-superior.
inline PhantomSpec default_cow_spec(Dims dims, std::uint64_t seed) {
  for (int a = 0; a < 3; ++a)
    if (dims[a] < 64) throw InvariantError("default phantom needs dims >= 64 on every axis");

  struct Proto {
    std::uint8_t label;
    std::vector<Vec3> frac;
    double radius;
    double peak;
  };
  // Right-side vessels; the left side mirrors x.
  const std::vector<Proto> right = {
      {2, {{0.36, 0.40, 0.12}, {0.35, 0.43, 0.30}, {0.37, 0.43, 0.45}, {0.39, 0.40, 0.55}}, 2.6, 45.0},
      {4, {{0.38, 0.41, 0.57}, {0.30, 0.42, 0.59}, {0.21, 0.45, 0.63}, {0.10, 0.48, 0.68}}, 1.9, 60.0},
      {6, {{0.41, 0.38, 0.58}, {0.45, 0.30, 0.63}, {0.46, 0.21, 0.72}, {0.46, 0.15, 0.86}}, 1.6, 45.0},
      {8, {{0.49, 0.59, 0.56}, {0.41, 0.63, 0.58}, {0.32, 0.69, 0.61}, {0.22, 0.78, 0.65}}, 1.6, 40.0},
  };
  const Proto basilar{1, {{0.50, 0.64, 0.12}, {0.50, 0.62, 0.30}, {0.50, 0.60, 0.53}}, 2.4, 40.0};

  std::vector<Proto> all{basilar};
  for (const auto& p : right) {
    all.push_back(p);
    Proto mirrored = p;
    mirrored.label = static_cast<std::uint8_t>(p.label + 1);
    for (auto& f : mirrored.frac) f[0] = 1.0 - f[0];
    all.push_back(mirrored);
  }

  PhantomSpec spec;
  spec.dims = dims;
  spec.spacing = {0.5, 0.5, 0.5};
  spec.noise_seed = seed;
  const double jitter = 1.5 * static_cast<double>(std::min({dims[0], dims[1], dims[2]})) / 96.0;
  for (std::size_t s = 0; s < all.size(); ++s) {
    TubeSpec tube;
    tube.label = all[s].label;
    tube.radii = {all[s].radius};
    tube.velocity_peak = all[s].peak;
    for (std::size_t k = 0; k < all[s].frac.size(); ++k) {
      Vec3 p{};
      for (std::size_t a = 0; a < 3; ++a) {
        const double base = all[s].frac[k][a] * static_cast<double>(dims[static_cast<int>(a)] - 1);
        const double u = counter_uniform(seed, tube.label, 3 * k + a);
        p[a] = base + jitter * (2.0 * u - 1.0);
      }
      tube.control_points.push_back(p);
    }
    spec.segments.push_back(std::move(tube));
  }
  return spec;
}

}  // namespace vlk
