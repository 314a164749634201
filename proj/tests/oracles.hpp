#pragma once

// Slow, obviously-correct reference implementations used to check the
// library. Nothing here calls into the code under test beyond the Volume
// container itself.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "vlk/centerline.hpp"
#include "vlk/volume.hpp"

namespace oracle {

using vlk::Dims;
using vlk::Index3;
using vlk::LabelVolume;
using vlk::Spacing;
using vlk::Vec3;

/// O(V * P) nearest-centerline labeling.
inline LabelVolume labels(const LabelVolume& seg, const vlk::CenterlineSet& centerlines, int neighborhood = 7) {
  const double half = (neighborhood - 1) / 2.0 + 0.5;
  LabelVolume out(seg.dims(), seg.spacing(), 0);
  const Dims& d = seg.dims();
  for (std::int64_t z = 0; z < d.nz(); ++z)
    for (std::int64_t y = 0; y < d.ny(); ++y)
      for (std::int64_t x = 0; x < d.nx(); ++x) {
        if (!seg.at(x, y, z)) continue;
        double best = std::numeric_limits<double>::infinity();
        std::uint8_t label = 10;
        for (const auto& c : centerlines)
          for (const auto& p : c.points) {
            const double dx = p[0] - double(x), dy = p[1] - double(y), dz = p[2] - double(z);
            if (std::abs(dx) > half || std::abs(dy) > half || std::abs(dz) > half) continue;
            const double d2 = dx * dx + dy * dy + dz * dz;
            if (d2 < best || (d2 == best && c.label < label)) {
              best = d2;
              label = c.label;
            }
          }
        out.at(x, y, z) = label;
      }
  return out;
}

inline std::vector<Index3> surface(const LabelVolume& v) {
  std::vector<Index3> s;
  const Dims& d = v.dims();
  auto inside = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    return x >= 0 && y >= 0 && z >= 0 && x < d.nx() && y < d.ny() && z < d.nz() && v.at(x, y, z) != 0;
  };
  for (std::int64_t z = 0; z < d.nz(); ++z)
    for (std::int64_t y = 0; y < d.ny(); ++y)
      for (std::int64_t x = 0; x < d.nx(); ++x)
        if (inside(x, y, z) && (!inside(x - 1, y, z) || !inside(x + 1, y, z) || !inside(x, y - 1, z) ||
                                !inside(x, y + 1, z) || !inside(x, y, z - 1) || !inside(x, y, z + 1)))
          s.push_back({x, y, z});
  return s;
}

/// O(|Sa| * |Sb|) symmetric average surface distance.
inline double asd(const LabelVolume& a, const LabelVolume& b, const Spacing& sp) {
  const auto sa = surface(a), sb = surface(b);
  auto nearest = [&](const Index3& p, const std::vector<Index3>& set) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : set) {
      const double dx = double(p[0] - q[0]) * sp[0], dy = double(p[1] - q[1]) * sp[1], dz = double(p[2] - q[2]) * sp[2];
      best = std::min(best, dx * dx + dy * dy + dz * dz);
    }
    return std::sqrt(best);
  };
  double sum = 0.0;
  for (const auto& p : sa) sum += nearest(p, sb);
  for (const auto& p : sb) sum += nearest(p, sa);
  return sum / double(sa.size() + sb.size());
}

/// Two-sided exact signed-rank p by recursive enumeration of sign patterns.
inline double wilcoxon_exact_p(const std::vector<double>& diffs) {
  std::vector<double> nz;
  for (double d : diffs)
    if (d != 0.0) nz.push_back(d);
  if (nz.empty()) return 1.0;
  // doubled midranks: 2 * (#smaller) + (#equal) + 1
  std::vector<long> r2(nz.size());
  long total = 0, plus = 0;
  for (std::size_t i = 0; i < nz.size(); ++i) {
    long smaller = 0, equal = 0;
    for (double o : nz) {
      if (std::abs(o) < std::abs(nz[i])) ++smaller;
      if (std::abs(o) == std::abs(nz[i])) ++equal;
    }
    r2[i] = 2 * smaller + equal + 1;
    total += r2[i];
    if (nz[i] > 0) plus += r2[i];
  }
  const long observed = std::min(plus, total - plus);
  long hits = 0, count = 0;
  auto rec = [&](auto&& self, std::size_t i, long s) -> void {
    if (i == r2.size()) {
      ++count;
      if (std::min(s, total - s) <= observed) ++hits;
      return;
    }
    self(self, i + 1, s);
    self(self, i + 1, s + r2[i]);
  };
  rec(rec, 0, 0);
  return double(hits) / double(count);
}

/// Per-block 2x2x2 mode, ties to the smaller label.
inline LabelVolume downsample_mode(const LabelVolume& v) {
  const Dims& d = v.dims();
  const Dims h{(d.nx() + 1) / 2, (d.ny() + 1) / 2, (d.nz() + 1) / 2};
  LabelVolume out(h, {2 * v.spacing()[0], 2 * v.spacing()[1], 2 * v.spacing()[2]}, 0);
  for (std::int64_t z = 0; z < h.nz(); ++z)
    for (std::int64_t y = 0; y < h.ny(); ++y)
      for (std::int64_t x = 0; x < h.nx(); ++x) {
        std::map<int, int> votes;
        for (int k = 0; k < 8; ++k) {
          const std::int64_t sx = 2 * x + (k & 1), sy = 2 * y + ((k >> 1) & 1), sz = 2 * z + ((k >> 2) & 1);
          if (sx < d.nx() && sy < d.ny() && sz < d.nz()) ++votes[v.at(sx, sy, sz)];
        }
        int best = -1, label = 0;
        for (auto [l, n] : votes)  // ascending label order
          if (n > best) {
            best = n;
            label = l;
          }
        out.at(x, y, z) = static_cast<std::uint8_t>(label);
      }
  return out;
}

/// Labels of a volume after rotating every voxel center by 90 degrees about z
/// through the volume center and rasterizing to the nearest voxel.
inline LabelVolume rotate90z(const LabelVolume& v) {
  const Dims& d = v.dims();
  LabelVolume out(d, v.spacing(), 0);
  const double cx = (d.nx() - 1) / 2.0, cy = (d.ny() - 1) / 2.0;
  for (std::int64_t z = 0; z < d.nz(); ++z)
    for (std::int64_t y = 0; y < d.ny(); ++y)
      for (std::int64_t x = 0; x < d.nx(); ++x) {
        if (!v.at(x, y, z)) continue;
        const double rx = cx - (double(y) - cy), ry = cy + (double(x) - cx);
        const auto ix = std::llround(rx), iy = std::llround(ry);
        if (ix >= 0 && iy >= 0 && ix < d.nx() && iy < d.ny()) out.at(ix, iy, z) = v.at(x, y, z);
      }
  return out;
}

// -- random inputs ------------------------------------------------------------

inline LabelVolume random_labels(std::mt19937_64& rng, const Dims& d, int max_label, double fill) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> lab(1, max_label);
  LabelVolume v(d, {1, 1, 1}, 0);
  for (std::int64_t i = 0; i < v.size(); ++i)
    if (u(rng) < fill) v[i] = static_cast<std::uint8_t>(lab(rng));
  return v;
}

/// Union of a few random axis-aligned boxes and balls.
inline LabelVolume random_blobs(std::mt19937_64& rng, const Dims& d, int count) {
  LabelVolume v(d, {1, 1, 1}, 0);
  for (int k = 0; k < count; ++k) {
    std::array<double, 3> c{};
    for (int a = 0; a < 3; ++a) c[std::size_t(a)] = std::uniform_real_distribution<double>(0, double(d[a] - 1))(rng);
    const double r = std::uniform_real_distribution<double>(0.8, 0.3 * double(std::min({d[0], d[1], d[2]})) + 1.0)(rng);
    const bool box = rng() & 1;
    for (std::int64_t z = 0; z < d.nz(); ++z)
      for (std::int64_t y = 0; y < d.ny(); ++y)
        for (std::int64_t x = 0; x < d.nx(); ++x) {
          const double dx = double(x) - c[0], dy = double(y) - c[1], dz = double(z) - c[2];
          const bool in = box ? (std::abs(dx) <= r && std::abs(dy) <= r * 0.6 && std::abs(dz) <= r * 0.8)
                              : dx * dx + dy * dy + dz * dz <= r * r;
          if (in) v.at(x, y, z) = 1;
        }
  }
  if (v.count_nonzero() == 0) v.at(d.nx() / 2, d.ny() / 2, d.nz() / 2) = 1;
  return v;
}

/// Scratch directory removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("vlk-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace oracle
