#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vlk/error.hpp"

namespace vlk {

using Vec3 = std::array<double, 3>;
using Index3 = std::array<std::int64_t, 3>;
/// Millimeters per voxel along x, y, z.
using Spacing = std::array<double, 3>;

/// Grid extent (nx, ny, nz).
struct Dims {
  std::array<std::int64_t, 3> n{0, 0, 0};

  constexpr Dims() = default;
  constexpr Dims(std::int64_t nx, std::int64_t ny, std::int64_t nz) : n{nx, ny, nz} {}

  constexpr std::int64_t operator[](int axis) const { return n[static_cast<std::size_t>(axis)]; }
  constexpr std::int64_t& operator[](int axis) { return n[static_cast<std::size_t>(axis)]; }
  constexpr std::int64_t nx() const { return n[0]; }
  constexpr std::int64_t ny() const { return n[1]; }
  constexpr std::int64_t nz() const { return n[2]; }
  constexpr std::int64_t voxel_count() const { return n[0] * n[1] * n[2]; }
  constexpr bool positive() const { return n[0] > 0 && n[1] > 0 && n[2] > 0; }

  constexpr bool contains(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < n[0] && y < n[1] && z < n[2];
  }
  constexpr bool contains(const Index3& p) const { return contains(p[0], p[1], p[2]); }

  /// x-fastest linearization: x + nx*(y + ny*z).
  constexpr std::int64_t linear(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return x + n[0] * (y + n[1] * z);
  }
  constexpr Index3 unlinear(std::int64_t i) const {
    return {i % n[0], (i / n[0]) % n[1], i / (n[0] * n[1])};
  }

  friend constexpr bool operator==(const Dims&, const Dims&) = default;
};

inline std::string to_string(const Dims& d) {
  return std::to_string(d[0]) + "x" + std::to_string(d[1]) + "x" + std::to_string(d[2]);
}

/// Round half away from zero; the one rounding rule used everywhere.
inline std::int64_t round_half_away(double v) { return static_cast<std::int64_t>(std::llround(v)); }

// Class enumeration for the nine Circle-of-Willis segments plus background and
// the non-annotated remainder.
inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kFirstVessel = 1;
inline constexpr std::uint8_t kLastVessel = 9;
inline constexpr std::uint8_t kNonAnnotated = 10;
inline constexpr int kNumClasses = 11;

struct ClassMap {
  static constexpr std::array<std::string_view, kNumClasses> names{
      "background", "BA", "RICA", "LICA", "RMCA", "LMCA", "RACA", "LACA", "RPCA", "LPCA",
      "non-annotated"};

  static constexpr std::string_view name(int id) {
    return (id >= 0 && id < kNumClasses) ? names[static_cast<std::size_t>(id)]
                                         : std::string_view{};
  }
  static constexpr std::optional<int> id(std::string_view name) {
    for (int c = 0; c < kNumClasses; ++c)
      if (names[static_cast<std::size_t>(c)] == name) return c;
    return std::nullopt;
  }
  static constexpr bool is_vessel(int id) { return id >= kFirstVessel && id <= kLastVessel; }
};

/// Dense 3D grid with physical spacing, x-fastest storage.
template <typename T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;

  Volume(Dims dims, Spacing spacing, T fill = T{})
      : dims_(dims), spacing_(spacing) {
    validate_geometry();
    data_.assign(static_cast<std::size_t>(dims.voxel_count()), fill);
  }

  Volume(Dims dims, Spacing spacing, std::vector<T> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    validate_geometry();
    if (static_cast<std::int64_t>(data_.size()) != dims_.voxel_count())
      throw InvariantError("volume data length " + std::to_string(data_.size()) +
                           " does not match dims " + to_string(dims_));
  }

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  T& at(std::int64_t x, std::int64_t y, std::int64_t z) { return (*this)[dims_.linear(x, y, z)]; }
  const T& at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return (*this)[dims_.linear(x, y, z)];
  }
  T& at(const Index3& p) { return at(p[0], p[1], p[2]); }
  const T& at(const Index3& p) const { return at(p[0], p[1], p[2]); }

  /// Value at p, or `outside` when p is off the grid.
  T get_or(const Index3& p, T outside = T{}) const {
    return dims_.contains(p) ? at(p) : outside;
  }

  std::int64_t count_nonzero() const {
    std::int64_t c = 0;
    for (const T& v : data_) c += (v != T{});
    return c;
  }

  bool same_grid(const Volume& o) const { return dims_ == o.dims_; }

  friend bool operator==(const Volume& a, const Volume& b) {
    return a.dims_ == b.dims_ && a.spacing_ == b.spacing_ && a.data_ == b.data_;
  }

 private:
  void validate_geometry() const {
    if (!dims_.positive()) throw InvariantError("volume dims must be positive, got " + to_string(dims_));
    for (double s : spacing_)
      if (!(s > 0.0) || !std::isfinite(s)) throw InvariantError("volume spacing must be strictly positive");
  }

  Dims dims_{};
  Spacing spacing_{1.0, 1.0, 1.0};
  std::vector<T> data_;
};

using LabelVolume = Volume<std::uint8_t>;
using FloatVolume = Volume<float>;
using RealVolume = Volume<double>;

template <typename To, typename From>
Volume<To> volume_cast(const Volume<From>& v) {
  std::vector<To> out(v.data().begin(), v.data().end());
  return Volume<To>(v.dims(), v.spacing(), std::move(out));
}

inline void require_same_grid(const Dims& a, const Dims& b, std::string_view what) {
  if (!(a == b))
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

/// Throws unless every voxel is 0 or 1.
inline void require_binary(const LabelVolume& v, std::string_view what) {
  for (auto x : v.data())
    if (x > 1) throw InvariantError(std::string(what) + " must be binary {0,1}");
}

/// Throws unless every voxel is a valid class id.
inline void require_labels(const LabelVolume& v, std::string_view what) {
  for (auto x : v.data())
    if (x >= kNumClasses) throw InvariantError(std::string(what) + " contains class id >= 11");
}

/// 1 where v equals `label`, else 0.
inline LabelVolume class_mask(const LabelVolume& v, std::uint8_t label) {
  LabelVolume out(v.dims(), v.spacing(), 0);
  for (std::int64_t i = 0; i < v.size(); ++i) out[i] = v[i] == label ? 1 : 0;
  return out;
}

/// 1 where v is nonzero, else 0.
inline LabelVolume binarize(const LabelVolume& v) {
  LabelVolume out(v.dims(), v.spacing(), 0);
  for (std::int64_t i = 0; i < v.size(); ++i) out[i] = v[i] != 0 ? 1 : 0;
  return out;
}

}  // namespace vlk
