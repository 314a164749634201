#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vlk/error.hpp"
#include "vlk/volume.hpp"

namespace vlk {

/// Per-voxel class probabilities, voxel-major: data[voxel * classes + c].
class ProbabilityMap {
 public:
  ProbabilityMap() = default;

  ProbabilityMap(Dims dims, Spacing spacing, int classes = kNumClasses)
      : dims_(dims), spacing_(spacing), classes_(classes) {
    if (!dims.positive()) throw InvariantError("probability map dims must be positive");
    if (classes < 1) throw InvariantError("probability map needs at least one class");
    data_.assign(static_cast<std::size_t>(dims.voxel_count() * classes), 0.0f);
  }

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  int classes() const { return classes_; }
  std::int64_t voxel_count() const { return dims_.voxel_count(); }

  float& operator()(std::int64_t voxel, int c) { return data_[index(voxel, c)]; }
  float operator()(std::int64_t voxel, int c) const { return data_[index(voxel, c)]; }

  const std::vector<float>& storage() const { return data_; }

  friend bool operator==(const ProbabilityMap&, const ProbabilityMap&) = default;

 private:
  std::size_t index(std::int64_t voxel, int c) const {
    return static_cast<std::size_t>(voxel * classes_ + c);
  }

  Dims dims_{};
  Spacing spacing_{1.0, 1.0, 1.0};
  int classes_ = kNumClasses;
  std::vector<float> data_;
};

/// One-hot encoding of a label volume.
inline ProbabilityMap one_hot(const LabelVolume& labels, int classes = kNumClasses) {
  ProbabilityMap p(labels.dims(), labels.spacing(), classes);
  for (std::int64_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) throw InvariantError("label exceeds class count in one-hot encoding");
    p(i, labels[i]) = 1.0f;
  }
  return p;
}

/// Hard labels; ties go to the smaller class id.
inline LabelVolume argmax(const ProbabilityMap& p) {
  LabelVolume out(p.dims(), p.spacing(), 0);
  for (std::int64_t i = 0; i < p.voxel_count(); ++i) {
    int best = 0;
    for (int c = 1; c < p.classes(); ++c)
      if (p(i, c) > p(i, best)) best = c;
    out[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

/// Largest |sum - 1| over voxels; throws on negative or non-finite entries.
inline double max_normalization_error(const ProbabilityMap& p) {
  double worst = 0.0;
  for (std::int64_t i = 0; i < p.voxel_count(); ++i) {
    double s = 0.0;
    for (int c = 0; c < p.classes(); ++c) {
      const float v = p(i, c);
      if (!std::isfinite(v) || v < 0.0f) throw InvariantError("probabilities must be finite and nonnegative");
      s += v;
    }
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

/// Rescales each voxel to sum to one. Throws if a voxel sums to zero.
inline void renormalize(ProbabilityMap& p) {
  for (std::int64_t i = 0; i < p.voxel_count(); ++i) {
    double s = 0.0;
    for (int c = 0; c < p.classes(); ++c) s += p(i, c);
    if (!(s > 0.0)) throw InvariantError("cannot renormalize a voxel with zero total probability");
    for (int c = 0; c < p.classes(); ++c) p(i, c) = static_cast<float>(p(i, c) / s);
  }
}

}  // namespace vlk
