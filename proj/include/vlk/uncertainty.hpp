#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vlk/error.hpp"
#include "vlk/parallel.hpp"
#include "vlk/prediction.hpp"
#include "vlk/predictor.hpp"
#include "vlk/transforms.hpp"
#include "vlk/volume.hpp"

namespace vlk {

enum class InversionMode { standard, coordinate_guided };

inline std::string to_string(InversionMode m) {
  return m == InversionMode::standard ? "standard" : "coordinate-guided";
}

/// K hard-label predictions mapped back onto the original grid.
struct PredictionStack {
  std::vector<LabelVolume> layers;
  std::vector<RigidTransform> transforms;
  InversionMode mode = InversionMode::coordinate_guided;

  void validate() const {
    if (layers.size() < 2) throw InvariantError("prediction stack needs K >= 2 layers");
    for (const auto& l : layers) require_same_grid(layers.front().dims(), l.dims(), "prediction stack");
  }

  friend bool operator==(const PredictionStack&, const PredictionStack&) = default;
};

struct TtaOptions {
  std::uint32_t k = 7;
  std::uint64_t seed = 0;
  InversionMode mode = InversionMode::coordinate_guided;
  int search_radius = 2;
  /// Overrides sample_tta_transform when set (e.g. to force identities).
  std::function<RigidTransform(std::uint64_t seed, std::uint32_t index)> sampler;
};

/// Augment, predict, harden and invert K times. Layers are independent and
/// computed concurrently; a predictor failure aborts the run naming its index.
inline PredictionStack run_tta(const LabelVolume& seg, const Predictor& predictor, const TtaOptions& opt) {
  if (opt.k < 2) throw InvariantError("TTA needs K >= 2");
  require_binary(seg, "segmentation");
  PredictionStack stack;
  stack.mode = opt.mode;
  stack.layers.resize(opt.k);
  stack.transforms.resize(opt.k);
  for (std::uint32_t i = 0; i < opt.k; ++i)
    stack.transforms[i] = opt.sampler ? opt.sampler(opt.seed, i) : sample_tta_transform(opt.seed, i);

  parallel_for(0, opt.k, [&](std::int64_t li) {
    const auto i = static_cast<std::uint32_t>(li);
    const RigidTransform& t = stack.transforms[i];
    try {
      const LabelVolume augmented = apply_forward(seg, t);
      const LabelVolume hard = argmax(predictor.predict(augmented, PredictContext{t, i}));
      stack.layers[i] = opt.mode == InversionMode::standard
                            ? invert_standard(hard, t)
                            : invert_coordinate_guided(hard, t, seg, opt.search_radius);
    } catch (const PredictorError& e) {
      throw PredictorError("TTA transform " + std::to_string(i) + ": " + e.what(), e.diagnostics());
    } catch (const ProtocolError& e) {
      throw ProtocolError("TTA transform " + std::to_string(i) + ": " + e.what());
    }
  });
  return stack;
}

struct ConsensusResult {
  LabelVolume labels;
  /// sqrt(1 - sum_c f_c^2); kept in double, serialized as float32.
  RealVolume uncertainty;
};

/// Per-voxel modal class (ties to the smaller id) and the root of the summed
/// per-class one-hot variances across the K layers.
inline ConsensusResult consensus_and_uncertainty(const PredictionStack& stack) {
  stack.validate();
  const auto& first = stack.layers.front();
  const Dims& dims = first.dims();
  ConsensusResult r{LabelVolume(dims, first.spacing(), 0), RealVolume(dims, first.spacing(), 0.0)};
  const double k = static_cast<double>(stack.layers.size());

  parallel_for(0, dims.nz(), [&](std::int64_t z) {
    const std::int64_t begin = dims.linear(0, 0, z);
    const std::int64_t end = begin + dims.nx() * dims.ny();
    for (std::int64_t i = begin; i < end; ++i) {
      std::array<int, 256> votes{};
      for (const auto& layer : stack.layers) ++votes[layer[i]];
      int mode = 0;
      double sum_sq = 0.0;
      for (int c = 0; c < 256; ++c) {
        if (votes[static_cast<std::size_t>(c)] == 0) continue;
        if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(mode)]) mode = c;
        const double f = votes[static_cast<std::size_t>(c)] / k;
        sum_sq += f * f;
      }
      r.labels[i] = static_cast<std::uint8_t>(mode);
      r.uncertainty[i] = std::sqrt(std::max(0.0, 1.0 - sum_sq));
    }
  });
  return r;
}

}  // namespace vlk
