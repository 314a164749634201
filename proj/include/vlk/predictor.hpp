#pragma once

// Voxel classifiers behind one interface: the exact geometric oracle, a
// corrupted oracle for driving uncertainty, and an external process that
// exchanges volumes through files.
//
// Plugin protocol: the command template must contain `{in}` and `{out}`.
// `{in}` is replaced by a volume path (files `{in}.json` + `{in}.raw`, uint8
// binary mask). The process must write one float32 volume per class at
// `{out}.c0` ... `{out}.c10`, same dims as the input, and exit with status 0.

#include <sys/wait.h>

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include "vlk/centerline.hpp"
#include "vlk/error.hpp"
#include "vlk/labeling.hpp"
#include "vlk/prediction.hpp"
#include "vlk/rng.hpp"
#include "vlk/transforms.hpp"
#include "vlk/volume.hpp"
#include "vlk/volume_io.hpp"

namespace vlk {

/// What a predictor may know about its input besides the voxels.
struct PredictContext {
  /// Augmentation applied to the original segmentation, if any.
  std::optional<RigidTransform> augmentation;
  /// Position of this call within a TTA run.
  std::uint32_t index = 0;
};

class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual ProbabilityMap predict(const LabelVolume& seg, const PredictContext& ctx) const = 0;
  virtual std::string name() const = 0;
};

inline ProbabilityMap oracle_predict(const LabelVolume& seg, const CenterlineSet& centerlines) {
  return one_hot(assign_voxel_labels(seg, centerlines));
}

/// Hard labels of the oracle with each foreground voxel independently
/// resampled uniformly over classes 1..10 with probability flip_rate.
inline LabelVolume noisy_oracle_labels(const LabelVolume& seg, const CenterlineSet& centerlines, double flip_rate,
                                       std::uint64_t seed) {
  if (!(flip_rate >= 0.0 && flip_rate < 1.0)) throw InvariantError("flip_rate must lie in [0, 1)");
  LabelVolume labels = assign_voxel_labels(seg, centerlines);
  for (std::int64_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 0) continue;
    const auto key = static_cast<std::uint64_t>(i);
    if (counter_uniform(seed, key, 0) < flip_rate) {
      const auto c = static_cast<int>(counter_uniform(seed, key, 1) * 10.0);
      labels[i] = static_cast<std::uint8_t>(1 + std::min(c, 9));
    }
  }
  return labels;
}

inline ProbabilityMap noisy_oracle_predict(const LabelVolume& seg, const CenterlineSet& centerlines,
                                           double flip_rate, std::uint64_t seed) {
  return one_hot(noisy_oracle_labels(seg, centerlines, flip_rate, seed));
}

/// Centerlines moved into the augmented frame.
inline CenterlineSet transform_centerlines(const CenterlineSet& set, const RigidTransform& t, const Dims& dims) {
  const AffineMap fwd = t.forward_map(dims);
  CenterlineSet out = set;
  for (auto& c : out)
    for (auto& p : c.points) p = fwd(p);
  return out;
}

/// Labels an (augmented) segmentation with the centerlines carried into the
/// same frame, i.e. what a perfect labeling network would output.
class OraclePredictor : public Predictor {
 public:
  explicit OraclePredictor(CenterlineSet centerlines) : centerlines_(std::move(centerlines)) {}

  ProbabilityMap predict(const LabelVolume& seg, const PredictContext& ctx) const override {
    if (!ctx.augmentation) return oracle_predict(seg, centerlines_);
    return oracle_predict(seg, transform_centerlines(centerlines_, *ctx.augmentation, seg.dims()));
  }
  std::string name() const override { return "oracle"; }

 private:
  CenterlineSet centerlines_;
};

/// Oracle with label noise; each TTA call draws fresh noise from (seed, index).
class NoisyOraclePredictor : public Predictor {
 public:
  NoisyOraclePredictor(CenterlineSet centerlines, double flip_rate, std::uint64_t seed)
      : centerlines_(std::move(centerlines)), flip_rate_(flip_rate), seed_(seed) {
    if (!(flip_rate >= 0.0 && flip_rate < 1.0)) throw InvariantError("flip_rate must lie in [0, 1)");
  }

  ProbabilityMap predict(const LabelVolume& seg, const PredictContext& ctx) const override {
    const auto seed = counter_hash(seed_, ctx.index, 0x6E6F697379ULL);
    const CenterlineSet cl =
        ctx.augmentation ? transform_centerlines(centerlines_, *ctx.augmentation, seg.dims()) : centerlines_;
    return noisy_oracle_predict(seg, cl, flip_rate_, seed);
  }
  std::string name() const override { return "noisy-oracle"; }

 private:
  CenterlineSet centerlines_;
  double flip_rate_;
  std::uint64_t seed_;
};

/// Normalization deviation above which a warning is recorded.
inline constexpr double kProtocolNormTolerance = 1e-3;

struct SubprocessResult {
  ProbabilityMap probabilities;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

inline std::string replace_all(std::string s, const std::string& from, const std::string& to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
  return s;
}

inline std::filesystem::path make_scratch_dir() {
  static std::atomic<std::uint64_t> counter{0};
  const auto base = std::filesystem::temp_directory_path();
  for (;;) {
    auto dir = base / ("vlk-predict-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    if (std::filesystem::create_directory(dir)) return dir;
  }
}

}  // namespace detail

/// Reads the C per-class channels written at `<out>.c<k>`.
inline SubprocessResult read_channels(const std::string& out, const Dims& dims, int classes = kNumClasses) {
  SubprocessResult r;
  for (int k = 0; k < classes; ++k) {
    const std::string path = out + ".c" + std::to_string(k);
    if (!std::filesystem::exists(header_path(path)) || !std::filesystem::exists(raw_path(path)))
      throw ProtocolError("predictor output missing channel " + std::to_string(k) + ": " + path);
    FloatVolume ch;
    try {
      ch = read_volume<float>(path);
    } catch (const IoError& e) {
      throw ProtocolError(std::string("predictor output invalid: ") + e.what());
    }
    if (!(ch.dims() == dims))
      throw ProtocolError("predictor channel " + std::to_string(k) + " has dims " + to_string(ch.dims()) +
                          ", expected " + to_string(dims));
    if (k == 0) r.probabilities = ProbabilityMap(dims, ch.spacing(), classes);
    for (std::int64_t i = 0; i < ch.size(); ++i) r.probabilities(i, k) = ch[i];
  }

  double err = 0.0;
  try {
    err = max_normalization_error(r.probabilities);
  } catch (const InvariantError& e) {
    throw ProtocolError(std::string("predictor output invalid: ") + e.what());
  }
  if (err > kProtocolNormTolerance)
    r.warnings.push_back("probabilities off by up to " + std::to_string(err) + "; renormalized");
  if (err > 1e-5) {
    try {
      renormalize(r.probabilities);
    } catch (const InvariantError& e) {
      throw ProtocolError(std::string("predictor output invalid: ") + e.what());
    }
  }
  return r;
}

/// Writes `seg` for the external command, runs it, and collects its channels.
/// Each call uses a fresh scratch directory, so concurrent calls are safe.
inline SubprocessResult subprocess_predict(const LabelVolume& seg, const std::string& command_template) {
  if (command_template.find("{in}") == std::string::npos || command_template.find("{out}") == std::string::npos)
    throw InvariantError("predictor command must contain {in} and {out}");

  const auto dir = detail::make_scratch_dir();
  struct Cleanup {
    std::filesystem::path dir;
    ~Cleanup() {
      std::error_code ec;
      std::filesystem::remove_all(dir, ec);
    }
  } cleanup{dir};

  const std::string in = (dir / "in").string();
  const std::string out = (dir / "out").string();
  write_volume(seg, in);

  std::string cmd = detail::replace_all(command_template, "{in}", detail::shell_quote(in));
  cmd = detail::replace_all(cmd, "{out}", detail::shell_quote(out));
  cmd += " 2>&1";

  std::string diagnostics;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw PredictorError("cannot start predictor command", cmd);
  char buf[4096];
  std::size_t n = 0;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) diagnostics.append(buf, n);
  const int status = ::pclose(pipe);
  if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    const int code = (status != -1 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
    throw PredictorError("external predictor failed with exit status " + std::to_string(code), diagnostics);
  }
  return read_channels(out, seg.dims());
}

class SubprocessPredictor : public Predictor {
 public:
  explicit SubprocessPredictor(std::string command_template) : command_(std::move(command_template)) {
    if (command_.find("{in}") == std::string::npos || command_.find("{out}") == std::string::npos)
      throw InvariantError("predictor command must contain {in} and {out}");
  }

  ProbabilityMap predict(const LabelVolume& seg, const PredictContext& ctx) const override {
    auto r = subprocess_predict(seg, command_);
    if (!r.warnings.empty()) {
      std::lock_guard<std::mutex> lock(*mutex_);
      for (auto& w : r.warnings) warnings_.push_back("call " + std::to_string(ctx.index) + ": " + w);
    }
    return std::move(r.probabilities);
  }
  std::string name() const override { return "subprocess"; }

  std::vector<std::string> warnings() const {
    std::lock_guard<std::mutex> lock(*mutex_);
    return warnings_;
  }

 private:
  std::string command_;
  std::unique_ptr<std::mutex> mutex_ = std::make_unique<std::mutex>();
  mutable std::vector<std::string> warnings_;
};

}  // namespace vlk
