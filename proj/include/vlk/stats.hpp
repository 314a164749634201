#pragma once

// Velocity agreement analysis: label downsampling to flow resolution,
// region means, Bland-Altman limits and the Wilcoxon signed-rank test.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "vlk/error.hpp"
#include "vlk/volume.hpp"

namespace vlk {

inline Dims half_dims(const Dims& d) { return {(d[0] + 1) / 2, (d[1] + 1) / 2, (d[2] + 1) / 2}; }

inline Spacing doubled(const Spacing& s) { return {2.0 * s[0], 2.0 * s[1], 2.0 * s[2]}; }

/// Factor-2 downsampling by the modal label of each 2x2x2 block (ties to the
/// smaller id); partial blocks at odd edges use the voxels they have.
inline LabelVolume downsample2_labels(const LabelVolume& labels) {
  const Dims& d = labels.dims();
  const Dims h = half_dims(d);
  LabelVolume out(h, doubled(labels.spacing()), 0);
  for (std::int64_t z = 0; z < h.nz(); ++z)
    for (std::int64_t y = 0; y < h.ny(); ++y)
      for (std::int64_t x = 0; x < h.nx(); ++x) {
        std::array<int, 256> votes{};
        for (std::int64_t k = 0; k < 2; ++k)
          for (std::int64_t j = 0; j < 2; ++j)
            for (std::int64_t i = 0; i < 2; ++i) {
              const Index3 p{2 * x + i, 2 * y + j, 2 * z + k};
              if (d.contains(p)) ++votes[labels.at(p)];
            }
        int mode = 0;
        for (int c = 1; c < 256; ++c)
          if (votes[static_cast<std::size_t>(c)] > votes[static_cast<std::size_t>(mode)]) mode = c;
        out.at(x, y, z) = static_cast<std::uint8_t>(mode);
      }
  return out;
}

/// Factor-2 downsampling of a scalar field by block averaging.
inline FloatVolume downsample2_mean(const FloatVolume& field) {
  const Dims& d = field.dims();
  const Dims h = half_dims(d);
  FloatVolume out(h, doubled(field.spacing()), 0.0f);
  for (std::int64_t z = 0; z < h.nz(); ++z)
    for (std::int64_t y = 0; y < h.ny(); ++y)
      for (std::int64_t x = 0; x < h.nx(); ++x) {
        double sum = 0.0;
        int n = 0;
        for (std::int64_t k = 0; k < 2; ++k)
          for (std::int64_t j = 0; j < 2; ++j)
            for (std::int64_t i = 0; i < 2; ++i) {
              const Index3 p{2 * x + i, 2 * y + j, 2 * z + k};
              if (!d.contains(p)) continue;
              sum += field.at(p);
              ++n;
            }
        out.at(x, y, z) = static_cast<float>(sum / n);
      }
  return out;
}

/// Mean of `field` over voxels labeled c.
inline double region_mean(const FloatVolume& field, const LabelVolume& labels, std::uint8_t c) {
  require_same_grid(field.dims(), labels.dims(), "region_mean");
  double sum = 0.0;
  std::int64_t n = 0;
  for (std::int64_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != c) continue;
    sum += field[i];
    ++n;
  }
  if (n == 0) throw EmptyInputError("region_mean: class " + std::to_string(int(c)) + " has no voxels");
  return sum / static_cast<double>(n);
}

struct MeasurementPair {
  double manual = 0.0;
  double automatic = 0.0;
};

struct AgreementReport {
  std::size_t n = 0;
  /// Differences are auto - manual, or 100 * (auto - manual) / pair mean.
  bool percent = false;
  double bias = 0.0;
  double sd = 0.0;
  double loa_low = 0.0;
  double loa_high = 0.0;
  double loa_width = 0.0;
  double mean_abs_diff = 0.0;
  double wilcoxon_p = 1.0;
};

inline constexpr double kLoaMultiplier = 1.96;

/// Per-pair differences in the units selected by `percent`.
inline std::vector<double> pair_differences(const std::vector<MeasurementPair>& pairs, bool percent) {
  std::vector<double> d;
  d.reserve(pairs.size());
  for (const auto& p : pairs) {
    const double diff = p.automatic - p.manual;
    if (!percent) {
      d.push_back(diff);
      continue;
    }
    const double mean = 0.5 * (p.automatic + p.manual);
    if (mean == 0.0) throw InvariantError("bland_altman: percent mode with a zero pair mean");
    d.push_back(100.0 * diff / mean);
  }
  return d;
}

/// Bias and 95% limits of agreement (sample SD, n-1 denominator). The
/// Wilcoxon p is left at 1; see agreement_report.
inline AgreementReport bland_altman(const std::vector<MeasurementPair>& pairs, bool percent = false) {
  if (pairs.size() < 2) throw InvariantError("bland_altman needs at least 2 pairs");
  const auto d = pair_differences(pairs, percent);
  const double n = static_cast<double>(d.size());
  AgreementReport r;
  r.n = d.size();
  r.percent = percent;
  r.bias = std::accumulate(d.begin(), d.end(), 0.0) / n;
  double ss = 0.0, abs_sum = 0.0;
  for (double x : d) {
    ss += (x - r.bias) * (x - r.bias);
    abs_sum += std::abs(x);
  }
  r.sd = std::sqrt(ss / (n - 1.0));
  r.loa_low = r.bias - kLoaMultiplier * r.sd;
  r.loa_high = r.bias + kLoaMultiplier * r.sd;
  r.loa_width = r.loa_high - r.loa_low;
  r.mean_abs_diff = abs_sum / n;
  return r;
}

// -- Wilcoxon signed-rank --------------------------------------------------------

inline constexpr std::size_t kWilcoxonExactMaxN = 12;

struct SignedRanks {
  /// Twice the average rank of each nonzero |d|, so ties stay integral.
  std::vector<std::int64_t> doubled_rank;
  std::vector<bool> positive;
  /// Sizes of tie groups among |d|.
  std::vector<std::int64_t> tie_groups;
};

inline SignedRanks signed_ranks(const std::vector<double>& diffs) {
  std::vector<double> nz;
  for (double d : diffs)
    if (d != 0.0) nz.push_back(d);
  std::vector<std::size_t> order(nz.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(nz[a]) < std::abs(nz[b]); });

  SignedRanks r;
  r.doubled_rank.resize(nz.size());
  r.positive.resize(nz.size());
  for (std::size_t i = 0; i < nz.size(); ++i) r.positive[i] = nz[i] > 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && std::abs(nz[order[j + 1]]) == std::abs(nz[order[i]])) ++j;
    // ranks i+1 .. j+1 share their average (i+j+2)/2; doubled that is i+j+2
    for (std::size_t k = i; k <= j; ++k) r.doubled_rank[order[k]] = static_cast<std::int64_t>(i + j + 2);
    r.tie_groups.push_back(static_cast<std::int64_t>(j - i + 1));
    i = j + 1;
  }
  return r;
}

struct WilcoxonResult {
  std::size_t n = 0;  // nonzero differences
  double w_plus = 0.0;
  double w_minus = 0.0;
  double statistic = 0.0;  // min(W+, W-)
  double p = 1.0;
  bool exact = true;
};

/// Two-sided p from the normal approximation with tie correction and
/// continuity correction.
inline double wilcoxon_normal_p(const SignedRanks& r, double statistic) {
  const double n = static_cast<double>(r.doubled_rank.size());
  const double mean = n * (n + 1.0) / 4.0;
  double tie = 0.0;
  for (auto t : r.tie_groups) tie += static_cast<double>(t * t * t - t);
  const double var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie / 48.0;
  if (!(var > 0.0)) return 1.0;
  const double z = std::max(0.0, (std::abs(statistic - mean) - 0.5) / std::sqrt(var));
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

/// Two-sided Wilcoxon signed-rank test on auto - manual differences. Exact
/// for n <= 12 nonzero differences (all 2^n sign assignments), otherwise the
/// tie-corrected normal approximation. All-zero differences give p = 1.
inline WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& diffs, bool force_normal = false) {
  if (diffs.empty()) throw EmptyInputError("wilcoxon: no pairs");
  const SignedRanks r = signed_ranks(diffs);
  WilcoxonResult res;
  res.n = r.doubled_rank.size();
  if (res.n == 0) return res;

  std::int64_t plus2 = 0, total2 = 0;
  for (std::size_t i = 0; i < res.n; ++i) {
    total2 += r.doubled_rank[i];
    if (r.positive[i]) plus2 += r.doubled_rank[i];
  }
  const std::int64_t stat2 = std::min(plus2, total2 - plus2);
  res.w_plus = plus2 / 2.0;
  res.w_minus = (total2 - plus2) / 2.0;
  res.statistic = stat2 / 2.0;

  if (res.n > kWilcoxonExactMaxN || force_normal) {
    res.exact = false;
    res.p = wilcoxon_normal_p(r, res.statistic);
    return res;
  }

  const std::uint32_t patterns = 1u << res.n;
  std::uint64_t extreme = 0;
  for (std::uint32_t mask = 0; mask < patterns; ++mask) {
    std::int64_t s = 0;
    for (std::size_t i = 0; i < res.n; ++i)
      if (mask & (1u << i)) s += r.doubled_rank[i];
    if (std::min(s, total2 - s) <= stat2) ++extreme;
  }
  res.p = static_cast<double>(extreme) / static_cast<double>(patterns);
  return res;
}

inline WilcoxonResult wilcoxon_signed_rank(const std::vector<MeasurementPair>& pairs) {
  return wilcoxon_signed_rank(pair_differences(pairs, false));
}

/// Bland-Altman report with the Wilcoxon p filled in.
inline AgreementReport agreement_report(const std::vector<MeasurementPair>& pairs, bool percent = false) {
  AgreementReport r = bland_altman(pairs, percent);
  r.wilcoxon_p = wilcoxon_signed_rank(pairs).p;
  return r;
}

}  // namespace vlk
