#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "vlk/labeling.hpp"
#include "vlk/phantom.hpp"
#include "vlk/stats.hpp"

using namespace vlk;

TEST(Downsample, ConstantAndTie) {
  LabelVolume c({6, 4, 2}, {0.5, 0.5, 0.5}, 7);
  const auto h = downsample2_labels(c);
  EXPECT_EQ(h.dims(), (Dims{3, 2, 1}));
  EXPECT_EQ(h.spacing(), (Spacing{1, 1, 1}));
  for (auto v : h.data()) EXPECT_EQ(v, 7);

  LabelVolume tie({2, 2, 2}, {1, 1, 1}, std::vector<std::uint8_t>{0, 0, 0, 0, 3, 3, 3, 3});
  EXPECT_EQ(downsample2_labels(tie)[0], 0);
}

TEST(Downsample, MatchesBlockModeOracle) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    std::uniform_int_distribution<std::int64_t> side(1, 9);
    const auto v = oracle::random_labels(rng, {side(rng), side(rng), side(rng)}, 4, 0.6);
    EXPECT_EQ(downsample2_labels(v), oracle::downsample_mode(v));
  }
  const auto v8 = oracle::random_labels(rng, {8, 8, 8}, 10, 0.8);
  EXPECT_EQ(downsample2_labels(v8), oracle::downsample_mode(v8));
}

TEST(Downsample, MeanField) {
  FloatVolume f({3, 2, 2}, {1, 1, 1}, std::vector<float>{1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
  const auto h = downsample2_mean(f);
  EXPECT_EQ(h.dims(), (Dims{2, 1, 1}));
  EXPECT_FLOAT_EQ(h[0], (1 + 2 + 4 + 5 + 7 + 8 + 10 + 11) / 8.0f);
  EXPECT_FLOAT_EQ(h[1], (3 + 6 + 9 + 12) / 4.0f);
}

TEST(RegionMean, Basics) {
  FloatVolume f({4, 1, 1}, {1, 1, 1}, std::vector<float>{2, 4, 7, 7});
  LabelVolume l({4, 1, 1}, {1, 1, 1}, std::vector<std::uint8_t>{1, 1, 2, 0});
  EXPECT_DOUBLE_EQ(region_mean(f, l, 1), 3.0);
  EXPECT_DOUBLE_EQ(region_mean(f, l, 2), 7.0);
  EXPECT_THROW(region_mean(f, l, 5), EmptyInputError);
  EXPECT_THROW(region_mean(f, LabelVolume({2, 2, 1}, {1, 1, 1}, 1), 1), ShapeError);
}

TEST(RegionMean, PoiseuilleHalfPeak) {
  const auto ph = generate_phantom(fixtures::straight_tube({40, 41, 41}, 1, 12.0));
  LabelVolume core = ph.segmentation;
  for (std::int64_t z = 0; z < 41; ++z)
    for (std::int64_t y = 0; y < 41; ++y)
      for (std::int64_t x = 0; x < 40; ++x)
        if (x < 5 || x > 34) core.at(x, y, z) = 0;  // away from the rounded caps
  EXPECT_NEAR(region_mean(ph.velocity, core, 1), 25.0, 0.05 * 25.0);
}

TEST(BlandAltman, Examples) {
  const std::vector<MeasurementPair> same{{1, 1}, {2, 2}, {3, 3}};
  const auto r0 = bland_altman(same);
  EXPECT_EQ(r0.bias, 0.0);
  EXPECT_EQ(r0.loa_width, 0.0);

  const auto r = bland_altman({{5, 4}, {5, 6}});
  EXPECT_DOUBLE_EQ(r.bias, 0.0);
  EXPECT_DOUBLE_EQ(r.sd, std::sqrt(2.0));
  EXPECT_NEAR(r.loa_high, 2.7719, 1e-4);
  EXPECT_NEAR(r.loa_low, -2.7719, 1e-4);
  EXPECT_NEAR(r.loa_width, 5.5437, 1e-4);
  EXPECT_DOUBLE_EQ(r.mean_abs_diff, 1.0);
}

TEST(BlandAltman, PercentAndErrors) {
  const auto r = bland_altman({{9, 11}, {10, 10}}, true);
  EXPECT_DOUBLE_EQ(r.bias, 10.0);
  EXPECT_THROW(bland_altman({{1, 2}}), InvariantError);
  EXPECT_THROW(bland_altman({{1, -1}, {2, 2}}, true), InvariantError);
}

TEST(BlandAltman, AntiSymmetric) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(50, 10);
  std::vector<MeasurementPair> p, q;
  for (int i = 0; i < 30; ++i) {
    p.push_back({n(rng), n(rng)});
    q.push_back({p.back().automatic, p.back().manual});
  }
  const auto a = bland_altman(p), b = bland_altman(q);
  EXPECT_NEAR(a.bias, -b.bias, 1e-12);
  EXPECT_NEAR(a.loa_low, -b.loa_high, 1e-12);
  EXPECT_NEAR(a.loa_high, -b.loa_low, 1e-12);
  EXPECT_LE(a.loa_low, a.bias);
  EXPECT_LE(a.bias, a.loa_high);
}

TEST(Wilcoxon, AllPositiveFive) {
  const auto r = wilcoxon_signed_rank(std::vector<double>{1, 2, 3, 4, 5});
  EXPECT_EQ(r.p, 0.0625);
  EXPECT_TRUE(r.exact);
  EXPECT_EQ(r.w_plus, 15.0);
  EXPECT_EQ(r.statistic, 0.0);
}

TEST(Wilcoxon, ZerosAndEmpty) {
  EXPECT_EQ(wilcoxon_signed_rank(std::vector<double>{0, 0, 0}).p, 1.0);
  EXPECT_THROW(wilcoxon_signed_rank(std::vector<double>{}), EmptyInputError);
  const auto r = wilcoxon_signed_rank(std::vector<double>{0, 1, -1, 0});
  EXPECT_EQ(r.n, 2u);
  EXPECT_EQ(r.p, 1.0);
}

TEST(Wilcoxon, TiesUseMidranks) {
  const auto r = wilcoxon_signed_rank(std::vector<double>{1, 1, -2, 3});
  EXPECT_EQ(r.w_plus, 1.5 + 1.5 + 4);
  EXPECT_EQ(r.w_minus, 3.0);
}

TEST(Wilcoxon, ExactMatchesRecursiveOracle) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 100; ++t) {
    const int n = std::uniform_int_distribution<int>(1, 12)(rng);
    std::vector<double> d;
    for (int i = 0; i < n; ++i) d.push_back(double(std::uniform_int_distribution<int>(-6, 6)(rng)));
    if (std::all_of(d.begin(), d.end(), [](double x) { return x == 0; })) d[0] = 1;
    EXPECT_NEAR(wilcoxon_signed_rank(d).p, oracle::wilcoxon_exact_p(d), 1e-12);
  }
}

TEST(Wilcoxon, ScaleInvariant) {
  const std::vector<double> d{0.3, -1.2, 2.5, 0.7, -0.1, 1.9, 3.3};
  std::vector<double> s;
  for (double x : d) s.push_back(x * 17.0);
  EXPECT_EQ(wilcoxon_signed_rank(d).p, wilcoxon_signed_rank(s).p);
}

TEST(Wilcoxon, NormalApproximationSane) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.3, 1.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> d;
    for (int i = 0; i < 12; ++i) d.push_back(n(rng));
    const double exact = wilcoxon_signed_rank(d).p, approx = wilcoxon_signed_rank(d, true).p;
    EXPECT_NEAR(exact, approx, 0.05);
  }
  std::vector<double> big;
  for (int i = 0; i < 35; ++i) big.push_back(n(rng));
  const auto r = wilcoxon_signed_rank(big);
  EXPECT_FALSE(r.exact);
  EXPECT_GT(r.p, 0.0);
  EXPECT_LE(r.p, 1.0);
}

TEST(Agreement, ReportFillsP) {
  const auto r = agreement_report({{1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 6}});
  EXPECT_EQ(r.wilcoxon_p, 0.0625);
  EXPECT_EQ(r.n, 5u);
}
