#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vlk/metrics.hpp"

using namespace vlk;

TEST(Dice, PerfectAndVacuous) {
  std::mt19937_64 rng(1);
  const auto gt = oracle::random_labels(rng, {6, 6, 6}, 10, 0.5);
  const auto p = one_hot(gt);
  for (int c = 0; c < kNumClasses; ++c) EXPECT_DOUBLE_EQ(dice_per_class(p, gt, c), 1.0);
  LabelVolume zero({2, 2, 2}, {1, 1, 1}, 0);
  EXPECT_EQ(dice_per_class(one_hot(zero), zero, 5), 1.0);
  EXPECT_EQ(dice_per_class(zero, zero, 5), 1.0);
}

TEST(Dice, HalfOverlap) {
  LabelVolume gt({20, 1, 1}, {1, 1, 1}, 0), pred = gt;
  for (int i = 0; i < 10; ++i) gt[i] = 3;
  for (int i = 5; i < 15; ++i) pred[i] = 3;
  EXPECT_DOUBLE_EQ(dice_per_class(one_hot(pred), gt, 3), 0.5);
  EXPECT_DOUBLE_EQ(dice_per_class(pred, gt, 3), 0.5);
  EXPECT_DOUBLE_EQ(dice_per_class(gt, pred, 3), 0.5);
}

TEST(Dice, Errors) {
  LabelVolume a({2, 2, 2}, {1, 1, 1}, 0), b({2, 2, 1}, {1, 1, 1}, 0);
  EXPECT_THROW(dice_per_class(a, b, 1), ShapeError);
  EXPECT_THROW(dice_per_class(one_hot(a), b, 1), ShapeError);
  EXPECT_THROW(dice_per_class(one_hot(a), a, 11), InvariantError);
}

TEST(DiceLoss, PerfectIsZero) {
  std::mt19937_64 rng(2);
  const auto gt = oracle::random_labels(rng, {5, 5, 5}, 10, 0.5);
  EXPECT_DOUBLE_EQ(dice_loss(one_hot(gt), gt), 0.0);
}

TEST(DiceLoss, UniformOnSingleClass) {
  // 2^3 volume all class 4, prediction 1/11 everywhere
  LabelVolume gt({2, 2, 2}, {1, 1, 1}, 4);
  ProbabilityMap p(gt.dims(), gt.spacing());
  for (std::int64_t i = 0; i < 8; ++i)
    for (int c = 0; c < 11; ++c) p(i, c) = 1.0f / 11.0f;
  // class 4: 2 * 8/11 / (8/11 + 8) = 2/12; others: 0 / (8/11) = 0
  const double d4 = 2.0 * (8.0 / 11.0) / (8.0 / 11.0 + 8.0);
  EXPECT_NEAR(dice_loss(p, gt), 1.0 - d4 / 11.0, 1e-7);
  EXPECT_NEAR(dice_loss(p, gt, {false, false}), 1.0 - d4 / 10.0, 1e-7);
}

TEST(DiceLoss, DisjointOneHots) {
  LabelVolume gt({4, 1, 1}, {1, 1, 1}, std::vector<std::uint8_t>{1, 1, 2, 2});
  LabelVolume pred({4, 1, 1}, {1, 1, 1}, std::vector<std::uint8_t>{2, 2, 1, 1});
  // classes 1, 2 score 0; the 9 absent classes score 1 (vacuous)
  EXPECT_NEAR(dice_loss(one_hot(pred), gt), 1.0 - 9.0 / 11.0, 1e-12);
  EXPECT_NEAR(dice_loss(one_hot(pred), gt, {true, true}), 1.0, 1e-12);
}

TEST(CrossEntropy, Values) {
  std::mt19937_64 rng(3);
  const auto gt = oracle::random_labels(rng, {4, 4, 4}, 10, 0.5);
  EXPECT_LE(cross_entropy(one_hot(gt), gt), 1e-6);
  ProbabilityMap u(gt.dims(), gt.spacing());
  for (std::int64_t i = 0; i < u.voxel_count(); ++i)
    for (int c = 0; c < 11; ++c) u(i, c) = 1.0f / 11.0f;
  EXPECT_NEAR(cross_entropy(u, gt), std::log(11.0), 1e-6);
  ProbabilityMap zero(gt.dims(), gt.spacing());
  EXPECT_NEAR(cross_entropy(zero, gt), -std::log(kLogClamp), 1e-9);
}

TEST(Schedule, AlphaValues) {
  const LossSchedule s{10, 30, 50};
  EXPECT_EQ(alpha(10, s), 0.9);
  EXPECT_EQ(alpha(30, s), 0.1);
  EXPECT_DOUBLE_EQ(alpha(20, s), 0.5);
  EXPECT_THROW(alpha(9.5, s), InvariantError);
  EXPECT_THROW(alpha(30.5, s), InvariantError);
  EXPECT_THROW(alpha(20, LossSchedule{30, 10, 50}), InvariantError);
  EXPECT_THROW(alpha(20, LossSchedule{0, 10, 50}), InvariantError);
}

TEST(Schedule, HybridRegimes) {
  const LossSchedule s{10, 30, 50};
  const double ce = 0.7, dl = 0.3;
  EXPECT_EQ(hybrid_loss(ce, dl, 0, s), ce);
  EXPECT_EQ(hybrid_loss(ce, dl, 10, s), ce);
  EXPECT_NEAR(hybrid_loss(ce, dl, 30, s), 0.1 * ce + 0.9 * dl, 1e-15);
  EXPECT_EQ(hybrid_loss(ce, dl, 31, s), 0.9 * dl + 0.1 * ce);
  EXPECT_DOUBLE_EQ(hybrid_loss(ce, dl, 20, s), 0.5 * ce + 0.5 * dl);
  EXPECT_THROW(hybrid_loss(ce, dl, 51, s), InvariantError);
  EXPECT_THROW(hybrid_loss(ce, dl, -1, s), InvariantError);
}

TEST(Schedule, HybridFromVolumes) {
  std::mt19937_64 rng(4);
  const auto gt = oracle::random_labels(rng, {4, 4, 4}, 10, 0.5);
  const auto p = one_hot(gt);
  EXPECT_NEAR(hybrid_loss(p, gt, 40, {10, 30, 50}), 0.0, 1e-6);
}

TEST(Asd, IdenticalIsZero) {
  std::mt19937_64 rng(5);
  const auto a = oracle::random_blobs(rng, {12, 12, 12}, 3);
  EXPECT_EQ(asd(a, a), 0.0);
}

TEST(Asd, ParallelSlabs) {
  LabelVolume a({10, 10, 10}, {1, 1, 1}, 0), b = a;
  for (std::int64_t y = 0; y < 10; ++y)
    for (std::int64_t z = 0; z < 10; ++z) {
      a.at(2, y, z) = 1;
      b.at(5, y, z) = 1;
    }
  EXPECT_DOUBLE_EQ(asd(a, b), 3.0);
  EXPECT_DOUBLE_EQ(asd(a, b, {0.5, 1, 1}), 1.5);
}

TEST(Asd, MatchesBruteForceAndIsSymmetric) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::int64_t> side(1, 16);
  std::uniform_real_distribution<double> sp(0.3, 2.0);
  for (int t = 0; t < 25; ++t) {
    const Dims d{side(rng), side(rng), side(rng)};
    const auto a = oracle::random_blobs(rng, d, 2);
    const auto b = oracle::random_blobs(rng, d, 2);
    const Spacing s{sp(rng), sp(rng), sp(rng)};
    EXPECT_NEAR(asd(a, b, s), oracle::asd(a, b, s), 1e-9);
    EXPECT_EQ(asd(a, b, s), asd(b, a, s));
  }
}

TEST(Asd, EmptyRegionThrows) {
  LabelVolume a({3, 3, 3}, {1, 1, 1}, 0), b = a;
  b[0] = 1;
  EXPECT_THROW(asd(a, b), EmptyInputError);
  EXPECT_THROW(asd(b, a), EmptyInputError);
}

TEST(Asd, PerClass) {
  LabelVolume a({6, 6, 6}, {1, 1, 1}, 0), b = a;
  a.at(1, 1, 1) = 2;
  b.at(1, 1, 3) = 2;
  EXPECT_DOUBLE_EQ(*asd_class(a, b, 2), 2.0);
  EXPECT_FALSE(asd_class(a, b, 3).has_value());
}

TEST(Asd, SurfaceUsesSixConnectivity) {
  LabelVolume cube({5, 5, 5}, {1, 1, 1}, 0);
  for (std::int64_t z = 1; z < 4; ++z)
    for (std::int64_t y = 1; y < 4; ++y)
      for (std::int64_t x = 1; x < 4; ++x) cube.at(x, y, z) = 1;
  EXPECT_EQ(surface_voxels(cube).size(), 26u);
  EXPECT_EQ(surface_voxels(LabelVolume({3, 3, 3}, {1, 1, 1}, 1)).size(), 26u);
}
