#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vlk/labeling.hpp"
#include "vlk/phantom.hpp"
#include "vlk/transforms.hpp"

using namespace vlk;

namespace {

struct CowFixture {
  Phantom ph;
  LabelVolume labels;
  CowFixture() : ph(generate_phantom(default_cow_spec({64, 64, 64}, 3))) {
    labels = assign_voxel_labels(ph.segmentation, ph.centerlines);
  }
};

const CowFixture& cow() {
  static const CowFixture f;
  return f;
}

}  // namespace

TEST(TtaSampling, DeterministicAndInRange) {
  EXPECT_EQ(sample_tta_transform(9, 4), sample_tta_transform(9, 4));
  EXPECT_NE(sample_tta_transform(9, 4), sample_tta_transform(9, 5));
  EXPECT_NE(sample_tta_transform(9, 4), sample_tta_transform(10, 4));
  for (std::uint32_t i = 0; i < 10000; ++i) ASSERT_TRUE(sample_tta_transform(1, i).within_tta_range());
}

TEST(TtaSampling, MeansNearZero) {
  const int n = 10000;
  std::array<double, 6> sum{};
  for (int i = 0; i < n; ++i) {
    const auto t = sample_tta_transform(77, static_cast<std::uint32_t>(i));
    for (std::size_t a = 0; a < 3; ++a) {
      sum[a] += t.euler_deg[a];
      sum[3 + a] += t.translation_vox[a];
    }
  }
  for (std::size_t j = 0; j < 6; ++j) {
    const double half = j < 3 ? 18.0 : 5.0;
    const double se = half / std::sqrt(3.0) / std::sqrt(double(n));
    EXPECT_LT(std::abs(sum[j] / n), 3 * se) << j;
  }
}

TEST(Transforms, RotationIsOrthonormal) {
  const auto r = RigidTransform{{10, -7, 15}, {0, 0, 0}}.rotation();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double d = 0;
      for (int k = 0; k < 3; ++k) d += r[std::size_t(i)][std::size_t(k)] * r[std::size_t(j)][std::size_t(k)];
      EXPECT_NEAR(d, i == j ? 1.0 : 0.0, 1e-12);
    }
}

TEST(Transforms, IdentityIsBitExact) {
  const auto& f = cow();
  EXPECT_EQ(apply_forward(f.labels, RigidTransform::identity()), f.labels);
  EXPECT_EQ(invert_standard(f.labels, RigidTransform::identity()), f.labels);
  LabelVolume masked = f.labels;
  EXPECT_EQ(invert_coordinate_guided(f.labels, RigidTransform::identity(), f.ph.segmentation), masked);
}

TEST(Transforms, IntegerTranslationShifts) {
  LabelVolume v({8, 8, 8}, {1, 1, 1}, 0);
  v.at(3, 4, 5) = 7;
  const auto moved = apply_forward(v, {{0, 0, 0}, {1, 0, 0}});
  EXPECT_EQ(moved.at(4, 4, 5), 7);
  EXPECT_EQ(moved.count_nonzero(), 1);
}

TEST(Transforms, IntegerTranslationRoundTripExact) {
  const auto& f = cow();
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> d(-5, 5);
  for (int t = 0; t < 10; ++t) {
    const Index3 s{d(rng), d(rng), d(rng)};
    const RigidTransform tr{{0, 0, 0}, {double(s[0]), double(s[1]), double(s[2])}};
    // voxels pushed off the grid are lost; everything else comes back unchanged
    LabelVolume want = f.labels;
    const Dims& g = want.dims();
    for (std::int64_t z = 0; z < g.nz(); ++z)
      for (std::int64_t y = 0; y < g.ny(); ++y)
        for (std::int64_t x = 0; x < g.nx(); ++x)
          if (!g.contains({x + s[0], y + s[1], z + s[2]})) want.at(x, y, z) = 0;
    EXPECT_EQ(invert_standard(apply_forward(f.labels, tr), tr), want);
  }
}

TEST(Transforms, QuarterTurnMatchesRasterizedRotation) {
  LabelVolume bar({21, 21, 5}, {1, 1, 1}, 0);
  for (std::int64_t x = 2; x < 19; ++x)
    for (std::int64_t y = 9; y < 12; ++y) bar.at(x, y, 2) = 1;
  const auto got = apply_forward(bar, {{0, 0, 90}, {0, 0, 0}});
  const auto want = oracle::rotate90z(bar);
  std::int64_t diff = 0;
  for (std::int64_t i = 0; i < bar.size(); ++i) diff += got[i] != want[i];
  EXPECT_LT(double(diff), 0.02 * double(bar.count_nonzero()));
  EXPECT_EQ(got.at(10, 3, 2), 1);  // bar now runs along y
}

TEST(Transforms, CoordinateGuidedSupportEqualsMask) {
  const auto& f = cow();
  for (std::uint32_t i = 0; i < 5; ++i) {
    const auto t = sample_tta_transform(21, i);
    const auto back = invert_coordinate_guided(apply_forward(f.labels, t), t, f.ph.segmentation);
    for (std::int64_t v = 0; v < back.size(); ++v) ASSERT_EQ(back[v] != 0, f.ph.segmentation[v] != 0);
  }
}

TEST(Transforms, CoordinateGuidedFallbacks) {
  LabelVolume seg({7, 7, 7}, {1, 1, 1}, 0);
  seg.at(3, 3, 3) = 1;
  seg.at(0, 0, 0) = 1;
  LabelVolume pred({7, 7, 7}, {1, 1, 1}, 0);
  pred.at(4, 3, 3) = 5;  // distance 1 from (3,3,3)
  pred.at(3, 2, 2) = 6;  // distance sqrt(2)
  const auto out = invert_coordinate_guided(pred, RigidTransform::identity(), seg);
  EXPECT_EQ(out.at(3, 3, 3), 5);
  EXPECT_EQ(out.at(0, 0, 0), kNonAnnotated);  // nothing within radius 2

  LabelVolume tie({7, 7, 7}, {1, 1, 1}, 0);
  tie.at(4, 3, 3) = 5;
  tie.at(2, 3, 3) = 8;  // same distance, smaller linear index
  EXPECT_EQ(invert_coordinate_guided(tie, RigidTransform::identity(), seg).at(3, 3, 3), 8);

  const LabelVolume empty({7, 7, 7}, {1, 1, 1}, 0);
  const auto none = invert_coordinate_guided(empty, {{5, 5, 5}, {1, 1, 1}}, seg);
  EXPECT_EQ(none.at(3, 3, 3), kNonAnnotated);
  EXPECT_EQ(none.at(0, 0, 0), kNonAnnotated);
}

TEST(Transforms, CoordinateGuidedBeatsStandard) {
  const auto& f = cow();
  const auto cmp = compare_inversions(f.labels, f.ph.segmentation, 20, 5);
  int better = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    better += cmp.coordinate_guided[i] < cmp.standard[i];
    EXPECT_LT(cmp.coordinate_guided[i], 0.005);
  }
  EXPECT_GE(better, 19);
}

TEST(Transforms, MisassignedFraction) {
  LabelVolume a({4, 1, 1}, {1, 1, 1}, std::vector<std::uint8_t>{0, 1, 2, 3});
  LabelVolume b({4, 1, 1}, {1, 1, 1}, std::vector<std::uint8_t>{5, 1, 0, 3});
  EXPECT_DOUBLE_EQ(misassigned_fraction(a, b), 1.0 / 3.0);
  EXPECT_THROW(misassigned_fraction(LabelVolume({2, 1, 1}, {1, 1, 1}, 0), LabelVolume({2, 1, 1}, {1, 1, 1}, 0)),
               EmptyInputError);
  EXPECT_THROW(misassigned_fraction(a, LabelVolume({2, 2, 1}, {1, 1, 1}, 0)), ShapeError);
}
