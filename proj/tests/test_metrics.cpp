#include <gtest/gtest.h>

#include <numbers>

#include "latreg/error.hpp"
#include "latreg/metrics.hpp"
#include "test_util.hpp"

using namespace latreg;

namespace {
constexpr double kPi = std::numbers::pi;
constexpr double deg = kPi / 180.0;

std::vector<Rotation> random_rotations(int n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Rotation> out;
  for (int i = 0; i < n; ++i) out.push_back(sample_uniform_rotation(rng));
  return out;
}
}  // namespace

TEST(PairwiseRre, PerfectEstimatesGiveZeros) {
  const auto truth = random_rotations(6, 71);
  const auto errors = pairwise_rre(truth, truth);
  EXPECT_EQ(errors.size(), 15);
  // arccos is sqrt-sensitive at its boundary; zero errors resolve to ~1e-8
  for (const auto& e : errors.entries) EXPECT_NEAR(e.theta, 0.0, 1e-6);
}

TEST(PairwiseRre, GaugeInvariant) {
  const auto truth = random_rotations(5, 72);
  Rng rng(73);
  const Rotation gauge = sample_uniform_rotation(rng);
  // a common extra rotation on every estimate changes nothing
  std::vector<Rotation> est;
  for (const auto& r : truth) est.push_back(gauge * r);
  for (const auto& e : pairwise_rre(est, truth).entries) EXPECT_NEAR(e.theta, 0.0, 1e-6);

  std::vector<Rotation> est2 = random_rotations(5, 74);
  std::vector<Rotation> est2_gauged;
  for (const auto& r : est2) est2_gauged.push_back(gauge * r);
  const auto a = pairwise_rre(est2, truth);
  const auto b = pairwise_rre(est2_gauged, truth);
  for (int i = 0; i < a.size(); ++i) EXPECT_NEAR(a.entries[i].theta, b.entries[i].theta, 1e-9);
}

TEST(PairwiseRre, SingleOffEstimateTouchesItsPairsOnly) {
  const auto truth = random_rotations(4, 75);
  std::vector<Rotation> est = truth;
  const Rotation off = rotation_from_axis_angle({{0, 0, 1}, 20.0 * deg});
  est[2] = off * est[2];
  const auto errors = pairwise_rre(est, truth);
  for (const auto& e : errors.entries) {
    if (e.i == 2 || e.j == 2) {
      EXPECT_NEAR(e.theta, 20.0 * deg, 1e-9);
    } else {
      EXPECT_NEAR(e.theta, 0.0, 1e-9);
    }
  }
}

TEST(PairwiseRre, LengthMismatchRejected) {
  EXPECT_THROW(pairwise_rre(random_rotations(3, 76), random_rotations(4, 77)), Error);
}

TEST(RegistrationRecall, AllZeroErrorsGiveOne) {
  const auto truth = random_rotations(5, 78);
  const auto errors = pairwise_rre(truth, truth);
  EXPECT_DOUBLE_EQ(registration_recall(errors, 10.0 * deg), 1.0);
}

TEST(RegistrationRecall, AllMaxErrorsGiveZero) {
  PairwiseErrors errors;
  errors.entries = {{0, 1, kPi}, {0, 2, kPi}, {1, 2, kPi}};
  EXPECT_DOUBLE_EQ(registration_recall(errors, 10.0 * deg), 0.0);
}

TEST(RegistrationRecall, MixedThreshold) {
  PairwiseErrors errors;
  errors.entries = {{0, 1, 5.0 * deg}, {0, 2, 15.0 * deg}, {1, 2, 9.0 * deg}};
  EXPECT_NEAR(registration_recall(errors, 10.0 * deg), 2.0 / 3.0, 1e-15);
}

TEST(RegistrationRecall, StrictlyBelowAtBoundary) {
  PairwiseErrors errors;
  errors.entries = {{0, 1, 10.0 * deg}};
  EXPECT_DOUBLE_EQ(registration_recall(errors, 10.0 * deg), 0.0);
}

TEST(RegistrationRecall, MonotoneInThreshold) {
  Rng rng(79);
  const auto truth = random_rotations(8, 80);
  const auto est = random_rotations(8, 81);
  const auto errors = pairwise_rre(est, truth);
  double prev = 0.0;
  for (double t = 1.0; t <= 180.0; t += 1.0) {
    const double r = registration_recall(errors, t * deg);
    EXPECT_GE(r, prev);
    prev = r;
  }
  EXPECT_DOUBLE_EQ(prev, 1.0);
}

TEST(RecallCdf, SingleErrorJumpsAtItsValue) {
  PairwiseErrors errors;
  errors.entries = {{0, 1, 30.0 * deg}};
  const auto cdf = recall_cdf(errors);
  ASSERT_EQ(cdf.size(), 1u);
  EXPECT_DOUBLE_EQ(cdf[0].first, 30.0 * deg);
  EXPECT_DOUBLE_EQ(cdf[0].second, 1.0);
}

TEST(RecallCdf, ReachesOneAtPi) {
  const auto errors = pairwise_rre(random_rotations(6, 82), random_rotations(6, 83));
  const auto cdf = recall_cdf(errors);
  EXPECT_DOUBLE_EQ(cdf.back().second, 1.0);
  for (size_t i = 1; i < cdf.size(); ++i) {
    EXPECT_GT(cdf[i].first, cdf[i - 1].first);
    EXPECT_GT(cdf[i].second, cdf[i - 1].second);
  }
}

TEST(RecallCdf, ConsistentWithRecallAtRandomThresholds) {
  Rng rng(84);
  const auto errors = pairwise_rre(random_rotations(7, 85), random_rotations(7, 86));
  const auto cdf = recall_cdf(errors);
  for (int rep = 0; rep < 20; ++rep) {
    const double t = rng.uniform(0.0, kPi);
    // CDF value just below t (left-continuity; recall uses strict <)
    double from_cdf = 0.0;
    for (const auto& [theta, fraction] : cdf) {
      if (theta < t) from_cdf = fraction;
    }
    EXPECT_DOUBLE_EQ(registration_recall(errors, t), from_cdf);
  }
}
