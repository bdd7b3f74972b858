#include <gtest/gtest.h>

#include <cmath>

#include "divco/error.hpp"
#include "divco/synthdata.hpp"

namespace divco::synth {
namespace {

TEST(ToySpec, IsValidWithFourModesPerClass) {
  const auto spec = default_toy_spec();
  EXPECT_NO_THROW(spec.validate());
  ASSERT_EQ(spec.num_classes(), 2u);
  EXPECT_EQ(spec.classes[0].size(), 4u);
  EXPECT_EQ(spec.classes[1].size(), 4u);
  EXPECT_EQ(spec.total_modes(), 8u);
}

TEST(Sampling, ModeFrequenciesFollowWeights) {
  GmmSpec spec;
  spec.classes = {{{{0.0, 0.0}, 0.1, 0.25}, {{5.0, 0.0}, 0.1, 0.75}}};
  RngStream rng(3);
  const auto s = sample(spec, rng, 0, 40'000);
  std::size_t second = 0;
  for (const auto& p : s) {
    EXPECT_EQ(p.label, 0u);
    ASSERT_TRUE(p.mode.has_value());
    if (*p.mode == 1) ++second;
  }
  // Binomial standard error is about 0.002.
  EXPECT_NEAR(static_cast<double>(second) / s.size(), 0.75, 0.01);
}

TEST(Sampling, PointsScatterAroundTheirMode) {
  const auto spec = default_toy_spec();
  RngStream rng(4);
  double sq = 0.0;
  const auto s = sample(spec, rng, 1, 20'000);
  for (const auto& p : s) {
    const auto& m = spec.classes[1][*p.mode].mean;
    sq += std::pow(p.point[0] - m[0], 2) + std::pow(p.point[1] - m[1], 2);
  }
  EXPECT_NEAR(std::sqrt(sq / (2.0 * s.size())), 0.1, 0.003);
}

TEST(Sampling, DeterministicForASeed) {
  const auto spec = default_toy_spec();
  RngStream a(9), b(9);
  const auto x = sample(spec, a, 0, 100);
  const auto y = sample(spec, b, 0, 100);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(x[i].point, y[i].point);
}

TEST(Sampling, RejectsUnknownLabel) {
  RngStream rng(1);
  EXPECT_THROW(sample(default_toy_spec(), rng, 2, 1), DomainError);
}

TEST(Assignment, NearestModeAndSupport) {
  const auto spec = default_toy_spec();
  const auto& m = spec.classes[0][1].mean;
  const auto a = assign_mode(spec, {m[0] + 0.2, m[1]}, 0);
  EXPECT_EQ(a.mode, 1u);
  EXPECT_TRUE(a.in_support);
  EXPECT_NEAR(a.distance, 0.2, 1e-12);
  const auto far = assign_mode(spec, {m[0] + 0.31, m[1]}, 0);
  EXPECT_FALSE(far.in_support);
}

TEST(Assignment, TiesGoToLowestModeId) {
  GmmSpec spec;
  spec.classes = {{{{-1.0, 0.0}, 0.1, 0.5}, {{1.0, 0.0}, 0.1, 0.5}}};
  EXPECT_EQ(assign_mode(spec, {0.0, 3.0}, 0).mode, 0u);
}

TEST(Validation, InvalidSpecsThrow) {
  GmmSpec bad;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad.classes = {{{{0.0, 0.0}, 0.1, 0.5}}};
  EXPECT_THROW(bad.validate(), ConfigError);  // weights sum to 0.5
  bad.classes = {{{{0.0, 0.0}, 0.0, 1.0}}};
  EXPECT_THROW(bad.validate(), ConfigError);  // σ = 0
  bad.classes = {{{{0.0, 0.0}, 0.1, 0.5}, {{0.5, 0.0}, 0.1, 0.5}}};
  EXPECT_THROW(bad.validate(), ConfigError);  // means closer than 6σ
  bad.classes = {{{{0.0, 0.0}, 0.1, 0.5}, {{0.61, 0.0}, 0.1, 0.5}}};
  EXPECT_NO_THROW(bad.validate());
}

}  // namespace
}  // namespace divco::synth
