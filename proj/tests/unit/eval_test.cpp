#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "divco/error.hpp"
#include "divco/eval.hpp"
#include "oracles.hpp"

namespace divco::eval {
namespace {

std::vector<Point2> points_of(const std::vector<synth::LabeledSample>& s) {
  std::vector<Point2> out;
  for (const auto& x : s) out.push_back(x.point);
  return out;
}

std::vector<synth::LabeledSample> toy_samples(std::uint64_t seed, std::size_t per_class) {
  const auto spec = synth::default_toy_spec();
  RngStream rng(seed);
  auto a = synth::sample(spec, rng, 0, per_class);
  const auto b = synth::sample(spec, rng, 1, per_class);
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

TEST(KMeans, SeparatesWellSpacedClusters) {
  RngStream rng(5);
  std::vector<Point2> pts;
  const std::vector<Point2> centers{{0, 0}, {10, 0}, {0, 10}};
  for (const auto& c : centers) {
    for (int i = 0; i < 300; ++i) pts.push_back({c[0] + 0.1 * rng.normal(), c[1] + 0.1 * rng.normal()});
  }
  const auto found = kmeans(pts, 3, rng);
  for (const auto& c : centers) {
    double best = 1e9;
    for (const auto& f : found) best = std::min(best, std::hypot(f[0] - c[0], f[1] - c[1]));
    EXPECT_LT(best, 0.05);
  }
}

TEST(KMeans, RejectsMoreClustersThanPoints) {
  RngStream rng(1);
  std::vector<Point2> pts{{0, 0}, {1, 1}};
  EXPECT_THROW(kmeans(pts, 3, rng), DomainError);
}

TEST(Jsd, ClosedForms) {
  const std::vector<double> p{0.5, 0.5, 0.0, 0.0}, q{0.0, 0.0, 0.3, 0.7};
  EXPECT_NEAR(jsd_score(p, q), std::numbers::ln2, 1e-12);
  EXPECT_EQ(jsd_score(p, p), 0.0);
}

TEST(Jsd, SymmetricAndBounded) {
  RngStream rng(8);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> p(6), q(6);
    double sp = 0, sq = 0;
    for (std::size_t i = 0; i < 6; ++i) {
      p[i] = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
      q[i] = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
      sp += p[i];
      sq += q[i];
    }
    if (sp == 0 || sq == 0) continue;
    for (auto& x : p) x /= sp;
    for (auto& x : q) x /= sq;
    const double a = jsd_score(p, q);
    EXPECT_NEAR(a, jsd_score(q, p), 1e-12);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, std::numbers::ln2 + 1e-15);
  }
}

TEST(Jsd, InvalidDistributionsThrow) {
  const std::vector<double> p{0.5, 0.5};
  EXPECT_THROW(jsd_score(p, std::vector<double>{0.2, 0.2}), DomainError);
  EXPECT_THROW(jsd_score(p, std::vector<double>{1.5, -0.5}), DomainError);
  EXPECT_THROW(jsd_score(p, std::vector<double>{1.0}), DimensionError);
}

TEST(NormalQuantile, KnownValues) {
  EXPECT_NEAR(normal_quantile(0.975), 1.959963984540054, 1e-9);
  EXPECT_NEAR(normal_quantile(0.5), 0.0, 1e-12);
  EXPECT_NEAR(normal_quantile(0.025), -1.959963984540054, 1e-9);
  EXPECT_NEAR(normal_quantile(1e-6), -4.753424308822899, 1e-8);
  EXPECT_THROW(normal_quantile(0.0), DomainError);
}

TEST(Ndb, IdenticalSamplesHaveNoDifferentBins) {
  const auto real = points_of(toy_samples(1, 2000));
  RngStream rng(2);
  const auto bins = fit_bins(real, 10, rng);
  EXPECT_EQ(ndb_score(bins, real).ndb, 0u);
}

TEST(Ndb, MatchesBruteForce) {
  RngStream rng(12);
  for (int t = 0; t < 20; ++t) {
    const auto real = points_of(toy_samples(100 + t, 500));
    auto gen = points_of(toy_samples(200 + t, 400));
    for (auto& p : gen) p[0] += 0.3 * rng.normal();
    const std::size_t k = 2 + rng.below(9);
    const auto bins = fit_bins(real, k, rng);
    EXPECT_EQ(ndb_score(bins, gen).ndb,
              testing::brute_force_ndb(bins.centroids, real, gen, kDefaultAlpha));
  }
}

TEST(Ndb, InvariantUnderBinPermutation) {
  const auto real = points_of(toy_samples(3, 1000));
  auto gen = points_of(toy_samples(4, 800));
  for (auto& p : gen) p[1] *= 1.3;
  RngStream rng(5);
  auto bins = fit_bins(real, 10, rng);
  const auto base = ndb_score(bins, gen).ndb;
  std::reverse(bins.centroids.begin(), bins.centroids.end());
  std::reverse(bins.proportions.begin(), bins.proportions.end());
  EXPECT_EQ(ndb_score(bins, gen).ndb, base);
}

TEST(Ndb, BootstrapOfRealDataStaysUnderLooseBound) {
  const auto real = points_of(toy_samples(6, 2000));
  RngStream rng(7);
  const auto bins = fit_bins(real, 10, rng);
  double total = 0;
  for (int s = 0; s < 20; ++s) {
    std::vector<Point2> boot;
    for (std::size_t i = 0; i < real.size(); ++i) boot.push_back(real[rng.below(real.size())]);
    total += static_cast<double>(ndb_score(bins, boot).ndb);
  }
  EXPECT_LE(total / 20.0, 10 * 0.05 * 3);
}

TEST(Coverage, CountsModesWithEnoughSamples) {
  const auto spec = synth::default_toy_spec();
  const auto real = toy_samples(9, 2000);
  EXPECT_EQ(mode_coverage(spec, real), (std::vector<std::size_t>{4, 4}));

  std::vector<synth::LabeledSample> collapsed;
  for (int i = 0; i < 100; ++i) collapsed.push_back({spec.classes[0][2].mean, 0, {}});
  EXPECT_EQ(mode_coverage(spec, collapsed), (std::vector<std::size_t>{1, 0}));

  collapsed.push_back({spec.classes[0][0].mean, 0, {}});
  EXPECT_EQ(mode_coverage(spec, collapsed, 0.02)[0], 1u);
  EXPECT_EQ(mode_coverage(spec, collapsed, 0.0)[0], 2u);
}

TEST(Fidelity, RealSamplesAndSwappedLabels) {
  const auto spec = synth::default_toy_spec();
  auto real = toy_samples(10, 5000);
  EXPECT_GE(class_fidelity(spec, real), 0.995);
  for (auto& s : real) s.label = 1 - s.label;
  EXPECT_LE(class_fidelity(spec, real), 0.005);
}

TEST(Fidelity, UniformOverAllModesIsAboutHalf) {
  const auto spec = synth::default_toy_spec();
  RngStream rng(11);
  std::vector<synth::LabeledSample> s;
  for (int i = 0; i < 20'000; ++i) {
    const auto c = rng.below(2);
    const auto& mode = spec.classes[c][rng.below(4)];
    s.push_back({{mode.mean[0] + 0.1 * rng.normal(), mode.mean[1] + 0.1 * rng.normal()},
                 rng.below(2), {}});
  }
  EXPECT_NEAR(class_fidelity(spec, s), 0.5, 0.02);
}

TEST(Diversity, MatchesPairwiseL1) {
  RngStream rng(13);
  std::vector<Point2> pts;
  for (int i = 0; i < 50; ++i) pts.push_back({rng.normal(), rng.normal()});
  double sum = 0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      sum += std::abs(pts[i][0] - pts[j][0]) + std::abs(pts[i][1] - pts[j][1]);
      ++pairs;
    }
  }
  EXPECT_NEAR(diversity(pts), sum / pairs, 1e-12);
  EXPECT_EQ(diversity(std::vector<Point2>(5, Point2{1, 2})), 0.0);
}

TEST(Report, ColumnsAndFormatting) {
  MetricsReport r;
  r.ndb = 3;
  r.bins = 10;
  r.jsd = 0.0123456789;
  r.modes_covered = {4, 3};
  r.class_fidelity = 0.5;
  r.diversity = {1.25, 2.0};
  EXPECT_EQ(metric_columns(2),
            (std::vector<std::string>{"ndb", "jsd", "modes_covered_c0", "modes_covered_c1",
                                      "class_fidelity", "diversity_c0", "diversity_c1"}));
  const auto v = metric_values(r);
  EXPECT_EQ(v[0], "3");
  EXPECT_EQ(v[1], "0.012346");
  EXPECT_EQ(v[2], "4");
  EXPECT_EQ(v[4], "0.5");
}

}  // namespace
}  // namespace divco::eval
