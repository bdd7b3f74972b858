#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "divco/error.hpp"
#include "divco/latent.hpp"

namespace divco::latent {
namespace {

TEST(Latent, PriorHasRequestedDimension) {
  RngStream r(1);
  EXPECT_EQ(sample_prior(r, 5).size(), 5u);
  EXPECT_THROW(sample_prior(r, 0), DomainError);
}

TEST(Latent, PositivesStayInsideTheBox) {
  RngStream r(2);
  for (double radius : {1e-4, 1e-3, 1e-2, 0.5}) {
    for (int i = 0; i < 2000; ++i) {
      const auto z = sample_prior(r, 3);
      const auto p = sample_positive(r, z, radius);
      for (std::size_t j = 0; j < z.size(); ++j) ASSERT_LE(std::fabs(p[j] - z[j]), radius);
    }
  }
}

TEST(Latent, ZeroRadiusPositiveIsTheQuery) {
  RngStream r(3);
  const auto z = sample_prior(r, 4);
  EXPECT_EQ(sample_positive(r, z, 0.0), z);
}

TEST(Latent, NegativesClearTheBoxInEveryCoordinate) {
  RngStream r(4);
  for (int i = 0; i < 500; ++i) {
    const auto z = sample_prior(r, 2);
    for (const auto& n : sample_negatives(r, z, 0.3, 10)) {
      for (std::size_t j = 0; j < z.size(); ++j) ASSERT_GT(std::fabs(n[j] - z[j]), 0.3);
    }
  }
}

TEST(Latent, ExhaustedRetriesReportAcceptanceRate) {
  RngStream r(5);
  const std::vector<double> z{0.0, 0.0};
  try {
    sample_negatives(r, z, 50.0, 1, 100);
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("acceptance"), std::string::npos) << e.what();
  }
}

TEST(Latent, InvalidArgumentsRejected) {
  RngStream r(6);
  const std::vector<double> z{0.1};
  EXPECT_THROW(sample_positive(r, z, -1.0), DomainError);
  EXPECT_THROW(sample_negatives(r, z, 0.1, 0), DomainError);
  EXPECT_THROW(sample_positive(r, z, std::nan("")), DomainError);
}

TEST(Latent, BatchValidates) {
  RngStream r(7);
  const LatentBatch b = make_batch(r, 2, 0.01, 10);
  EXPECT_EQ(b.negatives.size(), 10u);
  EXPECT_NO_THROW(b.validate());

  LatentBatch bad = b;
  bad.positive[0] = bad.query[0] + 0.02;
  EXPECT_THROW(bad.validate(), DomainError);
  bad = b;
  bad.negatives[3][1] = bad.query[1] + 0.005;
  EXPECT_THROW(bad.validate(), DomainError);
}

TEST(Latent, SameSeedSameBatch) {
  RngStream a(8), b(8);
  const auto x = make_batch(a, 2, 0.01, 10);
  const auto y = make_batch(b, 2, 0.01, 10);
  EXPECT_EQ(x.query, y.query);
  EXPECT_EQ(x.positive, y.positive);
  EXPECT_EQ(x.negatives, y.negatives);
}

}  // namespace
}  // namespace divco::latent
