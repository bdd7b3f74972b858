#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "divco/rng.hpp"

namespace divco::latent {

inline constexpr std::size_t kDefaultMaxRetries = 10'000;

// A query code with one positive and N negatives.
//
// The neighbourhood of the query is the axis-aligned box of half-width R
// (the ∞-norm ball): positives are drawn uniformly inside it, negatives are
// prior draws whose every coordinate differs from the query by more than R.
// Requiring *all* coordinates to clear R is stricter than lying outside the box.
struct LatentBatch {
  std::vector<double> query;
  std::vector<double> positive;
  std::vector<std::vector<double>> negatives;
  double radius = 0.0;

  // Throws DomainError describing the first violated invariant.
  void validate() const;
};

std::vector<double> sample_prior(RngStream& rng, std::size_t dim);

// z + δ with δ_j ~ U[-R, R] independently. R = 0 returns z unchanged.
std::vector<double> sample_positive(RngStream& rng, std::span<const double> z, double radius);

// N prior draws, each rejection-sampled until min_j |z⁻_j - z_j| > R. Each
// negative gets at most max_retries attempts; running out throws DomainError
// with the observed acceptance rate.
std::vector<std::vector<double>> sample_negatives(RngStream& rng, std::span<const double> z,
                                                  double radius, std::size_t count,
                                                  std::size_t max_retries = kDefaultMaxRetries);

LatentBatch make_batch(RngStream& rng, std::size_t dim, double radius, std::size_t count,
                       std::size_t max_retries = kDefaultMaxRetries);

}  // namespace divco::latent
