#include "divco/latent.hpp"

#include <cmath>

#include <fmt/format.h>

#include "divco/error.hpp"

namespace divco::latent {
namespace {

void check_radius(double radius) {
  if (!(radius >= 0.0) || !std::isfinite(radius)) {
    throw DomainError(fmt::format("latent radius must be finite and >= 0, got {}", radius));
  }
}

bool clears_radius(std::span<const double> candidate, std::span<const double> z, double radius) {
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (!(std::fabs(candidate[j] - z[j]) > radius)) return false;
  }
  return true;
}

}  // namespace

void LatentBatch::validate() const {
  const std::size_t d = query.size();
  if (d == 0) throw DomainError("latent batch: empty query");
  if (negatives.empty()) throw DomainError("latent batch: needs at least one negative");
  if (positive.size() != d) throw DomainError("latent batch: positive has wrong dimension");
  for (std::size_t j = 0; j < d; ++j) {
    if (!(std::fabs(positive[j] - query[j]) <= radius)) {
      throw DomainError(fmt::format("latent batch: positive coordinate {} is {} from the query (R = {})",
                                    j, std::fabs(positive[j] - query[j]), radius));
    }
  }
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    if (negatives[i].size() != d) throw DomainError("latent batch: negative has wrong dimension");
    for (std::size_t j = 0; j < d; ++j) {
      if (!(std::fabs(negatives[i][j] - query[j]) > radius)) {
        throw DomainError(fmt::format("latent batch: negative {} coordinate {} is within R = {} of the query",
                                      i, j, radius));
      }
    }
  }
}

std::vector<double> sample_prior(RngStream& rng, std::size_t dim) {
  if (dim == 0) throw DomainError("sample_prior: latent dimension must be >= 1");
  std::vector<double> z(dim);
  for (double& v : z) v = rng.normal();
  return z;
}

std::vector<double> sample_positive(RngStream& rng, std::span<const double> z, double radius) {
  check_radius(radius);
  std::vector<double> out(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    // Rounding of z + δ can push |z⁺ - z| a fraction of an ulp past R when δ
    // lands next to the boundary; such draws are repeated so the box
    // invariant holds under direct comparison.
    do {
      out[j] = z[j] + rng.uniform(-radius, radius);
    } while (!(std::fabs(out[j] - z[j]) <= radius));
  }
  return out;
}

std::vector<std::vector<double>> sample_negatives(RngStream& rng, std::span<const double> z,
                                                  double radius, std::size_t count,
                                                  std::size_t max_retries) {
  check_radius(radius);
  if (count == 0) throw DomainError("sample_negatives: N must be >= 1");
  if (z.empty()) throw DomainError("sample_negatives: empty query");
  std::vector<std::vector<double>> out;
  out.reserve(count);
  std::size_t attempts = 0;
  std::vector<double> candidate(z.size());
  for (std::size_t i = 0; i < count; ++i) {
    bool accepted = false;
    for (std::size_t t = 0; t < max_retries && !accepted; ++t) {
      ++attempts;
      for (double& v : candidate) v = rng.normal();
      accepted = clears_radius(candidate, z, radius);
    }
    if (!accepted) {
      throw DomainError(fmt::format(
          "sample_negatives: negative {} not found in {} attempts (acceptance rate {:.3g} "
          "over {} draws, R = {})",
          i, max_retries, static_cast<double>(i) / static_cast<double>(attempts), attempts, radius));
    }
    out.push_back(candidate);
  }
  return out;
}

LatentBatch make_batch(RngStream& rng, std::size_t dim, double radius, std::size_t count,
                       std::size_t max_retries) {
  LatentBatch batch;
  batch.radius = radius;
  batch.query = sample_prior(rng, dim);
  batch.positive = sample_positive(rng, batch.query, radius);
  batch.negatives = sample_negatives(rng, batch.query, radius, count, max_retries);
  return batch;
}

}  // namespace divco::latent
