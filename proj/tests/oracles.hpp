#pragma once

// Brute-force reference implementations shared by unit and acceptance tests.
// They deliberately avoid the library's own helpers.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "divco/eval.hpp"

namespace divco::testing {

// Critical value of a two-sided z-test by bisection on erfc.
inline double critical_z(double alpha) {
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (std::erfc(mid / std::sqrt(2.0)) > alpha ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Counts points per centroid by scanning every centroid, then redoes the
// pooled two-proportion z-test bin by bin.
inline std::size_t brute_force_ndb(std::span<const eval::Point2> centroids,
                                   std::span<const eval::Point2> real,
                                   std::span<const eval::Point2> generated, double alpha) {
  auto counts = [&](std::span<const eval::Point2> pts) {
    std::vector<double> c(centroids.size(), 0.0);
    for (const auto& p : pts) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < centroids.size(); ++k) {
        const double dx = p[0] - centroids[k][0], dy = p[1] - centroids[k][1];
        const double d = dx * dx + dy * dy;
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      c[best] += 1.0;
    }
    return c;
  };
  const auto cr = counts(real);
  const auto cg = counts(generated);
  const double nr = static_cast<double>(real.size());
  const double ng = static_cast<double>(generated.size());
  const double crit = critical_z(alpha);
  std::size_t different = 0;
  for (std::size_t k = 0; k < centroids.size(); ++k) {
    const double pr = cr[k] / nr, pg = cg[k] / ng;
    const double pooled = (cr[k] + cg[k]) / (nr + ng);
    const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / nr + 1.0 / ng));
    if (se == 0.0) continue;
    if (std::abs(pr - pg) / se > crit) ++different;
  }
  return different;
}

}  // namespace divco::testing
