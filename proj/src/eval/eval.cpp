#include "divco/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "divco/error.hpp"

namespace divco::eval {
namespace {

double squared_distance(const Point2& a, const Point2& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

std::vector<Point2> seed_plus_plus(std::span<const Point2> points, std::size_t k, RngStream& rng) {
  std::vector<Point2> centroids;
  centroids.reserve(k);
  std::vector<bool> chosen(points.size(), false);
  std::size_t first = rng.below(points.size());
  centroids.push_back(points[first]);
  chosen[first] = true;
  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], centroids[0]);
  while (centroids.size() < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = points.size();
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        acc += d2[i];
        if (d2[i] > 0.0 && acc > target) {
          pick = i;
          break;
        }
      }
      if (pick == points.size()) {
        // Rounding at the top of the cumulative sum.
        for (std::size_t i = points.size(); i-- > 0;) {
          if (d2[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      // Every point coincides with a centroid; fall back to an unused index.
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (!chosen[i]) {
          pick = i;
          break;
        }
      }
    }
    chosen[pick] = true;
    centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], centroids.back()));
    }
  }
  return centroids;
}

}  // namespace

std::size_t nearest(std::span<const Point2> centroids, const Point2& p) {
  std::size_t best = 0;
  double best_d = squared_distance(p, centroids[0]);
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

std::vector<Point2> kmeans(std::span<const Point2> points, std::size_t k, RngStream& rng,
                           std::size_t max_iters) {
  if (k == 0) throw DomainError("kmeans: K must be >= 1");
  if (points.size() < k) {
    throw DomainError(fmt::format("kmeans: {} points cannot form {} clusters", points.size(), k));
  }
  std::vector<Point2> centroids = seed_plus_plus(points, k, rng);
  std::vector<std::size_t> assign(points.size(), k);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t c = nearest(centroids, points[i]);
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    if (!changed) break;

    std::vector<Point2> sums(k, Point2{0.0, 0.0});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sums[assign[i]][0] += points[i][0];
      sums[assign[i]][1] += points[i][1];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centroids[c] = {sums[c][0] / static_cast<double>(counts[c]),
                        sums[c][1] / static_cast<double>(counts[c])};
      }
    }
    std::vector<std::size_t> reseeded;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] > 0) continue;
      std::size_t far = points.size();
      double far_d = -1.0;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (std::find(reseeded.begin(), reseeded.end(), i) != reseeded.end()) continue;
        const double d = squared_distance(points[i], centroids[assign[i]]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      centroids[c] = points[far];
      reseeded.push_back(far);
    }
    // Force the next assignment pass to register a change.
    for (std::size_t i : reseeded) assign[i] = k;
  }
  return centroids;
}

std::vector<double> bin_proportions(std::span<const Point2> centroids,
                                    std::span<const Point2> points) {
  if (points.empty()) throw DomainError("bin_proportions: no points");
  std::vector<double> counts(centroids.size(), 0.0);
  for (const auto& p : points) counts[nearest(centroids, p)] += 1.0;
  for (double& c : counts) c /= static_cast<double>(points.size());
  return counts;
}

void BinModel::validate() const {
  if (centroids.size() < 2) throw DomainError("bin model: needs at least two bins");
  if (proportions.size() != centroids.size()) {
    throw DimensionError("bin model: proportions and centroids differ in length");
  }
  double total = 0.0;
  for (double p : proportions) {
    if (p < 0.0) throw DomainError("bin model: negative proportion");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-12) {
    throw DomainError(fmt::format("bin model: proportions sum to {:.17g}", total));
  }
  for (std::size_t a = 0; a < centroids.size(); ++a) {
    for (std::size_t b = a + 1; b < centroids.size(); ++b) {
      if (centroids[a] == centroids[b]) {
        throw DomainError(fmt::format("bin model: centroids {} and {} coincide", a, b));
      }
    }
  }
}

BinModel fit_bins(std::span<const Point2> real, std::size_t k, RngStream& rng,
                  std::size_t max_iters) {
  BinModel bins;
  bins.centroids = kmeans(real, k, rng, max_iters);
  bins.proportions = bin_proportions(bins.centroids, real);
  bins.sample_count = real.size();
  return bins;
}

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError(fmt::format("normal_quantile: p = {} outside (0, 1)", p));
  // Acklam's rational approximation followed by two Newton steps on erfc.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double sqrt2pi = std::sqrt(2.0 * std::numbers::pi);
  for (int i = 0; i < 2; ++i) {
    const double cdf = 0.5 * std::erfc(-x / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * x * x) / sqrt2pi;
    x -= (cdf - p) / pdf;
  }
  return x;
}

NdbResult ndb_score(const BinModel& bins, std::span<const Point2> generated, double alpha) {
  if (generated.empty()) throw DomainError("ndb_score: generated set is empty");
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError(fmt::format("ndb_score: alpha = {}", alpha));
  if (bins.sample_count == 0) throw DomainError("ndb_score: bin model has no real sample count");
  const double critical = normal_quantile(1.0 - alpha / 2.0);
  const double n_real = static_cast<double>(bins.sample_count);
  const double n_gen = static_cast<double>(generated.size());

  NdbResult result;
  result.generated_proportions = bin_proportions(bins.centroids, generated);
  for (std::size_t k = 0; k < bins.centroids.size(); ++k) {
    BinTest t;
    t.real_share = bins.proportions[k];
    t.generated_share = result.generated_proportions[k];
    const double pooled = (n_real * t.real_share + n_gen * t.generated_share) / (n_real + n_gen);
    const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / n_real + 1.0 / n_gen));
    t.z = se > 0.0 ? (t.real_share - t.generated_share) / se : 0.0;
    t.different = std::fabs(t.z) > critical;
    if (t.different) ++result.ndb;
    result.bins.push_back(t);
  }
  return result;
}

double jsd_score(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) {
    throw DimensionError(fmt::format("jsd_score: lengths {} and {} differ", p.size(), q.size()));
  }
  auto check = [](std::span<const double> v, const char* what) {
    double s = 0.0;
    for (double x : v) {
      if (!(x >= 0.0)) throw DomainError(fmt::format("jsd_score: {} has a negative entry", what));
      s += x;
    }
    if (std::fabs(s - 1.0) > 1e-9) {
      throw DomainError(fmt::format("jsd_score: {} sums to {:.12g}, not 1", what, s));
    }
  };
  check(p, "p");
  check(q, "q");
  double kl_p = 0.0, kl_q = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) kl_p += p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) kl_q += q[i] * std::log(q[i] / m);
  }
  return std::clamp(0.5 * kl_p + 0.5 * kl_q, 0.0, std::log(2.0));
}

std::vector<std::size_t> mode_coverage(const synth::GmmSpec& spec,
                                       std::span<const synth::LabeledSample> generated,
                                       double threshold) {
  const std::size_t classes = spec.num_classes();
  std::vector<std::vector<std::size_t>> hits(classes);
  std::vector<std::size_t> totals(classes, 0);
  for (std::size_t c = 0; c < classes; ++c) hits[c].assign(spec.classes[c].size(), 0);
  for (const auto& s : generated) {
    const auto a = synth::assign_mode(spec, s.point, s.label);
    ++totals[s.label];
    if (a.in_support) ++hits[s.label][a.mode];
  }
  std::vector<std::size_t> covered(classes, 0);
  for (std::size_t c = 0; c < classes; ++c) {
    if (totals[c] == 0) continue;
    for (std::size_t h : hits[c]) {
      if (h == 0) continue;
      if (static_cast<double>(h) >= threshold * static_cast<double>(totals[c])) ++covered[c];
    }
  }
  return covered;
}

double class_fidelity(const synth::GmmSpec& spec, std::span<const synth::LabeledSample> generated) {
  if (generated.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& s : generated) {
    std::size_t best_class = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < spec.num_classes(); ++c) {
      for (const auto& mode : spec.classes[c]) {
        const double d = synth::distance(s.point, mode.mean);
        if (d < best) {
          best = d;
          best_class = c;
        }
      }
    }
    if (best_class == s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(generated.size());
}

double diversity(std::span<const Point2> points) {
  if (points.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      row += std::fabs(points[i][0] - points[j][0]) + std::fabs(points[i][1] - points[j][1]);
    }
    total += row;
  }
  const double pairs = 0.5 * static_cast<double>(points.size()) * static_cast<double>(points.size() - 1);
  return total / pairs;
}

void MetricsReport::validate() const {
  if (ndb > bins) throw DomainError(fmt::format("metrics: ndb {} exceeds bin count {}", ndb, bins));
  if (!(jsd >= 0.0 && jsd <= std::log(2.0) + 1e-12)) {
    throw DomainError(fmt::format("metrics: jsd {} outside [0, ln 2]", jsd));
  }
  if (!(class_fidelity >= 0.0 && class_fidelity <= 1.0)) {
    throw DomainError(fmt::format("metrics: class fidelity {} outside [0, 1]", class_fidelity));
  }
}

MetricsReport evaluate(const synth::GmmSpec& spec, const BinModel& bins,
                       std::span<const synth::LabeledSample> generated,
                       const EvalOptions& options) {
  std::vector<Point2> points;
  points.reserve(generated.size());
  for (const auto& s : generated) points.push_back(s.point);

  MetricsReport report;
  const NdbResult ndb = ndb_score(bins, points, options.alpha);
  report.ndb = ndb.ndb;
  report.bins = bins.centroids.size();
  report.jsd = jsd_score(bins.proportions, ndb.generated_proportions);
  report.modes_covered = mode_coverage(spec, generated, options.coverage_threshold);
  report.class_fidelity = class_fidelity(spec, generated);
  for (std::size_t c = 0; c < spec.num_classes(); ++c) {
    std::vector<Point2> of_class;
    for (const auto& s : generated) {
      if (s.label == c) of_class.push_back(s.point);
    }
    report.diversity.push_back(diversity(of_class));
  }
  report.validate();
  return report;
}

std::vector<std::string> metric_columns(std::size_t num_classes) {
  std::vector<std::string> cols{"ndb", "jsd"};
  for (std::size_t c = 0; c < num_classes; ++c) cols.push_back(fmt::format("modes_covered_c{}", c));
  cols.push_back("class_fidelity");
  for (std::size_t c = 0; c < num_classes; ++c) cols.push_back(fmt::format("diversity_c{}", c));
  return cols;
}

std::vector<std::string> metric_values(const MetricsReport& r) {
  std::vector<std::string> v{fmt::format("{}", r.ndb), fmt::format("{:.6f}", r.jsd)};
  for (std::size_t m : r.modes_covered) v.push_back(fmt::format("{}", m));
  v.push_back(fmt::format("{:.17g}", r.class_fidelity));
  for (double d : r.diversity) v.push_back(fmt::format("{:.17g}", d));
  return v;
}

}  // namespace divco::eval
