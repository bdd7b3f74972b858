#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "divco/rng.hpp"
#include "divco/synthdata.hpp"

namespace divco::eval {

using synth::Point2;

inline constexpr double kDefaultAlpha = 0.05;
inline constexpr double kDefaultCoverageThreshold = 0.01;

// Lloyd's algorithm with k-means++ seeding. Stops when assignments stop
// changing or after max_iters rounds. An emptied cluster is re-seeded at the
// point farthest from its current centroid.
std::vector<Point2> kmeans(std::span<const Point2> points, std::size_t k, RngStream& rng,
                           std::size_t max_iters = 100);

// Index of the nearest centroid; ties go to the lowest index.
std::size_t nearest(std::span<const Point2> centroids, const Point2& p);

std::vector<double> bin_proportions(std::span<const Point2> centroids,
                                    std::span<const Point2> points);

struct BinModel {
  std::vector<Point2> centroids;
  std::vector<double> proportions;  // real-sample share per bin
  std::size_t sample_count = 0;     // number of real samples behind `proportions`

  void validate() const;
};

BinModel fit_bins(std::span<const Point2> real, std::size_t k, RngStream& rng,
                  std::size_t max_iters = 100);

struct BinTest {
  double real_share = 0.0;
  double generated_share = 0.0;
  double z = 0.0;
  bool different = false;
};

struct NdbResult {
  std::size_t ndb = 0;
  std::vector<BinTest> bins;
  std::vector<double> generated_proportions;
};

// Two-sided quantile of the standard normal: Φ⁻¹(p), 0 < p < 1.
double normal_quantile(double p);

// Number of statistically different bins: a pooled two-proportion z-test per
// bin between the real and generated shares, significant when |z| exceeds
// Φ⁻¹(1 - α/2). Bins empty in both samples get z = 0.
NdbResult ndb_score(const BinModel& bins, std::span<const Point2> generated,
                    double alpha = kDefaultAlpha);

// Jensen-Shannon divergence in nats (range [0, ln 2]), 0·log 0 = 0.
double jsd_score(std::span<const double> p, std::span<const double> q);

// Per class, the number of modes holding at least `threshold` of that class's
// generated samples with in-support assignments. threshold = 0 counts any mode
// with one in-support sample.
std::vector<std::size_t> mode_coverage(const synth::GmmSpec& spec,
                                       std::span<const synth::LabeledSample> generated,
                                       double threshold = kDefaultCoverageThreshold);

// Share of samples whose nearest mode over all classes belongs to their label.
double class_fidelity(const synth::GmmSpec& spec, std::span<const synth::LabeledSample> generated);

// Mean pairwise L1 distance (a 2D stand-in for LPIPS-style diversity).
double diversity(std::span<const Point2> points);

struct MetricsReport {
  std::size_t ndb = 0;
  std::size_t bins = 0;
  double jsd = 0.0;
  std::vector<std::size_t> modes_covered;  // per class
  double class_fidelity = 0.0;
  std::vector<double> diversity;           // per class

  void validate() const;
};

struct EvalOptions {
  double alpha = kDefaultAlpha;
  double coverage_threshold = kDefaultCoverageThreshold;
};

MetricsReport evaluate(const synth::GmmSpec& spec, const BinModel& bins,
                       std::span<const synth::LabeledSample> generated,
                       const EvalOptions& options = {});

// Column names of the metric part of a report for `num_classes` classes:
// ndb, jsd, modes_covered_c0.., class_fidelity, diversity_c0..
std::vector<std::string> metric_columns(std::size_t num_classes);
// Matching values; NDB as an integer, JSD to 6 decimals, the rest %.17g.
std::vector<std::string> metric_values(const MetricsReport& report);

}  // namespace divco::eval
