#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "divco/rng.hpp"

namespace divco::synth {

using Point2 = std::array<double, 2>;

struct GaussianMode {
  Point2 mean{};
  double stddev = 0.1;  // isotropic
  double weight = 1.0;
};

// Per-class isotropic Gaussian mixtures in the plane.
struct GmmSpec {
  std::vector<std::vector<GaussianMode>> classes;

  std::size_t num_classes() const { return classes.size(); }
  std::size_t total_modes() const;

  // Weights sum to 1 (1e-12) per class, σ > 0, and the means within a class
  // are at least 6·max(σ_a, σ_b) apart. Throws ConfigError otherwise.
  void validate() const;
};

struct LabeledSample {
  Point2 point{};
  std::size_t label = 0;
  std::optional<std::size_t> mode;
};

// Two classes of four equal-weight modes, σ = 0.1: class 0 on (±2, 0),
// (0, ±2); class 1 on (±2, ±2).
GmmSpec default_toy_spec();

// Ancestral sampling: a mode by weight, then an isotropic Gaussian around it.
std::vector<LabeledSample> sample(const GmmSpec& spec, RngStream& rng, std::size_t label,
                                  std::size_t n);

struct ModeAssignment {
  std::size_t mode = 0;
  bool in_support = false;  // within 3σ of the assigned mean
  double distance = 0.0;
};

// Nearest mode mean of class `label`; ties go to the lowest mode id.
ModeAssignment assign_mode(const GmmSpec& spec, const Point2& point, std::size_t label);

double distance(const Point2& a, const Point2& b);

}  // namespace divco::synth
