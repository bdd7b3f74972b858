#include "divco/synthdata.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "divco/error.hpp"

namespace divco::synth {

double distance(const Point2& a, const Point2& b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

std::size_t GmmSpec::total_modes() const {
  std::size_t n = 0;
  for (const auto& c : classes) n += c.size();
  return n;
}

void GmmSpec::validate() const {
  if (classes.empty()) throw ConfigError("gmm: at least one class is required");
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto& modes = classes[c];
    if (modes.empty()) throw ConfigError(fmt::format("gmm: class {} has no modes", c));
    double total = 0.0;
    for (std::size_t m = 0; m < modes.size(); ++m) {
      if (!(modes[m].stddev > 0.0)) {
        throw ConfigError(fmt::format("gmm: class {} mode {} has stddev {} (must be > 0)", c, m,
                                      modes[m].stddev));
      }
      if (!(modes[m].weight > 0.0)) {
        throw ConfigError(fmt::format("gmm: class {} mode {} has weight {} (must be > 0)", c, m,
                                      modes[m].weight));
      }
      total += modes[m].weight;
    }
    if (std::fabs(total - 1.0) > 1e-12) {
      throw ConfigError(fmt::format("gmm: class {} weights sum to {:.17g}, not 1", c, total));
    }
    for (std::size_t a = 0; a < modes.size(); ++a) {
      for (std::size_t b = a + 1; b < modes.size(); ++b) {
        const double sep = 6.0 * std::max(modes[a].stddev, modes[b].stddev);
        if (distance(modes[a].mean, modes[b].mean) < sep) {
          throw ConfigError(fmt::format("gmm: class {} modes {} and {} are closer than 6 sigma", c,
                                        a, b));
        }
      }
    }
  }
}

GmmSpec default_toy_spec() {
  constexpr double kSigma = 0.1;
  constexpr double kWeight = 0.25;
  GmmSpec spec;
  spec.classes.push_back({
      {{2.0, 0.0}, kSigma, kWeight},
      {{-2.0, 0.0}, kSigma, kWeight},
      {{0.0, 2.0}, kSigma, kWeight},
      {{0.0, -2.0}, kSigma, kWeight},
  });
  spec.classes.push_back({
      {{2.0, 2.0}, kSigma, kWeight},
      {{-2.0, 2.0}, kSigma, kWeight},
      {{2.0, -2.0}, kSigma, kWeight},
      {{-2.0, -2.0}, kSigma, kWeight},
  });
  return spec;
}

std::vector<LabeledSample> sample(const GmmSpec& spec, RngStream& rng, std::size_t label,
                                  std::size_t n) {
  if (label >= spec.num_classes()) {
    throw DomainError(fmt::format("gmm sample: class {} outside [0, {})", label, spec.num_classes()));
  }
  if (n == 0) throw DomainError("gmm sample: n must be >= 1");
  const auto& modes = spec.classes[label];
  std::vector<LabeledSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    std::size_t m = 0;
    double acc = modes[0].weight;
    while (u >= acc && m + 1 < modes.size()) acc += modes[++m].weight;
    const auto& mode = modes[m];
    const double dx = rng.normal();
    const double dy = rng.normal();
    out.push_back({{mode.mean[0] + mode.stddev * dx, mode.mean[1] + mode.stddev * dy}, label, m});
  }
  return out;
}

ModeAssignment assign_mode(const GmmSpec& spec, const Point2& point, std::size_t label) {
  if (label >= spec.num_classes()) {
    throw DomainError(fmt::format("assign_mode: class {} outside [0, {})", label, spec.num_classes()));
  }
  const auto& modes = spec.classes[label];
  ModeAssignment best{0, false, distance(point, modes[0].mean)};
  for (std::size_t m = 1; m < modes.size(); ++m) {
    const double d = distance(point, modes[m].mean);
    if (d < best.distance) best = {m, false, d};
  }
  best.in_support = best.distance <= 3.0 * modes[best.mode].stddev;
  return best;
}

}  // namespace divco::synth
