#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace divco {

// Child seed for stream `index` of a run seeded with `seed`:
// splitmix64(seed ^ splitmix64(index + 1)). Used for every derived stream
// (parameter init, training draws, evaluation sets, sweep cells).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Deterministic single-owner random stream. The engine is mt19937_64; the
// uniform and normal transforms are implemented here rather than with the
// <random> distributions so sequences do not depend on the standard library.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // [0, 1) with 53 random bits.
  double uniform();
  // [lo, hi)
  double uniform(double lo, double hi);
  // Standard normal via the Marsaglia polar method.
  double normal();
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  // Full state, including the cached polar-method spare.
  std::string serialize() const;
  static RngStream deserialize(const std::string& state);

  bool operator==(const RngStream& other) const;

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace divco
