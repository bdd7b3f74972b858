#pragma once

// Binary checkpoint layout (all integers and floats little-endian):
//
//   "DIVCOCKP"                      8-byte magic
//   u32 format version              (kCheckpointVersion)
//   u64 n, n bytes                  header: JSON echo of the architecture,
//                                   the training config, and the tensor list
//   u64 tensor count
//   per tensor: u64 rows, u64 cols, rows·cols f64 values   (declaration order)
//   u8 has_state
//   if has_state: u64 iteration, u64 n + n bytes RNG state,
//                 u64 optimizer count, per optimizer:
//                   i64 steps, u64 buffers, per buffer: u64 len, len f64 (m), len f64 (v)

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "divco/autodiff/tensor.hpp"

namespace divco::models {

inline constexpr char kCheckpointMagic[8] = {'D', 'I', 'V', 'C', 'O', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct OptimizerState {
  std::int64_t steps = 0;
  std::vector<std::vector<double>> first;
  std::vector<std::vector<double>> second;
};

struct TrainerState {
  std::uint64_t iteration = 0;
  std::string rng_state;
  std::vector<OptimizerState> optimizers;
};

struct StoredTensor {
  ad::Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  nlohmann::json header;
  std::vector<StoredTensor> tensors;
  std::optional<TrainerState> state;
};

// Header tensor list entry for each parameter, in order.
nlohmann::json describe_tensors(std::span<const ad::Tensor> params);

void write_checkpoint(const std::string& path, const nlohmann::json& header,
                      std::span<const ad::Tensor> params, const TrainerState* state);

Checkpoint read_checkpoint(const std::string& path);

// Copies stored values into `params` after checking count, names and shapes.
// Throws DimensionError listing every offending tensor.
void load_parameters(const Checkpoint& ckpt, std::span<ad::Tensor> params);

}  // namespace divco::models
