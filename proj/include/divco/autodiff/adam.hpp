#pragma once

#include <cstdint>
#include <vector>

#include "divco/autodiff/tensor.hpp"

namespace divco::ad {

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

// Bias-corrected Adam over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  // Applies one update from the parameters' current gradients. A parameter
  // with no gradient allocated is treated as having a zero gradient. Throws
  // NumericError naming the parameter if any gradient is NaN/Inf; in that
  // case nothing is modified.
  void step();

  void zero_grad();

  std::int64_t steps() const { return step_; }
  const AdamOptions& options() const { return options_; }
  const std::vector<Tensor>& params() const { return params_; }

  // Moment buffers, exposed for checkpointing.
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }
  void restore(std::int64_t steps, std::vector<std::vector<double>> first,
               std::vector<std::vector<double>> second);

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t step_ = 0;
};

}  // namespace divco::ad
