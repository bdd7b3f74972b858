#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "divco/autodiff/tape.hpp"
#include "divco/autodiff/tensor.hpp"

namespace divco::losses {

using ad::Tape;
using ad::Tensor;

inline constexpr double kProbabilityClamp = 1e-8;
inline constexpr double kModeSeekingEps = 1e-5;
inline constexpr double kUnitNormTolerance = 1e-9;

enum class LossMode { kDivco, kModeSeeking, kLatentRegression, kAdversarialOnly };

std::string to_string(LossMode mode);
LossMode loss_mode_from_string(const std::string& name);

// How the generator's adversarial term is formed.
//   kNonSaturating: -E[log D(G(z,y),y)]
//   kMinimax:        E[log(1 - D(G(z,y),y))]   (the game's literal value)
enum class GeneratorLoss { kNonSaturating, kMinimax };

std::string to_string(GeneratorLoss kind);
GeneratorLoss generator_loss_from_string(const std::string& name);

struct LossWeights {
  double lambda_contra = 1.0;
  double lambda_opt = 0.0;
  double tau = 1.0;
  LossMode mode = LossMode::kDivco;

  void validate() const;
};

// ---- adversarial -----------------------------------------------------------

// E[log D(x,y)] + E[log(1 - D(G(z,y),y))], probabilities clamped to
// [1e-8, 1 - 1e-8]. Inputs are column tensors of probabilities in [0, 1].
Tensor adversarial_loss(Tape& tape, const Tensor& d_real, const Tensor& d_fake);
double adversarial_loss(std::span<const double> d_real, std::span<const double> d_fake);

Tensor generator_adversarial_loss(Tape& tape, const Tensor& d_fake, GeneratorLoss kind);

// ---- contrastive -----------------------------------------------------------

enum class FeatureInput {
  kNormalize,    // L2-normalize rows first; all-zero rows become zero vectors
  kRequireUnit,  // reject rows whose norm differs from 1 by more than 1e-9
};

struct ContrastiveResult {
  Tensor loss;
  std::size_t zero_features = 0;  // rows that were all-zero before normalization
};

// InfoNCE over generated-sample features, averaged over the B queries:
//   -log exp(<f,f⁺>/τ) / (exp(<f,f⁺>/τ) + Σ_i exp(<f,f⁻_i>/τ))
// query, positive: B×h. negatives: (B·N)×h, the N negatives of query b in
// rows [b·N, (b+1)·N).
ContrastiveResult contrastive_loss(Tape& tape, const Tensor& query, const Tensor& positive,
                                   const Tensor& negatives, std::size_t num_negatives, double tau,
                                   FeatureInput input = FeatureInput::kNormalize);

// Unit-norm features of a single query.
struct FeatureTriple {
  std::vector<double> f;
  std::vector<double> positive;
  std::vector<std::vector<double>> negatives;

  void validate() const;
};

double contrastive_loss(const FeatureTriple& features, double tau);

// ---- baselines -------------------------------------------------------------

// Mean absolute error between estimate and target (‖ẑ - z‖₁ / d per row,
// averaged over rows).
Tensor latent_regression_loss(Tape& tape, const Tensor& estimate, const Tensor& target);

// 1 / (‖x̂₁ - x̂₂‖₁ / ‖z₁ - z₂‖₁ + ε), norms taken over the whole batch.
Tensor mode_seeking_loss(Tape& tape, const Tensor& x1, const Tensor& x2, const Tensor& z1,
                         const Tensor& z2, double eps = kModeSeekingEps);

// ---- optional reconstruction terms -----------------------------------------

// Mean absolute error between generated and paired target samples.
Tensor paired_reconstruction_loss(Tape& tape, const Tensor& generated, const Tensor& target);

// (z, input) -> output; G maps condition y to data x, F maps x back to y.
using Mapping = std::function<Tensor(Tape& tape, const Tensor& z, const Tensor& input)>;

// E[‖F(z, G(z,y)) - y‖₁ + ‖G(z, F(z,x)) - x‖₁], row-wise L1 norms averaged
// over the batch.
Tensor cyclic_reconstruction_loss(Tape& tape, const Mapping& g, const Mapping& f, const Tensor& x,
                                  const Tensor& y, const Tensor& z);

// ---- composite -------------------------------------------------------------

// Component terms of one training step. Leave a term undefined when it was
// not computed.
struct LossComponents {
  Tensor generator_adversarial;  // surrogate from generator_adversarial_loss
  Tensor contrastive;
  Tensor mode_seeking;
  Tensor latent_regression;
  Tensor optional;               // L_opt (paired or cyclic reconstruction)
  Tensor adversarial;            // L_adv, the value the discriminator maximizes
};

struct Objective {
  Tensor generator;      // defined when generator_adversarial is
  Tensor discriminator;  // -L_adv, defined when adversarial is
  Tensor regularizer;    // λ_contra-weighted diversity term (undefined if none)
};

// generator = adv + λ_contra·(contrastive | mode_seeking | latent_regression by
// mode) + λ_opt·L_opt. A diversity term that does not belong to the active
// mode, or a missing one that does, is an error.
Objective composite_objective(Tape& tape, const LossWeights& weights,
                              const LossComponents& components);

}  // namespace divco::losses
