#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "divco/autodiff/tape.hpp"
#include "divco/autodiff/tensor.hpp"
#include "divco/rng.hpp"

namespace divco::models {

using ad::Tape;
using ad::Tensor;

enum class Activation { kLinear, kRelu, kLeakyRelu, kTanh, kSigmoid };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

// Whether a forward pass records gradients for the network's own parameters.
// kFrozen reads the same parameter storage through detached handles, so
// gradients still flow to the inputs but never to the parameters.
enum class ParamUse { kTrack, kFrozen };

struct MlpSpec {
  std::vector<std::size_t> widths;  // input, hidden..., output
  Activation hidden = Activation::kLeakyRelu;
  Activation output = Activation::kLinear;
  double leaky_slope = ad::kDefaultLeakySlope;

  // At least one hidden layer, positive widths, matching end widths.
  void validate(std::size_t input_dim, std::size_t output_dim) const;
};

struct Linear {
  Tensor weight;  // in × out
  Tensor bias;    // 1 × out

  Linear() = default;
  Linear(std::size_t in, std::size_t out, const std::string& name);
  // Uniform in [-1/√fan_in, 1/√fan_in] for weight and bias.
  void init(RngStream& rng);
  Tensor forward(Tape& tape, const Tensor& x, ParamUse use) const;
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(MlpSpec spec, const std::string& name);

  void init(RngStream& rng);
  Tensor forward(Tape& tape, const Tensor& x, ParamUse use) const;
  const MlpSpec& spec() const { return spec_; }
  std::vector<Tensor> params() const;

 private:
  MlpSpec spec_;
  std::vector<Linear> layers_;
};

// B×C matrix with a 1 in column labels[i] of row i.
Tensor one_hot(std::span<const std::size_t> labels, std::size_t num_classes);

// G(z, y): an MLP on concat(z, onehot(y)).
class Generator {
 public:
  Generator(std::size_t latent_dim, std::size_t num_classes, std::size_t data_dim,
            std::vector<std::size_t> hidden, Activation hidden_act = Activation::kLeakyRelu,
            Activation output_act = Activation::kLinear);

  void init(RngStream& rng) { net_.init(rng); }

  // z: B×d, cond: B×C (one-hot rows, or any conditioning matrix of that width).
  Tensor forward(Tape& tape, const Tensor& z, const Tensor& cond, ParamUse use) const;

  // Single sample, no gradient recording.
  std::vector<double> generate(std::span<const double> z, std::size_t label) const;

  std::size_t latent_dim() const { return latent_dim_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t data_dim() const { return data_dim_; }
  const MlpSpec& spec() const { return net_.spec(); }
  std::vector<Tensor> params() const { return net_.params(); }

 private:
  std::size_t latent_dim_;
  std::size_t num_classes_;
  std::size_t data_dim_;
  Mlp net_;
};

// D(x, y) = sigmoid(head(trunk(concat(x, onehot(y))))). The trunk doubles as
// the auxiliary feature encoder; encode() and discriminate() read the very
// same parameter tensors.
class Discriminator {
 public:
  Discriminator(std::size_t data_dim, std::size_t num_classes, std::vector<std::size_t> hidden,
                Activation hidden_act = Activation::kLeakyRelu);

  void init(RngStream& rng);

  Tensor encode(Tape& tape, const Tensor& x, const Tensor& cond, ParamUse use) const;
  Tensor logits(Tape& tape, const Tensor& x, const Tensor& cond, ParamUse use) const;
  Tensor discriminate(Tape& tape, const Tensor& x, const Tensor& cond, ParamUse use) const;

  double discriminate(std::span<const double> x, std::size_t label) const;
  std::vector<double> encode(std::span<const double> x, std::size_t label) const;

  std::size_t data_dim() const { return data_dim_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t feature_dim() const { return trunk_.spec().widths.back(); }
  const MlpSpec& trunk_spec() const { return trunk_.spec(); }
  std::vector<Tensor> trunk_params() const { return trunk_.params(); }
  std::vector<Tensor> head_params() const { return {head_.weight, head_.bias}; }
  std::vector<Tensor> params() const;

 private:
  std::size_t data_dim_;
  std::size_t num_classes_;
  Mlp trunk_;
  Linear head_;
};

// Affine map from trunk features back to the latent space.
class LatentRegressionHead {
 public:
  LatentRegressionHead(std::size_t feature_dim, std::size_t latent_dim);

  void init(RngStream& rng) { layer_.init(rng); }
  Tensor forward(Tape& tape, const Tensor& features, ParamUse use) const;
  std::vector<double> regress(std::span<const double> features) const;

  std::size_t feature_dim() const { return layer_.weight.rows(); }
  std::size_t latent_dim() const { return layer_.weight.cols(); }
  std::vector<Tensor> params() const { return {layer_.weight, layer_.bias}; }

 private:
  Linear layer_;
};

// Feature extractor used by the contrastive term. The class-conditional setup
// binds it to the discriminator trunk; image-to-image setups would bind the
// generator's encoding layers through the same signature.
using FeatureEncoder =
    std::function<Tensor(Tape& tape, const Tensor& x, const Tensor& cond, ParamUse use)>;

FeatureEncoder discriminator_encoder(const Discriminator& d);

}  // namespace divco::models
