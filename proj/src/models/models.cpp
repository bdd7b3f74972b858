#include "divco/models.hpp"

#include <cmath>

#include <fmt/format.h>

#include "divco/error.hpp"

namespace divco::models {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::kLinear: return "linear";
    case Activation::kRelu: return "relu";
    case Activation::kLeakyRelu: return "leaky_relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "linear";
}

Activation activation_from_string(const std::string& name) {
  for (Activation a : {Activation::kLinear, Activation::kRelu, Activation::kLeakyRelu,
                       Activation::kTanh, Activation::kSigmoid}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigError("unknown activation '" + name + "'");
}

namespace {

Tensor activate(Tape& tape, const Tensor& x, Activation a, double slope) {
  switch (a) {
    case Activation::kLinear: return x;
    case Activation::kRelu: return tape.relu(x);
    case Activation::kLeakyRelu: return tape.leaky_relu(x, slope);
    case Activation::kTanh: return tape.tanh(x);
    case Activation::kSigmoid: return tape.sigmoid(x);
  }
  return x;
}

Tensor bind(const Tensor& p, ParamUse use) { return use == ParamUse::kTrack ? p : p.detach(); }

void check_batch(const Tensor& x, std::size_t width, const char* what) {
  if (x.cols() != width) {
    throw DimensionError(fmt::format("{}: expected {} columns, got {}", what, width,
                                     x.shape().str()));
  }
}

Tensor row_input(std::span<const double> x) {
  return Tensor::row(std::vector<double>(x.begin(), x.end()));
}

}  // namespace

void MlpSpec::validate(std::size_t input_dim, std::size_t output_dim) const {
  if (widths.size() < 3) {
    throw ConfigError(fmt::format("mlp: needs at least one hidden layer, got {} widths", widths.size()));
  }
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("mlp: layer widths must be positive");
  }
  if (widths.front() != input_dim || widths.back() != output_dim) {
    throw ConfigError(fmt::format("mlp: widths run {} -> {}, expected {} -> {}", widths.front(),
                                  widths.back(), input_dim, output_dim));
  }
}

Linear::Linear(std::size_t in, std::size_t out, const std::string& name)
    : weight(Tensor::zeros({in, out}, true)), bias(Tensor::zeros({1, out}, true)) {
  weight.set_name(name + ".weight");
  bias.set_name(name + ".bias");
}

void Linear::init(RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(weight.rows()));
  for (double& v : weight.mutable_values()) v = rng.uniform(-bound, bound);
  for (double& v : bias.mutable_values()) v = rng.uniform(-bound, bound);
}

Tensor Linear::forward(Tape& tape, const Tensor& x, ParamUse use) const {
  return tape.add_row(tape.matmul(x, bind(weight, use)), bind(bias, use));
}

Mlp::Mlp(MlpSpec spec, const std::string& name) : spec_(std::move(spec)) {
  spec_.validate(spec_.widths.empty() ? 0 : spec_.widths.front(),
                 spec_.widths.empty() ? 0 : spec_.widths.back());
  for (std::size_t i = 0; i + 1 < spec_.widths.size(); ++i) {
    layers_.emplace_back(spec_.widths[i], spec_.widths[i + 1], fmt::format("{}.{}", name, i));
  }
}

void Mlp::init(RngStream& rng) {
  for (auto& layer : layers_) layer.init(rng);
}

Tensor Mlp::forward(Tape& tape, const Tensor& x, ParamUse use) const {
  check_batch(x, spec_.widths.front(), "mlp input");
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(tape, h, use);
    const bool last = i + 1 == layers_.size();
    h = activate(tape, h, last ? spec_.output : spec_.hidden, spec_.leaky_slope);
  }
  return h;
}

std::vector<Tensor> Mlp::params() const {
  std::vector<Tensor> out;
  for (const auto& layer : layers_) {
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  return out;
}

Tensor one_hot(std::span<const std::size_t> labels, std::size_t num_classes) {
  if (labels.empty()) throw DimensionError("one_hot: empty label list");
  std::vector<double> v(labels.size() * num_classes, 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) {
      throw DomainError(fmt::format("one_hot: label {} outside [0, {})", labels[i], num_classes));
    }
    v[i * num_classes + labels[i]] = 1.0;
  }
  return Tensor::from({labels.size(), num_classes}, std::move(v));
}

namespace {

MlpSpec make_spec(std::size_t in, std::vector<std::size_t> hidden, std::size_t out,
                  Activation hidden_act, Activation output_act) {
  MlpSpec spec;
  spec.widths.push_back(in);
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.widths.push_back(out);
  spec.hidden = hidden_act;
  spec.output = output_act;
  return spec;
}

}  // namespace

Generator::Generator(std::size_t latent_dim, std::size_t num_classes, std::size_t data_dim,
                     std::vector<std::size_t> hidden, Activation hidden_act,
                     Activation output_act)
    : latent_dim_(latent_dim),
      num_classes_(num_classes),
      data_dim_(data_dim),
      net_(make_spec(latent_dim + num_classes, std::move(hidden), data_dim, hidden_act,
                     output_act),
           "generator") {
  if (latent_dim == 0 || num_classes == 0 || data_dim == 0) {
    throw ConfigError("generator: latent_dim, num_classes and data_dim must be positive");
  }
}

Tensor Generator::forward(Tape& tape, const Tensor& z, const Tensor& cond, ParamUse use) const {
  check_batch(z, latent_dim_, "generator latent");
  check_batch(cond, num_classes_, "generator condition");
  const Tensor parts[] = {z, cond};
  return net_.forward(tape, tape.concat_cols(parts), use);
}

std::vector<double> Generator::generate(std::span<const double> z, std::size_t label) const {
  if (z.size() != latent_dim_) {
    throw DimensionError(fmt::format("generate: latent has {} entries, expected {}", z.size(),
                                     latent_dim_));
  }
  const std::size_t labels[] = {label};
  Tape tape;
  const Tensor x = forward(tape, row_input(z), one_hot(labels, num_classes_), ParamUse::kFrozen);
  return {x.values().begin(), x.values().end()};
}

Discriminator::Discriminator(std::size_t data_dim, std::size_t num_classes,
                             std::vector<std::size_t> hidden, Activation hidden_act)
    : data_dim_(data_dim), num_classes_(num_classes) {
  if (hidden.size() < 2) {
    throw ConfigError("discriminator: trunk needs at least two layers (two hidden widths)");
  }
  // The trunk ends at its last hidden width; its output is the feature vector.
  MlpSpec spec;
  spec.widths.push_back(data_dim + num_classes);
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.hidden = hidden_act;
  spec.output = hidden_act;
  trunk_ = Mlp(spec, "discriminator.trunk");
  head_ = Linear(hidden.back(), 1, "discriminator.head");
}

void Discriminator::init(RngStream& rng) {
  trunk_.init(rng);
  head_.init(rng);
}

Tensor Discriminator::encode(Tape& tape, const Tensor& x, const Tensor& cond, ParamUse use) const {
  check_batch(x, data_dim_, "discriminator input");
  check_batch(cond, num_classes_, "discriminator condition");
  const Tensor parts[] = {x, cond};
  return trunk_.forward(tape, tape.concat_cols(parts), use);
}

Tensor Discriminator::logits(Tape& tape, const Tensor& x, const Tensor& cond, ParamUse use) const {
  return head_.forward(tape, encode(tape, x, cond, use), use);
}

Tensor Discriminator::discriminate(Tape& tape, const Tensor& x, const Tensor& cond,
                                   ParamUse use) const {
  return tape.sigmoid(logits(tape, x, cond, use));
}

double Discriminator::discriminate(std::span<const double> x, std::size_t label) const {
  if (x.size() != data_dim_) {
    throw DimensionError(fmt::format("discriminate: sample has {} entries, expected {}", x.size(),
                                     data_dim_));
  }
  const std::size_t labels[] = {label};
  Tape tape;
  return discriminate(tape, row_input(x), one_hot(labels, num_classes_), ParamUse::kFrozen).item();
}

std::vector<double> Discriminator::encode(std::span<const double> x, std::size_t label) const {
  if (x.size() != data_dim_) {
    throw DimensionError(fmt::format("encode: sample has {} entries, expected {}", x.size(),
                                     data_dim_));
  }
  const std::size_t labels[] = {label};
  Tape tape;
  const Tensor f = encode(tape, row_input(x), one_hot(labels, num_classes_), ParamUse::kFrozen);
  return {f.values().begin(), f.values().end()};
}

std::vector<Tensor> Discriminator::params() const {
  auto out = trunk_.params();
  out.push_back(head_.weight);
  out.push_back(head_.bias);
  return out;
}

LatentRegressionHead::LatentRegressionHead(std::size_t feature_dim, std::size_t latent_dim)
    : layer_(feature_dim, latent_dim, "latent_head") {}

Tensor LatentRegressionHead::forward(Tape& tape, const Tensor& features, ParamUse use) const {
  check_batch(features, feature_dim(), "latent head input");
  return layer_.forward(tape, features, use);
}

std::vector<double> LatentRegressionHead::regress(std::span<const double> features) const {
  if (features.size() != feature_dim()) {
    throw DimensionError(fmt::format("regress_latent: feature has {} entries, expected {}",
                                     features.size(), feature_dim()));
  }
  Tape tape;
  const Tensor z = forward(tape, row_input(features), ParamUse::kFrozen);
  return {z.values().begin(), z.values().end()};
}

FeatureEncoder discriminator_encoder(const Discriminator& d) {
  return [&d](Tape& tape, const Tensor& x, const Tensor& cond, ParamUse use) {
    return d.encode(tape, x, cond, use);
  };
}

}  // namespace divco::models
