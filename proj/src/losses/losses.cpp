#include "divco/losses.hpp"

#include <cmath>

#include <fmt/format.h>

#include "divco/error.hpp"

namespace divco::losses {

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::kDivco: return "divco";
    case LossMode::kModeSeeking: return "mode_seeking";
    case LossMode::kLatentRegression: return "latent_regression";
    case LossMode::kAdversarialOnly: return "adversarial_only";
  }
  return "divco";
}

LossMode loss_mode_from_string(const std::string& name) {
  for (LossMode m : {LossMode::kDivco, LossMode::kModeSeeking, LossMode::kLatentRegression,
                     LossMode::kAdversarialOnly}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigError("unknown loss mode '" + name + "'");
}

std::string to_string(GeneratorLoss kind) {
  return kind == GeneratorLoss::kMinimax ? "minimax" : "non_saturating";
}

GeneratorLoss generator_loss_from_string(const std::string& name) {
  if (name == "non_saturating") return GeneratorLoss::kNonSaturating;
  if (name == "minimax") return GeneratorLoss::kMinimax;
  throw ConfigError("unknown generator loss '" + name + "'");
}

void LossWeights::validate() const {
  if (!(lambda_contra >= 0.0) || !std::isfinite(lambda_contra)) {
    throw ConfigError(fmt::format("lambda_contra must be finite and >= 0, got {}", lambda_contra));
  }
  if (!(lambda_opt >= 0.0) || !std::isfinite(lambda_opt)) {
    throw ConfigError(fmt::format("lambda_opt must be finite and >= 0, got {}", lambda_opt));
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw ConfigError(fmt::format("tau must be finite and > 0, got {}", tau));
  }
}

namespace {

void check_probabilities(const Tensor& p, const char* what) {
  for (double v : p.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError(fmt::format("{}: probability {} outside [0, 1]", what, v));
    }
  }
}

Tensor clamped(Tape& tape, const Tensor& p) {
  return tape.clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(fmt::format("{}: shapes differ, {} vs {}", what, a.shape().str(),
                                     b.shape().str()));
  }
}

}  // namespace

Tensor adversarial_loss(Tape& tape, const Tensor& d_real, const Tensor& d_fake) {
  check_probabilities(d_real, "adversarial_loss (real)");
  check_probabilities(d_fake, "adversarial_loss (fake)");
  const Tensor real_term = tape.mean(tape.log(clamped(tape, d_real)));
  const Tensor fake_term =
      tape.mean(tape.log(tape.add_scalar(tape.neg(clamped(tape, d_fake)), 1.0)));
  return tape.add(real_term, fake_term);
}

double adversarial_loss(std::span<const double> d_real, std::span<const double> d_fake) {
  Tape tape;
  return adversarial_loss(tape, Tensor::row({d_real.begin(), d_real.end()}),
                          Tensor::row({d_fake.begin(), d_fake.end()}))
      .item();
}

Tensor generator_adversarial_loss(Tape& tape, const Tensor& d_fake, GeneratorLoss kind) {
  check_probabilities(d_fake, "generator_adversarial_loss");
  const Tensor p = clamped(tape, d_fake);
  if (kind == GeneratorLoss::kNonSaturating) return tape.neg(tape.mean(tape.log(p)));
  return tape.mean(tape.log(tape.add_scalar(tape.neg(p), 1.0)));
}

namespace {

std::size_t count_and_check_rows(const Tensor& t, FeatureInput input, const char* what) {
  std::size_t zeros = 0;
  const std::size_t cols = t.cols();
  const auto v = t.values();
  for (std::size_t r = 0; r < t.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += v[r * cols + c] * v[r * cols + c];
    const double norm = std::sqrt(s);
    if (norm == 0.0) ++zeros;
    if (input == FeatureInput::kRequireUnit && std::fabs(norm - 1.0) > kUnitNormTolerance) {
      throw DomainError(fmt::format("contrastive_loss: {} row {} has norm {:.12g}, expected 1", what,
                                    r, norm));
    }
  }
  return zeros;
}

}  // namespace

ContrastiveResult contrastive_loss(Tape& tape, const Tensor& query, const Tensor& positive,
                                   const Tensor& negatives, std::size_t num_negatives, double tau,
                                   FeatureInput input) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw DomainError(fmt::format("contrastive_loss: tau must be > 0, got {}", tau));
  }
  if (num_negatives == 0) throw DimensionError("contrastive_loss: needs at least one negative");
  check_same_shape(query, positive, "contrastive_loss");
  if (negatives.cols() != query.cols() || negatives.rows() != query.rows() * num_negatives) {
    throw DimensionError(fmt::format("contrastive_loss: negatives {} do not match {} queries x {}",
                                     negatives.shape().str(), query.shape().str(), num_negatives));
  }
  ContrastiveResult result;
  result.zero_features = count_and_check_rows(query, input, "query") +
                         count_and_check_rows(positive, input, "positive") +
                         count_and_check_rows(negatives, input, "negative");

  Tensor f = query, fp = positive, fn = negatives;
  if (input == FeatureInput::kNormalize) {
    f = tape.normalize_rows(query);
    fp = tape.normalize_rows(positive);
    fn = tape.normalize_rows(negatives);
  }
  const std::size_t batch = query.rows();
  const Tensor pos_sim = tape.row_dot(f, fp);
  const Tensor neg_sim =
      tape.reshape(tape.row_dot(tape.repeat_rows(f, num_negatives), fn), {batch, num_negatives});
  const Tensor parts[] = {pos_sim, neg_sim};
  const Tensor logits = tape.scale(tape.concat_cols(parts), 1.0 / tau);
  const Tensor per_query =
      tape.sub(tape.logsumexp_rows(logits), tape.scale(pos_sim, 1.0 / tau));
  result.loss = tape.mean(per_query);
  return result;
}

void FeatureTriple::validate() const {
  const std::size_t h = f.size();
  if (h == 0) throw DimensionError("feature triple: empty query feature");
  if (negatives.empty()) throw DimensionError("feature triple: needs at least one negative");
  auto check = [h](const std::vector<double>& v, const char* what) {
    if (v.size() != h) throw DimensionError(fmt::format("feature triple: {} has wrong length", what));
    double s = 0.0;
    for (double x : v) s += x * x;
    if (std::fabs(std::sqrt(s) - 1.0) > kUnitNormTolerance) {
      throw DomainError(fmt::format("feature triple: {} is not unit norm", what));
    }
  };
  check(f, "query");
  check(positive, "positive");
  for (const auto& n : negatives) check(n, "negative");
}

double contrastive_loss(const FeatureTriple& features, double tau) {
  features.validate();
  const std::size_t h = features.f.size();
  const std::size_t n = features.negatives.size();
  std::vector<double> neg;
  neg.reserve(n * h);
  for (const auto& v : features.negatives) neg.insert(neg.end(), v.begin(), v.end());
  Tape tape;
  return contrastive_loss(tape, Tensor::row(features.f), Tensor::row(features.positive),
                          Tensor::from({n, h}, std::move(neg)), n, tau,
                          FeatureInput::kRequireUnit)
      .loss.item();
}

Tensor latent_regression_loss(Tape& tape, const Tensor& estimate, const Tensor& target) {
  check_same_shape(estimate, target, "latent_regression_loss");
  return tape.mean(tape.abs(tape.sub(estimate, target)));
}

Tensor mode_seeking_loss(Tape& tape, const Tensor& x1, const Tensor& x2, const Tensor& z1,
                         const Tensor& z2, double eps) {
  check_same_shape(x1, x2, "mode_seeking_loss (samples)");
  check_same_shape(z1, z2, "mode_seeking_loss (latents)");
  if (!(eps > 0.0)) throw DomainError("mode_seeking_loss: eps must be > 0");
  const Tensor z_dist = tape.l1_norm(tape.sub(z1, z2));
  if (z_dist.item() == 0.0) {
    throw DomainError("mode_seeking_loss: z1 == z2, the distance ratio is undefined");
  }
  const Tensor x_dist = tape.l1_norm(tape.sub(x1, x2));
  const Tensor ratio = tape.add_scalar(tape.div(x_dist, z_dist), eps);
  return tape.div(Tensor::scalar(1.0), ratio);
}

Tensor paired_reconstruction_loss(Tape& tape, const Tensor& generated, const Tensor& target) {
  check_same_shape(generated, target, "paired_reconstruction_loss");
  return tape.mean(tape.abs(tape.sub(generated, target)));
}

Tensor cyclic_reconstruction_loss(Tape& tape, const Mapping& g, const Mapping& f, const Tensor& x,
                                  const Tensor& y, const Tensor& z) {
  if (x.rows() != y.rows() || x.rows() != z.rows()) {
    throw DimensionError(fmt::format("cyclic_reconstruction_loss: batch sizes differ ({}, {}, {})",
                                     x.shape().str(), y.shape().str(), z.shape().str()));
  }
  const Tensor y_cycle = f(tape, z, g(tape, z, y));
  const Tensor x_cycle = g(tape, z, f(tape, z, x));
  check_same_shape(y_cycle, y, "cyclic_reconstruction_loss (y cycle)");
  check_same_shape(x_cycle, x, "cyclic_reconstruction_loss (x cycle)");
  const Tensor y_term = tape.mean(tape.l1_norm(tape.sub(y_cycle, y), 1));
  const Tensor x_term = tape.mean(tape.l1_norm(tape.sub(x_cycle, x), 1));
  return tape.add(y_term, x_term);
}

Objective composite_objective(Tape& tape, const LossWeights& weights,
                              const LossComponents& c) {
  weights.validate();
  const bool has_contra = c.contrastive.defined();
  const bool has_ms = c.mode_seeking.defined();
  const bool has_lr = c.latent_regression.defined();
  auto mismatch = [&](const char* term) {
    return ConfigError(fmt::format("composite_objective: {} term does not match mode '{}'", term,
                                   to_string(weights.mode)));
  };
  if (has_contra && weights.mode != LossMode::kDivco) throw mismatch("contrastive");
  if (has_ms && weights.mode != LossMode::kModeSeeking) throw mismatch("mode seeking");
  if (has_lr && weights.mode != LossMode::kLatentRegression) throw mismatch("latent regression");

  Objective out;
  if (c.adversarial.defined()) out.discriminator = tape.neg(c.adversarial);
  if (!c.generator_adversarial.defined()) return out;

  Tensor reg;
  switch (weights.mode) {
    case LossMode::kDivco: reg = c.contrastive; break;
    case LossMode::kModeSeeking: reg = c.mode_seeking; break;
    case LossMode::kLatentRegression: reg = c.latent_regression; break;
    case LossMode::kAdversarialOnly: break;
  }
  if (weights.mode != LossMode::kAdversarialOnly && !reg.defined()) {
    throw mismatch("missing diversity");
  }
  Tensor g = c.generator_adversarial;
  if (reg.defined()) {
    out.regularizer = tape.scale(reg, weights.lambda_contra);
    g = tape.add(g, out.regularizer);
  }
  if (weights.lambda_opt > 0.0) {
    if (!c.optional.defined()) {
      throw ConfigError("composite_objective: lambda_opt > 0 but no reconstruction term was given");
    }
    g = tape.add(g, tape.scale(c.optional, weights.lambda_opt));
  }
  out.generator = g;
  return out;
}

}  // namespace divco::losses
