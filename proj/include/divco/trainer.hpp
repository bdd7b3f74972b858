#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "divco/autodiff/adam.hpp"
#include "divco/checkpoint.hpp"
#include "divco/config.hpp"
#include "divco/error.hpp"
#include "divco/eval.hpp"
#include "divco/models.hpp"
#include "divco/rng.hpp"

namespace divco::train {

// Stream indices passed to derive_seed(seed, ·).
inline constexpr std::uint64_t kInitStream = 0;
inline constexpr std::uint64_t kTrainStream = 1;
inline constexpr std::uint64_t kEvalStream = 2;

// Loss values of one iteration. g_reg is the unweighted diversity term of the
// active mode (0 in adversarial_only mode).
struct StepLosses {
  double d_loss = 0.0;
  double g_total = 0.0;
  double g_adv = 0.0;
  double g_reg = 0.0;
  double g_opt = 0.0;
  std::size_t zero_features = 0;
};

struct Snapshot {
  std::size_t iter = 0;
  StepLosses losses;
  eval::MetricsReport metrics;
};

struct RunLog {
  std::vector<Snapshot> snapshots;
  // Iterations at which training was resumed from a checkpoint.
  std::vector<std::size_t> resumed_at;

  // Iterations strictly increasing, all losses finite.
  void validate() const;
};

// Non-finite value during a training step.
class TrainingError : public NumericError {
 public:
  TrainingError(std::size_t iteration, std::string breakdown, const std::string& cause);

  std::size_t iteration() const { return iteration_; }
  const std::string& breakdown() const { return breakdown_; }

 private:
  std::size_t iteration_;
  std::string breakdown_;
};

// Fixed evaluation material of a run: k-means bins over real samples and a
// latent set of `samples_per_class` codes per class.
struct EvalSet {
  std::uint64_t seed = 0;
  eval::BinModel bins;
  std::vector<ad::Tensor> latents;  // one samples_per_class × d tensor per class
};

std::uint64_t default_eval_seed(const ExperimentConfig& cfg);
EvalSet make_eval_set(const ExperimentConfig& cfg, std::uint64_t seed);

// G applied to every latent of the set, labelled by class.
std::vector<synth::LabeledSample> generate_samples(const models::Generator& g,
                                                   const EvalSet& set);
eval::MetricsReport evaluate_generator(const models::Generator& g, const ExperimentConfig& cfg,
                                       const EvalSet& set);

// FNV-1a over the bit patterns of the parameter values.
std::uint64_t parameter_hash(std::span<const ad::Tensor> params);

// Architecture description stored in checkpoint headers.
nlohmann::json architecture_json(const ExperimentConfig& cfg);

// Throws DimensionError listing every architecture field in the checkpoint
// header that differs from `cfg`.
void check_architecture(const ExperimentConfig& cfg, const models::Checkpoint& ckpt);

// Generator restored from a checkpoint written for `cfg`.
models::Generator load_generator(const ExperimentConfig& cfg, const models::Checkpoint& ckpt);

class Trainer {
 public:
  explicit Trainer(ExperimentConfig cfg);

  // Restores parameters, optimizer moments, RNG and iteration from a
  // checkpoint that carries trainer state. The architecture must match.
  static Trainer resume(ExperimentConfig cfg, const models::Checkpoint& ckpt);

  // One iteration: d_steps_per_g_step discriminator steps, then one generator
  // step on the composite objective.
  StepLosses step();

  Snapshot snapshot(const StepLosses& losses) const;

  // Steps until total_iters, recording a snapshot every snapshot_every
  // iterations and at the last one.
  void run(const std::function<void(const Snapshot&)>& on_snapshot = {});

  void save(const std::string& path) const;

  std::size_t iteration() const { return iteration_; }
  const ExperimentConfig& config() const { return cfg_; }
  const RunLog& log() const { return log_; }
  const EvalSet& eval_set() const { return eval_set_; }
  const models::Generator& generator() const { return g_; }
  const models::Discriminator& discriminator() const { return d_; }
  const RngStream& rng() const { return rng_; }

  // Checkpoint order: generator, discriminator trunk, discriminator head,
  // latent regression head (latent_regression mode only).
  std::vector<ad::Tensor> parameters() const;

 private:
  struct Batch {
    std::vector<std::size_t> labels;
    ad::Tensor cond;
    ad::Tensor real;
    ad::Tensor z;
  };

  Batch draw_batch();
  double discriminator_step(const Batch& batch);
  void generator_step(const Batch& batch, StepLosses& out);
  std::vector<ad::Adam*> optimizers();
  std::vector<const ad::Adam*> optimizers() const;

  ExperimentConfig cfg_;
  models::Generator g_;
  models::Discriminator d_;
  std::optional<models::LatentRegressionHead> head_;
  ad::Adam adam_g_;
  ad::Adam adam_d_;
  std::optional<ad::Adam> adam_enc_;
  RngStream rng_;
  EvalSet eval_set_;
  std::size_t iteration_ = 0;
  RunLog log_;
};

// Trains one run into `run_dir` (log.csv, final.ckpt, effective_config.json).
// With `resume_from`, training continues from that checkpoint and log.csv is
// appended to after a resume marker line.
struct RunResult {
  RunLog log;
  std::string run_dir;
  // Final generator applied to the run's evaluation latents.
  std::vector<synth::LabeledSample> samples;
};

RunResult run_to_directory(const ExperimentConfig& cfg, const std::string& run_dir,
                           const std::optional<std::string>& resume_from = std::nullopt);

}  // namespace divco::train
