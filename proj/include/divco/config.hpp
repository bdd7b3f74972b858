#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "divco/autodiff/adam.hpp"
#include "divco/losses.hpp"
#include "divco/models.hpp"
#include "divco/synthdata.hpp"

namespace divco {

inline constexpr const char* kToolName = "divco-lab";
inline constexpr const char* kToolVersion = "0.1.0";

// Optional reconstruction task wired into L_opt.
enum class OptTask { kNone, kPaired };

struct TrainConfig {
  losses::LossMode mode = losses::LossMode::kDivco;
  double lambda_contra = 1.0;
  double lambda_opt = 0.0;
  double tau = 1.0;
  double radius = 0.001;
  std::size_t num_negatives = 10;
  std::size_t latent_dim = 2;
  std::size_t batch_size = 64;
  std::size_t d_steps_per_g_step = 1;
  std::size_t total_iters = 20'000;
  ad::AdamOptions adam{};
  std::uint64_t seed = 1;
  std::size_t snapshot_every = 1'000;
  losses::GeneratorLoss generator_loss = losses::GeneratorLoss::kNonSaturating;
  // When set, the contrastive term also trains the discriminator trunk that
  // serves as its encoder (through a separate optimizer).
  bool contra_updates_encoder = false;
  std::vector<std::size_t> g_hidden{128, 128};
  std::vector<std::size_t> d_hidden{128, 128};
  models::Activation hidden_activation = models::Activation::kLeakyRelu;
  std::size_t max_retries = 10'000;
  double mode_seeking_eps = losses::kModeSeekingEps;
  OptTask opt_task = OptTask::kNone;

  void validate() const;
  losses::LossWeights weights() const;
};

struct EvalSettings {
  std::size_t bins = 10;
  double alpha = 0.05;
  double coverage_threshold = 0.01;
  std::size_t samples_per_class = 5'000;
  std::size_t real_samples_per_class = 5'000;
  std::size_t kmeans_iters = 100;
  // Seed of the evaluation set; derived from the training seed when unset.
  std::optional<std::uint64_t> seed;

  void validate() const;
};

struct SweepAxes {
  std::vector<double> lambda_contra{0.1, 1.0, 3.0, 10.0};
  std::vector<double> tau{0.1, 1.0, 10.0};
  std::vector<double> radius{1e-4, 1e-3, 1e-2, 1e-1};
};

enum class ColorBy { kClass, kMode };

struct FigureSettings {
  std::size_t points_per_panel = 2'000;
  ColorBy color_by = ColorBy::kClass;
};

struct ExperimentConfig {
  TrainConfig train;
  synth::GmmSpec gmm = synth::default_toy_spec();
  EvalSettings eval;
  SweepAxes sweep;
  FigureSettings figure;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string output_dir = "out";

  void validate() const;
};

std::string to_string(OptTask task);

nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const EvalSettings& e);
nlohmann::json to_json(const synth::GmmSpec& g);
nlohmann::json to_json(const ExperimentConfig& c);

// Strict conversion: unknown keys and wrongly typed values throw ConfigError
// naming the key path. Missing keys keep their defaults.
ExperimentConfig experiment_from_json(const nlohmann::json& doc);
synth::GmmSpec gmm_from_json(const nlohmann::json& doc);

// Parses a config document. Syntax errors throw ConfigError carrying the
// line and column.
nlohmann::json parse_config_text(const std::string& text, const std::string& source);
nlohmann::json read_config_file(const std::string& path);

// Applies "key=value". The key is a dotted path ("train.seed"); a bare key is
// looked up at the top level first, then in the train section. The value is
// parsed as JSON when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// File + overrides -> validated typed config.
ExperimentConfig load_experiment(const std::string& path,
                                 const std::vector<std::string>& overrides = {});

}  // namespace divco
