#include "divco/trainer.hpp"

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>

#include <fmt/format.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "divco/latent.hpp"
#include "divco/losses.hpp"
#include "divco/report.hpp"
#include "divco/synthdata.hpp"

namespace divco::train {

using ad::Tape;
using ad::Tensor;
using losses::LossMode;
using models::ParamUse;

namespace {

constexpr std::size_t kDataDim = 2;

bool all_finite(const StepLosses& l) {
  return std::isfinite(l.d_loss) && std::isfinite(l.g_total) && std::isfinite(l.g_adv) &&
         std::isfinite(l.g_reg) && std::isfinite(l.g_opt);
}

std::vector<Tensor> concat(std::vector<Tensor> a, const std::vector<Tensor>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void check_stale(const ad::Adam& opt, const char* which) {
  for (const auto& p : opt.params()) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) {
      if (g != 0.0) {
        throw StateError(fmt::format("{} step: stale gradient on '{}' before backward", which,
                                     p.name()));
      }
    }
  }
}

// Values seen so far in a step, for the abort diagnostic.
struct Partial {
  std::optional<double> d_loss, g_adv, g_reg, g_opt, g_total;

  std::string str() const {
    auto f = [](const std::optional<double>& v) {
      return v ? fmt::format("{:.9g}", *v) : std::string("n/a");
    };
    return fmt::format("d_loss={} g_adv={} g_reg={} g_opt={} g_total={}", f(d_loss), f(g_adv),
                       f(g_reg), f(g_opt), f(g_total));
  }
};

thread_local Partial* current_partial = nullptr;

void note(std::optional<double> Partial::*field, double v) {
  if (current_partial != nullptr) current_partial->*field = v;
}

models::Generator build_generator(const ExperimentConfig& cfg) {
  return models::Generator(cfg.train.latent_dim, cfg.gmm.num_classes(), kDataDim,
                           cfg.train.g_hidden, cfg.train.hidden_activation);
}

models::Discriminator build_discriminator(const ExperimentConfig& cfg) {
  return models::Discriminator(kDataDim, cfg.gmm.num_classes(), cfg.train.d_hidden,
                               cfg.train.hidden_activation);
}

std::optional<models::LatentRegressionHead> build_head(const ExperimentConfig& cfg,
                                                       const models::Discriminator& d) {
  if (cfg.train.mode != LossMode::kLatentRegression) return std::nullopt;
  return models::LatentRegressionHead(d.feature_dim(), cfg.train.latent_dim);
}

std::vector<Tensor> generator_side(const models::Generator& g,
                                   const std::optional<models::LatentRegressionHead>& head) {
  auto p = g.params();
  if (head) p = concat(std::move(p), head->params());
  return p;
}

// A divco generator step allocates and frees dozens of ~1 MB activation
// buffers. glibc's defaults hand those to mmap/munmap or trim the heap after
// every step, which turns each step into thousands of page faults.
void keep_heap_warm() {
#if defined(__GLIBC__)
  static std::once_flag once;
  std::call_once(once, [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
#endif
}

}  // namespace

void RunLog::validate() const {
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    if (i > 0 && snapshots[i].iter <= snapshots[i - 1].iter) {
      throw StateError(fmt::format("run log: iteration {} follows {}", snapshots[i].iter,
                                   snapshots[i - 1].iter));
    }
    if (!all_finite(snapshots[i].losses)) {
      throw NumericError(fmt::format("run log: non-finite loss at iteration {}",
                                     snapshots[i].iter));
    }
  }
}

TrainingError::TrainingError(std::size_t iteration, std::string breakdown,
                             const std::string& cause)
    : NumericError(fmt::format("training aborted at iteration {}: {} [{}]", iteration, cause,
                               breakdown)),
      iteration_(iteration),
      breakdown_(std::move(breakdown)) {}

std::uint64_t default_eval_seed(const ExperimentConfig& cfg) {
  return cfg.eval.seed.value_or(derive_seed(cfg.train.seed, kEvalStream));
}

EvalSet make_eval_set(const ExperimentConfig& cfg, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<synth::Point2> real;
  for (std::size_t c = 0; c < cfg.gmm.num_classes(); ++c) {
    for (const auto& s : synth::sample(cfg.gmm, rng, c, cfg.eval.real_samples_per_class)) {
      real.push_back(s.point);
    }
  }
  EvalSet set;
  set.seed = seed;
  set.bins = eval::fit_bins(real, cfg.eval.bins, rng, cfg.eval.kmeans_iters);
  const std::size_t n = cfg.eval.samples_per_class;
  const std::size_t d = cfg.train.latent_dim;
  for (std::size_t c = 0; c < cfg.gmm.num_classes(); ++c) {
    std::vector<double> z;
    z.reserve(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = latent::sample_prior(rng, d);
      z.insert(z.end(), row.begin(), row.end());
    }
    set.latents.push_back(Tensor::from({n, d}, std::move(z)));
  }
  return set;
}

std::vector<synth::LabeledSample> generate_samples(const models::Generator& g,
                                                   const EvalSet& set) {
  std::vector<synth::LabeledSample> out;
  for (std::size_t c = 0; c < set.latents.size(); ++c) {
    const Tensor& z = set.latents[c];
    const std::vector<std::size_t> labels(z.rows(), c);
    Tape tape;
    const Tensor x = g.forward(tape, z, models::one_hot(labels, g.num_classes()), ParamUse::kFrozen);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      synth::LabeledSample s;
      s.point = {x.at(i, 0), x.at(i, 1)};
      s.label = c;
      out.push_back(s);
    }
  }
  return out;
}

eval::MetricsReport evaluate_generator(const models::Generator& g, const ExperimentConfig& cfg,
                                       const EvalSet& set) {
  const auto samples = generate_samples(g, set);
  return eval::evaluate(cfg.gmm, set.bins, samples, {cfg.eval.alpha, cfg.eval.coverage_threshold});
}

std::uint64_t parameter_hash(std::span<const Tensor> params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params) {
    for (double v : p.values()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

nlohmann::json architecture_json(const ExperimentConfig& cfg) {
  return {
      {"latent_dim", cfg.train.latent_dim},
      {"num_classes", cfg.gmm.num_classes()},
      {"data_dim", kDataDim},
      {"g_hidden", cfg.train.g_hidden},
      {"d_hidden", cfg.train.d_hidden},
      {"hidden_activation", models::to_string(cfg.train.hidden_activation)},
      {"latent_regression_head", cfg.train.mode == LossMode::kLatentRegression},
      {"encoder_optimizer", cfg.train.contra_updates_encoder},
  };
}

void check_architecture(const ExperimentConfig& cfg, const models::Checkpoint& ckpt) {
  const auto expected = architecture_json(cfg);
  const auto stored = ckpt.header.value("architecture", nlohmann::json::object());
  std::vector<std::string> diffs;
  for (const auto& [key, value] : expected.items()) {
    if (!stored.contains(key) || stored[key] != value) {
      diffs.push_back(fmt::format("{}: checkpoint {} vs config {}", key,
                                  stored.contains(key) ? stored[key].dump() : "missing",
                                  value.dump()));
    }
  }
  if (!diffs.empty()) {
    std::string msg = "checkpoint architecture does not match the config:";
    for (const auto& d : diffs) msg += "\n  " + d;
    throw DimensionError(msg);
  }
}

models::Generator load_generator(const ExperimentConfig& cfg, const models::Checkpoint& ckpt) {
  cfg.validate();
  models::Generator g = build_generator(cfg);
  const models::Discriminator d = build_discriminator(cfg);
  const auto head = build_head(cfg, d);
  auto params = concat(g.params(), d.trunk_params());
  params = concat(std::move(params), d.head_params());
  if (head) params = concat(std::move(params), head->params());
  models::load_parameters(ckpt, params);
  check_architecture(cfg, ckpt);
  return g;
}

Trainer::Trainer(ExperimentConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      g_(build_generator(cfg_)),
      d_(build_discriminator(cfg_)),
      head_(build_head(cfg_, d_)),
      adam_g_(generator_side(g_, head_), cfg_.train.adam),
      adam_d_(d_.params(), cfg_.train.adam),
      rng_(derive_seed(cfg_.train.seed, kTrainStream)),
      eval_set_(make_eval_set(cfg_, default_eval_seed(cfg_))) {
  keep_heap_warm();
  if (cfg_.train.contra_updates_encoder) adam_enc_.emplace(d_.trunk_params(), cfg_.train.adam);
  RngStream init(derive_seed(cfg_.train.seed, kInitStream));
  g_.init(init);
  d_.init(init);
  if (head_) head_->init(init);
}

std::vector<Tensor> Trainer::parameters() const {
  auto p = concat(g_.params(), d_.trunk_params());
  p = concat(std::move(p), d_.head_params());
  if (head_) p = concat(std::move(p), head_->params());
  return p;
}

std::vector<ad::Adam*> Trainer::optimizers() {
  std::vector<ad::Adam*> out{&adam_g_, &adam_d_};
  if (adam_enc_) out.push_back(&*adam_enc_);
  return out;
}

std::vector<const ad::Adam*> Trainer::optimizers() const {
  std::vector<const ad::Adam*> out{&adam_g_, &adam_d_};
  if (adam_enc_) out.push_back(&*adam_enc_);
  return out;
}

Trainer Trainer::resume(ExperimentConfig cfg, const models::Checkpoint& ckpt) {
  if (!ckpt.state) throw IoError("checkpoint carries no trainer state; cannot resume");
  Trainer t(std::move(cfg));
  // Report header and tensor mismatches together.
  std::string problems;
  try {
    check_architecture(t.cfg_, ckpt);
  } catch (const DimensionError& e) {
    problems = e.what();
  }
  auto params = t.parameters();
  try {
    models::load_parameters(ckpt, params);
  } catch (const DimensionError& e) {
    problems += (problems.empty() ? "" : "\n") + std::string(e.what());
  }
  if (!problems.empty()) throw DimensionError(problems);

  const auto& state = *ckpt.state;
  auto opts = t.optimizers();
  if (state.optimizers.size() != opts.size()) {
    throw DimensionError(fmt::format("checkpoint holds {} optimizer states, config needs {}",
                                     state.optimizers.size(), opts.size()));
  }
  for (std::size_t i = 0; i < opts.size(); ++i) {
    const auto& s = state.optimizers[i];
    opts[i]->restore(s.steps, s.first, s.second);
  }
  if (state.iteration > t.cfg_.train.total_iters) {
    throw ConfigError(fmt::format("checkpoint is at iteration {}, beyond total_iters {}",
                                  state.iteration, t.cfg_.train.total_iters));
  }
  t.rng_ = RngStream::deserialize(state.rng_state);
  t.iteration_ = state.iteration;
  t.log_.resumed_at.push_back(state.iteration);
  return t;
}

Trainer::Batch Trainer::draw_batch() {
  const std::size_t b = cfg_.train.batch_size;
  const std::size_t d = cfg_.train.latent_dim;
  Batch batch;
  batch.labels.resize(b);
  for (auto& y : batch.labels) y = rng_.below(cfg_.gmm.num_classes());
  std::vector<double> real;
  real.reserve(b * kDataDim);
  for (std::size_t y : batch.labels) {
    const auto s = synth::sample(cfg_.gmm, rng_, y, 1).front();
    real.push_back(s.point[0]);
    real.push_back(s.point[1]);
  }
  std::vector<double> z;
  z.reserve(b * d);
  for (std::size_t i = 0; i < b; ++i) {
    const auto row = latent::sample_prior(rng_, d);
    z.insert(z.end(), row.begin(), row.end());
  }
  batch.cond = models::one_hot(batch.labels, cfg_.gmm.num_classes());
  batch.real = Tensor::from({b, kDataDim}, std::move(real));
  batch.z = Tensor::from({b, d}, std::move(z));
  return batch;
}

double Trainer::discriminator_step(const Batch& batch) {
  Tape tape;
  const Tensor fake = g_.forward(tape, batch.z, batch.cond, ParamUse::kFrozen);
  const Tensor d_real = d_.discriminate(tape, batch.real, batch.cond, ParamUse::kTrack);
  const Tensor d_fake = d_.discriminate(tape, fake, batch.cond, ParamUse::kTrack);
  losses::LossComponents c;
  c.adversarial = losses::adversarial_loss(tape, d_real, d_fake);
  const auto obj = losses::composite_objective(tape, cfg_.train.weights(), c);
  const double d_loss = obj.discriminator.item();
  note(&Partial::d_loss, d_loss);
  check_stale(adam_d_, "discriminator");
  tape.backward(obj.discriminator);
  adam_d_.step();
  adam_d_.zero_grad();
  return d_loss;
}

void Trainer::generator_step(const Batch& batch, StepLosses& out) {
  const auto& tc = cfg_.train;
  const std::size_t b = tc.batch_size;
  const std::size_t d = tc.latent_dim;
  const std::size_t n = tc.num_negatives;
  const bool contrastive_draws = tc.mode == LossMode::kDivco || tc.mode == LossMode::kAdversarialOnly;

  Tape tape;
  losses::LossComponents c;
  Tensor x_query;

  if (contrastive_draws) {
    // Latent batch [z; z⁺; z⁻]. adversarial_only draws and discards the same
    // codes so its random stream stays aligned with divco.
    std::vector<double> all(b * (n + 2) * d);
    const auto zq = batch.z.values();
    std::copy(zq.begin(), zq.end(), all.begin());
    for (std::size_t i = 0; i < b; ++i) {
      const auto q = zq.subspan(i * d, d);
      const auto pos = latent::sample_positive(rng_, q, tc.radius);
      std::copy(pos.begin(), pos.end(), all.begin() + static_cast<std::ptrdiff_t>((b + i) * d));
      const auto negs = latent::sample_negatives(rng_, q, tc.radius, n, tc.max_retries);
      for (std::size_t k = 0; k < n; ++k) {
        std::copy(negs[k].begin(), negs[k].end(),
                  all.begin() + static_cast<std::ptrdiff_t>((2 * b + i * n + k) * d));
      }
    }
    if (tc.mode == LossMode::kDivco) {
      const Tensor z_all = Tensor::from({b * (n + 2), d}, std::move(all));
      const Tensor cond_parts[] = {batch.cond, batch.cond, tape.repeat_rows(batch.cond, n)};
      const Tensor cond_all = tape.concat_rows(cond_parts);
      const Tensor x_all = g_.forward(tape, z_all, cond_all, ParamUse::kTrack);
      x_query = tape.slice_rows(x_all, 0, b);
      const ParamUse enc = tc.contra_updates_encoder ? ParamUse::kTrack : ParamUse::kFrozen;
      const Tensor f = d_.encode(tape, x_all, cond_all, enc);
      const auto r = losses::contrastive_loss(tape, tape.slice_rows(f, 0, b),
                                              tape.slice_rows(f, b, b),
                                              tape.slice_rows(f, 2 * b, b * n), n, tc.tau);
      c.contrastive = r.loss;
      out.zero_features = r.zero_features;
    } else {
      x_query = g_.forward(tape, batch.z, batch.cond, ParamUse::kTrack);
    }
  } else if (tc.mode == LossMode::kModeSeeking) {
    std::vector<double> z2;
    z2.reserve(b * d);
    for (std::size_t i = 0; i < b; ++i) {
      const auto row = latent::sample_prior(rng_, d);
      z2.insert(z2.end(), row.begin(), row.end());
    }
    const Tensor z2t = Tensor::from({b, d}, std::move(z2));
    const Tensor z_parts[] = {batch.z, z2t};
    const Tensor cond_parts[] = {batch.cond, batch.cond};
    const Tensor x_all =
        g_.forward(tape, tape.concat_rows(z_parts), tape.concat_rows(cond_parts), ParamUse::kTrack);
    x_query = tape.slice_rows(x_all, 0, b);
    c.mode_seeking = losses::mode_seeking_loss(tape, x_query, tape.slice_rows(x_all, b, b),
                                               batch.z, z2t, tc.mode_seeking_eps);
  } else {
    x_query = g_.forward(tape, batch.z, batch.cond, ParamUse::kTrack);
    const Tensor f = d_.encode(tape, x_query, batch.cond, ParamUse::kFrozen);
    c.latent_regression =
        losses::latent_regression_loss(tape, head_->forward(tape, f, ParamUse::kTrack), batch.z);
  }

  const Tensor d_fake = d_.discriminate(tape, x_query, batch.cond, ParamUse::kFrozen);
  c.generator_adversarial = losses::generator_adversarial_loss(tape, d_fake, tc.generator_loss);
  note(&Partial::g_adv, c.generator_adversarial.item());
  if (tc.opt_task == OptTask::kPaired) {
    c.optional = losses::paired_reconstruction_loss(tape, x_query, batch.real);
    out.g_opt = c.optional.item();
    note(&Partial::g_opt, out.g_opt);
  }

  const auto obj = losses::composite_objective(tape, tc.weights(), c);
  out.g_adv = c.generator_adversarial.item();
  for (const Tensor* t : {&c.contrastive, &c.mode_seeking, &c.latent_regression}) {
    if (t->defined()) out.g_reg = t->item();
  }
  note(&Partial::g_reg, out.g_reg);
  out.g_total = obj.generator.item();
  note(&Partial::g_total, out.g_total);

  check_stale(adam_g_, "generator");
  if (adam_enc_) check_stale(*adam_enc_, "encoder");
  tape.backward(obj.generator);
  adam_g_.step();
  adam_g_.zero_grad();
  if (adam_enc_) {
    adam_enc_->step();
    adam_enc_->zero_grad();
  }
}

StepLosses Trainer::step() {
  if (iteration_ >= cfg_.train.total_iters) {
    throw StateError(fmt::format("step: already at total_iters {}", cfg_.train.total_iters));
  }
  const std::size_t iter = iteration_ + 1;
  Partial partial;
  current_partial = &partial;
  StepLosses out;
  try {
    Batch batch;
    for (std::size_t s = 0; s < cfg_.train.d_steps_per_g_step; ++s) {
      batch = draw_batch();
      out.d_loss = discriminator_step(batch);
    }
    // The generator step must not move D, unless the encoder is trained on purpose.
    const bool guard_d = !adam_enc_.has_value();
    const std::uint64_t d_before = guard_d ? parameter_hash(d_.params()) : 0;
    generator_step(batch, out);
    if (guard_d && parameter_hash(d_.params()) != d_before) {
      throw StateError(fmt::format("iteration {}: generator step changed the discriminator", iter));
    }
  } catch (const TrainingError&) {
    current_partial = nullptr;
    throw;
  } catch (const NumericError& e) {
    current_partial = nullptr;
    throw TrainingError(iter, partial.str(), e.what());
  }
  current_partial = nullptr;
  if (!all_finite(out)) throw TrainingError(iter, partial.str(), "non-finite loss");
  iteration_ = iter;
  return out;
}

Snapshot Trainer::snapshot(const StepLosses& losses) const {
  return {iteration_, losses, evaluate_generator(g_, cfg_, eval_set_)};
}

void Trainer::run(const std::function<void(const Snapshot&)>& on_snapshot) {
  const std::size_t total = cfg_.train.total_iters;
  while (iteration_ < total) {
    const StepLosses losses = step();
    if (iteration_ % cfg_.train.snapshot_every == 0 || iteration_ == total) {
      log_.snapshots.push_back(snapshot(losses));
      if (on_snapshot) on_snapshot(log_.snapshots.back());
    }
  }
}

void Trainer::save(const std::string& path) const {
  const auto params = parameters();
  nlohmann::json header = {
      {"tool", kToolName},
      {"version", kToolVersion},
      {"architecture", architecture_json(cfg_)},
      {"train", to_json(cfg_.train)},
      {"tensors", models::describe_tensors(params)},
  };
  models::TrainerState state;
  state.iteration = iteration_;
  state.rng_state = rng_.serialize();
  for (const ad::Adam* opt : optimizers()) {
    state.optimizers.push_back({opt->steps(), opt->first_moments(), opt->second_moments()});
  }
  models::write_checkpoint(path, header, params, &state);
}

RunResult run_to_directory(const ExperimentConfig& cfg, const std::string& run_dir,
                           const std::optional<std::string>& resume_from) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(run_dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", run_dir, ec.message()));

  report::write_text((fs::path(run_dir) / "effective_config.json").string(),
                     to_json(cfg).dump(2) + "\n");

  std::optional<Trainer> trainer;
  if (resume_from) {
    trainer.emplace(Trainer::resume(cfg, models::read_checkpoint(*resume_from)));
  } else {
    trainer.emplace(cfg);
  }

  const fs::path log_path = fs::path(run_dir) / "log.csv";
  const bool append = resume_from.has_value() && fs::exists(log_path);
  std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError(fmt::format("cannot open '{}' for writing", log_path.string()));
  if (!append) {
    log << report::csv_comment() << '\n'
        << report::join(report::log_columns(cfg.gmm.num_classes())) << '\n';
  }
  if (resume_from) log << "# resumed at iter " << trainer->iteration() << '\n';
  log.flush();

  trainer->run([&](const Snapshot& s) {
    log << report::log_row(s) << '\n';
    log.flush();
  });
  if (!log) throw IoError(fmt::format("failed writing '{}'", log_path.string()));

  trainer->save((fs::path(run_dir) / "final.ckpt").string());
  trainer->log().validate();
  return {trainer->log(), run_dir, generate_samples(trainer->generator(), trainer->eval_set())};
}

}  // namespace divco::train
