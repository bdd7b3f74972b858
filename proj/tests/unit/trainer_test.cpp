#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "divco/checkpoint.hpp"
#include "divco/config.hpp"
#include "divco/error.hpp"
#include "divco/trainer.hpp"

namespace divco::train {
namespace {

namespace fs = std::filesystem;

ExperimentConfig small(losses::LossMode mode = losses::LossMode::kDivco, std::size_t iters = 100) {
  ExperimentConfig c;
  c.train.mode = mode;
  c.train.total_iters = iters;
  c.train.snapshot_every = 50;
  c.train.batch_size = 16;
  c.train.num_negatives = 4;
  c.train.g_hidden = {16, 16};
  c.train.d_hidden = {16, 16};
  c.eval.samples_per_class = 200;
  c.eval.real_samples_per_class = 200;
  c.eval.bins = 5;
  c.validate();
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class TrainerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("divco_trainer_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

TEST_F(TrainerTest, SameSeedSameRun) {
  for (auto mode : {losses::LossMode::kDivco, losses::LossMode::kModeSeeking,
                    losses::LossMode::kLatentRegression, losses::LossMode::kAdversarialOnly}) {
    Trainer a(small(mode, 30)), b(small(mode, 30));
    a.run();
    b.run();
    EXPECT_EQ(parameter_hash(a.parameters()), parameter_hash(b.parameters())) << losses::to_string(mode);
    EXPECT_EQ(a.log().snapshots.back().losses.g_total, b.log().snapshots.back().losses.g_total);
  }
}

TEST_F(TrainerTest, DifferentSeedDifferentRun) {
  auto c = small(losses::LossMode::kDivco, 10);
  Trainer a(c);
  c.train.seed = 2;
  Trainer b(c);
  a.run();
  b.run();
  EXPECT_NE(parameter_hash(a.parameters()), parameter_hash(b.parameters()));
}

TEST_F(TrainerTest, ZeroContrastWeightEqualsAdversarialOnly) {
  auto divco = small(losses::LossMode::kDivco, 100);
  divco.train.lambda_contra = 0.0;
  Trainer a(divco);
  Trainer b(small(losses::LossMode::kAdversarialOnly, 100));
  for (int i = 0; i < 100; ++i) {
    const auto la = a.step();
    const auto lb = b.step();
    ASSERT_EQ(la.d_loss, lb.d_loss) << "iteration " << i + 1;
    ASSERT_EQ(la.g_total, lb.g_total) << "iteration " << i + 1;
  }
  EXPECT_EQ(parameter_hash(a.parameters()), parameter_hash(b.parameters()));
}

TEST_F(TrainerTest, GeneratorStepLeavesDiscriminatorAloneUnlessEncoderIsTrained) {
  Trainer t(small());
  for (int i = 0; i < 20; ++i) EXPECT_NO_THROW(t.step());

  auto c = small();
  c.train.contra_updates_encoder = true;
  Trainer enc(c);
  Trainer plain(small());
  for (int i = 0; i < 5; ++i) {
    enc.step();
    plain.step();
  }
  // Same D steps; only the encoder update differs.
  EXPECT_NE(parameter_hash(enc.discriminator().trunk_params()),
            parameter_hash(plain.discriminator().trunk_params()));
}

TEST_F(TrainerTest, NonFiniteParameterAbortsWithIteration) {
  Trainer t(small());
  t.step();
  t.step();
  t.generator().params()[0].mutable_values()[0] = std::numeric_limits<double>::quiet_NaN();
  try {
    t.step();
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_EQ(e.iteration(), 3u);
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
  }
}

TEST_F(TrainerTest, StaleGradientFailsTheStep) {
  Trainer t(small());
  t.step();
  t.generator().params()[0].mutable_grad()[0] = 1.0;
  EXPECT_THROW(t.step(), StateError);
}

TEST_F(TrainerTest, ResumeMatchesUninterruptedRun) {
  for (auto mode : {losses::LossMode::kDivco, losses::LossMode::kLatentRegression}) {
    const auto cfg = small(mode, 200);
    Trainer full(cfg);
    full.run();

    Trainer first(cfg);
    for (int i = 0; i < 100; ++i) first.step();
    first.save(path("mid.ckpt"));
    auto second = Trainer::resume(cfg, models::read_checkpoint(path("mid.ckpt")));
    EXPECT_EQ(second.iteration(), 100u);
    second.run();

    EXPECT_EQ(parameter_hash(second.parameters()), parameter_hash(full.parameters()));
    const auto& a = full.log().snapshots.back();
    const auto& b = second.log().snapshots.back();
    EXPECT_EQ(a.iter, b.iter);
    EXPECT_EQ(a.metrics.jsd, b.metrics.jsd);
    EXPECT_EQ(a.metrics.ndb, b.metrics.ndb);
    EXPECT_EQ(a.metrics.class_fidelity, b.metrics.class_fidelity);
    EXPECT_EQ(a.losses.g_total, b.losses.g_total);
    EXPECT_EQ(second.log().resumed_at, (std::vector<std::size_t>{100}));
  }
}

TEST_F(TrainerTest, ResumeWithNothingLeftWritesTheSameCheckpoint) {
  const auto cfg = small(losses::LossMode::kDivco, 20);
  Trainer t(cfg);
  t.run();
  t.save(path("a.ckpt"));
  auto r = Trainer::resume(cfg, models::read_checkpoint(path("a.ckpt")));
  r.run();
  r.save(path("b.ckpt"));
  EXPECT_EQ(slurp(path("a.ckpt")), slurp(path("b.ckpt")));
}

TEST_F(TrainerTest, ResumeRejectsMismatchedArchitecture) {
  const auto cfg = small(losses::LossMode::kDivco, 20);
  Trainer t(cfg);
  t.step();
  t.save(path("a.ckpt"));
  auto other = cfg;
  other.train.latent_dim = 3;
  try {
    Trainer::resume(other, models::read_checkpoint(path("a.ckpt")));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("latent_dim"), std::string::npos) << e.what();
  }
  auto wider = cfg;
  wider.train.g_hidden = {32, 16};
  EXPECT_THROW(Trainer::resume(wider, models::read_checkpoint(path("a.ckpt"))), DimensionError);
}

TEST_F(TrainerTest, RunDirectoryArtifacts) {
  const auto cfg = small(losses::LossMode::kDivco, 100);
  const auto result = run_to_directory(cfg, path("run"));
  EXPECT_TRUE(fs::exists(path("run/log.csv")));
  EXPECT_TRUE(fs::exists(path("run/final.ckpt")));
  EXPECT_TRUE(fs::exists(path("run/effective_config.json")));
  EXPECT_EQ(result.log.snapshots.size(), 2u);
  EXPECT_EQ(result.samples.size(), 400u);

  // The checkpointed generator reproduces the final snapshot on the same eval set.
  const auto ckpt = models::read_checkpoint(path("run/final.ckpt"));
  const auto g = load_generator(cfg, ckpt);
  const auto m = evaluate_generator(g, cfg, make_eval_set(cfg, default_eval_seed(cfg)));
  EXPECT_EQ(m.jsd, result.log.snapshots.back().metrics.jsd);
  EXPECT_EQ(m.diversity, result.log.snapshots.back().metrics.diversity);
}

TEST_F(TrainerTest, LogValidation) {
  RunLog log;
  log.snapshots.push_back({10, {}, {}});
  log.snapshots.push_back({10, {}, {}});
  EXPECT_THROW(log.validate(), StateError);
}

}  // namespace
}  // namespace divco::train
