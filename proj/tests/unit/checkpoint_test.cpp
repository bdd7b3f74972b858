#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "divco/checkpoint.hpp"
#include "divco/error.hpp"
#include "support.hpp"

namespace divco::models {
namespace {

namespace fs = std::filesystem;

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("divco_ckpt_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::vector<ad::Tensor> params() {
    RngStream rng(1);
    auto a = testing::random_tensor(rng, {3, 4});
    a.set_name("g.w0");
    auto b = testing::random_tensor(rng, {1, 4});
    b.set_name("g.b0");
    return {a, b};
  }

  fs::path dir_;
};

TEST_F(CheckpointTest, RoundTripWithState) {
  const auto p = params();
  TrainerState st;
  st.iteration = 42;
  st.rng_state = "1 2 3";
  st.optimizers.push_back({7, {{1.0, 2.0}}, {{3.0, 4.0}}});
  write_checkpoint(path("a.ckpt"), {{"tool", "x"}}, p, &st);

  const auto ck = read_checkpoint(path("a.ckpt"));
  EXPECT_EQ(ck.header["tool"], "x");
  ASSERT_EQ(ck.tensors.size(), 2u);
  EXPECT_EQ(ck.tensors[0].shape, (ad::Shape{3, 4}));
  EXPECT_TRUE(std::equal(ck.tensors[0].values.begin(), ck.tensors[0].values.end(), p[0].values().begin()));
  ASSERT_TRUE(ck.state.has_value());
  EXPECT_EQ(ck.state->iteration, 42u);
  EXPECT_EQ(ck.state->rng_state, "1 2 3");
  EXPECT_EQ(ck.state->optimizers[0].steps, 7);
  EXPECT_EQ(ck.state->optimizers[0].second[0], (std::vector<double>{3.0, 4.0}));

  auto fresh = params();
  for (auto& t : fresh) std::fill(t.mutable_values().begin(), t.mutable_values().end(), 0.0);
  auto with_names = fresh;
  with_names[0].set_name("g.w0");
  with_names[1].set_name("g.b0");
  load_parameters(ck, with_names);
  EXPECT_EQ(with_names[0].at(2, 3), p[0].at(2, 3));
}

TEST_F(CheckpointTest, WithoutState) {
  write_checkpoint(path("b.ckpt"), nlohmann::json::object(), params(), nullptr);
  EXPECT_FALSE(read_checkpoint(path("b.ckpt")).state.has_value());
}

TEST_F(CheckpointTest, BadMagicAndTruncationAreIoErrors) {
  {
    std::ofstream out(path("junk.ckpt"), std::ios::binary);
    out << "NOTACKPT and some more bytes";
  }
  EXPECT_THROW(read_checkpoint(path("junk.ckpt")), IoError);
  write_checkpoint(path("c.ckpt"), {{"k", 1}}, params(), nullptr);
  const auto size = fs::file_size(path("c.ckpt"));
  fs::resize_file(path("c.ckpt"), size - 9);
  EXPECT_THROW(read_checkpoint(path("c.ckpt")), IoError);
  EXPECT_THROW(read_checkpoint(path("missing.ckpt")), IoError);
}

TEST_F(CheckpointTest, ShapeMismatchListsEveryOffendingTensor) {
  write_checkpoint(path("d.ckpt"), {{"k", 1}}, params(), nullptr);
  const auto ck = read_checkpoint(path("d.ckpt"));
  auto wrong = std::vector<ad::Tensor>{ad::Tensor::zeros({4, 4}), ad::Tensor::zeros({1, 5})};
  wrong[0].set_name("g.w0");
  wrong[1].set_name("g.b0");
  try {
    load_parameters(ck, wrong);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("g.w0"), std::string::npos) << msg;
    EXPECT_NE(msg.find("g.b0"), std::string::npos) << msg;
  }
  auto fewer = std::vector<ad::Tensor>{wrong[0]};
  EXPECT_THROW(load_parameters(ck, fewer), DimensionError);
}

TEST_F(CheckpointTest, WriteFailureIsAnIoError) {
  EXPECT_THROW(write_checkpoint(path("no/such/dir/e.ckpt"), {{"k", 1}}, params(), nullptr), IoError);
}

}  // namespace
}  // namespace divco::models
