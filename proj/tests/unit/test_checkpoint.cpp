#include <gtest/gtest.h>

#include <cstring>

#include "segforge/checkpoint.hpp"
#include "segforge/error.hpp"
#include "test_util.hpp"

using namespace segforge;

namespace {

const std::filesystem::path kFixture = std::filesystem::path(SEGFORGE_FIXTURE_DIR) / "toy_unet_seed1.ckpt";

template <typename T>
T read_le(const std::string& b, std::size_t& at) {
  T v{};
  std::memcpy(&v, b.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

CheckpointErrorKind kind_of(const std::string& bytes) {
  try {
    parse_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "parse succeeded";
  return CheckpointErrorKind::kIo;
}

Model trained_toy(std::uint64_t seed) {
  Model m = Model::build(toy_model_config(16), seed);
  // One train-mode pass moves the running statistics off their initial values.
  m.forward(testutil::random_tensor(Shape{2, 3, 16, 16}, seed + 1, 0.0, 1.0), Mode::kTrain);
  tape().clear();
  return m;
}

}  // namespace

TEST(Checkpoint, LayoutMatchesFormat) {
  Model m = trained_toy(1);
  const std::string b = checkpoint_bytes(m, {{"epoch", 3}});
  std::size_t at = 0;
  EXPECT_EQ(b.substr(0, 4), "SFCK");
  at = 4;
  EXPECT_EQ(read_le<std::uint32_t>(b, at), 1u);
  const auto json_len = read_le<std::uint32_t>(b, at);
  const std::string json = b.substr(at, json_len);
  at += json_len;
  EXPECT_NE(json.find("\"model\""), std::string::npos);
  EXPECT_NE(json.find("\"epoch\""), std::string::npos);
  const auto records = read_le<std::uint32_t>(b, at);
  EXPECT_EQ(records, m.store().parameters().size() + m.store().buffers().size());

  // Walk every record with an independent reader.
  std::size_t values = 0;
  for (std::uint32_t r = 0; r < records; ++r) {
    const auto name_len = read_le<std::uint16_t>(b, at);
    const std::string name = b.substr(at, name_len);
    at += name_len;
    const auto dtype = read_le<std::uint8_t>(b, at);
    EXPECT_EQ(dtype, 0u);  // single-precision build
    const auto rank = read_le<std::uint8_t>(b, at);
    std::size_t n = 1;
    for (int d = 0; d < rank; ++d) n *= read_le<std::uint32_t>(b, at);
    if (r == 0) {
      EXPECT_EQ(name, m.store().parameters()[0].name);
    }
    at += n * sizeof(float);
    values += n;
  }
  EXPECT_EQ(at, b.size());
  std::size_t expected = m.parameter_count();
  for (const auto& buf : m.store().buffers()) expected += buf.value.numel();
  EXPECT_EQ(values, expected);
}

TEST(Checkpoint, RoundTripIsIdentity) {
  testutil::TempDir dir("ckpt");
  Model m = trained_toy(2);
  save_checkpoint(m, dir / "a.ckpt", {{"val_dice", 0.5}});
  Checkpoint c = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(c.model.config(), m.config());
  EXPECT_EQ(c.meta.at("val_dice"), 0.5);
  save_checkpoint(c.model, dir / "b.ckpt", c.meta);
  EXPECT_EQ(testutil::read_file(dir / "a.ckpt"), testutil::read_file(dir / "b.ckpt"));
  for (int i = 0; i < 10; ++i) {
    Tensor x = testutil::random_tensor(Shape{1, 3, 16, 16}, 100 + i, 0.0, 1.0);
    EXPECT_TRUE(testutil::bitwise_equal(m.forward(x, Mode::kInfer), c.model.forward(x, Mode::kInfer)));
  }
}

TEST(Checkpoint, CommittedFixtureStillLoads) {
  ASSERT_TRUE(std::filesystem::exists(kFixture));
  const std::string bytes = testutil::read_file(kFixture);
  Checkpoint c = parse_checkpoint(bytes);
  EXPECT_EQ(c.model.config(), toy_model_config(16, Architecture::kUNet));
  EXPECT_EQ(checkpoint_bytes(c.model, c.meta), bytes);
  // The fixture holds the seed-1 initialisation, so the builder must still
  // produce the same weights.
  EXPECT_EQ(checkpoint_bytes(Model::build(toy_model_config(16, Architecture::kUNet), 1), c.meta), bytes);
}

TEST(Checkpoint, TruncationAtEveryLengthIsAnError) {
  const std::string b = checkpoint_bytes(Model::build(toy_model_config(16, Architecture::kUNet), 3));
  EXPECT_EQ(kind_of(b.substr(0, b.size() - 1)), CheckpointErrorKind::kTruncatedRecord);
  for (std::size_t len = 0; len < b.size(); len += 97) {
    EXPECT_THROW(parse_checkpoint(b.substr(0, len)), CheckpointError) << len;
  }
}

TEST(Checkpoint, DistinctErrorKinds) {
  const std::string b = checkpoint_bytes(Model::build(toy_model_config(16, Architecture::kUNet), 4));
  std::string bad = b;
  bad[0] = 'X';
  EXPECT_EQ(kind_of(bad), CheckpointErrorKind::kBadMagic);
  bad = b;
  bad[4] = 2;
  EXPECT_EQ(kind_of(bad), CheckpointErrorKind::kVersionMismatch);

  // Rename the first record without changing its length.
  std::size_t at = 8;
  const auto json_len = read_le<std::uint32_t>(b, at);
  at += json_len + 4 + 2;
  bad = b;
  bad[at] = '#';
  EXPECT_EQ(kind_of(bad), CheckpointErrorKind::kUnknownParameter);

  EXPECT_EQ(kind_of(b + "x"), CheckpointErrorKind::kMalformed);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.ckpt"), CheckpointError);
  try {
    load_checkpoint("/nonexistent/dir/x.ckpt");
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointErrorKind::kIo);
  }
}
