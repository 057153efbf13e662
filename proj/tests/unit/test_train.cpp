#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "segforge/checkpoint.hpp"
#include "segforge/error.hpp"
#include "segforge/train.hpp"
#include "test_util.hpp"

using namespace segforge;

namespace {

TrainConfig quick(const std::filesystem::path& out, std::size_t epochs = 1) {
  TrainConfig c;
  c.lr_max = 1e-3;
  c.batch_size = 4;
  c.epochs = epochs;
  c.seed = 5;
  c.sgdr.t0 = 2;
  c.out_dir = out;
  return c;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.sgdr.lr_min = 1e-3;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, SmokeOneEpochWritesArtifacts) {
  testutil::TempDir dir("smoke");
  Dataset data = synth_dataset(10, 16, 1);
  Model m = Model::build(toy_model_config(16), 2);
  std::size_t calls = 0;
  History h = train(m, data, {data.begin(), data.begin() + 2}, quick(dir.path()), nullptr,
                    [&](const EpochRecord& r) { calls += r.epoch; });
  ASSERT_EQ(h.records.size(), 1u);
  EXPECT_EQ(calls, 1u);
  EXPECT_EQ(h.records[0].epoch, 1u);
  EXPECT_EQ(h.records[0].lr, 1e-3);
  EXPECT_TRUE(std::isfinite(h.records[0].train_loss));
  EXPECT_GE(h.records[0].val.dice, 0.0);
  EXPECT_LE(h.records[0].val.dice, 1.0);
  const auto rows = lines(testutil::read_file(dir / "metrics.csv"));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], kMetricsHeader);
  EXPECT_EQ(rows[1], format_epoch_row(h.records[0]));
  EXPECT_TRUE(std::filesystem::exists(dir / "best.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(dir / "last.ckpt"));
  EXPECT_EQ(load_checkpoint(dir / "last.ckpt").meta.at("epoch"), 1.0);
}

TEST(Train, IdenticalSeedsGiveIdenticalBytes) {
  testutil::TempDir a("det_a"), b("det_b");
  Dataset data = synth_dataset(12, 16, 3);
  AugmentationSpec aug = AugmentationSpec::all_enabled();
  aug.target_size = 16;
  for (auto* dir : {&a, &b}) {
    Model m = Model::build(toy_model_config(16), 4);
    train(m, data, {data.begin(), data.begin() + 3}, quick(dir->path(), 3), &aug);
  }
  for (const char* f : {"metrics.csv", "best.ckpt", "last.ckpt"}) {
    EXPECT_EQ(testutil::read_file(a / f), testutil::read_file(b / f)) << f;
  }
  EXPECT_EQ(lines(testutil::read_file(a / "metrics.csv")).size(), 4u);
}

TEST(Train, LearningRatesFollowSchedule) {
  Dataset data = synth_dataset(10, 16, 6);
  Model m = Model::build(toy_model_config(16), 7);
  TrainConfig c = quick({}, 4);
  History h = train(m, data, {data.begin(), data.begin() + 2}, c);
  SgdrSchedule sched(c.sgdr, c.lr_max);
  for (const auto& r : h.records) EXPECT_EQ(r.lr, sched.lr_at(double(r.epoch - 1)));
  EXPECT_EQ(h.records[2].lr, c.lr_max);  // restart after a 2-epoch cycle
  c.sgdr.enabled = false;
  Model m2 = Model::build(toy_model_config(16), 7);
  for (const auto& r : train(m2, data, {data.begin(), data.begin() + 2}, c).records) EXPECT_EQ(r.lr, c.lr_max);
}

TEST(Train, NumericalFailureKeepsLastGoodCheckpoint) {
  testutil::TempDir dir("nan");
  Dataset data = synth_dataset(10, 16, 8);
  Model m = Model::build(toy_model_config(16), 9);
  std::string good;
  auto poison = [&](const EpochRecord& r) {
    if (r.epoch != 1) return;
    good = checkpoint_bytes(m, {});
    for (auto& p : m.store().parameters()) {
      if (p.name == "output.weight") p.value.data()[0] = std::numeric_limits<Real>::quiet_NaN();
    }
  };
  EXPECT_THROW(train(m, data, {data.begin(), data.begin() + 2}, quick(dir.path(), 3), nullptr, poison),
               NumericalError);
  Checkpoint last = load_checkpoint(dir / "last.ckpt");
  EXPECT_EQ(last.meta.at("epoch"), 1.0);
  EXPECT_EQ(checkpoint_bytes(last.model, {}), good);
  EXPECT_EQ(lines(testutil::read_file(dir / "metrics.csv")).size(), 2u);
}

TEST(Train, TrainStepRejectsNonFiniteLossBeforeUpdating) {
  Model m = Model::build(toy_model_config(16), 10);
  Adam opt;
  Tensor x = testutil::random_tensor(Shape{2, 3, 16, 16}, 11, 0.0, 1.0);
  Tensor y = testutil::random_mask(Shape{2, 1, 16, 16}, 12);
  const double loss = train_step(m, opt, x, y, LossKind::kDice, 1e-3);
  EXPECT_GT(loss, 0.0);
  EXPECT_EQ(opt.steps(), 1u);
  const std::string before = checkpoint_bytes(m);
  x.data()[0] = std::numeric_limits<Real>::infinity();
  const bool checks = finite_checks_enabled();
  set_finite_checks(false);
  EXPECT_THROW(train_step(m, opt, x, y, LossKind::kDice, 1e-3), NumericalError);
  set_finite_checks(checks);
  EXPECT_EQ(opt.steps(), 1u);
  EXPECT_EQ(checkpoint_bytes(m), before);
}

TEST(Evaluate, GroundTruthAsPredictionScoresOne) {
  Dataset data = synth_dataset(5, 16, 13);
  std::vector<PairMetrics> per;
  for (const auto& s : data) per.push_back(evaluate_pair(s.mask, s.mask));
  MetricReport r = aggregate(per);
  EXPECT_EQ(r.dice, 1.0);
  EXPECT_EQ(r.miou, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.precision, 1.0);
}

TEST(Evaluate, MatchesRecomputationFromPredictions) {
  Dataset data = synth_dataset(6, 24, 14);
  Model m = Model::build(toy_model_config(16), 15);
  MetricReport r = evaluate(m, data, 0.5);
  EXPECT_EQ(r.n_samples, 6u);
  EXPECT_GE(r.dice, 0.0);
  EXPECT_LE(r.dice, 1.0);
  const auto preds = predict(m, data);
  ASSERT_EQ(preds.size(), 6u);
  double dice = 0, miou = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    Tensor mask = resize_sample(data[i], 16).mask;
    int tp = 0, fp = 0, fn = 0, tn = 0;
    for (std::size_t k = 0; k < mask.numel(); ++k) {
      const bool p = preds[i].data()[k] >= 0.5, g = mask.data()[k] == 1;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
      tn += !p && !g;
    }
    dice += (2 * tp + fp + fn) ? 2.0 * tp / (2 * tp + fp + fn) : 1.0;
    const double fg = (tp + fp + fn) ? double(tp) / (tp + fp + fn) : 1.0;
    const double bg = (tn + fp + fn) ? double(tn) / (tn + fp + fn) : 1.0;
    miou += (fg + bg) / 2;
  }
  EXPECT_NEAR(r.dice, dice / 6, 1e-12);
  EXPECT_NEAR(r.miou, miou / 6, 1e-12);
}
