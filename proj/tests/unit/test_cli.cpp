#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>

#include "segforge/checkpoint.hpp"
#include "segforge/png.hpp"
#include "test_util.hpp"

using namespace segforge;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args, const testutil::TempDir& dir) {
  const auto log = dir / "cli_output.txt";
  const std::string cmd = std::string(SEGFORGE_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = testutil::read_file(log);
  return r;
}

const std::string kToy = " --synth 12 --size 16 --filters 4,8,16,32,64 --se-reduction 4 --batch-size 4 --threads 1 ";

}  // namespace

TEST(Cli, HelpAndBadFlags) {
  testutil::TempDir dir("cli_help");
  EXPECT_EQ(run("--help", dir).code, 0);
  EXPECT_EQ(run("train --no-such-flag", dir).code, 2);
  EXPECT_EQ(run("", dir).code, 2);
}

TEST(Cli, ConfigErrorsExitTwo) {
  testutil::TempDir dir("cli_cfg");
  Result r = run("train" + kToy + "--epochs 1 --arch segnet --out " + (dir / "run").string(), dir);
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("segnet"), std::string::npos);
  EXPECT_EQ(run("train" + kToy + "--epochs 1 --size 20 --out " + (dir / "run").string(), dir).code, 2);
  testutil::write_file(dir / "bad.json", R"({"train": {"epochz": 3}})");
  EXPECT_EQ(run("train --config " + (dir / "bad.json").string(), dir).code, 2);
}

TEST(Cli, DataErrorsExitThree) {
  testutil::TempDir dir("cli_data");
  Result r = run("train --data " + (dir / "missing").string() + " --epochs 1", dir);
  EXPECT_EQ(r.code, 3) << r.out;
  testutil::write_file(dir / "junk.ckpt", "garbage");
  EXPECT_EQ(run("eval --checkpoint " + (dir / "junk.ckpt").string() + " --synth 4", dir).code, 3);
}

TEST(Cli, DivergenceExitsFour) {
  testutil::TempDir dir("cli_nan");
  Result r = run("train" + kToy + "--epochs 3 --lr 1e38 --no-sgdr --augment none --out " + (dir / "run").string(), dir);
  EXPECT_EQ(r.code, 4) << r.out;
}

TEST(Cli, TrainEvalPredictRoundTrip) {
  testutil::TempDir dir("cli_train");
  const auto run_dir = dir / "run";
  Result t = run("train" + kToy + "--epochs 2 --lr 1e-3 --augment hflip,vflip --seed 3 --out " + run_dir.string(), dir);
  ASSERT_EQ(t.code, 0) << t.out;
  for (const char* f : {"metrics.csv", "best.ckpt", "last.ckpt", "config.resolved.json"}) {
    EXPECT_TRUE(std::filesystem::exists(run_dir / f)) << f;
  }

  // The resolved config reproduces the run.
  const auto again = dir / "again";
  Result t2 = run("train --threads 1 --config " + (run_dir / "config.resolved.json").string() + " --out " + again.string(), dir);
  ASSERT_EQ(t2.code, 0) << t2.out;
  EXPECT_EQ(testutil::read_file(run_dir / "metrics.csv"), testutil::read_file(again / "metrics.csv"));
  EXPECT_EQ(testutil::read_file(run_dir / "best.ckpt"), testutil::read_file(again / "best.ckpt"));

  const std::string ckpt = (run_dir / "best.ckpt").string();
  Result e = run("eval --checkpoint " + ckpt + " --config " + (run_dir / "config.resolved.json").string() +
                     " --split test",
                 dir);
  ASSERT_EQ(e.code, 0) << e.out;
  EXPECT_NE(e.out.find("dice,miou,recall,precision"), std::string::npos);

  // Threshold 0 predicts everything as foreground: recall is 1.
  Result e0 = run("eval --checkpoint " + ckpt + " --synth 4 --seed 9 --threshold 0", dir);
  ASSERT_EQ(e0.code, 0) << e0.out;
  const auto header = e0.out.find("dice,miou,recall,precision\n");
  ASSERT_NE(header, std::string::npos);
  const std::string row = e0.out.substr(header + 27, e0.out.find('\n', header + 27) - header - 27);
  std::vector<std::string> cols;
  std::stringstream ss(row);
  for (std::string c; std::getline(ss, c, ',');) cols.push_back(c);
  ASSERT_EQ(cols.size(), 4u) << row;
  EXPECT_EQ(cols[2], "1");

  Result syn = run("synth --n 1 --size 24 --seed 4 --out " + (dir / "img").string(), dir);
  ASSERT_EQ(syn.code, 0) << syn.out;
  const auto image = dir / "img" / "images" / "synth_00000.png";
  ASSERT_TRUE(std::filesystem::exists(image));
  Result p = run("predict --checkpoint " + ckpt + " --image " + image.string() + " --out " + (dir / "mask.png").string(), dir);
  ASSERT_EQ(p.code, 0) << p.out;
  Image8 mask = read_png(dir / "mask.png");
  EXPECT_EQ(mask.width, 16);  // written at the model's input size
  EXPECT_EQ(mask.height, 16);
  EXPECT_EQ(mask.channels, 1);
  for (auto v : mask.pixels) EXPECT_TRUE(v == 0 || v == 255);
  Result p2 = run("predict --checkpoint " + ckpt + " --image " + image.string() + " --out " + (dir / "mask2.png").string(), dir);
  ASSERT_EQ(p2.code, 0) << p2.out;
  EXPECT_EQ(testutil::read_file(dir / "mask2.png"), testutil::read_file(dir / "mask.png"));
  Result pp = run("predict --prob --checkpoint " + ckpt + " --image " + image.string() + " --out " +
                      (dir / "prob.png").string(),
                  dir);
  ASSERT_EQ(pp.code, 0) << pp.out;
  bool graded = false;
  for (auto v : read_png(dir / "prob.png").pixels) graded |= v != 0 && v != 255;
  EXPECT_TRUE(graded);
}

TEST(Cli, CheckpointVersionMismatchExitsTwo) {
  testutil::TempDir dir("cli_ver");
  std::string bytes = checkpoint_bytes(Model::build(toy_model_config(16, Architecture::kUNet), 1));
  bytes[4] = 9;
  testutil::write_file(dir / "v9.ckpt", bytes);
  Result r = run("eval --checkpoint " + (dir / "v9.ckpt").string() + " --synth 4", dir);
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("version"), std::string::npos);
}

TEST(Cli, SynthIsDeterministic) {
  testutil::TempDir dir("cli_synth");
  ASSERT_EQ(run("synth --n 3 --size 20 --seed 7 --out " + (dir / "a").string(), dir).code, 0);
  ASSERT_EQ(run("synth --n 3 --size 20 --seed 7 --out " + (dir / "b").string(), dir).code, 0);
  for (const char* sub : {"images", "masks"}) {
    for (int i = 0; i < 3; ++i) {
      const std::string f = std::string(sub) + "/synth_0000" + std::to_string(i) + ".png";
      EXPECT_EQ(testutil::read_file(dir / "a" / f), testutil::read_file(dir / "b" / f)) << f;
    }
  }
}

TEST(Cli, GradcheckExitCodes) {
  testutil::TempDir dir("cli_gc");
  Result ok = run("gradcheck --ops conv2d,relu,squeeze_excite", dir);
  EXPECT_EQ(ok.code, 0) << ok.out;
  EXPECT_EQ(run("gradcheck --ops conv2d --tolerance 1e-30", dir).code, 1);
  EXPECT_EQ(run("gradcheck --ops nope", dir).code, 2);
  Result list = run("gradcheck --list", dir);
  EXPECT_EQ(list.code, 0);
  EXPECT_NE(list.out.find("model_resunetpp"), std::string::npos);
}
