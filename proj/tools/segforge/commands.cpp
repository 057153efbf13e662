#include "commands.hpp"
#include "run_config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "segforge/checkpoint.hpp"
#include "segforge/error.hpp"
#include "segforge/log.hpp"
#include "segforge/png.hpp"

namespace segforge::cli {

namespace fs = std::filesystem;

namespace {

Dataset load_source(const std::string& dir, std::size_t synth_count, std::size_t synth_size, std::uint64_t seed) {
  if (!dir.empty()) return load_directory(dir);
  return synth_dataset(synth_count, synth_size, seed);
}

void print_report(const MetricReport& r) {
  std::cout << "dice,miou,recall,precision\n" << format_report_csv(r) << "\n";
  std::printf("%zu samples at threshold %g: dice %.4f  mIoU %.4f  recall %.4f  precision %.4f\n", r.n_samples,
              r.threshold, r.dice, r.miou, r.recall, r.precision);
}

}  // namespace

int cmd_train(const RunConfig& config) {
  RunConfig cfg = config;
  cfg.propagate_seed();
  cfg.validate();
  cfg.train.out_dir = cfg.out_dir;

  const Dataset data = load_source(cfg.data_dir, cfg.synth_count, cfg.synth_size, cfg.seed);
  const Split parts = split(data, cfg.split);
  if (parts.val.empty()) throw ConfigError("validation split is empty; adjust split fractions");

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream out(fs::path(cfg.out_dir) / "config.resolved.json");
    out << cfg.to_json();
    if (!out) throw DataError("cannot write " + (fs::path(cfg.out_dir) / "config.resolved.json").string());
  }

  Model model = Model::build(cfg.model, derive_seed(cfg.seed, 0x6d6f64656cULL));
  std::printf("training %s (%zu parameters) on %zu/%zu/%zu samples for %zu epochs\n",
              to_string(cfg.model.arch).c_str(), model.parameter_count(), parts.train.size(), parts.val.size(),
              parts.test.size(), cfg.train.epochs);
  const AugmentationSpec* aug = cfg.augment.enabled.empty() ? nullptr : &cfg.augment;
  const History h = train(model, parts.train, parts.val, cfg.train, aug, [](const EpochRecord& r) {
    std::printf("epoch %3zu  lr %.3g  loss %.4f  val dice %.4f  mIoU %.4f\n", r.epoch, r.lr, r.train_loss, r.val.dice,
                r.val.miou);
    std::fflush(stdout);
  });
  std::printf("best val dice %.4f at epoch %zu\n", h.best_dice, h.best_epoch);
  if (!parts.test.empty()) {
    Checkpoint best = load_checkpoint(fs::path(cfg.out_dir) / "best.ckpt");
    const MetricReport test = evaluate(best.model, parts.test, cfg.train.threshold);
    std::printf("test (best checkpoint): dice %.4f  mIoU %.4f  recall %.4f  precision %.4f\n", test.dice, test.miou,
                test.recall, test.precision);
  }
  return 0;
}

int cmd_eval(const EvalArgs& args) {
  Checkpoint ck = load_checkpoint(args.checkpoint);
  if (!(args.threshold >= 0.0 && args.threshold <= 1.0)) throw ConfigError("threshold must be in [0, 1]");
  Dataset data;
  SplitSpec spec;
  if (!args.config.empty()) {
    const RunConfig rc = load_run_config(args.config);
    spec = rc.split;
    if (args.data_dir.empty() && args.synth_count == 0) {
      data = load_source(rc.data_dir, rc.synth_count, rc.synth_size, rc.seed);
    }
  }
  if (data.empty()) {
    if (args.data_dir.empty() && args.synth_count == 0) throw ConfigError("eval needs --data, --synth or --config");
    const std::size_t size = args.synth_size != 0 ? args.synth_size : ck.model.config().input_size;
    data = load_source(args.data_dir, args.synth_count, size, args.seed);
    spec.seed = args.seed;
  }
  if (args.split != "all") {
    const Split parts = split(data, spec);
    if (args.split == "train") {
      data = parts.train;
    } else if (args.split == "val") {
      data = parts.val;
    } else if (args.split == "test") {
      data = parts.test;
    } else {
      throw ConfigError("unknown split '" + args.split + "'");
    }
  }
  if (data.empty()) throw DataError("no samples to evaluate");
  print_report(evaluate(ck.model, data, args.threshold));
  return 0;
}

int cmd_predict(const PredictArgs& args) {
  if (!(args.threshold >= 0.0 && args.threshold <= 1.0)) throw ConfigError("threshold must be in [0, 1]");
  Checkpoint ck = load_checkpoint(args.checkpoint);
  Sample sample;
  sample.image = image_from_png(args.image);
  sample.mask = Tensor(Shape{1, sample.image.dim(1), sample.image.dim(2)});
  const Tensor prob = predict(ck.model, Dataset{sample}).front();

  const std::size_t s = ck.model.config().input_size;
  Image8 out{static_cast<int>(s), static_cast<int>(s), 1, std::vector<std::uint8_t>(s * s)};
  std::size_t foreground = 0;
  const auto p = prob.data();
  for (std::size_t i = 0; i < s * s; ++i) {
    const bool fg = p[i] >= static_cast<Real>(args.threshold);
    foreground += fg ? 1 : 0;
    out.pixels[i] = args.prob ? static_cast<std::uint8_t>(std::lround(255.0 * static_cast<double>(p[i])))
                              : static_cast<std::uint8_t>(fg ? 255 : 0);
  }
  write_png(args.out, out);
  std::printf("foreground fraction %.6f\n", static_cast<double>(foreground) / static_cast<double>(s * s));
  return 0;
}

int cmd_synth(const SynthArgs& args) {
  if (args.n == 0) throw ConfigError("--n must be positive");
  if (args.out.empty()) throw ConfigError("--out is required");
  try {
    save_dataset(synth_dataset(args.n, args.size, args.seed), args.out);
  } catch (const fs::filesystem_error& e) {
    throw DataError(e.what());
  }
  std::printf("wrote %zu samples of %zux%zu to %s\n", args.n, args.size, args.size, args.out.c_str());
  return 0;
}

}  // namespace segforge::cli
