#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "commands.hpp"
#include "run_config.hpp"
#include "segforge/error.hpp"
#include "segforge/log.hpp"
#include "segforge/parallel.hpp"

namespace {

using namespace segforge;
using namespace segforge::cli;

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kNumerical = 4 };

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw ConfigError("'" + text + "' is not a comma-separated list of positive integers");
    }
  }
  return out;
}

void apply_threads(int threads) {
  if (threads <= 0) {
    if (const char* env = std::getenv("SEGFORGE_THREADS")) {
      try {
        threads = std::stoi(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("SEGFORGE_THREADS is not an integer: ") + env);
      }
      if (threads <= 0) throw ConfigError("SEGFORGE_THREADS must be positive");
    }
  }
  if (threads > 0) set_num_threads(static_cast<std::size_t>(threads));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segforge: polyp segmentation networks trained from scratch on the CPU"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  int threads = 0;
  bool verbose = false, quiet = false;
  app.add_option("--threads", threads, "Worker threads (also SEGFORGE_THREADS); 1 is the reference mode");
  app.add_flag("--verbose", verbose, "Log progress details");
  app.add_flag("--quiet", quiet, "Suppress warnings");

  // train ------------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train a network and write metrics and checkpoints");
  std::string t_config, t_data, t_out, t_arch, t_filters, t_loss, t_augment;
  std::size_t t_synth = 0, t_size = 0, t_epochs = 0, t_batch = 0, t_se = 0;
  std::uint64_t t_seed = 0;
  double t_lr = 0, t_t0 = 0;
  bool t_no_sgdr = false, t_wall = false;
  train->add_option("--config", t_config, "JSON run config; flags override it");
  train->add_option("--data", t_data, "Dataset directory with images/ and masks/");
  train->add_option("--synth", t_synth, "Generate this many synthetic samples instead");
  train->add_option("--size", t_size, "Synthetic image size and model input size");
  train->add_option("--out", t_out, "Output directory");
  auto* seed_opt = train->add_option("--seed", t_seed, "Root seed");
  train->add_option("--arch", t_arch, "resunetpp | unet");
  train->add_option("--filters", t_filters, "Five comma-separated filter widths");
  train->add_option("--se-reduction", t_se, "Squeeze-and-excitation reduction ratio");
  train->add_option("--epochs", t_epochs, "Training epochs");
  train->add_option("--batch-size", t_batch, "Batch size");
  train->add_option("--lr", t_lr, "Peak learning rate");
  train->add_option("--loss", t_loss, "dice | bce | bce+dice | mse");
  train->add_option("--sgdr-t0", t_t0, "First SGDR cycle length in epochs");
  train->add_flag("--no-sgdr", t_no_sgdr, "Constant learning rate");
  train->add_option("--augment", t_augment, "Comma-separated augmentations, 'none' or 'all'");
  train->add_flag("--wall-clock", t_wall, "Record epoch seconds in metrics.csv (breaks byte-identical reruns)");

  // eval -------------------------------------------------------------------
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  EvalArgs e;
  eval->add_option("--checkpoint", e.checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", e.data_dir, "Dataset directory");
  eval->add_option("--synth", e.synth_count, "Evaluate on this many synthetic samples");
  eval->add_option("--size", e.synth_size, "Synthetic image size (default: model input size)");
  eval->add_option("--seed", e.seed, "Synthetic data and split seed");
  eval->add_option("--config", e.config, "Resolved run config; reuses its data source and split");
  eval->add_option("--split", e.split, "all | train | val | test")->check(CLI::IsMember({"all", "train", "val", "test"}));
  eval->add_option("--threshold", e.threshold, "Binarization threshold");

  // predict ----------------------------------------------------------------
  auto* pred = app.add_subcommand("predict", "Segment one image");
  PredictArgs p;
  pred->add_option("--checkpoint", p.checkpoint, "Checkpoint file")->required();
  pred->add_option("--image", p.image, "Input PNG")->required();
  pred->add_option("--out", p.out, "Output PNG")->required();
  pred->add_option("--threshold", p.threshold, "Binarization threshold");
  pred->add_flag("--prob", p.prob, "Write the probability map instead of a binary mask");

  // gradcheck --------------------------------------------------------------
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks in double precision");
  GradcheckArgs g;
  gc->add_option("--tolerance", g.tolerance, "Maximum relative error");
  gc->add_option("--ops", g.ops, "'all' or comma-separated check names");
  gc->add_flag("--csv", g.csv, "Machine-readable output");
  gc->add_flag("--list", g.list, "List available checks");

  // synth ------------------------------------------------------------------
  auto* syn = app.add_subcommand("synth", "Write a synthetic dataset");
  SynthArgs s;
  syn->add_option("--n", s.n, "Number of samples")->required();
  syn->add_option("--size", s.size, "Image side length");
  syn->add_option("--seed", s.seed, "Seed");
  syn->add_option("--out", s.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    set_log_level(quiet ? LogLevel::kSilent : verbose ? LogLevel::kInfo : LogLevel::kWarning);
    apply_threads(threads);

    if (*train) {
      RunConfig c;
      if (!t_config.empty()) c = load_run_config(t_config);
      if (!t_data.empty()) {
        c.data_dir = t_data;
        c.synth_count = 0;
      }
      if (t_synth != 0) {
        c.synth_count = t_synth;
        c.data_dir.clear();
      }
      if (t_size != 0) {
        c.synth_size = t_size;
        c.model.input_size = t_size;
        c.augment.target_size = t_size;
      }
      if (!t_out.empty()) c.out_dir = t_out;
      if (seed_opt->count() > 0) c.seed = t_seed;
      if (!t_arch.empty()) c.model.arch = parse_architecture(t_arch);
      if (!t_filters.empty()) {
        const auto f = parse_sizes(t_filters);
        if (f.size() != 5) throw ConfigError("--filters needs exactly 5 widths");
        std::copy(f.begin(), f.end(), c.model.filters.begin());
      }
      if (t_se != 0) c.model.se_reduction = t_se;
      if (t_epochs != 0) c.train.epochs = t_epochs;
      if (t_batch != 0) c.train.batch_size = t_batch;
      if (t_lr != 0) c.train.lr_max = t_lr;
      if (!t_loss.empty()) c.train.loss = parse_loss(t_loss);
      if (t_t0 != 0) c.train.sgdr.t0 = t_t0;
      if (t_no_sgdr) c.train.sgdr.enabled = false;
      if (t_wall) c.train.log_wall_clock = true;
      if (!t_augment.empty()) {
        if (t_augment == "none") {
          c.augment.enabled.clear();
        } else if (t_augment == "all") {
          c.augment.enabled = AugmentationSpec::all_enabled().enabled;
        } else {
          c.augment.enabled.clear();
          std::stringstream ss(t_augment);
          std::string item;
          while (std::getline(ss, item, ',')) c.augment.enabled.insert(parse_augmentation(item));
        }
      }
      c.augment.target_size = c.model.input_size;
      return cmd_train(c);
    }
    if (*eval) return cmd_eval(e);
    if (*pred) return cmd_predict(p);
    if (*gc) return cmd_gradcheck(g);
    if (*syn) return cmd_synth(s);
  } catch (const CheckpointError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return err.kind() == CheckpointErrorKind::kVersionMismatch ? kConfig : kData;
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kConfig;
  } catch (const DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kData;
  } catch (const NumericalError& err) {
    std::cerr << "numerical error: " << err.what() << "\n";
    return kNumerical;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
