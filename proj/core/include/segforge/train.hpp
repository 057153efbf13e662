#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "segforge/augment.hpp"
#include "segforge/data.hpp"
#include "segforge/losses.hpp"
#include "segforge/metrics.hpp"
#include "segforge/model.hpp"
#include "segforge/optim.hpp"

SEGFORGE_NAMESPACE_BEGIN

struct TrainConfig {
  double lr_max = 1e-4;
  std::size_t batch_size = 16;
  std::size_t epochs = 120;
  AdamOptions adam;
  LossKind loss = LossKind::kDice;
  SgdrOptions sgdr;
  std::uint64_t seed = 0;
  /// Binarization threshold for validation metrics.
  double threshold = 0.5;
  /// metrics.csv, best.ckpt and last.ckpt go here; empty writes nothing.
  std::filesystem::path out_dir;
  /// Record elapsed seconds per epoch. Off by default so that identical runs
  /// give identical CSV bytes; the column is then 0.
  bool log_wall_clock = false;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0;  // rate at the first step of the epoch
  double train_loss = 0;
  MetricReport val;
  double seconds = 0;
};

struct History {
  std::vector<EpochRecord> records;
  std::size_t best_epoch = 0;
  double best_dice = -1;
};

inline constexpr const char* kMetricsHeader = "epoch,lr,train_loss,val_dice,val_miou,val_recall,val_precision,seconds";

std::string format_epoch_row(const EpochRecord& r);

/// One optimizer step on a batch: train-mode forward, loss, backward, Adam.
/// Returns the loss. A non-finite loss throws NumericalError before the
/// parameters are touched.
double train_step(Model& model, Adam& optimizer, const Tensor& images, const Tensor& masks, LossKind loss, double lr);

/// Observer called after every epoch.
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Full training run. Each epoch shuffles and augments the training set
/// (aug may be null), steps Adam with the SGDR rate at fractional epoch time,
/// validates in infer mode and appends to metrics.csv. best.ckpt is written
/// when validation dice improves and last.ckpt at the end. On a numerical
/// failure the last completed epoch's weights go to last.ckpt and the error
/// is rethrown.
History train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
              const AugmentationSpec* aug = nullptr, const EpochCallback& on_epoch = {});

/// Per-sample infer-mode probabilities [1, 1, S, S], resized to the model input.
std::vector<Tensor> predict(Model& model, const Dataset& dataset);

/// Per-sample metrics in dataset order.
std::vector<PairMetrics> evaluate_samples(Model& model, const Dataset& dataset, double threshold = 0.5);

MetricReport evaluate(Model& model, const Dataset& dataset, double threshold = 0.5);

SEGFORGE_NAMESPACE_END
